// Copyright 2026 The nmt-recycle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "recycle/checkpoint.hpp"
#include "recycle/corpus_stats.hpp"
#include "recycle/error.hpp"
#include "recycle/eval.hpp"
#include "recycle/io.hpp"
#include "recycle/nmt/config.hpp"
#include "recycle/nmt/train.hpp"
#include "recycle/synth.hpp"
#include "recycle/transform.hpp"
#include "recycle/vocab.hpp"

namespace recycle {

enum class ExperimentMode { kScratch, kDirect, kTransformed };

inline std::string_view to_string(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::kScratch: return "scratch";
    case ExperimentMode::kDirect: return "direct";
    case ExperimentMode::kTransformed: return "transformed";
  }
  return "?";
}

inline ExperimentMode parse_mode(std::string_view s) {
  if (s == "scratch") return ExperimentMode::kScratch;
  if (s == "direct") return ExperimentMode::kDirect;
  if (s == "transformed") return ExperimentMode::kTransformed;
  throw ConfigError("unknown experiment mode '" + std::string(s) + "'");
}

// Task directories hold {train,dev,test}.{src,tgt}. A parent checkpoint and
// its vocabulary may be given; otherwise the parent is trained from
// parent_task first (not needed for scratch runs).
struct ExperimentSpec {
  std::string name = "experiment";
  std::filesystem::path parent_task;
  std::filesystem::path parent_checkpoint;
  std::filesystem::path parent_vocab;
  std::filesystem::path child_task;
  ExperimentMode mode = ExperimentMode::kTransformed;
  AssignStrategy strategy = AssignStrategy::kFrequency;
  std::uint64_t strategy_seed = 0;
  nmt::FreezeMask freeze;
  nmt::ModelConfig model;
  nmt::TrainConfig parent_train;
  nmt::TrainConfig child_train;
  std::size_t child_vocab_size = 0;  // 0: same as model.vocab_size
  int beam = 1;
  std::filesystem::path baseline_report;
  std::size_t bootstrap_samples = 1000;
  double alpha = 0.05;
  std::uint64_t bootstrap_seed = 12345;
  std::filesystem::path output_dir;
  bool overwrite = false;

  bool needs_parent() const { return mode != ExperimentMode::kScratch; }

  void validate() const {
    model.validate();
    child_train.validate();
    if (child_task.empty()) throw ConfigError("experiment needs a child task");
    if (output_dir.empty()) throw ConfigError("experiment needs an output directory");
    if (beam < 1) throw ConfigError("beam must be at least 1");
    auto require = [](const std::filesystem::path& p, const char* what) {
      if (!std::filesystem::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
    };
    require(child_task / "train.src", "child task");
    if (needs_parent()) {
      if (parent_checkpoint.empty()) {
        parent_train.validate();
        if (parent_task.empty()) throw ConfigError("transfer needs a parent task or a parent checkpoint");
        require(parent_task / "train.src", "parent task");
      } else {
        require(parent_checkpoint, "parent checkpoint");
        if (parent_vocab.empty()) throw ConfigError("a parent checkpoint needs its vocabulary (parent_vocab)");
        require(parent_vocab, "parent vocabulary");
      }
    }
    if (!baseline_report.empty()) require(baseline_report, "baseline report");
  }

  nlohmann::json to_json() const {
    return {{"name", name},
            {"parent_task", parent_task.string()},
            {"parent_checkpoint", parent_checkpoint.string()},
            {"parent_vocab", parent_vocab.string()},
            {"child_task", child_task.string()},
            {"mode", to_string(mode)},
            {"strategy", to_string(strategy)},
            {"strategy_seed", strategy_seed},
            {"freeze", freeze.str()},
            {"model", nmt::to_json(model)},
            {"parent_train", nmt::to_json(parent_train)},
            {"child_train", nmt::to_json(child_train)},
            {"child_vocab_size", child_vocab_size},
            {"beam", beam},
            {"baseline_report", baseline_report.string()},
            {"bootstrap_samples", bootstrap_samples},
            {"alpha", alpha},
            {"bootstrap_seed", bootstrap_seed},
            {"output_dir", output_dir.string()},
            {"overwrite", overwrite}};
  }

  static ExperimentSpec from_json(const nlohmann::json& j) {
    ExperimentSpec s;
    try {
      s.name = j.value("name", s.name);
      s.parent_task = j.value("parent_task", "");
      s.parent_checkpoint = j.value("parent_checkpoint", "");
      s.parent_vocab = j.value("parent_vocab", "");
      s.child_task = j.value("child_task", "");
      s.mode = parse_mode(j.value("mode", "transformed"));
      s.strategy = parse_strategy(j.value("strategy", "frequency"));
      s.strategy_seed = j.value("strategy_seed", std::uint64_t{0});
      s.freeze = nmt::FreezeMask::parse(j.value("freeze", ""));
      if (j.contains("model")) s.model = nmt::model_config_from_json(j["model"]);
      if (j.contains("parent_train")) s.parent_train = nmt::train_config_from_json(j["parent_train"]);
      if (j.contains("child_train")) s.child_train = nmt::train_config_from_json(j["child_train"]);
      s.child_vocab_size = j.value("child_vocab_size", std::size_t{0});
      s.beam = j.value("beam", 1);
      s.baseline_report = j.value("baseline_report", "");
      s.bootstrap_samples = j.value("bootstrap_samples", std::size_t{1000});
      s.alpha = j.value("alpha", 0.05);
      s.bootstrap_seed = j.value("bootstrap_seed", std::uint64_t{12345});
      s.output_dir = j.value("output_dir", "");
      s.overwrite = j.value("overwrite", false);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad experiment spec: ") + e.what());
    }
    return s;
  }
};

inline double speedup_percent(double baseline_steps, double method_steps) {
  if (baseline_steps <= 0) throw DataError("speed-up needs a positive baseline step count");
  return (baseline_steps - method_steps) / baseline_steps * 100.0;
}

// Speed-up as printed in results tables: whole percent, halves away from zero.
inline long rounded_speedup(double speedup) { return std::lround(speedup); }

// First evaluation step whose dev BLEU reaches `target`.
inline std::optional<int> steps_to_reach(std::span<const nmt::TrajectoryPoint> trajectory, double target) {
  for (const auto& p : trajectory) {
    if (p.bleu >= target) return p.step;
  }
  return std::nullopt;
}

struct BaselineComparison {
  std::string baseline_name;
  double baseline_test_bleu = 0.0;
  double baseline_best_dev_bleu = 0.0;
  int baseline_steps = 0;
  double delta_bleu = 0.0;
  double speedup_percent = 0.0;
  std::optional<int> steps_to_baseline_best;  // first step reaching the baseline's best dev BLEU
  SignificanceResult method_better;           // A = baseline, B = this run
  SignificanceResult baseline_better;         // A = this run, B = baseline
};

struct ExperimentReport {
  nlohmann::json spec;
  std::string name;
  ExperimentMode mode = ExperimentMode::kScratch;
  double best_dev_bleu = 0.0;
  int steps_to_best = 0;
  int final_step = 0;
  double test_bleu = 0.0;
  std::string bleu_signature;
  bool early_stopped = false;
  double first_lr = 0.0;
  std::size_t train_pairs_used = 0;
  std::size_t train_pairs_filtered = 0;
  FragmentationReport child_fragmentation;  // child train targets under the vocabulary used
  std::vector<nmt::TrajectoryPoint> trajectory;
  std::optional<BaselineComparison> baseline;
  std::string test_hypotheses;  // file path
  std::string checkpoint;       // best checkpoint path
  std::string vocab;            // vocabulary path

  nlohmann::json to_json() const;
  static ExperimentReport from_json(const nlohmann::json& j);
};

namespace detail {

inline nlohmann::json significance_json(const SignificanceResult& r) {
  return {{"p_like", r.p_like}, {"significant", r.significant}, {"n_samples", r.n_samples},
          {"seed", r.seed},     {"alpha", r.alpha},             {"bleu_a", r.bleu_a},
          {"bleu_b", r.bleu_b}};
}

inline SignificanceResult significance_from_json(const nlohmann::json& j) {
  SignificanceResult r;
  r.p_like = j.at("p_like");
  r.significant = j.at("significant");
  r.n_samples = j.at("n_samples");
  r.seed = j.at("seed");
  r.alpha = j.at("alpha");
  r.bleu_a = j.at("bleu_a");
  r.bleu_b = j.at("bleu_b");
  return r;
}

inline nlohmann::json fragmentation_entry(const FragmentationReport& f) {
  return {{"tokens_per_sentence", f.tokens_per_sentence}, {"tokens_per_word", f.tokens_per_word},
          {"sentence_count", f.sentence_count},           {"word_count", f.word_count},
          {"token_count", f.token_count},                 {"filtered_count", f.filtered_count}};
}

}  // namespace detail

inline nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& p : trajectory) {
    traj.push_back({{"step", p.step}, {"global_step", p.global_step}, {"bleu", p.bleu}, {"loss", p.loss},
                    {"accuracy", p.accuracy}, {"lr", p.lr}});
  }
  nlohmann::json j = {{"spec", spec},
                      {"name", name},
                      {"mode", to_string(mode)},
                      {"best_dev_bleu", best_dev_bleu},
                      {"steps_to_best", steps_to_best},
                      {"final_step", final_step},
                      {"test_bleu", test_bleu},
                      {"bleu_signature", bleu_signature},
                      {"early_stopped", early_stopped},
                      {"first_lr", first_lr},
                      {"train_pairs_used", train_pairs_used},
                      {"train_pairs_filtered", train_pairs_filtered},
                      {"child_fragmentation", detail::fragmentation_entry(child_fragmentation)},
                      {"trajectory", traj},
                      {"test_hypotheses", test_hypotheses},
                      {"checkpoint", checkpoint},
                      {"vocab", vocab}};
  if (baseline) {
    const auto& b = *baseline;
    j["baseline"] = {{"name", b.baseline_name},
                     {"test_bleu", b.baseline_test_bleu},
                     {"best_dev_bleu", b.baseline_best_dev_bleu},
                     {"steps", b.baseline_steps},
                     {"delta_bleu", b.delta_bleu},
                     {"speedup_percent", b.speedup_percent},
                     {"steps_to_baseline_best",
                      b.steps_to_baseline_best ? nlohmann::json(*b.steps_to_baseline_best) : nlohmann::json()},
                     {"method_better", detail::significance_json(b.method_better)},
                     {"baseline_better", detail::significance_json(b.baseline_better)}};
  }
  return j;
}

inline ExperimentReport ExperimentReport::from_json(const nlohmann::json& j) {
  ExperimentReport r;
  try {
    r.spec = j.at("spec");
    r.name = j.at("name");
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.best_dev_bleu = j.at("best_dev_bleu");
    r.steps_to_best = j.at("steps_to_best");
    r.final_step = j.at("final_step");
    r.test_bleu = j.at("test_bleu");
    r.bleu_signature = j.value("bleu_signature", "");
    r.early_stopped = j.value("early_stopped", false);
    r.first_lr = j.value("first_lr", 0.0);
    r.train_pairs_used = j.value("train_pairs_used", std::size_t{0});
    r.train_pairs_filtered = j.value("train_pairs_filtered", std::size_t{0});
    if (j.contains("child_fragmentation")) {
      const auto& f = j["child_fragmentation"];
      r.child_fragmentation = {f.at("tokens_per_sentence"), f.at("tokens_per_word"), f.at("sentence_count"),
                               f.at("word_count"),          f.at("token_count"),     f.at("filtered_count")};
    }
    for (const auto& p : j.at("trajectory")) {
      r.trajectory.push_back({p.at("step"), p.at("global_step"), p.at("bleu"), p.at("loss"), p.at("accuracy"),
                              p.at("lr")});
    }
    r.test_hypotheses = j.value("test_hypotheses", "");
    r.checkpoint = j.value("checkpoint", "");
    r.vocab = j.value("vocab", "");
    if (j.contains("baseline")) {
      const auto& b = j["baseline"];
      BaselineComparison c;
      c.baseline_name = b.at("name");
      c.baseline_test_bleu = b.at("test_bleu");
      c.baseline_best_dev_bleu = b.at("best_dev_bleu");
      c.baseline_steps = b.at("steps");
      c.delta_bleu = b.at("delta_bleu");
      c.speedup_percent = b.at("speedup_percent");
      if (!b.at("steps_to_baseline_best").is_null()) c.steps_to_baseline_best = b["steps_to_baseline_best"].get<int>();
      c.method_better = detail::significance_from_json(b.at("method_better"));
      c.baseline_better = detail::significance_from_json(b.at("baseline_better"));
      r.baseline = c;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad experiment report: ") + e.what(), 1);
  }
  return r;
}

inline ExperimentReport load_report(const std::filesystem::path& path) {
  try {
    return ExperimentReport::from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("report is not JSON: ") + e.what(), 1);
  }
}

// Rows: name, BLEU, Steps, ΔBLEU and Speed-up against each run's baseline
// ("-" when a run has none).
inline std::string results_table_tsv(std::span<const ExperimentReport> reports) {
  std::string out = "system\tBLEU\tSteps\tdBLEU\tSpeed-up\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s\t%.2f\t%d\t", r.name.c_str(), r.test_bleu, r.steps_to_best);
    out += buf;
    if (r.baseline) {
      std::snprintf(buf, sizeof buf, "%+.2f\t%ld%%\n", r.baseline->delta_bleu, rounded_speedup(r.baseline->speedup_percent));
      out += buf;
    } else {
      out += "-\t-\n";
    }
  }
  return out;
}

// Stage failures keep their category; the message names the stage.
struct StageError : Error {
  StageError(const std::string& stage, const Error& cause)
      : Error(cause.category(), "stage '" + stage + "': " + cause.what()), stage_name(stage) {}
  std::string stage_name;
};

struct ExperimentOptions {
  std::function<void(const std::string&)> log;  // progress lines, may be empty
};

namespace detail {

template <typename F>
auto run_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  } catch (const std::exception& e) {
    throw StageError(stage, Error("internal", e.what()));
  }
}

inline void prepare_output_dir(const std::filesystem::path& dir, bool overwrite) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path exists and is not a directory: " + dir.string());
    if (!fs::is_empty(dir)) {
      if (!overwrite) throw ConfigError("output directory is not empty (pass overwrite): " + dir.string());
      for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path());
    }
  }
  fs::create_directories(dir);
}

inline std::vector<std::string> both_sides(std::span<const SentencePair> pairs) {
  std::vector<std::string> out;
  out.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    out.push_back(p.source);
    out.push_back(p.target);
  }
  return out;
}

inline std::vector<std::string> targets(std::span<const SentencePair> pairs) {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(p.target);
  return out;
}

inline std::vector<std::string> sources(std::span<const SentencePair> pairs) {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(p.source);
  return out;
}

}  // namespace detail

// Parent training (when no checkpoint is given), child vocabulary, transform,
// transfer, child training, test BLEU and the optional baseline comparison.
// Artifacts land in spec.output_dir; report.json and report.tsv last.
inline ExperimentReport run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options = {}) {
  namespace fs = std::filesystem;
  detail::run_stage("validate", [&] {
    spec.validate();
    detail::prepare_output_dir(spec.output_dir, spec.overwrite);
    return 0;
  });
  const fs::path out = spec.output_dir;
  auto log = [&](const std::string& line) {
    if (options.log) options.log(line);
  };
  auto progress = [&](const std::string& what) {
    nmt::TrainOptions o;
    o.on_eval = [&, what](const nmt::TrajectoryPoint& p) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s step %d bleu %.2f loss %.4f acc %.4f", what.c_str(), p.step, p.bleu, p.loss,
                    p.accuracy);
      log(buf);
    };
    return o;
  };
  auto train_or_stage_error = [&](const std::string& stage, auto&& fn) {
    return detail::run_stage(stage, [&] {
      try {
        return fn();
      } catch (const nmt::TrainingAborted& e) {
        save_checkpoint(e.checkpoint, out / (stage + ".diagnostic.ckpt"));
        throw;
      }
    });
  };

  const synth::Task child = detail::run_stage("read child task", [&] { return synth::read_task(spec.child_task); });

  // Parent.
  std::optional<Checkpoint> parent_ck;
  std::optional<Vocabulary> parent_vocab;
  if (spec.needs_parent()) {
    if (!spec.parent_checkpoint.empty()) {
      parent_ck = detail::run_stage("load parent", [&] { return load_checkpoint(spec.parent_checkpoint); });
      parent_vocab = detail::run_stage("load parent", [&] { return load_vocabulary(spec.parent_vocab); });
    } else {
      const synth::Task parent = detail::run_stage("read parent task", [&] { return synth::read_task(spec.parent_task); });
      parent_vocab = detail::run_stage("parent vocab", [&] {
        const auto corpus = detail::both_sides(parent.train);
        auto v = build_vocabulary(corpus, static_cast<std::size_t>(spec.model.vocab_size));
        save_vocabulary(v, out / "parent" / "parent.vocab");
        return v;
      });
      log("training parent");
      const auto result = train_or_stage_error("parent training", [&] {
        return nmt::train(std::nullopt, parent.train, parent.dev, *parent_vocab, spec.model, spec.parent_train,
                          nmt::FreezeMask::none(), progress("parent"));
      });
      parent_ck = result.best;
      detail::run_stage("parent training", [&] {
        save_checkpoint(result.best, out / "parent" / "parent.ckpt");
        write_file(out / "parent" / "trajectory.tsv", nmt::trajectory_tsv(result.trajectory));
        return 0;
      });
    }
  }

  // Child vocabulary and initialization.
  std::optional<Checkpoint> init;
  nmt::ModelConfig child_model = spec.model;
  const Vocabulary vocab = detail::run_stage("child vocab", [&]() -> Vocabulary {
    switch (spec.mode) {
      case ExperimentMode::kDirect:
        init = transfer_init(*parent_ck, {TransferMode::kDirect, std::nullopt, false, false});
        return *parent_vocab;
      case ExperimentMode::kTransformed: {
        const auto corpus = detail::both_sides(child.train);
        const auto child_vocab = build_vocabulary(corpus, parent_vocab->size());
        save_vocabulary(child_vocab, out / "child_specific.vocab");
        const auto freq = subword_frequencies(corpus, child_vocab);
        auto mapping = transform_vocabulary(*parent_vocab, child_vocab, spec.strategy, spec.strategy_seed, freq);
        write_file(out / "mapping.json", mapping_report(mapping).dump(2) + "\n");
        init = transfer_init(*parent_ck, {TransferMode::kTransformed, mapping, false, false});
        return mapping.transformed;
      }
      case ExperimentMode::kScratch:
      default: {
        const auto corpus = detail::both_sides(child.train);
        const std::size_t size =
            spec.child_vocab_size ? spec.child_vocab_size : static_cast<std::size_t>(spec.model.vocab_size);
        child_model.vocab_size = static_cast<int>(size);
        return build_vocabulary(corpus, size);
      }
    }
  });
  detail::run_stage("child vocab", [&] {
    save_vocabulary(vocab, out / "child.vocab");
    return 0;
  });

  ExperimentReport report;
  report.spec = spec.to_json();
  report.name = spec.name;
  report.mode = spec.mode;
  report.child_fragmentation = detail::run_stage("child vocab", [&] {
    const auto tgt = detail::targets(child.train);
    return fragmentation(tgt, vocab, static_cast<std::size_t>(spec.child_train.length_limit));
  });

  log("training child (" + std::string(to_string(spec.mode)) + ")");
  const auto result = train_or_stage_error("child training", [&] {
    return nmt::train(init, child.train, child.dev, vocab, child_model, spec.child_train, spec.freeze,
                      progress("child"));
  });
  detail::run_stage("child training", [&] {
    save_checkpoint(result.best, out / "best.ckpt");
    write_file(out / "trajectory.tsv", nmt::trajectory_tsv(result.trajectory));
    return 0;
  });
  report.best_dev_bleu = result.best_bleu;
  report.steps_to_best = result.best_step;
  report.final_step = result.trajectory.back().step;
  report.early_stopped = result.early_stopped;
  report.first_lr = result.first_lr;
  report.train_pairs_used = result.train_pairs_used;
  report.train_pairs_filtered = result.train_pairs_filtered;
  report.trajectory = result.trajectory;
  report.checkpoint = (out / "best.ckpt").string();
  report.vocab = (out / "child.vocab").string();

  const auto refs = detail::targets(child.test);
  const auto hyps = detail::run_stage("test", [&] {
    const auto h = nmt::translate(result.best, vocab, detail::sources(child.test), spec.beam,
                                  spec.child_train.length_limit + 1);
    write_lines(out / "test.hyp", h);
    return h;
  });
  report.test_hypotheses = (out / "test.hyp").string();
  report.test_bleu = bleu(hyps, refs).score;
  report.bleu_signature = bleu_signature(false);

  if (!spec.baseline_report.empty()) {
    report.baseline = detail::run_stage("significance", [&] {
      const auto base = load_report(spec.baseline_report);
      const auto base_hyps = read_lines(base.test_hypotheses);
      BaselineComparison c;
      c.baseline_name = base.name;
      c.baseline_test_bleu = base.test_bleu;
      c.baseline_best_dev_bleu = base.best_dev_bleu;
      c.baseline_steps = base.steps_to_best;
      c.delta_bleu = report.test_bleu - base.test_bleu;
      c.speedup_percent = base.steps_to_best > 0 ? speedup_percent(base.steps_to_best, report.steps_to_best) : 0.0;
      c.steps_to_baseline_best = steps_to_reach(report.trajectory, base.best_dev_bleu);
      c.method_better =
          paired_bootstrap(base_hyps, hyps, refs, spec.bootstrap_samples, spec.alpha, spec.bootstrap_seed);
      c.baseline_better =
          paired_bootstrap(hyps, base_hyps, refs, spec.bootstrap_samples, spec.alpha, spec.bootstrap_seed);
      return c;
    });
  }

  detail::run_stage("report", [&] {
    write_file(out / "report.json", report.to_json().dump(2) + "\n");
    const std::vector<ExperimentReport> one = {report};
    write_file(out / "report.tsv", results_table_tsv(one));
    return 0;
  });
  return report;
}

}  // namespace recycle
