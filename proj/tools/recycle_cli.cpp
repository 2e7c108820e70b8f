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

// Command-line front end: one subcommand per pipeline stage plus
// `experiment` for whole runs. Exit codes: 0 ok, 1 runtime failure,
// 2 usage error (bad flags, unreadable config, schema violation).

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "recycle/checkpoint.hpp"
#include "recycle/corpus_stats.hpp"
#include "recycle/eval.hpp"
#include "recycle/experiment.hpp"
#include "recycle/io.hpp"
#include "recycle/nmt/config.hpp"
#include "recycle/nmt/train.hpp"
#include "recycle/synth.hpp"
#include "recycle/transform.hpp"
#include "recycle/vocab.hpp"

namespace {

using namespace recycle;
namespace fs = std::filesystem;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Flags named after every config key (--d-model, --base-lr, ...). Values
// given on the command line override the config file.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void add_to(CLI::App* app) {
    app->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    for (auto key : nmt::kConfigKeys) {
      std::string flag = "--" + std::string(key);
      std::replace(flag.begin(), flag.end(), '_', '-');
      app->add_option(flag, values[std::string(key)], "config key " + std::string(key));
    }
  }

  void apply(nmt::ModelConfig& m, nmt::TrainConfig& t) const {
    if (!file.empty()) nmt::ConfigFile::load(file).apply(m, t);
    nmt::ConfigFile overrides;
    for (const auto& [k, v] : values) {
      if (!v.empty()) overrides.values[k] = v;
    }
    overrides.apply(m, t);
  }
};

std::vector<std::string> read_all(const std::vector<std::string>& files) {
  std::vector<std::string> out;
  for (const auto& f : files) {
    auto lines = read_lines(f);
    out.insert(out.end(), lines.begin(), lines.end());
  }
  return out;
}

ParallelCorpus read_pairs(const std::string& src, const std::string& tgt) {
  const auto s = read_lines(src);
  const auto t = read_lines(tgt);
  return zip_corpus(s, t);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_bleu(const BleuScore& b, bool smooth) {
  std::cout << "BLEU = " << fmt("%.2f", b.score) << " " << fmt("%.1f", b.precisions[0] * 100) << "/"
            << fmt("%.1f", b.precisions[1] * 100) << "/" << fmt("%.1f", b.precisions[2] * 100) << "/"
            << fmt("%.1f", b.precisions[3] * 100) << " (BP = " << fmt("%.3f", b.brevity_penalty)
            << " hyp_len = " << b.hyp_len << " ref_len = " << b.ref_len << ")\n";
  std::cout << "signature: " << bleu_signature(smooth) << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Vocabulary transformation and transfer learning toolkit for seq2seq models"};
  app.require_subcommand(1);

  // vocab
  auto* vocab_cmd = app.add_subcommand("vocab", "Build a subword vocabulary from corpus files");
  std::vector<std::string> vocab_corpus;
  std::size_t vocab_size = 512;
  std::string vocab_out;
  vocab_cmd->add_option("--corpus", vocab_corpus, "corpus file(s), one sentence per line")
      ->required()
      ->check(CLI::ExistingFile);
  vocab_cmd->add_option("--size", vocab_size, "vocabulary size")->required();
  vocab_cmd->add_option("--out", vocab_out, "output vocabulary file")->required();

  // segment
  auto* seg_cmd = app.add_subcommand("segment", "Segment text into subwords (or detokenize with --decode)");
  std::string seg_vocab, seg_in, seg_out;
  bool seg_ids = false, seg_decode = false;
  seg_cmd->add_option("--vocab", seg_vocab)->required()->check(CLI::ExistingFile);
  seg_cmd->add_option("--input", seg_in)->required()->check(CLI::ExistingFile);
  seg_cmd->add_option("--output", seg_out)->required();
  seg_cmd->add_flag("--ids", seg_ids, "write token ids instead of subword strings");
  seg_cmd->add_flag("--decode", seg_decode, "input holds token ids; write detokenized text");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Fragmentation statistics of a corpus under vocabularies");
  std::vector<std::string> stats_vocabs;
  std::string stats_corpus, stats_tsv, stats_json;
  std::size_t stats_limit = 0;
  stats_cmd->add_option("--vocab", stats_vocabs, "vocabulary file(s)")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--corpus", stats_corpus)->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--length-limit", stats_limit, "report sentences over this many tokens (0: none)");
  stats_cmd->add_option("--out-tsv", stats_tsv);
  stats_cmd->add_option("--out-json", stats_json);

  // transform
  auto* tr_cmd = app.add_subcommand("transform", "Transform a parent vocabulary to hold child subwords");
  std::string tr_parent, tr_child, tr_strategy = "frequency", tr_out, tr_report;
  std::vector<std::string> tr_corpus;
  std::uint64_t tr_seed = 0;
  tr_cmd->add_option("--parent", tr_parent)->required()->check(CLI::ExistingFile);
  tr_cmd->add_option("--child", tr_child)->required()->check(CLI::ExistingFile);
  tr_cmd->add_option("--strategy", tr_strategy, "ordered|frequency|random|levenshtein|random_all")
      ->check(CLI::IsMember({"ordered", "frequency", "random", "levenshtein", "random_all"}));
  tr_cmd->add_option("--seed", tr_seed);
  tr_cmd->add_option("--child-corpus", tr_corpus, "child corpus for subword frequencies")->check(CLI::ExistingFile);
  tr_cmd->add_option("--out", tr_out)->required();
  tr_cmd->add_option("--report", tr_report, "mapping report JSON (default: <out>.json)");

  // transfer
  auto* tf_cmd = app.add_subcommand("transfer", "Initialize a child checkpoint from a parent");
  std::string tf_parent, tf_mode = "transformed", tf_vocab, tf_mapping, tf_out;
  bool tf_reset_step = false, tf_reset_moments = false;
  tf_cmd->add_option("--parent-ckpt", tf_parent)->required()->check(CLI::ExistingFile);
  tf_cmd->add_option("--mode", tf_mode)->check(CLI::IsMember({"direct", "transformed"}));
  tf_cmd->add_option("--transformed-vocab", tf_vocab)->check(CLI::ExistingFile);
  tf_cmd->add_option("--mapping", tf_mapping, "mapping report from `transform`")->check(CLI::ExistingFile);
  tf_cmd->add_flag("--reset-step", tf_reset_step);
  tf_cmd->add_flag("--reset-moments", tf_reset_moments);
  tf_cmd->add_option("--out", tf_out)->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model from scratch or from a checkpoint");
  std::string tn_vocab, tn_train_src, tn_train_tgt, tn_dev_src, tn_dev_tgt, tn_init, tn_out, tn_freeze;
  ConfigFlags tn_cfg;
  train_cmd->add_option("--vocab", tn_vocab)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--train-src", tn_train_src)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--train-tgt", tn_train_tgt)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev-src", tn_dev_src)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev-tgt", tn_dev_tgt)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--init", tn_init, "initial checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--freeze", tn_freeze, "comma separated: embeddings,encoder,decoder,attention");
  train_cmd->add_option("--out-dir", tn_out)->required();
  tn_cfg.add_to(train_cmd);

  // translate
  auto* tl_cmd = app.add_subcommand("translate", "Translate sentences with a checkpoint");
  std::string tl_ckpt, tl_vocab, tl_in, tl_out;
  int tl_beam = 1, tl_max_len = 0;
  tl_cmd->add_option("--ckpt", tl_ckpt)->required()->check(CLI::ExistingFile);
  tl_cmd->add_option("--vocab", tl_vocab)->required()->check(CLI::ExistingFile);
  tl_cmd->add_option("--input", tl_in)->required()->check(CLI::ExistingFile);
  tl_cmd->add_option("--output", tl_out)->required();
  tl_cmd->add_option("--beam", tl_beam)->check(CLI::PositiveNumber);
  tl_cmd->add_option("--max-len", tl_max_len, "maximum output tokens (0: model max_len)");

  // bleu
  auto* bleu_cmd = app.add_subcommand("bleu", "Corpus BLEU");
  std::string bl_hyp, bl_ref;
  bool bl_smooth = false;
  bleu_cmd->add_option("--hyp", bl_hyp)->required()->check(CLI::ExistingFile);
  bleu_cmd->add_option("--ref", bl_ref)->required()->check(CLI::ExistingFile);
  bleu_cmd->add_flag("--smooth", bl_smooth, "add-one smoothing for n >= 2");

  // significance
  auto* sig_cmd = app.add_subcommand("significance", "Paired bootstrap resampling: is B better than A?");
  std::string sg_a, sg_b, sg_ref;
  std::size_t sg_samples = 1000;
  double sg_alpha = 0.05;
  std::uint64_t sg_seed = 12345;
  bool sg_smooth = false;
  sig_cmd->add_option("--hyp-a", sg_a)->required()->check(CLI::ExistingFile);
  sig_cmd->add_option("--hyp-b", sg_b)->required()->check(CLI::ExistingFile);
  sig_cmd->add_option("--refs", sg_ref)->required()->check(CLI::ExistingFile);
  sig_cmd->add_option("--samples", sg_samples)->check(CLI::PositiveNumber);
  sig_cmd->add_option("--alpha", sg_alpha)->check(CLI::Range(0.0, 1.0));
  sig_cmd->add_option("--seed", sg_seed);
  sig_cmd->add_flag("--smooth", sg_smooth);

  // synth
  auto* syn_cmd = app.add_subcommand("synth", "Generate a synthetic cipher-language task");
  std::string sy_out, sy_script = "latin", sy_name;
  std::uint64_t sy_base_seed = 1, sy_target_seed = 2, sy_stream = 0;
  std::size_t sy_pairs = 1000, sy_lexicon = 150;
  syn_cmd->add_option("--out-dir", sy_out)->required();
  syn_cmd->add_option("--script", sy_script)->check(CLI::IsMember({"latin", "cyrillic", "private-use"}));
  syn_cmd->add_option("--name", sy_name, "target language name (default: script)");
  syn_cmd->add_option("--base-seed", sy_base_seed);
  syn_cmd->add_option("--target-seed", sy_target_seed);
  syn_cmd->add_option("--sentence-stream", sy_stream, "selects an independent stream of source sentences");
  syn_cmd->add_option("--pairs", sy_pairs);
  syn_cmd->add_option("--lexicon-size", sy_lexicon);

  // experiment
  auto* ex_cmd = app.add_subcommand("experiment", "Run a full parent/child experiment");
  std::string ex_spec, ex_mode, ex_parent_task, ex_parent_ckpt, ex_parent_vocab, ex_child_task, ex_strategy,
      ex_freeze, ex_baseline, ex_out, ex_name, ex_parent_config;
  std::optional<std::uint64_t> ex_strategy_seed;
  std::optional<int> ex_beam;
  bool ex_overwrite = false, ex_quiet = false;
  ConfigFlags ex_cfg;
  ex_cmd->add_option("--spec", ex_spec, "experiment spec JSON (or a report.json to re-run)")
      ->check(CLI::ExistingFile);
  ex_cmd->add_option("--name", ex_name);
  ex_cmd->add_option("--mode", ex_mode)->check(CLI::IsMember({"scratch", "direct", "transformed"}));
  ex_cmd->add_option("--parent-task", ex_parent_task)->check(CLI::ExistingDirectory);
  ex_cmd->add_option("--parent-ckpt", ex_parent_ckpt)->check(CLI::ExistingFile);
  ex_cmd->add_option("--parent-vocab", ex_parent_vocab)->check(CLI::ExistingFile);
  ex_cmd->add_option("--child-task", ex_child_task)->check(CLI::ExistingDirectory);
  ex_cmd->add_option("--strategy", ex_strategy)
      ->check(CLI::IsMember({"ordered", "frequency", "random", "levenshtein", "random_all"}));
  ex_cmd->add_option("--strategy-seed", ex_strategy_seed);
  ex_cmd->add_option("--freeze", ex_freeze);
  ex_cmd->add_option("--beam", ex_beam);
  ex_cmd->add_option("--baseline-report", ex_baseline)->check(CLI::ExistingFile);
  ex_cmd->add_option("--parent-config", ex_parent_config, "config file for parent training")
      ->check(CLI::ExistingFile);
  ex_cmd->add_option("--out-dir", ex_out);
  ex_cmd->add_flag("--overwrite", ex_overwrite);
  ex_cmd->add_flag("--quiet", ex_quiet);
  ex_cfg.add_to(ex_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  }

  if (vocab_cmd->parsed()) {
    const auto corpus = read_all(vocab_corpus);
    const auto v = build_vocabulary(corpus, vocab_size);
    save_vocabulary(v, vocab_out);
    std::cout << "vocabulary: " << v.size() << " entries from " << corpus.size() << " sentences -> " << vocab_out
              << " (hash " << v.hash() << ")\n";
  } else if (seg_cmd->parsed()) {
    const auto v = load_vocabulary(seg_vocab);
    std::vector<std::string> out;
    std::size_t tokens = 0;
    for (const auto& line : read_lines(seg_in)) {
      std::string o;
      if (seg_decode) {
        std::vector<TokenId> ids;
        for (const auto& w : utf8::split_words(std::string_view(line))) {
          try {
            ids.push_back(static_cast<TokenId>(std::stol(w)));
          } catch (const std::logic_error&) {
            throw DataError("token id expected, found '" + w + "'");
          }
        }
        o = v.detokenize(ids);
        tokens += ids.size();
      } else {
        const auto seg = v.segment(line);
        for (auto id : seg.token_ids) {
          if (!o.empty()) o.push_back(' ');
          o += seg_ids ? std::to_string(id) : v[id];
        }
        tokens += seg.token_count;
      }
      out.push_back(std::move(o));
    }
    write_lines(seg_out, out);
    std::cout << (seg_decode ? "detokenized " : "segmented ") << out.size() << " sentences (" << tokens
              << " tokens) -> " << seg_out << "\n";
  } else if (stats_cmd->parsed()) {
    const auto corpus = read_lines(stats_corpus);
    std::vector<NamedReport> rows;
    for (const auto& path : stats_vocabs) {
      const auto v = load_vocabulary(path);
      rows.push_back({fs::path(path).stem().string(),
                      fragmentation(corpus, v, stats_limit ? std::optional<std::size_t>(stats_limit) : std::nullopt)});
    }
    const auto tsv = fragmentation_tsv(rows);
    if (!stats_tsv.empty()) write_file(stats_tsv, tsv);
    if (!stats_json.empty()) write_file(stats_json, fragmentation_json(rows).dump(2) + "\n");
    std::cout << tsv;
  } else if (tr_cmd->parsed()) {
    const auto parent = load_vocabulary(tr_parent);
    const auto child = load_vocabulary(tr_child);
    std::vector<std::uint64_t> freq;
    if (!tr_corpus.empty()) freq = subword_frequencies(read_all(tr_corpus), child);
    const auto m = transform_vocabulary(parent, child, parse_strategy(tr_strategy), tr_seed, freq);
    save_vocabulary(m.transformed, tr_out);
    const std::string report = tr_report.empty() ? tr_out + ".json" : tr_report;
    write_file(report, mapping_report(m).dump(2) + "\n");
    const auto st = mapping_stats(m);
    std::cout << "transformed vocabulary -> " << tr_out << " (strategy " << tr_strategy << ", shared "
              << fmt("%.4f", st.shared_fraction) << ", reassigned " << st.reassigned_count << "); mapping -> "
              << report << "\n";
  } else if (tf_cmd->parsed()) {
    const auto parent = load_checkpoint(tf_parent);
    TransferPlan plan;
    plan.mode = tf_mode == "direct" ? TransferMode::kDirect : TransferMode::kTransformed;
    plan.reset_step = tf_reset_step;
    plan.reset_moments = tf_reset_moments;
    if (plan.mode == TransferMode::kTransformed) {
      if (tf_vocab.empty() || tf_mapping.empty()) {
        throw ConfigError("transformed transfer needs --transformed-vocab and --mapping");
      }
      nlohmann::json report;
      try {
        report = nlohmann::json::parse(read_file(tf_mapping));
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("mapping report is not JSON: ") + e.what(), 1);
      }
      plan.mapping = mapping_from_report(report, load_vocabulary(tf_vocab));
    }
    const auto child = transfer_init(parent, plan);
    save_checkpoint(child, tf_out);
    std::cout << "child checkpoint (" << tf_mode << ", step " << child.step << ") -> " << tf_out << "\n";
  } else if (train_cmd->parsed()) {
    nmt::ModelConfig model;
    nmt::TrainConfig cfg;
    tn_cfg.apply(model, cfg);
    const auto v = load_vocabulary(tn_vocab);
    if (tn_cfg.values.at("vocab_size").empty() && tn_init.empty()) model.vocab_size = static_cast<int>(v.size());
    std::optional<Checkpoint> init;
    if (!tn_init.empty()) init = load_checkpoint(tn_init);
    const auto train_pairs = read_pairs(tn_train_src, tn_train_tgt);
    const auto dev_pairs = read_pairs(tn_dev_src, tn_dev_tgt);
    nmt::TrainOptions opt;
    opt.on_eval = [](const nmt::TrajectoryPoint& p) {
      std::cout << "step " << p.step << " bleu " << fmt("%.2f", p.bleu) << " loss " << fmt("%.4f", p.loss)
                << " acc " << fmt("%.4f", p.accuracy) << std::endl;
    };
    const auto r = nmt::train(init, train_pairs, dev_pairs, v, model, cfg, nmt::FreezeMask::parse(tn_freeze), opt);
    const fs::path out = tn_out;
    save_checkpoint(r.best, out / "best.ckpt");
    save_checkpoint(r.last, out / "last.ckpt");
    write_file(out / "trajectory.tsv", nmt::trajectory_tsv(r.trajectory));
    std::cout << "best dev BLEU " << fmt("%.2f", r.best_bleu) << " at step " << r.best_step
              << (r.early_stopped ? " (early stop)" : "") << "; " << r.train_pairs_filtered
              << " pairs over the length limit; checkpoints -> " << out.string() << "\n";
  } else if (tl_cmd->parsed()) {
    const auto ck = load_checkpoint(tl_ckpt);
    const auto v = load_vocabulary(tl_vocab);
    const auto in = read_lines(tl_in);
    const auto out = nmt::translate(ck, v, in, tl_beam, tl_max_len);
    write_lines(tl_out, out);
    std::cout << "translated " << out.size() << " sentences (beam " << tl_beam << ") -> " << tl_out << "\n";
  } else if (bleu_cmd->parsed()) {
    const auto h = read_lines(bl_hyp);
    const auto r = read_lines(bl_ref);
    print_bleu(bleu(h, r, bl_smooth), bl_smooth);
  } else if (sig_cmd->parsed()) {
    const auto a = read_lines(sg_a);
    const auto b = read_lines(sg_b);
    const auto r = read_lines(sg_ref);
    const auto s = paired_bootstrap(a, b, r, sg_samples, sg_alpha, sg_seed, sg_smooth);
    std::cout << "BLEU A = " << fmt("%.2f", s.bleu_a) << ", BLEU B = " << fmt("%.2f", s.bleu_b) << "\n";
    std::cout << "p = " << fmt("%.4f", s.p_like) << " (" << s.n_samples << " samples, seed " << s.seed << ", alpha "
              << s.alpha << "): B is " << (s.significant ? "significantly better than A" : "not significantly better than A")
              << "\n";
    std::cout << "signature: " << bleu_signature(sg_smooth) << "\n";
  } else if (syn_cmd->parsed()) {
    const auto script = synth::parse_script(sy_script);
    const auto task = synth::make_task(sy_base_seed, sy_pairs, sy_lexicon, sy_name.empty() ? sy_script : sy_name,
                                       script, sy_target_seed, sy_stream);
    synth::write_task(task, sy_out);
    std::cout << "task " << task.train.size() << "/" << task.dev.size() << "/" << task.test.size() << " -> " << sy_out
              << "\n";
  } else if (ex_cmd->parsed()) {
    ExperimentSpec spec;
    if (!ex_spec.empty()) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_file(ex_spec));
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("spec is not JSON: ") + e.what(), 1);
      }
      spec = ExperimentSpec::from_json(j.contains("spec") ? j["spec"] : j);
    }
    ex_cfg.apply(spec.model, spec.child_train);
    if (!ex_parent_config.empty()) {
      nmt::ModelConfig ignored = spec.model;
      nmt::ConfigFile::load(ex_parent_config).apply(ignored, spec.parent_train);
    } else if (ex_spec.empty()) {
      spec.parent_train = spec.child_train;
    }
    if (!ex_name.empty()) spec.name = ex_name;
    if (!ex_mode.empty()) spec.mode = parse_mode(ex_mode);
    if (!ex_parent_task.empty()) spec.parent_task = ex_parent_task;
    if (!ex_parent_ckpt.empty()) spec.parent_checkpoint = ex_parent_ckpt;
    if (!ex_parent_vocab.empty()) spec.parent_vocab = ex_parent_vocab;
    if (!ex_child_task.empty()) spec.child_task = ex_child_task;
    if (!ex_strategy.empty()) spec.strategy = parse_strategy(ex_strategy);
    if (ex_strategy_seed) spec.strategy_seed = *ex_strategy_seed;
    if (!ex_freeze.empty()) spec.freeze = nmt::FreezeMask::parse(ex_freeze);
    if (ex_beam) spec.beam = *ex_beam;
    if (!ex_baseline.empty()) spec.baseline_report = ex_baseline;
    if (!ex_out.empty()) spec.output_dir = ex_out;
    if (ex_overwrite) spec.overwrite = true;
    ExperimentOptions opt;
    if (!ex_quiet) opt.log = [](const std::string& line) { std::cout << line << std::endl; };
    const auto r = run_experiment(spec, opt);
    const std::vector<ExperimentReport> rows = {r};
    std::cout << results_table_tsv(rows);
    std::cout << "test BLEU " << fmt("%.2f", r.test_bleu) << " (" << r.bleu_signature << "); report -> "
              << (spec.output_dir / "report.json").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const recycle::Error& e) {
    const bool usage = e.category() == "config" || e.category() == "parse";
    std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
    return usage ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return kExitRuntime;
  }
}
