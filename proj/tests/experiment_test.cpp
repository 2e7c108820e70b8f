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

#include "recycle/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace recycle {
namespace {

struct Fixture {
  std::filesystem::path root;
  ExperimentSpec spec;
};

// Tiny tasks and model: a parent and a child cipher task over one lexicon.
Fixture tiny(const std::string& name) {
  Fixture f;
  f.root = testing::scratch_dir("exp_" + name);
  synth::write_task(synth::make_task(1, 120, 20, "lat", synth::Script::kLatin, 3), f.root / "parent");
  synth::write_task(synth::make_task(1, 80, 20, "cyr", synth::Script::kCyrillic, 4, 1), f.root / "child");
  auto& s = f.spec;
  s.parent_task = f.root / "parent";
  s.child_task = f.root / "child";
  s.model.d_model = 16;
  s.model.n_heads = 2;
  s.model.n_layers = 1;
  s.model.ffn_dim = 32;
  s.model.vocab_size = 96;
  s.model.max_len = 160;
  s.model.dropout = 0.0;
  for (auto* t : {&s.parent_train, &s.child_train}) {
    t->max_steps = 40;
    t->eval_every = 20;
    t->warmup_steps = 20;
    t->base_lr = 0.1;
    t->batch_tokens = 256;
    t->length_limit = 150;
    t->min_steps = 1000;
  }
  s.bootstrap_samples = 100;
  return f;
}

TEST(Report, SpeedupOfPublishedRow) {
  const double s = speedup_percent(270000, 110000);
  EXPECT_NEAR(s, 160000.0 / 270000.0 * 100.0, 1e-12);
  EXPECT_EQ(rounded_speedup(s), 59);
  EXPECT_DOUBLE_EQ(speedup_percent(100, 100), 0.0);
  EXPECT_THROW(speedup_percent(0, 10), DataError);
}

TEST(Report, RoundedSpeedupsOfAllPublishedRows) {
  // (baseline steps, transformed steps, printed speed-up)
  const struct {
    double base, method;
    long printed;
  } rows[] = {{45, 38, 16},   {95, 75, 21},   {420, 270, 36}, {270, 110, 59},
              {1090, 450, 59}, {820, 720, 12}, {70, 60, 14},   {980, 700, 29}};
  for (const auto& r : rows) EXPECT_EQ(rounded_speedup(speedup_percent(r.base, r.method)), r.printed) << r.base;
}

TEST(Report, StepsToReach) {
  std::vector<nmt::TrajectoryPoint> t(4);
  const double bleus[] = {0, 5, 12, 11};
  for (int i = 0; i < 4; ++i) {
    t[static_cast<std::size_t>(i)].step = i * 100;
    t[static_cast<std::size_t>(i)].bleu = bleus[i];
  }
  EXPECT_EQ(steps_to_reach(t, 5.0), 100);
  EXPECT_EQ(steps_to_reach(t, 11.5), 200);
  EXPECT_EQ(steps_to_reach(t, 0.0), 0);
  EXPECT_FALSE(steps_to_reach(t, 13.0).has_value());
}

TEST(Report, TableColumns) {
  ExperimentReport base, method;
  base.name = "baseline";
  base.test_bleu = 20;
  base.steps_to_best = 270000;
  method.name = "transformed";
  method.test_bleu = 21.5;
  method.steps_to_best = 110000;
  BaselineComparison c;
  c.delta_bleu = 1.5;
  c.speedup_percent = speedup_percent(270000, 110000);
  method.baseline = c;
  const std::vector<ExperimentReport> rows = {base, method};
  EXPECT_EQ(results_table_tsv(rows),
            "system\tBLEU\tSteps\tdBLEU\tSpeed-up\n"
            "baseline\t20.00\t270000\t-\t-\n"
            "transformed\t21.50\t110000\t+1.50\t59%\n");
}

TEST(Report, JsonRoundTrip) {
  ExperimentReport r;
  r.name = "x";
  r.mode = ExperimentMode::kDirect;
  r.best_dev_bleu = 12.5;
  r.steps_to_best = 300;
  r.trajectory = {{0, 10, 1.0, 2.0, 0.5, 0.0}, {100, 110, 12.5, 1.5, 0.6, 0.001}};
  BaselineComparison c;
  c.baseline_name = "b";
  c.steps_to_baseline_best = 100;
  c.method_better.p_like = 0.01;
  r.baseline = c;
  const auto back = ExperimentReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(back.trajectory, r.trajectory);
}

TEST(Spec, JsonRoundTrip) {
  auto f = tiny("spec_json");
  f.spec.mode = ExperimentMode::kTransformed;
  f.spec.strategy = AssignStrategy::kLevenshtein;
  f.spec.freeze = nmt::FreezeMask::only(nmt::Component::kAttention);
  const auto back = ExperimentSpec::from_json(f.spec.to_json());
  EXPECT_EQ(back.to_json(), f.spec.to_json());
}

TEST(Experiment, ScratchRunIsPopulatedAndReproducible) {
  auto f = tiny("scratch");
  f.spec.mode = ExperimentMode::kScratch;
  f.spec.output_dir = f.root / "a";
  const auto a = run_experiment(f.spec);
  EXPECT_EQ(a.trajectory.size(), 3u);
  EXPECT_GE(a.test_bleu, 0.0);
  EXPECT_FALSE(a.bleu_signature.empty());
  for (const char* file : {"report.json", "report.tsv", "best.ckpt", "child.vocab", "test.hyp", "trajectory.tsv"}) {
    EXPECT_TRUE(std::filesystem::exists(f.spec.output_dir / file)) << file;
  }
  // Re-run from the embedded spec into a fresh directory.
  auto again = ExperimentSpec::from_json(load_report(f.spec.output_dir / "report.json").spec);
  again.output_dir = f.root / "b";
  const auto b = run_experiment(again);
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(a.test_bleu, b.test_bleu);
  EXPECT_EQ(read_file(f.root / "a" / "test.hyp"), read_file(f.root / "b" / "test.hyp"));
}

TEST(Experiment, DirectOnIdenticalTaskStartsAtParentBleu) {
  auto f = tiny("identical");
  f.spec.parent_task = f.spec.child_task;
  f.spec.mode = ExperimentMode::kDirect;
  f.spec.output_dir = f.root / "out";
  const auto r = run_experiment(f.spec);
  const auto parent_vocab = load_vocabulary(f.spec.output_dir / "parent" / "parent.vocab");
  const auto parent = load_checkpoint(f.spec.output_dir / "parent" / "parent.ckpt");
  const auto dev = synth::read_split(f.spec.child_task, "dev");
  std::vector<std::string> src, ref;
  for (const auto& p : dev) {
    src.push_back(p.source);
    ref.push_back(p.target);
  }
  const auto hyps = nmt::translate(parent, parent_vocab, src, 1, f.spec.child_train.length_limit + 1);
  EXPECT_DOUBLE_EQ(r.trajectory.front().bleu, bleu(hyps, ref).score);
}

TEST(Experiment, FullyFrozenDirectPeaksAtFirstEvaluation) {
  auto f = tiny("frozen");
  f.spec.mode = ExperimentMode::kDirect;
  f.spec.freeze = nmt::FreezeMask::all();
  f.spec.output_dir = f.root / "out";
  const auto r = run_experiment(f.spec);
  EXPECT_EQ(r.steps_to_best, 0);
  for (const auto& p : r.trajectory) EXPECT_EQ(p.bleu, r.trajectory.front().bleu);
}

TEST(Experiment, TransformedAgainstBaselineReportsBothDirections) {
  auto f = tiny("compare");
  f.spec.mode = ExperimentMode::kScratch;
  f.spec.name = "baseline";
  f.spec.output_dir = f.root / "base";
  run_experiment(f.spec);
  f.spec.mode = ExperimentMode::kTransformed;
  f.spec.name = "transformed";
  f.spec.output_dir = f.root / "trans";
  f.spec.baseline_report = f.root / "base" / "report.json";
  const auto r = run_experiment(f.spec);
  ASSERT_TRUE(r.baseline.has_value());
  EXPECT_EQ(r.baseline->baseline_name, "baseline");
  EXPECT_EQ(r.baseline->method_better.n_samples, 100u);
  EXPECT_DOUBLE_EQ(r.baseline->method_better.bleu_b, r.test_bleu);
  EXPECT_DOUBLE_EQ(r.baseline->baseline_better.bleu_a, r.test_bleu);
  EXPECT_TRUE(std::filesystem::exists(f.spec.output_dir / "mapping.json"));
  EXPECT_TRUE(std::filesystem::exists(f.spec.output_dir / "parent" / "parent.ckpt"));
  const auto v = load_vocabulary(f.spec.output_dir / "child.vocab");
  EXPECT_EQ(v.size(), 96u);
}

TEST(Experiment, NonEmptyOutputNeedsOverwrite) {
  auto f = tiny("overwrite");
  f.spec.mode = ExperimentMode::kScratch;
  f.spec.output_dir = f.root / "out";
  write_file(f.spec.output_dir / "stale.txt", "x");
  try {
    run_experiment(f.spec);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage_name, "validate");
    EXPECT_EQ(e.category(), "config");
  }
  f.spec.overwrite = true;
  run_experiment(f.spec);
  EXPECT_FALSE(std::filesystem::exists(f.spec.output_dir / "stale.txt"));
}

TEST(Experiment, MissingInputsAreConfigErrors) {
  auto f = tiny("missing");
  f.spec.child_task = f.root / "nope";
  f.spec.output_dir = f.root / "out";
  EXPECT_THROW(run_experiment(f.spec), StageError);
  auto g = tiny("missing_parent");
  g.spec.parent_task.clear();
  g.spec.output_dir = g.root / "out";
  g.spec.mode = ExperimentMode::kTransformed;
  try {
    run_experiment(g.spec);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.category(), "config");
  }
}

TEST(Experiment, StageFailureKeepsPartialArtifacts) {
  auto f = tiny("partial");
  f.spec.mode = ExperimentMode::kTransformed;
  f.spec.output_dir = f.root / "out";
  f.spec.child_train.length_limit = 1000;  // exceeds max_len
  try {
    run_experiment(f.spec);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage_name, "child training");
  }
  EXPECT_TRUE(std::filesystem::exists(f.spec.output_dir / "parent" / "parent.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(f.spec.output_dir / "child.vocab"));
}

}  // namespace
}  // namespace recycle
