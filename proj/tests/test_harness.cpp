/*
 * Copyright 2026 The ASIF Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "asif/checkpoint.hpp"
#include "asif/config.hpp"
#include "asif/experiment.hpp"

using namespace asif;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("asif_harness_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Runs the CLI with `args`; stdout lands in `stdout_path`. Returns the exit code.
int run_cli(const std::string& args, const fs::path& stdout_path) {
  const std::string cmd = std::string("\"") + ASIF_CLI_PATH + "\" " + args + " > \"" + stdout_path.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// A few seconds of training on a tiny planted problem.
constexpr const char* kTinyConfig = R"(
dataset = synthetic
synthetic_classes = 3
synthetic_per_class = 20
synthetic_class_dims = 3
synthetic_identity_dims = 4
synthetic_noise_dims = 2
synthetic_test_per_class = 20
noise = symmetric
eta = 0.2
warmup_epochs = 2
method = asif
lr = 0.05
batch_size = 16
epochs = 3
extractor_widths = 8,4
identifier_hidden = 8
identifier_output = 8
seed = 4
)";

ExperimentConfig tiny(const std::string& extra = "") { return parse_config(std::string(kTinyConfig) + extra); }

double json_number(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\":");
  if (pos == std::string::npos) return std::nan("");
  return std::stod(text.substr(pos + key.size() + 3));
}

}  // namespace

// ---- config ---------------------------------------------------------------

TEST(Config, SerializeParseRoundTrip) {
  ExperimentConfig c;
  EXPECT_EQ(parse_config(serialize_config(c)), c);
  c = tiny("extractor_widths = 7,5,3\nsynthetic_seed = 12\nmethod = asif_fixed\nfixed_lambda = 0.25\n");
  c.lr = 1.0 / 3.0;
  c.eta = 0.7;
  c.dgr_sign = DgrSign::Literal;
  c.prune_options.schedule.min_dims = 9;
  const std::string text = serialize_config(c);
  EXPECT_EQ(parse_config(text), c);
  EXPECT_EQ(serialize_config(parse_config(text)), text);
}

TEST(Config, CommentsAliasesAndOverrides) {
  const ExperimentConfig c = parse_config("# comment\n\n  lambda_if = 3.5  \nN = 200\neta=0.4\nnoise = Instance\n");
  EXPECT_EQ(c.lambda_id, 3.5);
  EXPECT_EQ(c.train_size, 200);
  EXPECT_EQ(c.eta, 0.4);
  EXPECT_EQ(c.noise, NoiseKind::InstanceDependent);
  ExperimentConfig d;
  set_config_value(d, "epochs", "7");
  EXPECT_EQ(d.epochs, 7);
}

TEST(Config, ErrorsNameTheField) {
  auto field_of = [](const std::string& text) -> std::string {
    try {
      parse_config(text).validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return "";
  };
  EXPECT_EQ(field_of("learning_rate = 0.1\n"), "learning_rate");
  EXPECT_EQ(field_of("epochs = many\n"), "epochs");
  EXPECT_EQ(field_of("method = mae\n"), "method");
  EXPECT_EQ(field_of("eta = 1.5\nnoise = symmetric\n"), "eta");
  EXPECT_EQ(field_of("batch_size = 0\n"), "batch_size");
  EXPECT_NE(field_of("epochs\n"), "");
}

TEST(Config, EveryPresetParsesAndValidates) {
  int seen = 0;
  for (const auto& entry : fs::recursive_directory_iterator(fs::path(ASIF_SOURCE_DIR) / "presets")) {
    if (entry.path().extension() != ".cfg") continue;
    SCOPED_TRACE(entry.path().string());
    ExperimentConfig c;
    ASSERT_NO_THROW(c = load_config(entry.path()));
    EXPECT_NO_THROW(c.validate());
    ++seen;
  }
  EXPECT_GE(seen, 35);
}

TEST(Config, PresetsCarryTheirFileNames) {
  const fs::path root = fs::path(ASIF_SOURCE_DIR) / "presets";
  for (const char* set : {"cifar10", "fashion_mnist"}) {
    const ExperimentConfig sym = load_config(root / set / "symmetric_eta0.7.cfg");
    EXPECT_EQ(sym.noise, NoiseKind::Symmetric);
    EXPECT_EQ(sym.eta, 0.7);
    const ExperimentConfig inst = load_config(root / set / "instance_eta0.2.cfg");
    EXPECT_EQ(inst.noise, NoiseKind::InstanceDependent);
    EXPECT_EQ(inst.eta, 0.2);
    const ExperimentConfig clean = load_config(root / set / "clean_n10k.cfg");
    EXPECT_EQ(clean.noise, NoiseKind::None);
    EXPECT_EQ(clean.train_size, 10000);
  }
}

// ---- experiment runs ------------------------------------------------------

TEST(Experiment, CeReportHasNoIdentifierFields) {
  const RunReport r = run_experiment(tiny("method = ce\n"));
  ASSERT_EQ(r.repeats.size(), 1u);
  for (const auto& e : r.repeats[0].epochs) {
    EXPECT_TRUE(e.lambdas.empty());
    EXPECT_TRUE(e.id_losses.empty());
    EXPECT_EQ(epoch_json(e).find("lambda"), std::string::npos);
  }
  EXPECT_EQ(report_json(r).find("lambda"), std::string::npos);
}

TEST(Experiment, AsifReportsOneLambdaPerClass) {
  const RunReport r = run_experiment(tiny());
  for (const auto& e : r.repeats[0].epochs) {
    EXPECT_EQ(e.lambdas.size(), 3u);
    EXPECT_EQ(e.id_losses.size(), 3u);
    ASSERT_TRUE(e.detection.has_value());
  }
  EXPECT_EQ(r.repeats[0].flips, 12u);  // round(60 * 0.2)
  EXPECT_NE(report_json(r).find("final_lambdas"), std::string::npos);
}

TEST(Experiment, RepeatsSummarisedWithSampleStd) {
  const RunReport r = run_experiment(tiny("repeats = 3\n"));
  ASSERT_EQ(r.repeats.size(), 3u);
  double mean = 0.0;
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(r.repeats[static_cast<std::size_t>(k)].seed, 4u + static_cast<unsigned>(k));
    mean += r.repeats[static_cast<std::size_t>(k)].final_test_macro_f1 / 3.0;
  }
  double ss = 0.0;
  for (const auto& rep : r.repeats) ss += std::pow(rep.final_test_macro_f1 - mean, 2);
  EXPECT_NEAR(r.mean_test_macro_f1, mean, 1e-12);
  EXPECT_NEAR(r.std_test_macro_f1, std::sqrt(ss / 2.0), 1e-12);
  EXPECT_EQ(run_experiment(tiny()).std_test_macro_f1, 0.0);
}

TEST(Experiment, SameSeedWritesIdenticalArtifacts) {
  const ExperimentConfig c = tiny("repeats = 2\n");
  const fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
  run_experiment(c, a);
  run_experiment(c, b);
  const std::string metrics = slurp(a / "metrics.jsonl");
  EXPECT_FALSE(metrics.empty());
  EXPECT_EQ(metrics, slurp(b / "metrics.jsonl"));
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  EXPECT_EQ(slurp(a / "r1" / "checkpoint.bin"), slurp(b / "r1" / "checkpoint.bin"));
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 2 * c.epochs);

  run_experiment(tiny("seed = 5\n"), b);
  EXPECT_NE(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, CheckpointEvalMatchesFinalMetric) {
  const fs::path out = temp_dir("ckpt");
  const RunReport r = run_experiment(tiny("repeats = 2\n"), out);
  for (int k = 0; k < 2; ++k) {
    const fs::path ckpt = out / ("r" + std::to_string(k)) / "checkpoint.bin";
    EXPECT_NEAR(evaluate_checkpoint(ckpt), r.repeats[static_cast<std::size_t>(k)].final_test_macro_f1, 1e-9);
  }
  fs::remove_all(out);
}

TEST(Checkpoint, SaveLoadIsBitExact) {
  const fs::path out = temp_dir("ckpt_rt");
  run_experiment(tiny(), out);
  const fs::path first = out / "r0" / "checkpoint.bin", second = out / "copy.bin";
  const Checkpoint ckpt = load_checkpoint(first);
  save_checkpoint(ckpt, second);
  EXPECT_EQ(slurp(first), slurp(second));

  AsifModel model = model_from_checkpoint(ckpt);
  for (const auto& [name, values] : ckpt.tensors) {
    bool found = false;
    for (const auto& p : model.parameters()) {
      if (p.name != name) continue;
      found = true;
      EXPECT_EQ(p.tensor->data, values) << name;
    }
    EXPECT_TRUE(found) << name;
  }
  EXPECT_EQ(parse_config(ckpt.config_text).seed, 4u);
  EXPECT_NO_THROW(ckpt.rng("batches"));
  EXPECT_THROW(ckpt.rng("nonexistent"), Error);
  fs::remove_all(out);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const fs::path dir = temp_dir("ckpt_bad");
  std::ofstream(dir / "bad.bin") << "NOTACKPT";
  EXPECT_THROW(load_checkpoint(dir / "bad.bin"), ParseError);
  run_experiment(tiny(), dir);
  std::string bytes = slurp(dir / "r0" / "checkpoint.bin");
  bytes.resize(bytes.size() / 2);
  std::ofstream(dir / "short.bin", std::ios::binary) << bytes;
  EXPECT_THROW(load_checkpoint(dir / "short.bin"), ParseError);
  fs::remove_all(dir);
}

// ---- command line ---------------------------------------------------------

TEST(Cli, InjectNoiseThenDetectWithOracleLosses) {
  const fs::path dir = temp_dir("cli_detect");
  std::ofstream(dir / "tiny.cfg") << kTinyConfig;
  ASSERT_EQ(run_cli("inject-noise --config \"" + (dir / "tiny.cfg").string() + "\" --out \"" + dir.string() + "\"",
                    dir / "inject.out"),
            0)
      << slurp(dir / "inject.out");
  const NoiseLedger ledger = read_ledger_csv(dir / "ledger.csv");
  EXPECT_EQ(ledger.flip_count(), 12u);
  EXPECT_TRUE(fs::exists(dir / "train.csv"));

  // Flipped samples get the largest losses, so detection is perfect.
  std::map<SampleId, double> losses;
  for (const auto& rec : ledger.records) losses[rec.sample_id] = rec.was_flipped ? 2.0 : 0.1;
  write_losses_csv(losses, dir / "losses.csv");
  ASSERT_EQ(run_cli("detect --losses \"" + (dir / "losses.csv").string() + "\" --ledger \"" +
                        (dir / "ledger.csv").string() + "\"",
                    dir / "detect.out"),
            0);
  const std::string out = slurp(dir / "detect.out");
  EXPECT_DOUBLE_EQ(json_number(out, "f1"), 1.0) << out;
  EXPECT_DOUBLE_EQ(json_number(out, "precision"), 1.0);
  fs::remove_all(dir);
}

TEST(Cli, TrainEvalProbePrune) {
  const fs::path dir = temp_dir("cli_train");
  std::ofstream(dir / "tiny.cfg") << kTinyConfig;
  ASSERT_EQ(run_cli("train --config \"" + (dir / "tiny.cfg").string() + "\" --seed 9 --out \"" + dir.string() + "\"",
                    dir / "train.out"),
            0)
      << slurp(dir / "train.out");
  const std::string report = slurp(dir / "report.json");
  EXPECT_EQ(json_number(report, "seed"), 9.0);
  const double final_f1 = json_number(report, "final_test_macro_f1");

  ASSERT_EQ(run_cli("eval --checkpoint \"" + (dir / "r0" / "checkpoint.bin").string() + "\"", dir / "eval.out"), 0);
  EXPECT_NEAR(json_number(slurp(dir / "eval.out"), "test_macro_f1"), final_f1, 1e-9);

  ASSERT_EQ(run_cli("probe --features \"" + (dir / "r0" / "features.csv").string() + "\"", dir / "probe.out"), 0);
  EXPECT_GE(json_number(slurp(dir / "probe.out"), "best_loss"), 0.0);

  ASSERT_EQ(run_cli("prune --features \"" + (dir / "r0" / "test_features.csv").string() + "\" --labels \"" +
                        (dir / "r0" / "test_labels.csv").string() + "\" --drop 1 --min-dims 2",
                    dir / "prune.out"),
            0)
      << slurp(dir / "prune.out");
  const std::string prune = slurp(dir / "prune.out");
  EXPECT_EQ(std::count(prune.begin(), prune.end(), '\n'), 3);  // 4, 3, 2 dims
  fs::remove_all(dir);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  const fs::path dir = temp_dir("cli_err");
  std::ofstream(dir / "bad.cfg") << "epochs = 3\nlearning_rate = 0.1\n";
  EXPECT_EQ(run_cli("train --config \"" + (dir / "bad.cfg").string() + "\" --out \"" + dir.string() + "\"",
                    dir / "err.out"),
            2);
  EXPECT_NE(slurp(dir / "err.out").find("learning_rate"), std::string::npos);
  EXPECT_NE(run_cli("no-such-command", dir / "err2.out"), 0);
  fs::remove_all(dir);
}
