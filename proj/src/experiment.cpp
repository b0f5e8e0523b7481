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

#include "asif/experiment.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "asif/checkpoint.hpp"
#include "asif/training.hpp"

namespace asif {

using nlohmann::json;

namespace {

// Streams derived from the run seed. The model derives its own streams.
constexpr std::uint64_t kSubsample = 20;
constexpr std::uint64_t kNoise = 21;
constexpr std::uint64_t kWarmup = 22;
constexpr std::uint64_t kBatches = 23;
constexpr std::uint64_t kJitter = 24;

SyntheticSpec synthetic_spec(const ExperimentConfig& c, std::uint64_t run_seed) {
  SyntheticSpec spec = c.synthetic;
  spec.seed = c.synthetic_seed.value_or(run_seed);
  return spec;
}

json detection_to_json(const DetectionMetrics& m) {
  return {{"f1", m.f1}, {"balanced_accuracy", m.balanced_accuracy}, {"precision", m.precision}, {"recall", m.recall}};
}

json epoch_to_json(const EpochRecord& r) {
  json j = {{"repeat", r.repeat},
            {"epoch", r.epoch},
            {"train_loss", r.train_loss},
            {"classification_loss", r.classification_loss},
            {"train_macro_f1", r.train_macro_f1},
            {"test_macro_f1", r.test_macro_f1}};
  if (!r.lambdas.empty()) {
    json ids = json::object();
    for (const auto& [c, l] : r.id_losses) ids[std::to_string(c)] = l;
    j["id_losses"] = ids;
    j["lambdas"] = r.lambdas;
  }
  if (r.detection) j["detection"] = detection_to_json(*r.detection);
  return j;
}

json probe_to_json(const ProbeReport& p) {
  return {{"best_loss", p.best_loss}, {"epochs_run", p.epochs_run}};
}

json pruning_step_to_json(const PruningStep& s) {
  return {{"retained_dims", s.retained_dims}, {"best_accuracy", s.best_accuracy}, {"retained", s.retained}};
}

void check_finite_record(const EpochRecord& r) {
  bool ok = std::isfinite(r.train_loss) && std::isfinite(r.classification_loss);
  for (const auto& [c, l] : r.id_losses) ok = ok && std::isfinite(l);
  for (double l : r.lambdas) ok = ok && std::isfinite(l);
  if (!ok) throw NumericError("epoch " + std::to_string(r.epoch) + " produced a non-finite metric");
}

}  // namespace

void configure_logging() {
  const char* level = std::getenv("ASIF_LOG_LEVEL");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

Dataset load_test_split(const ExperimentConfig& c, std::uint64_t run_seed) {
  switch (c.dataset) {
    case DatasetSource::Synthetic:
      return generate_synthetic_holdout(synthetic_spec(c, run_seed), c.synthetic_test_per_class);
    case DatasetSource::Idx:
      return load_idx(c.test_images, c.test_labels, c.num_classes);
    case DatasetSource::Csv:
      return load_csv(c.test_csv, {c.csv_header, c.num_classes});
  }
  throw ConfigError("dataset", "unknown source");
}

Splits load_splits(const ExperimentConfig& c, std::uint64_t run_seed) {
  Splits s;
  switch (c.dataset) {
    case DatasetSource::Synthetic:
      s.train = generate_synthetic(synthetic_spec(c, run_seed));
      break;
    case DatasetSource::Idx:
      s.train = load_idx(c.train_images, c.train_labels, c.num_classes);
      break;
    case DatasetSource::Csv:
      s.train = load_csv(c.train_csv, {c.csv_header, c.num_classes});
      break;
  }
  s.test = load_test_split(c, run_seed);
  if (s.test.feature_dim() != s.train.feature_dim() || s.test.num_classes() != s.train.num_classes()) {
    throw ConfigError("dataset", "train and test splits disagree on feature width or class count");
  }
  if (c.train_size > 0 && c.train_size < s.train.size()) {
    RngStream rng = RngStream(run_seed).derive(kSubsample);
    s.train = subsample_balanced(s.train, c.train_size, rng);
  }
  return s;
}

NoiseLedger make_noise(const ExperimentConfig& c, const Dataset& train, std::uint64_t run_seed) {
  const RngStream root(run_seed);
  RngStream rng = root.derive(kNoise);
  switch (c.noise) {
    case NoiseKind::None:
      return clean_ledger(train);
    case NoiseKind::Symmetric:
      return inject_symmetric(train, c.eta, rng);
    case NoiseKind::InstanceDependent: {
      WarmupConfig w;
      w.epochs = c.warmup_epochs;
      w.lr = c.warmup_lr;
      w.momentum = c.momentum;
      w.batch_size = c.batch_size;
      w.extractor_widths = c.extractor_widths;
      w.bn_eps = c.bn_eps;
      w.bn_momentum = c.bn_momentum;
      w.seed = root.derive(kWarmup).seed();
      return inject_instance_dependent(train, c.eta, w, rng);
    }
  }
  throw ConfigError("noise", "unknown kind");
}

ModelConfig model_config_for(const ExperimentConfig& c, const Dataset& train, const IdentityRegistry* registry) {
  ModelConfig m;
  m.input_dim = train.feature_dim();
  m.num_classes = train.num_classes();
  m.extractor_widths = c.extractor_widths;
  m.extractor_dropout = c.extractor_dropout;
  m.identifier_hidden = c.identifier_hidden;
  m.identifier_output = c.identifier_output;
  m.identifier_dropout = c.identifier_dropout;
  m.bn_eps = c.bn_eps;
  m.bn_momentum = c.bn_momentum;
  m.with_identifier = c.uses_identifier();
  if (m.with_identifier) {
    if (!registry) throw DomainError("model_config_for: identifier methods need an identity registry");
    m.identities_per_class = registry->class_sizes();
  }
  return m;
}

double fixed_state_lambda(double strength, DgrSign sign) {
  return sign == DgrSign::Literal ? strength : -strength;
}

RepeatResult run_repeat(const ExperimentConfig& c, int repeat, const std::optional<std::filesystem::path>& out) {
  c.validate();
  const std::uint64_t run_seed = c.seed + static_cast<std::uint64_t>(repeat);
  const RngStream root(run_seed);

  RepeatResult result;
  result.repeat = repeat;
  result.seed = run_seed;

  const Splits splits = load_splits(c, run_seed);
  const NoiseLedger ledger = make_noise(c, splits.train, run_seed);
  const Dataset train = apply_ledger(splits.train, ledger);
  const Dataset& test = splits.test;
  result.flips = ledger.flip_count();

  std::optional<IdentityRegistry> registry;
  if (c.uses_identifier()) registry.emplace(train);
  AsifModel model(model_config_for(c, train, registry ? &*registry : nullptr), run_seed);

  std::vector<DgrState> dgr;
  if (c.method == Method::ASIF) {
    dgr = make_dgr_states(registry->class_sizes(), DgrMode::Dynamic);
  } else if (c.method == Method::ASIFFixed) {
    dgr = make_dgr_states(registry->class_sizes(), DgrMode::Fixed, fixed_state_lambda(c.fixed_lambda, c.dgr_sign));
  }

  StepOptions opts;
  opts.loss = c.loss_kind();
  opts.lambda_id = c.uses_identifier() ? c.lambda_id : 0.0;
  opts.sign = c.dgr_sign;

  Sgd sgd(c.lr, c.momentum);
  BatchIterator batches(train.size(), c.batch_size, root.derive(kBatches));
  RngStream jitter = root.derive(kJitter);

  std::optional<std::filesystem::path> dir;
  std::ofstream metrics;
  if (out) {
    dir = *out / ("r" + std::to_string(repeat));
    std::filesystem::create_directories(*dir);
    metrics.open(*out / "metrics.jsonl", std::ios::app);
    if (!metrics) throw Error("cannot write " + (*out / "metrics.jsonl").string());
  }

  const bool detect = c.detect && c.noise != NoiseKind::None;
  for (int e = 0; e < c.epochs; ++e) {
    const EpochSummary s =
        train_epoch(model, dgr, sgd, train, registry ? &*registry : nullptr, batches, jitter, opts);
    EpochRecord r;
    r.repeat = repeat;
    r.epoch = e;
    r.train_loss = s.total_loss;
    r.classification_loss = s.classification_loss;
    r.train_macro_f1 = evaluate_macro_f1(model, train, LabelSource::Observed);
    r.test_macro_f1 = evaluate_macro_f1(model, test, LabelSource::True);
    if (c.uses_identifier()) {
      r.id_losses = s.id_losses;
      r.lambdas = s.lambdas;
    }
    if (detect) {
      r.detection = detection_metrics(detect_noisy(per_sample_losses(model, train, LabelSource::Observed), c.eta), ledger);
      if (!result.detection_best || r.detection->f1 > result.detection_best->f1) {
        result.detection_best = r.detection;
        result.detection_best_epoch = e;
      }
      result.detection_final = r.detection;
    }
    check_finite_record(r);
    spdlog::debug("repeat {} epoch {} loss {:.6f} test macro-F1 {:.4f}", repeat, e, r.train_loss, r.test_macro_f1);
    if (metrics.is_open()) metrics << epoch_json(r) << '\n' << std::flush;
    result.epochs.push_back(std::move(r));
  }
  result.final_train_macro_f1 = result.epochs.back().train_macro_f1;
  result.final_test_macro_f1 = result.epochs.back().test_macro_f1;

  const Matrix train_features = extract_features(model, train.features());
  if (c.probe) result.probe = identity_probe(train_features, c.probe_options);
  if (c.prune) {
    result.pruning = feature_pruning_curve(train_features, train.true_labels(), extract_features(model, test.features()),
                                           test.true_labels(), train.num_classes(), c.prune_options);
  }

  if (dir) {
    ExperimentConfig resolved = c;
    resolved.seed = run_seed;
    resolved.repeats = 1;
    resolved.synthetic_seed = synthetic_spec(c, run_seed).seed;
    const Checkpoint ckpt = capture_checkpoint(
        model, dgr, serialize_config(resolved),
        {{"batches", batches.rng().seed(), batches.rng().position()}, {"jitter", jitter.seed(), jitter.position()}});
    save_checkpoint(ckpt, *dir / "checkpoint.bin");
    write_ledger_csv(ledger, *dir / "ledger.csv");
    write_losses_csv(per_sample_losses(model, train, LabelSource::Observed), *dir / "losses.csv");
    write_features_csv({train.ids(), train_features}, *dir / "features.csv");
    write_features_csv({test.ids(), extract_features(model, test.features())}, *dir / "test_features.csv");
    write_labels_csv(test.ids(), test.true_labels(), *dir / "test_labels.csv");
  }
  spdlog::info("repeat {} (seed {}): final test macro-F1 {:.4f}", repeat, run_seed, result.final_test_macro_f1);
  return result;
}

RunReport run_experiment(const ExperimentConfig& c, const std::optional<std::filesystem::path>& out) {
  c.validate();
  if (out) {
    std::filesystem::create_directories(*out);
    std::filesystem::remove(*out / "metrics.jsonl");
  }
  RunReport report;
  report.config = c;
  for (int k = 0; k < c.repeats; ++k) report.repeats.push_back(run_repeat(c, k, out));

  const double n = static_cast<double>(report.repeats.size());
  double sum = 0.0;
  for (const auto& r : report.repeats) sum += r.final_test_macro_f1;
  report.mean_test_macro_f1 = sum / n;
  double ss = 0.0;
  for (const auto& r : report.repeats) ss += (r.final_test_macro_f1 - report.mean_test_macro_f1) * (r.final_test_macro_f1 - report.mean_test_macro_f1);
  report.std_test_macro_f1 = report.repeats.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

  if (out) {
    std::ofstream f(*out / "report.json");
    if (!f) throw Error("cannot write " + (*out / "report.json").string());
    f << report_json(report) << '\n';
  }
  return report;
}

std::string epoch_json(const EpochRecord& record) { return epoch_to_json(record).dump(); }

std::string detection_json(const DetectionMetrics& metrics) { return detection_to_json(metrics).dump(); }

std::string probe_json(const ProbeReport& report) {
  json j = probe_to_json(report);
  j["curve"] = report.curve;
  return j.dump();
}

std::string pruning_jsonl(const PruningCurve& curve) {
  std::string out;
  for (const auto& s : curve.steps) out += pruning_step_to_json(s).dump() + "\n";
  return out;
}

std::string report_json(const RunReport& report) {
  json repeats = json::array();
  for (const auto& r : report.repeats) {
    json j = {{"repeat", r.repeat},
              {"seed", r.seed},
              {"epochs", r.epochs.size()},
              {"flips", r.flips},
              {"final_train_macro_f1", r.final_train_macro_f1},
              {"final_test_macro_f1", r.final_test_macro_f1}};
    if (!r.epochs.empty() && !r.epochs.back().lambdas.empty()) j["final_lambdas"] = r.epochs.back().lambdas;
    if (r.detection_final) {
      j["detection_final"] = detection_to_json(*r.detection_final);
      j["detection_best"] = detection_to_json(*r.detection_best);
      j["detection_best_epoch"] = r.detection_best_epoch;
    }
    if (r.probe) j["probe"] = probe_to_json(*r.probe);
    if (r.pruning) {
      json steps = json::array();
      for (const auto& s : r.pruning->steps) steps.push_back(pruning_step_to_json(s));
      j["pruning"] = steps;
    }
    repeats.push_back(j);
  }
  json j = {{"method", to_string(report.config.method)},
            {"noise", to_string(report.config.noise)},
            {"eta", report.config.eta},
            {"seed", report.config.seed},
            {"repeats", repeats},
            {"summary",
             {{"n", report.repeats.size()},
              {"mean_test_macro_f1", report.mean_test_macro_f1},
              {"std_test_macro_f1", report.std_test_macro_f1}}}};
  return j.dump(2);
}

double evaluate_checkpoint(const std::filesystem::path& checkpoint_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const ExperimentConfig cfg = parse_config(ckpt.config_text);
  AsifModel model = model_from_checkpoint(ckpt);
  const Dataset test = load_test_split(cfg, cfg.seed);
  return evaluate_macro_f1(model, test, LabelSource::True);
}

}  // namespace asif
