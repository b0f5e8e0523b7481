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

#include "asif/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace asif {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key, "cannot parse number '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

std::vector<Index> parse_widths(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_num<Index>(key, trim(cell)));
  if (out.empty()) throw ConfigError(key, "expected a comma-separated list of widths");
  return out;
}

std::string fmt(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
  requires std::is_integral_v<T>
std::string fmt(T v) {
  return std::to_string(v);
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::CE: return "ce";
    case Method::GCE: return "gce";
    case Method::PHuber: return "phuber";
    case Method::ASIF: return "asif";
    case Method::ASIFFixed: return "asif_fixed";
  }
  return "?";
}

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::None: return "none";
    case NoiseKind::Symmetric: return "symmetric";
    case NoiseKind::InstanceDependent: return "instance";
  }
  return "?";
}

LossKind ExperimentConfig::loss_kind() const {
  switch (method) {
    case Method::GCE: return LossKind::gce(gce_q);
    case Method::PHuber: return LossKind::phuber(phuber_tau);
    default: return LossKind::ce();
  }
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const std::string& v = value;
  auto num = [&]<typename T>(T& field) { field = parse_num<T>(key, v); };

  if (key == "dataset") {
    if (v == "synthetic") c.dataset = DatasetSource::Synthetic;
    else if (v == "idx") c.dataset = DatasetSource::Idx;
    else if (v == "csv") c.dataset = DatasetSource::Csv;
    else throw ConfigError(key, "expected synthetic, idx or csv");
  } else if (key == "train_images") c.train_images = v;
  else if (key == "train_labels") c.train_labels = v;
  else if (key == "test_images") c.test_images = v;
  else if (key == "test_labels") c.test_labels = v;
  else if (key == "train_csv") c.train_csv = v;
  else if (key == "test_csv") c.test_csv = v;
  else if (key == "csv_header") c.csv_header = parse_bool(key, v);
  else if (key == "num_classes") num(c.num_classes);
  else if (key == "synthetic_classes") num(c.synthetic.classes);
  else if (key == "synthetic_per_class") num(c.synthetic.per_class);
  else if (key == "synthetic_test_per_class") num(c.synthetic_test_per_class);
  else if (key == "synthetic_class_dims") num(c.synthetic.class_dims);
  else if (key == "synthetic_separation") num(c.synthetic.separation);
  else if (key == "synthetic_identity_dims") num(c.synthetic.identity_dims);
  else if (key == "synthetic_identity_strength") num(c.synthetic.identity_strength);
  else if (key == "synthetic_noise_dims") num(c.synthetic.noise_dims);
  else if (key == "synthetic_noise_std") num(c.synthetic.noise_std);
  else if (key == "synthetic_fresh_noise") c.synthetic.fresh_noise = parse_bool(key, v);
  else if (key == "synthetic_seed") {
    if (v == "auto") c.synthetic_seed.reset();
    else c.synthetic_seed = parse_num<std::uint64_t>(key, v);
  } else if (key == "train_size" || key == "N") num(c.train_size);
  else if (key == "noise") {
    if (v == "none" || v == "None") c.noise = NoiseKind::None;
    else if (v == "symmetric" || v == "Symmetric") c.noise = NoiseKind::Symmetric;
    else if (v == "instance" || v == "Instance") c.noise = NoiseKind::InstanceDependent;
    else throw ConfigError(key, "expected none, symmetric or instance");
  } else if (key == "eta") num(c.eta);
  else if (key == "warmup_epochs") num(c.warmup_epochs);
  else if (key == "warmup_lr") num(c.warmup_lr);
  else if (key == "method") {
    if (v == "ce") c.method = Method::CE;
    else if (v == "gce") c.method = Method::GCE;
    else if (v == "phuber") c.method = Method::PHuber;
    else if (v == "asif") c.method = Method::ASIF;
    else if (v == "asif_fixed") c.method = Method::ASIFFixed;
    else throw ConfigError(key, "expected ce, gce, phuber, asif or asif_fixed");
  } else if (key == "gce_q") num(c.gce_q);
  else if (key == "phuber_tau") num(c.phuber_tau);
  else if (key == "lr") num(c.lr);
  else if (key == "momentum") num(c.momentum);
  else if (key == "lambda_id" || key == "lambda_if") num(c.lambda_id);
  else if (key == "batch_size") num(c.batch_size);
  else if (key == "epochs") num(c.epochs);
  else if (key == "seed") num(c.seed);
  else if (key == "repeats") num(c.repeats);
  else if (key == "extractor_widths") c.extractor_widths = parse_widths(key, v);
  else if (key == "extractor_dropout") num(c.extractor_dropout);
  else if (key == "identifier_hidden") num(c.identifier_hidden);
  else if (key == "identifier_output") num(c.identifier_output);
  else if (key == "identifier_dropout") num(c.identifier_dropout);
  else if (key == "bn_eps") num(c.bn_eps);
  else if (key == "bn_momentum") num(c.bn_momentum);
  else if (key == "dgr_sign") {
    if (v == "suppression") c.dgr_sign = DgrSign::Suppression;
    else if (v == "literal") c.dgr_sign = DgrSign::Literal;
    else throw ConfigError(key, "expected suppression or literal");
  } else if (key == "fixed_lambda") num(c.fixed_lambda);
  else if (key == "detect") c.detect = parse_bool(key, v);
  else if (key == "probe") c.probe = parse_bool(key, v);
  else if (key == "prune") c.prune = parse_bool(key, v);
  else if (key == "probe_patience") num(c.probe_options.patience);
  else if (key == "probe_max_epochs") num(c.probe_options.max_epochs);
  else if (key == "probe_lr") num(c.probe_options.lr);
  else if (key == "prune_fraction") num(c.prune_options.schedule.drop_fraction);
  else if (key == "prune_min_dims") num(c.prune_options.schedule.min_dims);
  else if (key == "prune_max_epochs") num(c.prune_options.max_epochs);
  else if (key == "prune_lr") num(c.prune_options.lr);
  else throw ConfigError(key, "unknown key");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto kv = [&](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  const char* datasets[] = {"synthetic", "idx", "csv"};
  kv("dataset", datasets[static_cast<int>(c.dataset)]);
  kv("train_images", c.train_images);
  kv("train_labels", c.train_labels);
  kv("test_images", c.test_images);
  kv("test_labels", c.test_labels);
  kv("train_csv", c.train_csv);
  kv("test_csv", c.test_csv);
  kv("csv_header", fmt(c.csv_header));
  kv("num_classes", fmt(c.num_classes));
  kv("synthetic_classes", fmt(c.synthetic.classes));
  kv("synthetic_per_class", fmt(c.synthetic.per_class));
  kv("synthetic_test_per_class", fmt(c.synthetic_test_per_class));
  kv("synthetic_class_dims", fmt(c.synthetic.class_dims));
  kv("synthetic_separation", fmt(c.synthetic.separation));
  kv("synthetic_identity_dims", fmt(c.synthetic.identity_dims));
  kv("synthetic_identity_strength", fmt(c.synthetic.identity_strength));
  kv("synthetic_noise_dims", fmt(c.synthetic.noise_dims));
  kv("synthetic_noise_std", fmt(c.synthetic.noise_std));
  kv("synthetic_fresh_noise", fmt(c.synthetic.fresh_noise));
  kv("synthetic_seed", c.synthetic_seed ? fmt(*c.synthetic_seed) : "auto");
  kv("train_size", fmt(c.train_size));
  kv("noise", to_string(c.noise));
  kv("eta", fmt(c.eta));
  kv("warmup_epochs", fmt(c.warmup_epochs));
  kv("warmup_lr", fmt(c.warmup_lr));
  kv("method", to_string(c.method));
  kv("gce_q", fmt(c.gce_q));
  kv("phuber_tau", fmt(c.phuber_tau));
  kv("lr", fmt(c.lr));
  kv("momentum", fmt(c.momentum));
  kv("lambda_id", fmt(c.lambda_id));
  kv("batch_size", fmt(c.batch_size));
  kv("epochs", fmt(c.epochs));
  kv("seed", fmt(c.seed));
  kv("repeats", fmt(c.repeats));
  std::string widths;
  for (std::size_t i = 0; i < c.extractor_widths.size(); ++i) widths += (i ? "," : "") + fmt(c.extractor_widths[i]);
  kv("extractor_widths", widths);
  kv("extractor_dropout", fmt(c.extractor_dropout));
  kv("identifier_hidden", fmt(c.identifier_hidden));
  kv("identifier_output", fmt(c.identifier_output));
  kv("identifier_dropout", fmt(c.identifier_dropout));
  kv("bn_eps", fmt(c.bn_eps));
  kv("bn_momentum", fmt(c.bn_momentum));
  kv("dgr_sign", c.dgr_sign == DgrSign::Suppression ? "suppression" : "literal");
  kv("fixed_lambda", fmt(c.fixed_lambda));
  kv("detect", fmt(c.detect));
  kv("probe", fmt(c.probe));
  kv("prune", fmt(c.prune));
  kv("probe_patience", fmt(c.probe_options.patience));
  kv("probe_max_epochs", fmt(c.probe_options.max_epochs));
  kv("probe_lr", fmt(c.probe_options.lr));
  kv("prune_fraction", fmt(c.prune_options.schedule.drop_fraction));
  kv("prune_min_dims", fmt(c.prune_options.schedule.min_dims));
  kv("prune_max_epochs", fmt(c.prune_options.max_epochs));
  kv("prune_lr", fmt(c.prune_options.lr));
  return o.str();
}

void ExperimentConfig::validate() const {
  auto fail = [](const char* field, const std::string& what) { throw ConfigError(field, what); };
  auto positive = [&](const char* field, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(field, "must be a positive finite number");
  };
  auto probability = [&](const char* field, double v) {
    if (!(v >= 0.0 && v < 1.0)) fail(field, "must lie in [0, 1)");
  };

  if (dataset == DatasetSource::Idx &&
      (train_images.empty() || train_labels.empty() || test_images.empty() || test_labels.empty())) {
    fail("train_images", "idx datasets need train/test image and label paths");
  }
  if (dataset == DatasetSource::Csv && (train_csv.empty() || test_csv.empty())) {
    fail("train_csv", "csv datasets need train_csv and test_csv");
  }
  if (dataset != DatasetSource::Synthetic && num_classes < 2) fail("num_classes", "must be >= 2");
  if (dataset == DatasetSource::Synthetic) {
    try {
      synthetic.validate();
    } catch (const DomainError& e) {
      fail("synthetic", e.what());
    }
    if (synthetic_test_per_class < 1) fail("synthetic_test_per_class", "must be positive");
  }
  if (train_size < 0) fail("train_size", "must be >= 0");
  if (!(eta >= 0.0 && eta <= 1.0)) fail("eta", "must lie in [0, 1]");
  if (noise == NoiseKind::None && eta != 0.0) fail("eta", "must be 0 when noise = none");
  if (warmup_epochs < 1) fail("warmup_epochs", "must be >= 1");
  positive("warmup_lr", warmup_lr);
  if (!(gce_q > 0.0 && gce_q <= 1.0)) fail("gce_q", "must lie in (0, 1]");
  if (!(phuber_tau > 1.0)) fail("phuber_tau", "must exceed 1");
  positive("lr", lr);
  probability("momentum", momentum);
  if (!(lambda_id >= 0.0) || !std::isfinite(lambda_id)) fail("lambda_id", "must be finite and >= 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (repeats < 1) fail("repeats", "must be >= 1");
  if (extractor_widths.empty()) fail("extractor_widths", "needs at least one width");
  for (Index w : extractor_widths) {
    if (w < 1) fail("extractor_widths", "widths must be positive");
  }
  probability("extractor_dropout", extractor_dropout);
  probability("identifier_dropout", identifier_dropout);
  if (identifier_hidden < 1) fail("identifier_hidden", "must be positive");
  if (identifier_output < 1) fail("identifier_output", "must be positive");
  positive("bn_eps", bn_eps);
  probability("bn_momentum", bn_momentum);
  if (!(fixed_lambda >= 0.0) || !std::isfinite(fixed_lambda)) fail("fixed_lambda", "must be finite and >= 0");
  if (probe_options.patience < 1) fail("probe_patience", "must be >= 1");
  if (probe_options.max_epochs < 1) fail("probe_max_epochs", "must be >= 1");
  positive("probe_lr", probe_options.lr);
  if (!(prune_options.schedule.drop_fraction > 0.0 && prune_options.schedule.drop_fraction < 1.0)) {
    fail("prune_fraction", "must lie in (0, 1)");
  }
  if (prune_options.schedule.min_dims < 1) fail("prune_min_dims", "must be >= 1");
  if (prune && extractor_widths.back() < prune_options.schedule.min_dims) {
    fail("prune_min_dims", "exceeds the feature width");
  }
  if (prune_options.max_epochs < 1) fail("prune_max_epochs", "must be >= 1");
  positive("prune_lr", prune_options.lr);
}

}  // namespace asif
