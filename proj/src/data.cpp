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

#include "asif/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>

namespace asif {

Dataset::Dataset(Matrix features, std::vector<SampleId> ids, std::vector<int> true_labels,
                 std::vector<int> observed_labels, int num_classes, double jitter_std)
    : features_(std::move(features)),
      ids_(std::move(ids)),
      true_labels_(std::move(true_labels)),
      observed_labels_(std::move(observed_labels)),
      num_classes_(num_classes),
      jitter_std_(jitter_std) {
  const auto n = static_cast<std::size_t>(features_.rows());
  if (ids_.size() != n || true_labels_.size() != n || observed_labels_.size() != n) {
    throw ShapeError("Dataset: ids/labels do not match the number of feature rows");
  }
  if (num_classes_ < 1) throw DomainError("Dataset: need at least one class");
  if (!(jitter_std_ >= 0.0)) throw DomainError("Dataset: jitter_std must be >= 0");
  check_finite(features_, "dataset features");
  row_by_id_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (ids_[i] < 0) throw DomainError("Dataset: negative sample id");
    for (int y : {true_labels_[i], observed_labels_[i]}) {
      if (y < 0 || y >= num_classes_) {
        throw DomainError("Dataset: label " + std::to_string(y) + " outside [0," + std::to_string(num_classes_) + ")");
      }
    }
    if (!row_by_id_.emplace(ids_[i], static_cast<Index>(i)).second) {
      throw DomainError("Dataset: duplicate sample id " + std::to_string(ids_[i]));
    }
  }
}

Dataset Dataset::from_labels(Matrix features, std::vector<int> labels, int num_classes) {
  std::vector<SampleId> ids(labels.size());
  std::iota(ids.begin(), ids.end(), SampleId{0});
  std::vector<int> observed = labels;
  return Dataset(std::move(features), std::move(ids), std::move(labels), std::move(observed), num_classes);
}

Sample Dataset::sample(Index row) const {
  const auto r = static_cast<std::size_t>(row);
  return Sample{ids_.at(r), features_.row(row).transpose(), true_labels_[r], observed_labels_[r]};
}

Index Dataset::row_of(SampleId id) const {
  auto it = row_by_id_.find(id);
  if (it == row_by_id_.end()) throw DomainError("unknown sample id " + std::to_string(id));
  return it->second;
}

Dataset Dataset::with_observed_labels(std::vector<int> observed) const {
  return Dataset(features_, ids_, true_labels_, std::move(observed), num_classes_, jitter_std_);
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Matrix f(static_cast<Index>(rows.size()), feature_dim());
  std::vector<SampleId> ids;
  std::vector<int> yt, yo;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index r = rows[k];
    if (r < 0 || r >= size()) throw DomainError("Dataset::subset: row out of range");
    f.row(static_cast<Index>(k)) = features_.row(r);
    ids.push_back(ids_[static_cast<std::size_t>(r)]);
    yt.push_back(true_labels_[static_cast<std::size_t>(r)]);
    yo.push_back(observed_labels_[static_cast<std::size_t>(r)]);
  }
  return Dataset(std::move(f), std::move(ids), std::move(yt), std::move(yo), num_classes_, jitter_std_);
}

IdentityRegistry::IdentityRegistry(const Dataset& data)
    : by_row_(static_cast<std::size_t>(data.size())), class_sizes_(static_cast<std::size_t>(data.num_classes()), 0) {
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    return data.ids()[static_cast<std::size_t>(a)] < data.ids()[static_cast<std::size_t>(b)];
  });
  for (Index row : order) {
    const int c = data.observed_labels()[static_cast<std::size_t>(row)];
    by_row_[static_cast<std::size_t>(row)] = Entry{c, class_sizes_[static_cast<std::size_t>(c)]++};
    row_by_id_.emplace(data.ids()[static_cast<std::size_t>(row)], row);
  }
}

const IdentityRegistry::Entry& IdentityRegistry::at(SampleId id) const {
  auto it = row_by_id_.find(id);
  if (it == row_by_id_.end()) throw DomainError("IdentityRegistry: unknown sample id " + std::to_string(id));
  return by_row_[static_cast<std::size_t>(it->second)];
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (classes < 2) throw DomainError("synthetic: need at least 2 classes");
  if (per_class < 1) throw DomainError("synthetic: per_class must be positive");
  if (class_dims < classes) throw DomainError("synthetic: class_dims must be >= classes (orthogonal class means)");
  if (identity_dims < 0 || noise_dims < 0) throw DomainError("synthetic: dimension counts must be non-negative");
  if (!(separation >= 0.0) || !(identity_strength >= 0.0) || !(noise_std >= 0.0)) {
    throw DomainError("synthetic: separation, identity_strength and noise_std must be >= 0");
  }
}

namespace {

// Stream ids for the generator; the holdout never shares draws with training.
constexpr std::uint64_t kMeansStream = 1;
constexpr std::uint64_t kTrainSignatureStream = 2;
constexpr std::uint64_t kHoldoutSignatureStream = 3;
constexpr std::uint64_t kHoldoutNoiseStream = 4;
constexpr std::uint64_t kTrainNoiseStream = 5;

// Orthonormal directions scaled so every pair of means is `separation` apart.
Matrix class_means(const SyntheticSpec& spec) {
  RngStream rng = RngStream(spec.seed).derive(kMeansStream);
  Matrix gauss(spec.class_dims, spec.classes);
  for (Index i = 0; i < gauss.rows(); ++i) {
    for (Index j = 0; j < gauss.cols(); ++j) gauss(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(spec.class_dims, spec.classes);
  return (q.transpose() * (spec.separation / std::sqrt(2.0))).eval();
}

Dataset build_split(const SyntheticSpec& spec, int per_class, RngStream signatures, RngStream* noise,
                    double jitter) {
  const Matrix means = class_means(spec);
  const Index n = static_cast<Index>(spec.classes) * per_class;
  Matrix f = Matrix::Zero(n, spec.input_dim());
  std::vector<int> labels(static_cast<std::size_t>(n));
  Index row = 0;
  for (int c = 0; c < spec.classes; ++c) {
    for (int k = 0; k < per_class; ++k, ++row) {
      labels[static_cast<std::size_t>(row)] = c;
      f.row(row).head(spec.class_dims) = means.row(c);
      for (int d = 0; d < spec.identity_dims; ++d) {
        f(row, spec.class_dims + d) = spec.identity_strength * signatures.normal();
      }
    }
  }
  if (noise != nullptr) {
    for (Index i = 0; i < f.rows(); ++i) {
      for (Index j = 0; j < f.cols(); ++j) f(i, j) += spec.noise_std * noise->normal();
    }
  }
  Dataset clean = Dataset::from_labels(std::move(f), std::move(labels), spec.classes);
  if (jitter == 0.0) return clean;
  return Dataset(clean.features(), clean.ids(), clean.true_labels(), clean.observed_labels(), spec.classes, jitter);
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const RngStream signatures = RngStream(spec.seed).derive(kTrainSignatureStream);
  if (spec.fresh_noise) return build_split(spec, spec.per_class, signatures, nullptr, spec.noise_std);
  RngStream noise = RngStream(spec.seed).derive(kTrainNoiseStream);
  return build_split(spec, spec.per_class, signatures, &noise, 0.0);
}

Dataset generate_synthetic_holdout(const SyntheticSpec& spec, int per_class) {
  spec.validate();
  if (per_class < 1) throw DomainError("synthetic holdout: per_class must be positive");
  RngStream noise = RngStream(spec.seed).derive(kHoldoutNoiseStream);
  return build_split(spec, per_class, RngStream(spec.seed).derive(kHoldoutSignatureStream), &noise, 0.0);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

struct IdxHeader {
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset;
};

IdxHeader parse_idx_header(const std::vector<unsigned char>& bytes, std::uint32_t expected_magic,
                           const std::string& what) {
  auto read_u32 = [&](std::size_t off) -> std::uint32_t {
    if (off + 4 > bytes.size()) throw ParseError(what + ": truncated header", bytes.size());
    return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
           (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
  };
  const std::uint32_t magic = read_u32(0);
  if (magic != expected_magic) {
    std::ostringstream msg;
    msg << what << ": bad magic 0x" << std::hex << std::setw(8) << std::setfill('0') << magic
        << ", expected 0x" << std::setw(8) << expected_magic;
    throw ParseError(msg.str(), 0);
  }
  IdxHeader h;
  const std::uint32_t ndims = magic & 0xFF;
  for (std::uint32_t d = 0; d < ndims; ++d) h.dims.push_back(read_u32(4 + 4 * d));
  h.payload_offset = 4 + 4 * ndims;
  std::size_t payload = 1;
  for (auto d : h.dims) payload *= d;
  if (h.payload_offset + payload > bytes.size()) {
    throw ParseError(what + ": truncated payload, expected " + std::to_string(payload) + " bytes", bytes.size());
  }
  return h;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 int num_classes) {
  const auto img = read_bytes(images_path);
  const auto lab = read_bytes(labels_path);
  const IdxHeader hi = parse_idx_header(img, 0x00000803, images_path.string());
  const IdxHeader hl = parse_idx_header(lab, 0x00000801, labels_path.string());
  const auto n = hi.dims[0];
  if (hl.dims[0] != n) {
    throw ParseError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(hl.dims[0]) +
                         " labels",
                     4);
  }
  const Index pixels = static_cast<Index>(hi.dims[1]) * hi.dims[2];
  Matrix f(n, pixels);
  std::vector<int> labels(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t base = hi.payload_offset + static_cast<std::size_t>(i) * static_cast<std::size_t>(pixels);
    for (Index p = 0; p < pixels; ++p) f(i, p) = img[base + static_cast<std::size_t>(p)] / 255.0;
    labels[i] = lab[hl.payload_offset + i];
    if (labels[i] >= num_classes) {
      throw ParseError("IDX label " + std::to_string(labels[i]) + " outside [0," + std::to_string(num_classes) + ")",
                       hl.payload_offset + i);
    }
  }
  return Dataset::from_labels(std::move(f), std::move(labels), num_classes);
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::uint64_t line, const char* what) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(std::string("CSV: cannot parse ") + what + " '" + std::string(s) + "'", line);
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::uint64_t lineno = 0;
  if (schema.has_header) {
    std::getline(in, line);
    ++lineno;
  }
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_commas(line);
    if (cells.size() < 2) throw ParseError("CSV: row needs a label and at least one feature", lineno);
    const int y = parse_number<int>(cells[0], lineno, "label");
    if (y < 0 || (schema.num_classes > 0 && y >= schema.num_classes)) {
      throw ParseError("CSV: unknown label " + std::to_string(y), lineno);
    }
    std::vector<double> feats;
    for (std::size_t k = 1; k < cells.size(); ++k) feats.push_back(parse_number<double>(cells[k], lineno, "feature"));
    if (!rows.empty() && feats.size() != rows.front().size()) {
      throw ParseError("CSV: ragged row with " + std::to_string(feats.size()) + " features, expected " +
                           std::to_string(rows.front().size()),
                       lineno);
    }
    rows.push_back(std::move(feats));
    labels.push_back(y);
  }
  if (rows.empty()) throw ParseError("CSV: no data rows", lineno);
  const int classes = schema.num_classes > 0 ? schema.num_classes : *std::max_element(labels.begin(), labels.end()) + 1;
  Matrix f(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) f(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return Dataset::from_labels(std::move(f), std::move(labels), classes);
}

void write_csv(const Dataset& data, const std::filesystem::path& path, bool header) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17);
  if (header) {
    out << "label";
    for (Index j = 0; j < data.feature_dim(); ++j) out << ",f" << j;
    out << '\n';
  }
  for (Index i = 0; i < data.size(); ++i) {
    out << data.observed_labels()[static_cast<std::size_t>(i)];
    for (Index j = 0; j < data.feature_dim(); ++j) out << ',' << data.features()(i, j);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

BatchIterator::BatchIterator(Index dataset_size, Index batch_size, RngStream rng)
    : size_(dataset_size), batch_size_(batch_size), rng_(std::move(rng)) {
  if (batch_size_ < 1) throw DomainError("BatchIterator: batch size must be >= 1");
  if (size_ < 1) throw DomainError("BatchIterator: empty dataset");
}

std::vector<std::vector<Index>> BatchIterator::next_epoch() {
  std::vector<Index> order(static_cast<std::size_t>(size_));
  std::iota(order.begin(), order.end(), Index{0});
  rng_.shuffle(std::span<Index>(order));
  std::vector<std::vector<Index>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size_)) {
    const auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size_));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Matrix assemble_batch(const Dataset& data, std::span<const Index> rows, RngStream* jitter_rng) {
  Matrix x(static_cast<Index>(rows.size()), data.feature_dim());
  for (std::size_t k = 0; k < rows.size(); ++k) x.row(static_cast<Index>(k)) = data.features().row(rows[k]);
  if (jitter_rng != nullptr && data.jitter_std() > 0.0) {
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < x.cols(); ++j) x(i, j) += data.jitter_std() * jitter_rng->normal();
    }
  }
  return x;
}

Dataset subsample_balanced(const Dataset& data, Index n, RngStream& rng) {
  if (n < 1 || n > data.size()) throw DomainError("subsample_balanced: n must lie in [1, N]");
  const int classes = data.num_classes();
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(classes));
  for (Index i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data.true_labels()[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<Index> keep;
  for (int c = 0; c < classes; ++c) {
    const Index want = n / classes + (c < n % classes ? 1 : 0);
    auto& pool = by_class[static_cast<std::size_t>(c)];
    if (want > static_cast<Index>(pool.size())) {
      throw DomainError("subsample_balanced: class " + std::to_string(c) + " has only " + std::to_string(pool.size()) +
                        " samples");
    }
    for (std::size_t k : rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(want))) keep.push_back(pool[k]);
  }
  std::sort(keep.begin(), keep.end());
  return data.subset(keep);
}

}  // namespace asif
