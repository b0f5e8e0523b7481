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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "asif/rng.hpp"
#include "asif/tensor.hpp"

namespace asif {

using SampleId = std::int64_t;

struct Sample {
  SampleId id;
  Vector features;
  int true_label;
  int observed_label;
};

/// Immutable labelled feature matrix. Row i is the sample with id ids()[i].
///
/// `jitter_std` is per-presentation Gaussian noise added to every training
/// batch drawn from this dataset (synthetic data only; loaded files use 0).
/// Evaluation always sees the stored features.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix features, std::vector<SampleId> ids, std::vector<int> true_labels,
          std::vector<int> observed_labels, int num_classes, double jitter_std = 0.0);
  /// Clean dataset: ids are row ordinals and observed == true.
  static Dataset from_labels(Matrix features, std::vector<int> labels, int num_classes);

  Index size() const { return features_.rows(); }
  Index feature_dim() const { return features_.cols(); }
  int num_classes() const { return num_classes_; }
  double jitter_std() const { return jitter_std_; }

  const Matrix& features() const { return features_; }
  const std::vector<SampleId>& ids() const { return ids_; }
  const std::vector<int>& true_labels() const { return true_labels_; }
  const std::vector<int>& observed_labels() const { return observed_labels_; }

  Sample sample(Index row) const;
  /// Throws DomainError for an unknown id.
  Index row_of(SampleId id) const;
  bool contains(SampleId id) const { return row_by_id_.contains(id); }

  /// Copy with replaced observed labels; ids and features unchanged.
  Dataset with_observed_labels(std::vector<int> observed) const;
  /// Rows in the given order, ids preserved.
  Dataset subset(std::span<const Index> rows) const;

 private:
  Matrix features_;
  std::vector<SampleId> ids_;
  std::vector<int> true_labels_;
  std::vector<int> observed_labels_;
  int num_classes_ = 0;
  double jitter_std_ = 0.0;
  std::unordered_map<SampleId, Index> row_by_id_;
};

/// Within-class identity indices over observed labels: class c gets indices
/// 0..N_c-1 assigned in ascending sample-id order.
class IdentityRegistry {
 public:
  struct Entry {
    int observed_class;
    int index;
  };

  explicit IdentityRegistry(const Dataset& data);

  const Entry& at_row(Index row) const { return by_row_.at(static_cast<std::size_t>(row)); }
  const Entry& at(SampleId id) const;
  int class_size(int c) const { return class_sizes_.at(static_cast<std::size_t>(c)); }
  const std::vector<int>& class_sizes() const { return class_sizes_; }
  Index total() const { return static_cast<Index>(by_row_.size()); }

 private:
  std::vector<Entry> by_row_;
  std::unordered_map<SampleId, Index> row_by_id_;
  std::vector<int> class_sizes_;
};

inline IdentityRegistry build_identity_registry(const Dataset& data) { return IdentityRegistry(data); }

/// Planted-feature generator. Feature layout: [class | identity | noise].
///
/// Every sample holds its class mean on the class dimensions and a fixed
/// per-sample signature (identity_strength * N(0, I)) on the identity
/// dimensions, plus N(0, noise_std^2) on all dimensions. By default the
/// noise is drawn once, so each sample is presented identically every epoch.
/// With fresh_noise the stored features omit it and every training
/// presentation draws it anew (the dataset's jitter), which leaves the
/// identity signature as the only stable per-sample information.
struct SyntheticSpec {
  int classes = 4;
  int per_class = 50;
  int class_dims = 8;
  double separation = 4.0;  // distance between any two class means
  int identity_dims = 16;
  double identity_strength = 1.0;
  int noise_dims = 8;
  double noise_std = 1.0;
  bool fresh_noise = false;
  std::uint64_t seed = 0;

  Index input_dim() const { return class_dims + identity_dims + noise_dims; }
  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);
/// Held-out split with the same class means, fresh signatures and a single
/// materialized noise draw (jitter 0).
Dataset generate_synthetic_holdout(const SyntheticSpec& spec, int per_class);

/// IDX images (magic 0x00000803, u8 [N, rows, cols]) and labels
/// (0x00000801, u8 [N]). Pixels are scaled to [0, 1]; ids follow file order.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 int num_classes = 10);

struct CsvSchema {
  bool has_header = false;
  int num_classes = 0;  // 0 infers max(label) + 1
};

/// Rows of `label,feat0,feat1,...`.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void write_csv(const Dataset& data, const std::filesystem::path& path, bool header = false);

/// Seeded shuffle per epoch; the last short batch is kept.
class BatchIterator {
 public:
  BatchIterator(Index dataset_size, Index batch_size, RngStream rng);

  std::vector<std::vector<Index>> next_epoch();
  const RngStream& rng() const { return rng_; }

 private:
  Index size_;
  Index batch_size_;
  RngStream rng_;
};

/// Features of `rows`, plus jitter drawn from `jitter_rng` when the dataset
/// has jitter_std > 0 and a stream is supplied.
Matrix assemble_batch(const Dataset& data, std::span<const Index> rows, RngStream* jitter_rng);

/// Class-balanced subsample of `n` rows; each class contributes n / C (the
/// remainder goes to the lowest class indices). Row order is preserved.
Dataset subsample_balanced(const Dataset& data, Index n, RngStream& rng);

}  // namespace asif
