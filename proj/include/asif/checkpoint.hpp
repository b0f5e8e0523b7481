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
#include <string>
#include <vector>

#include "asif/model.hpp"

namespace asif {

/// Everything needed to rebuild a trained session bit-exactly.
///
/// On-disk layout (little-endian): "ASIFCKPT", u32 version, then
/// length-prefixed sections for the config text, the model architecture,
/// named parameter tensors,
/// batch-norm running statistics, DGR states and named RNG positions.
/// Doubles are stored as their raw IEEE-754 bits.
struct Checkpoint {
  struct BnRecord {
    std::string name;
    Matrix running_mean;
    Matrix running_var;
    double eps = 0.0;
    double momentum = 0.0;
  };
  struct RngRecord {
    std::string name;
    std::uint64_t seed = 0;
    std::uint64_t position = 0;
  };

  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  ModelConfig model;
  std::vector<std::pair<std::string, Matrix>> tensors;
  std::vector<BnRecord> bn;
  std::vector<DgrState> dgr;
  std::vector<RngRecord> rngs;

  /// Position of the named stream; throws when absent.
  RngStream rng(const std::string& name) const;
};

Checkpoint capture_checkpoint(AsifModel& model, const std::vector<DgrState>& dgr, std::string config_text,
                              std::vector<Checkpoint::RngRecord> extra_rngs = {});
/// Fresh model with the checkpoint's architecture and weights.
AsifModel model_from_checkpoint(const Checkpoint& ckpt);
/// Copies the checkpoint into a model built from the same configuration.
void restore_checkpoint(const Checkpoint& ckpt, AsifModel& model, std::vector<DgrState>& dgr);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace asif
