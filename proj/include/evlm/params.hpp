// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evlm/tensor.hpp"

namespace evlm {

/// Freezing unit. Every trainable tensor in a model belongs to exactly one group.
/// The three ViT groups are disjoint: vit_last_quarter holds the deepest
/// ceil(L/4) blocks, vit_back_half the rest of the deepest ceil(L/2) blocks and
/// vit_front everything shallower.
enum class ParamGroup { llm, xattn, vit_front, vit_back_half, vit_last_quarter, media_tokens, moe };

inline constexpr ParamGroup kAllParamGroups[] = {ParamGroup::llm,           ParamGroup::xattn,
                                                 ParamGroup::vit_front,     ParamGroup::vit_back_half,
                                                 ParamGroup::vit_last_quarter, ParamGroup::media_tokens,
                                                 ParamGroup::moe};

std::string_view to_string(ParamGroup group);
ParamGroup param_group_from_string(std::string_view name);

struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::llm;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

using ParamId = std::size_t;

/// Owns every parameter of a model. Ids are stable for the lifetime of the
/// store and survive copies, so components refer to parameters by id.
class ParameterStore {
 public:
  ParamId add(std::string name, ParamGroup group, Tensor init);

  Parameter& operator[](ParamId id) { return params_.at(id); }
  const Parameter& operator[](ParamId id) const { return params_.at(id); }

  [[nodiscard]] std::optional<ParamId> find(std::string_view name) const;
  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }
  [[nodiscard]] auto begin() { return params_.begin(); }
  [[nodiscard]] auto end() { return params_.end(); }

  void zero_grad();
  /// Total scalar count over parameters in `group`.
  [[nodiscard]] std::size_t scalar_count(ParamGroup group) const;
  [[nodiscard]] std::size_t scalar_count() const;

 private:
  std::vector<Parameter> params_;
};

/// Per-tensor seed derived from the root seed and the tensor's name.
std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view name);

/// Gaussian tensor with the given standard deviation, seeded by derive_seed.
Tensor normal_tensor(const Shape& shape, double stddev, std::uint64_t root_seed, std::string_view name);

/// Plain SGD: value -= lr * grad for every trainable parameter. Frozen
/// parameters are never written.
void sgd_step(ParameterStore& store, double lr);

}  // namespace evlm
