// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evlm/autograd.hpp"
#include "evlm/layers.hpp"

namespace evlm {

struct MoEConfig {
  std::size_t n_replicas = 4;  // N
  std::size_t segments = 4;    // M
  std::size_t top_k = 4;       // k
  bool use_world_expert = true;
  double aux_loss_weight = 0.0;

  [[nodiscard]] std::size_t num_experts() const { return n_replicas * segments; }
  /// Throws ConfigError unless 1 <= k <= N*M and M divides dense_hidden.
  void validate(std::size_t dense_hidden) const;
};

/// N*M fine-grained experts (expert r*M + m is hidden slice m of replica r),
/// an optional full-width world expert and a bias-free router h -> N*M.
struct ExpertBank {
  std::vector<DenseFfn> experts;
  std::optional<DenseFfn> world;
  ParamId router = 0;
  std::size_t width = 0;
  std::size_t n_replicas = 0;
  std::size_t segments = 0;
};

/// Replicates `dense` N times and splits each replica along its hidden
/// dimension into M experts; the world expert is a verbatim copy and the
/// router starts at zero. New tensors are added to `dst` under `prefix`.
ExpertBank upcycle(const ParameterStore& src, const DenseFfn& dense, const MoEConfig& cfg, ParameterStore& dst,
                   const std::string& prefix, ParamGroup group = ParamGroup::moe);

struct Routing {
  std::vector<std::size_t> indices;  // descending logit, ties by lower index
  std::vector<double> gates;         // softmax over the selected logits
};

/// Top-k selection for one token (x holds h values).
Routing route(const Tensor& x, const ParameterStore& store, const ExpertBank& bank, std::size_t k);
/// Routing from a precomputed logit row.
Routing route_logits(std::span<const double> logits, std::size_t k);

/// Per-expert routing tallies. Merging is a commutative sum.
struct RoutingStats {
  std::size_t tokens = 0;
  std::size_t top_k = 0;
  std::vector<std::size_t> counts;  // selections per expert
  std::vector<double> prob_sum;     // sum over tokens of the full router softmax

  void merge(const RoutingStats& other);
  [[nodiscard]] double fraction(std::size_t e) const;
  [[nodiscard]] double mean_prob(std::size_t e) const;
};

/// N*M * sum_e fraction(e) * mean_prob(e), unweighted. Equals 1 for perfectly
/// uniform routing.
double aux_load_balance_loss(const RoutingStats& stats);

enum class GateMode {
  softmax,  // renormalized softmax over the selected logits
  unit,     // every selected expert weighted 1; test hook
};

struct MoEForwardOptions {
  GateMode gate_mode = GateMode::softmax;
  // Per-token routing overriding the router; gates are used as constants.
  const std::vector<Routing>* forced = nullptr;
  RoutingStats* stats = nullptr;
  // Receives aux_loss_weight * aux loss as a differentiable term when the
  // weight is positive.
  std::vector<Var>* aux_terms = nullptr;
};

/// Per token: world(x) + sum over selected i of gate_i * expert_i(x).
Var moe_forward(Graph& g, Var x, const ExpertBank& bank, const MoEConfig& cfg, const MoEForwardOptions& opts = {});
Tensor moe_forward(const ParameterStore& store, const Tensor& x, const ExpertBank& bank, const MoEConfig& cfg,
                   const MoEForwardOptions& opts = {});

}  // namespace evlm
