// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evlm/errors.hpp"

namespace evlm {

void MoEConfig::validate(std::size_t dense_hidden) const {
  if (n_replicas == 0 || segments == 0) throw ConfigError("moe: N and M must be positive");
  if (top_k < 1 || top_k > num_experts()) throw ConfigError("moe: top_k must lie in [1, N*M]");
  if (dense_hidden % segments != 0) {
    throw ConfigError("moe: segments M=" + std::to_string(segments) + " does not divide FFN hidden width " +
                      std::to_string(dense_hidden));
  }
  if (!(aux_loss_weight >= 0.0)) throw ConfigError("moe: aux_loss_weight must be >= 0");
}

ExpertBank upcycle(const ParameterStore& src, const DenseFfn& dense, const MoEConfig& cfg, ParameterStore& dst,
                   const std::string& prefix, ParamGroup group) {
  cfg.validate(dense.hidden);
  const Tensor& w_in = src[dense.w_in].value;
  const Tensor& w_out = src[dense.w_out].value;
  const std::size_t slice = dense.hidden / cfg.segments;

  ExpertBank bank;
  bank.width = dense.width;
  bank.n_replicas = cfg.n_replicas;
  bank.segments = cfg.segments;
  for (std::size_t r = 0; r < cfg.n_replicas; ++r) {
    for (std::size_t m = 0; m < cfg.segments; ++m) {
      Tensor in_slice({dense.width, slice});
      Tensor out_slice({slice, dense.width});
      for (std::size_t i = 0; i < dense.width; ++i)
        for (std::size_t j = 0; j < slice; ++j) in_slice(i, j) = w_in(i, m * slice + j);
      for (std::size_t j = 0; j < slice; ++j)
        for (std::size_t i = 0; i < dense.width; ++i) out_slice(j, i) = w_out(m * slice + j, i);
      const std::string name = prefix + ".expert" + std::to_string(r * cfg.segments + m);
      bank.experts.push_back(DenseFfn{dst.add(name + ".w_in", group, std::move(in_slice)),
                                      dst.add(name + ".w_out", group, std::move(out_slice)), dense.width, slice});
    }
  }
  if (cfg.use_world_expert) {
    bank.world = DenseFfn{dst.add(prefix + ".world.w_in", group, w_in), dst.add(prefix + ".world.w_out", group, w_out),
                          dense.width, dense.hidden};
  }
  bank.router = dst.add(prefix + ".router", group, Tensor({dense.width, cfg.num_experts()}));
  return bank;
}

Routing route_logits(std::span<const double> logits, std::size_t k) {
  if (k == 0 || k > logits.size()) throw ConfigError("route: k must lie in [1, num_experts]");
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  order.resize(k);

  Routing r;
  r.indices = order;
  const double max = logits[order.front()];
  double total = 0.0;
  for (auto i : order) {
    r.gates.push_back(std::exp(logits[i] - max));
    total += r.gates.back();
  }
  for (auto& gte : r.gates) gte /= total;
  return r;
}

Routing route(const Tensor& x, const ParameterStore& store, const ExpertBank& bank, std::size_t k) {
  if (x.size() != bank.width) throw DimensionError("route: token width does not match the bank");
  const Tensor logits = matmul(Tensor({1, bank.width}, x.values()), store[bank.router].value);
  return route_logits(logits.data(), k);
}

void RoutingStats::merge(const RoutingStats& other) {
  if (counts.empty()) {
    counts.assign(other.counts.size(), 0);
    prob_sum.assign(other.prob_sum.size(), 0.0);
    top_k = other.top_k;
  }
  if (other.counts.size() != counts.size() || other.top_k != top_k) throw ContractError("merging incompatible stats");
  tokens += other.tokens;
  for (std::size_t e = 0; e < counts.size(); ++e) {
    counts[e] += other.counts[e];
    prob_sum[e] += other.prob_sum[e];
  }
}

double RoutingStats::fraction(std::size_t e) const {
  return tokens == 0 ? 0.0 : static_cast<double>(counts.at(e)) / static_cast<double>(tokens * top_k);
}

double RoutingStats::mean_prob(std::size_t e) const {
  return tokens == 0 ? 0.0 : prob_sum.at(e) / static_cast<double>(tokens);
}

double aux_load_balance_loss(const RoutingStats& stats) {
  double total = 0.0;
  for (std::size_t e = 0; e < stats.counts.size(); ++e) total += stats.fraction(e) * stats.mean_prob(e);
  return static_cast<double>(stats.counts.size()) * total;
}

Var moe_forward(Graph& g, Var x, const ExpertBank& bank, const MoEConfig& cfg, const MoEForwardOptions& opts) {
  const Tensor& in = x.value();
  if (in.rank() != 2 || in.cols() != bank.width) {
    throw DimensionError("moe_forward: input " + shape_string(in.shape()) + " does not match bank width " +
                         std::to_string(bank.width));
  }
  const std::size_t tokens = in.rows();
  const std::size_t ne = bank.experts.size();
  Var logits = matmul(x, g.param(bank.router));

  std::vector<Routing> routing;
  if (opts.forced != nullptr) {
    if (opts.forced->size() != tokens) throw DimensionError("moe_forward: forced routing length mismatch");
    routing = *opts.forced;
  } else {
    routing.reserve(tokens);
    for (std::size_t t = 0; t < tokens; ++t) {
      routing.push_back(route_logits(logits.value().data().subspan(t * ne, ne), cfg.top_k));
    }
  }

  BoolMatrix selected(tokens, ne);
  std::vector<bool> used(ne, false);
  for (std::size_t t = 0; t < tokens; ++t) {
    for (auto e : routing[t].indices) {
      if (e >= ne) throw DimensionError("moe_forward: expert index out of range");
      selected.set(t, e, true);
      used[e] = true;
    }
  }

  Var gates;
  if (opts.forced != nullptr) {
    Tensor fixed({tokens, ne});
    for (std::size_t t = 0; t < tokens; ++t)
      for (std::size_t i = 0; i < routing[t].indices.size(); ++i) fixed(t, routing[t].indices[i]) = routing[t].gates[i];
    gates = g.constant(std::move(fixed));
  } else if (opts.gate_mode == GateMode::unit) {
    Tensor ones({tokens, ne});
    for (std::size_t t = 0; t < tokens; ++t)
      for (std::size_t e = 0; e < ne; ++e) ones(t, e) = selected(t, e) ? 1.0 : 0.0;
    gates = g.constant(std::move(ones));
  } else {
    gates = softmax_masked(logits, selected);
  }

  const bool want_probs = opts.stats != nullptr || (opts.aux_terms != nullptr && cfg.aux_loss_weight > 0.0);
  if (want_probs) {
    Var probs = softmax_masked(logits, BoolMatrix(tokens, ne, true));
    RoutingStats local;
    local.tokens = tokens;
    local.top_k = cfg.top_k;
    local.counts.assign(ne, 0);
    local.prob_sum.assign(ne, 0.0);
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t e = 0; e < ne; ++e) {
        local.counts[e] += selected(t, e) ? 1 : 0;
        local.prob_sum[e] += probs.value()(t, e);
      }
    }
    if (opts.aux_terms != nullptr && cfg.aux_loss_weight > 0.0) {
      // weight * NM * sum_e f_e * mean_t p[t, e], with f_e held constant.
      Tensor coeff({tokens, ne});
      for (std::size_t t = 0; t < tokens; ++t)
        for (std::size_t e = 0; e < ne; ++e)
          coeff(t, e) = cfg.aux_loss_weight * static_cast<double>(ne) * local.fraction(e) / static_cast<double>(tokens);
      opts.aux_terms->push_back(sum(mul(probs, g.constant(std::move(coeff)))));
    }
    if (opts.stats != nullptr) opts.stats->merge(local);
  }

  std::optional<Var> out;
  if (bank.world) out = ffn_forward(g, *bank.world, x);
  for (std::size_t e = 0; e < ne; ++e) {
    if (!used[e]) continue;
    Var term = mul_col(ffn_forward(g, bank.experts[e], x), gates, e);
    out = out ? add(*out, term) : term;
  }
  return *out;
}

Tensor moe_forward(const ParameterStore& store, const Tensor& x, const ExpertBank& bank, const MoEConfig& cfg,
                   const MoEForwardOptions& opts) {
  Graph g(store);
  return moe_forward(g, g.constant(x), bank, cfg, opts).value();
}

}  // namespace evlm
