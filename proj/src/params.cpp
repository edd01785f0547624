// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/params.hpp"

#include <random>

#include "evlm/errors.hpp"

namespace evlm {

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::llm: return "llm";
    case ParamGroup::xattn: return "xattn";
    case ParamGroup::vit_front: return "vit_front";
    case ParamGroup::vit_back_half: return "vit_back_half";
    case ParamGroup::vit_last_quarter: return "vit_last_quarter";
    case ParamGroup::media_tokens: return "media_tokens";
    case ParamGroup::moe: return "moe";
  }
  return "?";
}

ParamGroup param_group_from_string(std::string_view name) {
  for (auto g : kAllParamGroups) {
    if (to_string(g) == name) return g;
  }
  throw ConfigError("unknown parameter group '" + std::string(name) + "'");
}

ParamId ParameterStore::add(std::string name, ParamGroup group, Tensor init) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Tensor grad(init.shape());
  params_.push_back(Parameter{std::move(name), group, std::move(init), std::move(grad), true});
  return params_.size() - 1;
}

std::optional<ParamId> ParameterStore::find(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.data().begin(), p.grad.data().end(), 0.0);
}

std::size_t ParameterStore::scalar_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.group == group) n += p.value.size();
  }
  return n;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view name) {
  // FNV-1a over the name, then a splitmix64 finalizer over (root ^ hash).
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = root_seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Tensor normal_tensor(const Shape& shape, double stddev, std::uint64_t root_seed, std::string_view name) {
  Tensor t(shape);
  std::mt19937_64 rng(derive_seed(root_seed, name));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

void sgd_step(ParameterStore& store, double lr) {
  for (auto& p : store) {
    if (!p.trainable) continue;
    auto value = p.value.data();
    auto grad = p.grad.data();
    for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
  }
}

}  // namespace evlm
