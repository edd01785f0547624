// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/vision.hpp"

#include "evlm/errors.hpp"

namespace evlm {

void EncoderConfig::validate() const {
  if (num_layers == 0 || patch_count == 0 || d_img == 0 || heads == 0 || mlp_hidden == 0) {
    throw ConfigError("encoder extents must be positive");
  }
  if (num_taps < 1) throw ConfigError("encoder needs at least one tap");
  if (num_taps > tap_window) throw ConfigError("num_taps exceeds tap_window");
  if (tap_window > num_layers) throw ConfigError("tap_window exceeds num_layers");
  if (d_img % heads != 0) throw ConfigError("d_img must be divisible by encoder heads");
}

std::vector<std::size_t> tap_schedule(std::size_t num_layers, std::size_t window, std::size_t num_taps) {
  if (num_taps == 0) throw ConfigError("tap_schedule: num_taps must be positive");
  if (num_taps > window) throw ConfigError("tap_schedule: num_taps exceeds window");
  if (window > num_layers) throw ConfigError("tap_schedule: window exceeds num_layers");
  std::vector<std::size_t> out;
  out.reserve(num_taps);
  const std::size_t base = num_layers - window;
  for (std::size_t j = 0; j < num_taps; ++j) {
    const std::size_t ceil_step = ((j + 1) * window + num_taps - 1) / num_taps;
    out.push_back(base + ceil_step - 1);
  }
  return out;
}

std::vector<std::size_t> assign_taps_to_xattn(std::size_t num_taps, std::size_t num_xattn) {
  if (num_taps == 0) throw ConfigError("assign_taps_to_xattn: num_taps must be positive");
  if (num_xattn < num_taps) throw ConfigError("assign_taps_to_xattn: fewer cross-attention layers than taps");
  std::vector<std::size_t> out(num_xattn);
  for (std::size_t t = 0; t < num_xattn; ++t) out[t] = t * num_taps / num_xattn;
  return out;
}

ParamGroup vit_group_for_block(std::size_t block, std::size_t num_layers) {
  const std::size_t quarter = (num_layers + 3) / 4;
  const std::size_t half = (num_layers + 1) / 2;
  if (block + quarter >= num_layers) return ParamGroup::vit_last_quarter;
  if (block + half >= num_layers) return ParamGroup::vit_back_half;
  return ParamGroup::vit_front;
}

VisionEncoder VisionEncoder::create(ParameterStore& store, const EncoderConfig& cfg, std::uint64_t seed,
                                    const std::string& prefix) {
  cfg.validate();
  VisionEncoder enc;
  enc.cfg_ = cfg;
  enc.taps_ = tap_schedule(cfg.num_layers, cfg.tap_window, cfg.num_taps);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    enc.blocks_.push_back(add_transformer_block(store, prefix + ".block" + std::to_string(l), cfg.d_img, cfg.heads,
                                                cfg.mlp_hidden, vit_group_for_block(l, cfg.num_layers), seed));
  }
  return enc;
}

VisionEncoder VisionEncoder::copied(const ParameterStore& src, ParameterStore& dst) const {
  VisionEncoder enc = *this;
  for (auto& b : enc.blocks_) b = copy_block(src, dst, b);
  return enc;
}

std::vector<Var> VisionEncoder::encode(Graph& g, Var patches) const {
  const Tensor& p = patches.value();
  if (p.rank() != 2 || p.rows() != cfg_.patch_count || p.cols() != cfg_.d_img) {
    throw DimensionError("encode: patches are " + shape_string(p.shape()) + ", expected [" +
                         std::to_string(cfg_.patch_count) + "x" + std::to_string(cfg_.d_img) + "]");
  }
  const BoolMatrix full(cfg_.patch_count, cfg_.patch_count, true);
  std::vector<Var> out;
  out.reserve(taps_.size());
  Var x = patches;
  std::size_t next = 0;
  // Blocks past the deepest tap never run; the deepest tap is always L - 1.
  for (std::size_t l = 0; l < blocks_.size() && next < taps_.size(); ++l) {
    x = block_forward(g, blocks_[l], x, full);
    if (taps_[next] == l) {
      out.push_back(x);
      ++next;
    }
  }
  return out;
}

HierarchicalFeatures VisionEncoder::encode(const ParameterStore& store, const Tensor& patches) const {
  Graph g(store);
  HierarchicalFeatures f;
  for (Var v : encode(g, g.constant(patches))) f.taps.push_back(v.value());
  f.source_layers = taps_;
  return f;
}

}  // namespace evlm
