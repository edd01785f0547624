// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evlm/autograd.hpp"
#include "evlm/layers.hpp"

namespace evlm {

/// Toy ViT shape plus the hierarchical tapping window.
struct EncoderConfig {
  std::size_t num_layers = 12;   // L
  std::size_t patch_count = 17;  // s_img, class token included
  std::size_t d_img = 32;
  std::size_t tap_window = 8;    // W: taps are drawn from the last W blocks
  std::size_t num_taps = 4;      // F
  std::size_t heads = 1;
  std::size_t mlp_hidden = 64;

  /// Throws ConfigError unless 1 <= F <= W <= L and the widths are positive.
  void validate() const;
};

/// Block indices whose outputs are tapped: L - W - 1 + ceil((j + 1) * W / F)
/// for j = 0..F-1. Uniform stride W/F, always ending at block L - 1.
std::vector<std::size_t> tap_schedule(std::size_t num_layers, std::size_t window, std::size_t num_taps);

/// Tap index feeding each cross-attention layer: layer t reads tap
/// floor(t * F / num_xattn). Shallow taps feed early layers.
std::vector<std::size_t> assign_taps_to_xattn(std::size_t num_taps, std::size_t num_xattn);

struct HierarchicalFeatures {
  std::vector<Tensor> taps;                // F tensors of [s_img x d_img]
  std::vector<std::size_t> source_layers;  // strictly increasing block indices
};

/// Freezing group of encoder block `block` in an encoder of `num_layers`.
ParamGroup vit_group_for_block(std::size_t block, std::size_t num_layers);

/// Pre-norm encoder with no final norm and no head; taps are raw block outputs.
class VisionEncoder {
 public:
  static VisionEncoder create(ParameterStore& store, const EncoderConfig& cfg, std::uint64_t seed,
                              const std::string& prefix = "vit");

  [[nodiscard]] const EncoderConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<std::size_t>& source_layers() const { return taps_; }
  [[nodiscard]] const std::vector<TransformerBlock>& blocks() const { return blocks_; }

  [[nodiscard]] VisionEncoder copied(const ParameterStore& src, ParameterStore& dst) const;

  /// Tapped outputs for one image, in tap order.
  std::vector<Var> encode(Graph& g, Var patches) const;
  HierarchicalFeatures encode(const ParameterStore& store, const Tensor& patches) const;

 private:
  EncoderConfig cfg_;
  std::vector<TransformerBlock> blocks_;
  std::vector<std::size_t> taps_;
};

}  // namespace evlm
