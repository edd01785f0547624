// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evlm/autograd.hpp"
#include "evlm/layers.hpp"
#include "evlm/moe.hpp"

namespace evlm {

inline constexpr std::size_t kDefaultMediaLen = 16;

struct Element {
  enum class Kind { text, media };

  Kind kind = Kind::text;
  int token_id = 0;             // text only
  std::size_t image_index = 0;  // media only
  std::size_t slot = 0;         // media only

  static Element text(int id) { return {Kind::text, id, 0, 0}; }
  static Element media(std::size_t image, std::size_t slot) { return {Kind::media, 0, image, slot}; }
  [[nodiscard]] bool is_text() const { return kind == Kind::text; }
  bool operator==(const Element&) const = default;
};

/// Text tokens interleaved with one contiguous run of media_len slots per image.
class InterleavedSequence {
 public:
  InterleavedSequence() = default;
  /// Throws SequenceError when the image runs are malformed.
  InterleavedSequence(std::vector<Element> elements, std::size_t media_len);

  [[nodiscard]] const std::vector<Element>& elements() const { return elements_; }
  [[nodiscard]] std::size_t size() const { return elements_.size(); }
  [[nodiscard]] const Element& operator[](std::size_t i) const { return elements_[i]; }
  [[nodiscard]] std::size_t media_len() const { return media_len_; }
  [[nodiscard]] std::size_t num_images() const { return num_images_; }

  bool operator==(const InterleavedSequence&) const = default;

 private:
  std::vector<Element> elements_;
  std::size_t media_len_ = kDefaultMediaLen;
  std::size_t num_images_ = 0;
};

/// Source stream before media expansion: text token ids and image markers.
struct Piece {
  bool is_image = false;
  int value = 0;  // token id, or image index for markers

  static Piece text(int id) { return {false, id}; }
  static Piece image(int index) { return {true, index}; }
};

/// Expands each image marker into media_len media slots. Markers must name
/// images 0, 1, 2, ... in order.
InterleavedSequence insert_media_tokens(std::span<const Piece> pieces, std::size_t media_len);

/// Splits "[IMG0] hello [IMG1] world" on whitespace; `[IMGn]` becomes a marker,
/// any other word is looked up in `vocab`.
std::vector<Piece> parse_markup(std::string_view text, const std::map<std::string, int, std::less<>>& vocab);

/// Parses the `I`/`T` mini-language ("I T T I T"). Each T is token 0.
InterleavedSequence parse_seq_spec(std::string_view spec, std::size_t media_len);

enum class MaskMode { image, video };

std::string_view to_string(MaskMode mode);
MaskMode mask_mode_from_string(std::string_view name);

/// Cross-attention permissions over [image blocks | zero-pad block].
struct CrossMask {
  BoolMatrix allow;  // [len x (num_images * s_img + pad_len)]
  std::size_t s_img = 0;
  std::size_t num_images = 0;
  std::size_t pad_len = 0;

  [[nodiscard]] std::size_t feature_columns() const { return num_images * s_img; }
};

/// Media rows see only their own image; text rows see the most recent
/// preceding image plus the pad block (only the pad block before any image).
CrossMask build_cross_mask_image(const InterleavedSequence& seq, std::size_t s_img, std::size_t pad_len);
/// Media rows see only their own frame; text rows after the first frame see
/// every frame plus the pad, earlier text only the pad.
CrossMask build_cross_mask_video(const InterleavedSequence& seq, std::size_t s_img, std::size_t pad_len);
CrossMask build_cross_mask(const InterleavedSequence& seq, std::size_t s_img, std::size_t pad_len, MaskMode mode);

/// Causal mask over the full interleaved stream.
BoolMatrix build_self_mask(const InterleavedSequence& seq);

/// Header line "rows cols pad_len mode" followed by one line of 1/0 per row.
std::string dump_mask(const CrossMask& mask, MaskMode mode);

struct XAttnConfig {
  std::size_t h_llm = 0;
  std::size_t d_img = 0;
  double r_xc = 0.2;
  double r_xf = 0.5;

  [[nodiscard]] std::size_t attn_width() const;
  [[nodiscard]] std::size_t ffn_width() const;
  void validate() const;
};

/// Flamingo-style gated cross-attention block with tanh gates starting at 0.
/// The FFN branch is either dense or a fine-grained MoE bank.
class GatedXAttn {
 public:
  static GatedXAttn create(ParameterStore& store, const std::string& prefix, const XAttnConfig& cfg,
                           std::uint64_t seed);

  /// Copy of this layer whose dense FFN is replaced by an upcycled bank.
  /// Non-FFN tensors are copied from `src` into `dst` under their own names.
  [[nodiscard]] GatedXAttn upcycled(const ParameterStore& src, ParameterStore& dst, const MoEConfig& moe) const;
  /// Copy of every tensor of this layer from `src` into `dst`.
  [[nodiscard]] GatedXAttn copied(const ParameterStore& src, ParameterStore& dst) const;

  /// hidden + tanh(alpha_attn) * attn(ln(hidden), keys), then
  /// + tanh(alpha_ffn) * ffn(ln(.)). `keys` already carries the pad rows.
  Var forward(Graph& g, Var hidden, Var keys, const CrossMask& mask, const MoEForwardOptions& moe_opts = {}) const;

  [[nodiscard]] const XAttnConfig& config() const { return cfg_; }
  [[nodiscard]] const LayerNormParams& ln_attn() const { return ln_attn_; }
  [[nodiscard]] const AttentionParams& attn() const { return attn_; }
  [[nodiscard]] const LayerNormParams& ln_ffn() const { return ln_ffn_; }
  [[nodiscard]] ParamId alpha_attn() const { return alpha_attn_; }
  [[nodiscard]] ParamId alpha_ffn() const { return alpha_ffn_; }
  [[nodiscard]] const std::optional<DenseFfn>& dense_ffn() const { return ffn_; }
  [[nodiscard]] const std::optional<ExpertBank>& moe_bank() const { return bank_; }
  [[nodiscard]] const std::optional<MoEConfig>& moe_config() const { return moe_cfg_; }
  [[nodiscard]] const std::string& prefix() const { return prefix_; }

 private:
  std::string prefix_;
  XAttnConfig cfg_;
  LayerNormParams ln_attn_;
  AttentionParams attn_;
  ParamId alpha_attn_ = 0;
  LayerNormParams ln_ffn_;
  std::optional<DenseFfn> ffn_;
  std::optional<ExpertBank> bank_;
  std::optional<MoEConfig> moe_cfg_;
  ParamId alpha_ffn_ = 0;
};

/// Stacks per-image features and appends pad_len all-zero rows.
Var pad_features(Graph& g, std::span<const Var> image_features, std::size_t pad_len, std::size_t d_img);

/// Tensor-level convenience: one gated layer over per-image features of a tap.
Tensor gated_xattn_forward(const ParameterStore& store, const GatedXAttn& layer, const Tensor& hidden,
                           std::span<const Tensor> image_features, const CrossMask& mask);

}  // namespace evlm
