// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/fusion.hpp"

#include <cmath>
#include <sstream>

#include "evlm/errors.hpp"

namespace evlm {

InterleavedSequence::InterleavedSequence(std::vector<Element> elements, std::size_t media_len)
    : elements_(std::move(elements)), media_len_(media_len) {
  if (media_len_ == 0) throw SequenceError("media_len must be positive");
  std::size_t i = 0;
  while (i < elements_.size()) {
    if (elements_[i].is_text()) {
      ++i;
      continue;
    }
    // A run must be media_len slots of image num_images_, slots 0..media_len-1.
    for (std::size_t s = 0; s < media_len_; ++s, ++i) {
      if (i >= elements_.size() || elements_[i].is_text() || elements_[i].image_index != num_images_ ||
          elements_[i].slot != s) {
        throw SequenceError("malformed media run for image " + std::to_string(num_images_) + " at position " +
                            std::to_string(i));
      }
    }
    ++num_images_;
  }
}

InterleavedSequence insert_media_tokens(std::span<const Piece> pieces, std::size_t media_len) {
  std::vector<Element> out;
  int next_image = 0;
  for (const auto& p : pieces) {
    if (!p.is_image) {
      out.push_back(Element::text(p.value));
      continue;
    }
    if (p.value != next_image) {
      throw SequenceError("image marker " + std::to_string(p.value) + " where image " + std::to_string(next_image) +
                          " was expected");
    }
    for (std::size_t s = 0; s < media_len; ++s) out.push_back(Element::media(static_cast<std::size_t>(p.value), s));
    ++next_image;
  }
  return InterleavedSequence(std::move(out), media_len);
}

std::vector<Piece> parse_markup(std::string_view text, const std::map<std::string, int, std::less<>>& vocab) {
  std::vector<Piece> out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    if (word.size() > 5 && word.starts_with("[IMG") && word.back() == ']') {
      const std::string digits = word.substr(4, word.size() - 5);
      if (digits.find_first_not_of("0123456789") != std::string::npos) throw SequenceError("bad marker " + word);
      out.push_back(Piece::image(std::stoi(digits)));
      continue;
    }
    auto it = vocab.find(word);
    if (it == vocab.end()) throw SequenceError("word '" + word + "' is not in the vocabulary");
    out.push_back(Piece::text(it->second));
  }
  return out;
}

InterleavedSequence parse_seq_spec(std::string_view spec, std::size_t media_len) {
  std::vector<Piece> pieces;
  std::istringstream in{std::string(spec)};
  std::string tok;
  int images = 0;
  while (in >> tok) {
    if (tok == "I") {
      pieces.push_back(Piece::image(images++));
    } else if (tok == "T") {
      pieces.push_back(Piece::text(0));
    } else {
      throw SequenceError("sequence spec token '" + tok + "' is neither I nor T");
    }
  }
  if (pieces.empty()) throw SequenceError("empty sequence spec");
  return insert_media_tokens(pieces, media_len);
}

std::string_view to_string(MaskMode mode) { return mode == MaskMode::image ? "image" : "video"; }

MaskMode mask_mode_from_string(std::string_view name) {
  if (name == "image") return MaskMode::image;
  if (name == "video") return MaskMode::video;
  throw ConfigError("unknown mask mode '" + std::string(name) + "'");
}

namespace {

CrossMask empty_mask(const InterleavedSequence& seq, std::size_t s_img, std::size_t pad_len) {
  if (s_img == 0) throw ConfigError("s_img must be positive");
  if (pad_len == 0) throw ConfigError("pad_len must be positive");
  CrossMask m;
  m.s_img = s_img;
  m.num_images = seq.num_images();
  m.pad_len = pad_len;
  m.allow = BoolMatrix(seq.size(), m.feature_columns() + pad_len);
  return m;
}

void allow_block(CrossMask& m, std::size_t row, std::size_t image) {
  for (std::size_t c = image * m.s_img; c < (image + 1) * m.s_img; ++c) m.allow.set(row, c, true);
}

void allow_pad(CrossMask& m, std::size_t row) {
  for (std::size_t c = m.feature_columns(); c < m.allow.cols(); ++c) m.allow.set(row, c, true);
}

}  // namespace

CrossMask build_cross_mask_image(const InterleavedSequence& seq, std::size_t s_img, std::size_t pad_len) {
  CrossMask m = empty_mask(seq, s_img, pad_len);
  std::optional<std::size_t> last_image;
  for (std::size_t r = 0; r < seq.size(); ++r) {
    const Element& e = seq[r];
    if (!e.is_text()) {
      allow_block(m, r, e.image_index);
      last_image = e.image_index;
      continue;
    }
    if (last_image) allow_block(m, r, *last_image);
    allow_pad(m, r);
  }
  return m;
}

CrossMask build_cross_mask_video(const InterleavedSequence& seq, std::size_t s_img, std::size_t pad_len) {
  CrossMask m = empty_mask(seq, s_img, pad_len);
  bool seen_frame = false;
  for (std::size_t r = 0; r < seq.size(); ++r) {
    const Element& e = seq[r];
    if (!e.is_text()) {
      allow_block(m, r, e.image_index);
      seen_frame = true;
      continue;
    }
    // Text ahead of the first frame sees only the pad block.
    if (seen_frame) {
      for (std::size_t i = 0; i < m.num_images; ++i) allow_block(m, r, i);
    }
    allow_pad(m, r);
  }
  return m;
}

CrossMask build_cross_mask(const InterleavedSequence& seq, std::size_t s_img, std::size_t pad_len, MaskMode mode) {
  return mode == MaskMode::image ? build_cross_mask_image(seq, s_img, pad_len)
                                 : build_cross_mask_video(seq, s_img, pad_len);
}

BoolMatrix build_self_mask(const InterleavedSequence& seq) {
  BoolMatrix m(seq.size(), seq.size());
  for (std::size_t r = 0; r < seq.size(); ++r)
    for (std::size_t c = 0; c <= r; ++c) m.set(r, c, true);
  return m;
}

std::string dump_mask(const CrossMask& mask, MaskMode mode) {
  std::string out = std::to_string(mask.allow.rows()) + " " + std::to_string(mask.allow.cols()) + " " +
                    std::to_string(mask.pad_len) + " " + std::string(to_string(mode)) + "\n";
  for (std::size_t r = 0; r < mask.allow.rows(); ++r) {
    for (std::size_t c = 0; c < mask.allow.cols(); ++c) out += mask.allow(r, c) ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::size_t XAttnConfig::attn_width() const {
  return static_cast<std::size_t>(std::lround(r_xc * static_cast<double>(h_llm)));
}

std::size_t XAttnConfig::ffn_width() const {
  return static_cast<std::size_t>(std::lround(r_xf * static_cast<double>(h_llm)));
}

void XAttnConfig::validate() const {
  if (h_llm == 0 || d_img == 0) throw ConfigError("cross-attention widths must be positive");
  if (!(r_xc > 0.0 && r_xc <= 1.0) || !(r_xf > 0.0 && r_xf <= 1.0)) throw ConfigError("r_xc and r_xf must lie in (0, 1]");
  if (attn_width() < 1 || ffn_width() < 1) throw ConfigError("r * h_llm rounds to zero width");
}

GatedXAttn GatedXAttn::create(ParameterStore& store, const std::string& prefix, const XAttnConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  GatedXAttn x;
  x.prefix_ = prefix;
  x.cfg_ = cfg;
  const auto group = ParamGroup::xattn;
  x.ln_attn_ = add_layer_norm(store, prefix + ".ln_attn", cfg.h_llm, group);
  x.attn_ = add_attention(store, prefix + ".attn", cfg.h_llm, cfg.d_img, cfg.attn_width(), 1, group, seed);
  x.alpha_attn_ = store.add(prefix + ".alpha_attn", group, Tensor::scalar(0.0));
  x.ln_ffn_ = add_layer_norm(store, prefix + ".ln_ffn", cfg.h_llm, group);
  x.ffn_ = add_dense_ffn(store, prefix + ".ffn", cfg.h_llm, cfg.ffn_width(), group, seed);
  x.alpha_ffn_ = store.add(prefix + ".alpha_ffn", group, Tensor::scalar(0.0));
  return x;
}

GatedXAttn GatedXAttn::copied(const ParameterStore& src, ParameterStore& dst) const {
  GatedXAttn x = *this;
  x.ln_attn_ = copy_layer_norm(src, dst, ln_attn_);
  x.attn_ = copy_attention(src, dst, attn_);
  x.alpha_attn_ = copy_param(src, dst, alpha_attn_);
  x.ln_ffn_ = copy_layer_norm(src, dst, ln_ffn_);
  if (ffn_) x.ffn_ = copy_ffn(src, dst, *ffn_);
  if (bank_) {
    ExpertBank b = *bank_;
    for (auto& e : b.experts) e = copy_ffn(src, dst, e);
    if (b.world) b.world = copy_ffn(src, dst, *b.world);
    b.router = copy_param(src, dst, b.router);
    x.bank_ = std::move(b);
  }
  x.alpha_ffn_ = copy_param(src, dst, alpha_ffn_);
  return x;
}

GatedXAttn GatedXAttn::upcycled(const ParameterStore& src, ParameterStore& dst, const MoEConfig& moe) const {
  if (!ffn_) throw ConfigError("layer " + prefix_ + " is already a mixture of experts");
  GatedXAttn x = *this;
  x.ln_attn_ = copy_layer_norm(src, dst, ln_attn_);
  x.attn_ = copy_attention(src, dst, attn_);
  x.alpha_attn_ = copy_param(src, dst, alpha_attn_);
  x.ln_ffn_ = copy_layer_norm(src, dst, ln_ffn_);
  x.ffn_.reset();
  x.bank_ = upcycle(src, *ffn_, moe, dst, prefix_ + ".moe");
  x.moe_cfg_ = moe;
  x.alpha_ffn_ = copy_param(src, dst, alpha_ffn_);
  return x;
}

Var GatedXAttn::forward(Graph& g, Var hidden, Var keys, const CrossMask& mask,
                        const MoEForwardOptions& moe_opts) const {
  const Tensor& h = hidden.value();
  const Tensor& k = keys.value();
  if (h.rank() != 2 || h.cols() != cfg_.h_llm) throw DimensionError("gated xattn: hidden width mismatch");
  if (k.rank() != 2 || k.cols() != cfg_.d_img) throw DimensionError("gated xattn: feature width mismatch");
  if (mask.allow.rows() != h.rows()) throw DimensionError("gated xattn: mask rows do not match the sequence");
  if (mask.allow.cols() != k.rows()) {
    throw DimensionError("gated xattn: mask has " + std::to_string(mask.allow.cols()) + " columns but features have " +
                         std::to_string(k.rows()) + " rows");
  }
  Var attn_out = attention_forward(g, attn_, apply_layer_norm(g, ln_attn_, hidden), keys, mask.allow);
  Var h1 = add(hidden, scale_by(attn_out, tanh(g.param(alpha_attn_))));
  Var normed = apply_layer_norm(g, ln_ffn_, h1);
  Var ffn_out = bank_ ? moe_forward(g, normed, *bank_, *moe_cfg_, moe_opts) : ffn_forward(g, *ffn_, normed);
  return add(h1, scale_by(ffn_out, tanh(g.param(alpha_ffn_))));
}

Var pad_features(Graph& g, std::span<const Var> image_features, std::size_t pad_len, std::size_t d_img) {
  if (pad_len == 0) throw ConfigError("pad_len must be positive");
  std::vector<Var> parts(image_features.begin(), image_features.end());
  parts.push_back(g.constant(Tensor({pad_len, d_img})));
  return concat_rows(parts);
}

Tensor gated_xattn_forward(const ParameterStore& store, const GatedXAttn& layer, const Tensor& hidden,
                           std::span<const Tensor> image_features, const CrossMask& mask) {
  Graph g(store);
  std::vector<Var> feats;
  for (const auto& f : image_features) feats.push_back(g.constant(f));
  Var keys = pad_features(g, feats, mask.pad_len, layer.config().d_img);
  return layer.forward(g, g.constant(hidden), keys, mask).value();
}

}  // namespace evlm
