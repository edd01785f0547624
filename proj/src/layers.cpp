// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/layers.hpp"

#include <cmath>
#include <vector>

#include "evlm/errors.hpp"

namespace evlm {

LayerNormParams add_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t width,
                               ParamGroup group) {
  return {store.add(prefix + ".gamma", group, Tensor({width}, 1.0)),
          store.add(prefix + ".beta", group, Tensor({width}, 0.0))};
}

Var apply_layer_norm(Graph& g, const LayerNormParams& ln, Var x) {
  return layer_norm(x, g.param(ln.gamma), g.param(ln.beta));
}

ParamId add_linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, ParamGroup group,
                   std::uint64_t seed) {
  return store.add(name, group, normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), seed, name));
}

DenseFfn add_dense_ffn(ParameterStore& store, const std::string& prefix, std::size_t width, std::size_t hidden,
                       ParamGroup group, std::uint64_t seed) {
  if (width == 0 || hidden == 0) throw ConfigError("ffn widths must be positive");
  return {add_linear(store, prefix + ".w_in", width, hidden, group, seed),
          add_linear(store, prefix + ".w_out", hidden, width, group, seed), width, hidden};
}

Var ffn_forward(Graph& g, const DenseFfn& ffn, Var x) {
  return matmul(gelu(matmul(x, g.param(ffn.w_in))), g.param(ffn.w_out));
}

Tensor ffn_forward(const ParameterStore& store, const DenseFfn& ffn, const Tensor& x) {
  Graph g(store);
  return ffn_forward(g, ffn, g.constant(x)).value();
}

Var attend(Var q, Var k, Var v, const BoolMatrix& mask, std::size_t heads) {
  const std::size_t inner = q.value().cols();
  if (heads == 0 || inner % heads != 0) throw ConfigError("attention width must divide evenly into heads");
  if (k.value().cols() != inner || v.value().cols() != inner) throw DimensionError("attention: q/k/v widths differ");
  const std::size_t d = inner / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * d, (h + 1) * d);
    Var kh = heads == 1 ? k : slice_cols(k, h * d, (h + 1) * d);
    Var vh = heads == 1 ? v : slice_cols(v, h * d, (h + 1) * d);
    Var probs = softmax_masked(scale(matmul(qh, transpose(kh)), scale_factor), mask);
    outs.push_back(matmul(probs, vh));
  }
  return heads == 1 ? outs.front() : concat_cols(outs);
}

AttentionParams add_attention(ParameterStore& store, const std::string& prefix, std::size_t query_width,
                              std::size_t kv_width, std::size_t inner, std::size_t heads, ParamGroup group,
                              std::uint64_t seed) {
  if (inner == 0) throw ConfigError("attention inner width must be positive");
  return {add_linear(store, prefix + ".wq", query_width, inner, group, seed),
          add_linear(store, prefix + ".wk", kv_width, inner, group, seed),
          add_linear(store, prefix + ".wv", kv_width, inner, group, seed),
          add_linear(store, prefix + ".wo", inner, query_width, group, seed), heads};
}

Var attention_forward(Graph& g, const AttentionParams& p, Var queries, Var keys_values, const BoolMatrix& mask) {
  Var q = matmul(queries, g.param(p.wq));
  Var k = matmul(keys_values, g.param(p.wk));
  Var v = matmul(keys_values, g.param(p.wv));
  return matmul(attend(q, k, v, mask, p.heads), g.param(p.wo));
}

TransformerBlock add_transformer_block(ParameterStore& store, const std::string& prefix, std::size_t width,
                                       std::size_t heads, std::size_t ffn_hidden, ParamGroup group,
                                       std::uint64_t seed) {
  TransformerBlock b;
  b.ln_attn = add_layer_norm(store, prefix + ".ln_attn", width, group);
  b.attn = add_attention(store, prefix + ".attn", width, width, width, heads, group, seed);
  b.ln_ffn = add_layer_norm(store, prefix + ".ln_ffn", width, group);
  b.ffn = add_dense_ffn(store, prefix + ".ffn", width, ffn_hidden, group, seed);
  return b;
}

Var block_forward(Graph& g, const TransformerBlock& block, Var x, const BoolMatrix& mask) {
  Var normed = apply_layer_norm(g, block.ln_attn, x);
  Var h = add(x, attention_forward(g, block.attn, normed, normed, mask));
  return add(h, ffn_forward(g, block.ffn, apply_layer_norm(g, block.ln_ffn, h)));
}

ParamId copy_param(const ParameterStore& src, ParameterStore& dst, ParamId id) {
  const Parameter& p = src[id];
  return dst.add(p.name, p.group, p.value);
}

LayerNormParams copy_layer_norm(const ParameterStore& src, ParameterStore& dst, const LayerNormParams& ln) {
  return {copy_param(src, dst, ln.gamma), copy_param(src, dst, ln.beta)};
}

DenseFfn copy_ffn(const ParameterStore& src, ParameterStore& dst, const DenseFfn& ffn) {
  return {copy_param(src, dst, ffn.w_in), copy_param(src, dst, ffn.w_out), ffn.width, ffn.hidden};
}

AttentionParams copy_attention(const ParameterStore& src, ParameterStore& dst, const AttentionParams& attn) {
  return {copy_param(src, dst, attn.wq), copy_param(src, dst, attn.wk), copy_param(src, dst, attn.wv),
          copy_param(src, dst, attn.wo), attn.heads};
}

TransformerBlock copy_block(const ParameterStore& src, ParameterStore& dst, const TransformerBlock& block) {
  return {copy_layer_norm(src, dst, block.ln_attn), copy_attention(src, dst, block.attn),
          copy_layer_norm(src, dst, block.ln_ffn), copy_ffn(src, dst, block.ffn)};
}

}  // namespace evlm
