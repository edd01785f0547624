// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "evlm/autograd.hpp"
#include "evlm/params.hpp"

namespace evlm {

struct LayerNormParams {
  ParamId gamma = 0;
  ParamId beta = 0;
};

LayerNormParams add_layer_norm(ParameterStore& store, const std::string& prefix, std::size_t width, ParamGroup group);
Var apply_layer_norm(Graph& g, const LayerNormParams& ln, Var x);

/// Bias-free two-matrix feed-forward block: gelu(x * w_in) * w_out.
struct DenseFfn {
  ParamId w_in = 0;   // [width x hidden]
  ParamId w_out = 0;  // [hidden x width]
  std::size_t width = 0;
  std::size_t hidden = 0;
};

DenseFfn add_dense_ffn(ParameterStore& store, const std::string& prefix, std::size_t width, std::size_t hidden,
                       ParamGroup group, std::uint64_t seed);
Var ffn_forward(Graph& g, const DenseFfn& ffn, Var x);
Tensor ffn_forward(const ParameterStore& store, const DenseFfn& ffn, const Tensor& x);

/// Bias-free projection weight of shape [in x out] with 1/sqrt(in) scaled init.
ParamId add_linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, ParamGroup group,
                   std::uint64_t seed);

/// Scaled dot-product attention split into `heads` equal column groups.
/// q: [n x a], k/v: [m x a], mask: [n x m].
Var attend(Var q, Var k, Var v, const BoolMatrix& mask, std::size_t heads);

/// Projection, attention and output projection for self- or cross-attention.
struct AttentionParams {
  ParamId wq = 0, wk = 0, wv = 0, wo = 0;
  std::size_t heads = 1;
};

AttentionParams add_attention(ParameterStore& store, const std::string& prefix, std::size_t query_width,
                              std::size_t kv_width, std::size_t inner, std::size_t heads, ParamGroup group,
                              std::uint64_t seed);
Var attention_forward(Graph& g, const AttentionParams& p, Var queries, Var keys_values, const BoolMatrix& mask);

/// Pre-norm transformer block: x + attn(ln(x)), then + ffn(ln(.)).
struct TransformerBlock {
  LayerNormParams ln_attn;
  AttentionParams attn;
  LayerNormParams ln_ffn;
  DenseFfn ffn;
};

TransformerBlock add_transformer_block(ParameterStore& store, const std::string& prefix, std::size_t width,
                                       std::size_t heads, std::size_t ffn_hidden, ParamGroup group,
                                       std::uint64_t seed);
Var block_forward(Graph& g, const TransformerBlock& block, Var x, const BoolMatrix& mask);

/// Copies of component tensors into another store, keeping names and groups.
ParamId copy_param(const ParameterStore& src, ParameterStore& dst, ParamId id);
LayerNormParams copy_layer_norm(const ParameterStore& src, ParameterStore& dst, const LayerNormParams& ln);
DenseFfn copy_ffn(const ParameterStore& src, ParameterStore& dst, const DenseFfn& ffn);
AttentionParams copy_attention(const ParameterStore& src, ParameterStore& dst, const AttentionParams& attn);
TransformerBlock copy_block(const ParameterStore& src, ParameterStore& dst, const TransformerBlock& block);

}  // namespace evlm
