// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "evlm/errors.hpp"

namespace evlm {

const Tensor& Var::value() const { return graph->value(*this); }

namespace {

Graph& graph_of(std::span<const Var> vars) {
  Graph* g = vars.front().graph;
  for (const auto& v : vars) {
    if (v.graph != g || g == nullptr) throw ContractError("operands belong to different graphs");
  }
  return *g;
}

Graph& graph_of(std::initializer_list<Var> vars) { return graph_of(std::span<const Var>(vars.begin(), vars.size())); }

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

Tensor transposed(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

}  // namespace

Var Graph::push(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor(), nullptr, requires_grad, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) { return push(std::move(value), false); }

Var Graph::variable(Tensor value) { return push(std::move(value), true); }

Var Graph::param(ParamId id) {
  if (store_ == nullptr) throw ContractError("graph has no parameter store");
  if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return Var{this, it->second};
  Var v = push((*store_)[id].value, true);
  param_nodes_.emplace(id, v.id);
  return v;
}

Tensor Graph::grad(Var v) const {
  const auto& node = nodes_.at(v.id);
  return node.has_grad ? node.grad : Tensor(node.value.shape());
}

Var Graph::record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  bool needs = false;
  for (const auto& p : parents) needs = needs || nodes_.at(p.id).requires_grad;
  Var v = push(std::move(value), needs);
  if (needs) nodes_.back().backward = std::move(backward);
  return v;
}

void Graph::accumulate(std::size_t id, const Tensor& g) {
  auto& node = nodes_.at(id);
  if (!node.requires_grad) return;
  if (g.size() != node.value.size()) throw DimensionError("gradient shape mismatch in backward pass");
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  auto dst = node.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1) throw ContractError("backward target must be a single value");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  accumulate(loss.id, Tensor(value(loss).shape(), 1.0));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, node.grad);
  }
}

void Graph::accumulate_param_grads(ParameterStore& store) const {
  for (const auto& [pid, nid] : param_nodes_) {
    const auto& node = nodes_[nid];
    if (!node.has_grad) continue;
    auto dst = store[pid].grad.data();
    auto src = node.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(p, j);
    }
  }
  return out;
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of({a, b});
  const Var parents[] = {a, b};
  return g.record("matmul", matmul(a.value(), b.value()), parents, [a, b](Graph& g, const Tensor& dy) {
    if (g.requires_grad(a.id)) g.accumulate(a.id, matmul(dy, transposed(g.value(b))));
    if (g.requires_grad(b.id)) g.accumulate(b.id, matmul(transposed(g.value(a)), dy));
  });
}

Var transpose(Var a) {
  require_matrix(a.value(), "transpose");
  const Var parents[] = {a};
  return a.graph->record("transpose", transposed(a.value()), parents,
                         [a](Graph& g, const Tensor& dy) { g.accumulate(a.id, transposed(dy)); });
}

Var add(Var a, Var b) {
  Graph& g = graph_of({a, b});
  if (!a.value().same_shape(b.value())) {
    throw DimensionError("add: " + shape_string(a.value().shape()) + " vs " + shape_string(b.value().shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const Var parents[] = {a, b};
  return g.record("add", std::move(out), parents, [a, b](Graph& g, const Tensor& dy) {
    g.accumulate(a.id, dy);
    g.accumulate(b.id, dy);
  });
}

Var add_row(Var a, Var row) {
  Graph& g = graph_of({a, row});
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  if (r.size() != x.cols()) throw DimensionError("add_row: row extent does not match column count");
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += r[j];
  const Var parents[] = {a, row};
  return g.record("add_row", std::move(out), parents, [a, row](Graph& g, const Tensor& dy) {
    g.accumulate(a.id, dy);
    if (!g.requires_grad(row.id)) return;
    Tensor dr(g.value(row).shape());
    for (std::size_t i = 0; i < dy.rows(); ++i)
      for (std::size_t j = 0; j < dy.cols(); ++j) dr[j] += dy(i, j);
    g.accumulate(row.id, dr);
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of({a, b});
  if (!a.value().same_shape(b.value())) throw DimensionError("mul: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const Var parents[] = {a, b};
  return g.record("mul", std::move(out), parents, [a, b](Graph& g, const Tensor& dy) {
    Tensor da = dy, db = dy;
    for (std::size_t i = 0; i < dy.size(); ++i) {
      da[i] *= g.value(b)[i];
      db[i] *= g.value(a)[i];
    }
    g.accumulate(a.id, da);
    g.accumulate(b.id, db);
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  const Var parents[] = {a};
  return a.graph->record("scale", std::move(out), parents, [a, s](Graph& g, const Tensor& dy) {
    Tensor da = dy;
    for (auto& v : da.data()) v *= s;
    g.accumulate(a.id, da);
  });
}

Var scale_by(Var a, Var s) {
  Graph& g = graph_of({a, s});
  if (s.value().size() != 1) throw DimensionError("scale_by: scale must hold a single value");
  const double k = s.value()[0];
  Tensor out = a.value();
  for (auto& v : out.data()) v *= k;
  const Var parents[] = {a, s};
  return g.record("scale_by", std::move(out), parents, [a, s](Graph& g, const Tensor& dy) {
    const double k = g.value(s)[0];
    Tensor da = dy;
    double ds = 0.0;
    for (std::size_t i = 0; i < dy.size(); ++i) {
      da[i] *= k;
      ds += dy[i] * g.value(a)[i];
    }
    g.accumulate(a.id, da);
    g.accumulate(s.id, Tensor(g.value(s).shape(), ds));
  });
}

Var mul_col(Var a, Var gates, std::size_t column) {
  Graph& g = graph_of({a, gates});
  const Tensor& x = a.value();
  const Tensor& w = gates.value();
  if (w.rows() != x.rows() || column >= w.cols()) throw DimensionError("mul_col: gate matrix does not fit");
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) *= w(i, column);
  const Var parents[] = {a, gates};
  return g.record("mul_col", std::move(out), parents, [a, gates, column](Graph& g, const Tensor& dy) {
    const Tensor& x = g.value(a);
    const Tensor& w = g.value(gates);
    Tensor dx = dy;
    Tensor dw(w.shape());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) {
        dx(i, j) *= w(i, column);
        dw(i, column) += dy(i, j) * x(i, j);
      }
    }
    g.accumulate(a.id, dx);
    g.accumulate(gates.id, dw);
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = std::tanh(v);
  const Var parents[] = {a};
  return a.graph->record("tanh", std::move(out), parents, [a](Graph& g, const Tensor& dy) {
    Tensor da = dy;
    const Tensor& x = g.value(a);
    for (std::size_t i = 0; i < da.size(); ++i) {
      const double t = std::tanh(x[i]);
      da[i] *= 1.0 - t * t;
    }
    g.accumulate(a.id, da);
  });
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  const Var parents[] = {a};
  return a.graph->record("gelu", std::move(out), parents, [a](Graph& g, const Tensor& dy) {
    Tensor da = dy;
    const Tensor& x = g.value(a);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < da.size(); ++i) {
      const double v = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      da[i] *= cdf + v * pdf;
    }
    g.accumulate(a.id, da);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = graph_of({x, gamma, beta});
  const Tensor& in = x.value();
  const std::size_t n = in.cols();
  if (gamma.value().size() != n || beta.value().size() != n) throw DimensionError("layer_norm: affine extent mismatch");
  Tensor out(in.shape());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += in(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (in(r, c) - mean) * (in(r, c) - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) out(r, c) = (in(r, c) - mean) * inv * gamma.value()[c] + beta.value()[c];
  }
  const Var parents[] = {x, gamma, beta};
  return g.record("layer_norm", std::move(out), parents, [x, gamma, beta, eps](Graph& g, const Tensor& dy) {
    const Tensor& in = g.value(x);
    const Tensor& gm = g.value(gamma);
    const std::size_t n = in.cols();
    const double nd = static_cast<double>(n);
    Tensor dx(in.shape());
    Tensor dgamma(gm.shape());
    Tensor dbeta(g.value(beta).shape());
    std::vector<double> xhat(n), dxhat(n);
    for (std::size_t r = 0; r < in.rows(); ++r) {
      double mean = 0.0;
      for (std::size_t c = 0; c < n; ++c) mean += in(r, c);
      mean /= nd;
      double var = 0.0;
      for (std::size_t c = 0; c < n; ++c) var += (in(r, c) - mean) * (in(r, c) - mean);
      var /= nd;
      const double inv = 1.0 / std::sqrt(var + eps);
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        xhat[c] = (in(r, c) - mean) * inv;
        dxhat[c] = dy(r, c) * gm[c];
        dgamma[c] += dy(r, c) * xhat[c];
        dbeta[c] += dy(r, c);
        mean_dxhat += dxhat[c];
        mean_dxhat_xhat += dxhat[c] * xhat[c];
      }
      mean_dxhat /= nd;
      mean_dxhat_xhat /= nd;
      for (std::size_t c = 0; c < n; ++c) dx(r, c) = inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
    }
    g.accumulate(x.id, dx);
    g.accumulate(gamma.id, dgamma);
    g.accumulate(beta.id, dbeta);
  });
}

Tensor softmax_masked(const Tensor& scores, const BoolMatrix& mask) {
  if (mask.rows() != scores.rows() || mask.cols() != scores.cols()) {
    throw DimensionError("softmax_masked: mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                         ", scores are " + shape_string(scores.shape()));
  }
  Tensor out(scores.shape());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    double max = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      if (mask(r, c)) max = std::max(max, scores(r, c));
    }
    if (max == -std::numeric_limits<double>::infinity()) {
      throw ContractError("softmax_masked: row " + std::to_string(r) + " has no allowed entry");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < scores.cols(); ++c) {
      if (!mask(r, c)) continue;
      out(r, c) = std::exp(scores(r, c) - max);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < scores.cols(); ++c) out(r, c) /= total;
  }
  return out;
}

Var softmax_masked(Var scores, const BoolMatrix& mask) {
  require_matrix(scores.value(), "softmax_masked");
  Tensor probs = softmax_masked(scores.value(), mask);
  const Var parents[] = {scores};
  return scores.graph->record("softmax_masked", probs, parents, [scores, probs](Graph& g, const Tensor& dy) {
    Tensor dx(probs.shape());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < probs.cols(); ++c) dot += probs(r, c) * dy(r, c);
      for (std::size_t c = 0; c < probs.cols(); ++c) dx(r, c) = probs(r, c) * (dy(r, c) - dot);
    }
    g.accumulate(scores.id, dx);
  });
}

Var cross_entropy(Var logits, std::span<const int> targets, const std::vector<bool>& loss_mask) {
  const Tensor& z = logits.value();
  require_matrix(z, "cross_entropy");
  const std::size_t t = z.rows(), vocab = z.cols();
  if (targets.size() != t || loss_mask.size() != t) throw DimensionError("cross_entropy: target/mask length mismatch");
  std::size_t active = 0;
  for (std::size_t i = 0; i < t; ++i) {
    if (!loss_mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw ContractError("cross_entropy: target " + std::to_string(targets[i]) + " outside vocabulary");
    }
    ++active;
  }
  if (active == 0) throw ContractError("cross_entropy: every position is masked");

  Tensor probs(z.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (!loss_mask[i]) continue;
    double max = z(i, 0);
    for (std::size_t c = 1; c < vocab; ++c) max = std::max(max, z(i, c));
    double norm = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) norm += std::exp(z(i, c) - max);
    const double log_norm = max + std::log(norm);
    for (std::size_t c = 0; c < vocab; ++c) probs(i, c) = std::exp(z(i, c) - log_norm);
    total += log_norm - z(i, static_cast<std::size_t>(targets[i]));
  }
  const double denom = static_cast<double>(active);
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<bool> msk = loss_mask;
  const Var parents[] = {logits};
  return logits.graph->record(
      "cross_entropy", Tensor::scalar(total / denom), parents,
      [logits, probs = std::move(probs), tgt = std::move(tgt), msk = std::move(msk), denom](Graph& g,
                                                                                           const Tensor& dy) {
        Tensor dz(probs.shape());
        const double s = dy[0] / denom;
        for (std::size_t i = 0; i < probs.rows(); ++i) {
          if (!msk[i]) continue;
          for (std::size_t c = 0; c < probs.cols(); ++c) dz(i, c) = s * probs(i, c);
          dz(i, static_cast<std::size_t>(tgt[i])) -= s;
        }
        g.accumulate(logits.id, dz);
      });
}

Var embedding(Var table, std::span<const std::size_t> ids) {
  const Tensor& w = table.value();
  require_matrix(w, "embedding");
  if (ids.empty()) throw DimensionError("embedding: no ids");
  Tensor out({ids.size(), w.cols()});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= w.rows()) throw DimensionError("embedding: id " + std::to_string(ids[i]) + " out of range");
    for (std::size_t c = 0; c < w.cols(); ++c) out(i, c) = w(ids[i], c);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  const Var parents[] = {table};
  return table.graph->record("embedding", std::move(out), parents, [table, idx = std::move(idx)](Graph& g,
                                                                                                 const Tensor& dy) {
    Tensor dw(g.value(table).shape());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < dy.cols(); ++c) dw(idx[i], c) += dy(i, c);
    g.accumulate(table.id, dw);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  Graph& g = graph_of(parts);
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_matrix(p.value(), "concat_rows");
    if (p.value().cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += p.value().rows();
  }
  std::vector<double> flat;
  flat.reserve(rows * cols);
  for (const auto& p : parts) flat.insert(flat.end(), p.value().values().begin(), p.value().values().end());
  std::vector<Var> ps(parts.begin(), parts.end());
  return g.record("concat_rows", Tensor({rows, cols}, std::move(flat)), parts, [ps](Graph& g, const Tensor& dy) {
    std::size_t offset = 0;
    for (const auto& p : ps) {
      const std::size_t r = g.value(p).rows();
      g.accumulate(p.id, dy.row_slice(offset, offset + r));
      offset += r;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  Graph& g = graph_of(parts);
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.value().cols();
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offset + c) = v(r, c);
    offset += v.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return g.record("concat_cols", std::move(out), parts, [ps](Graph& g, const Tensor& dy) {
    std::size_t offset = 0;
    for (const auto& p : ps) {
      const std::size_t w = g.value(p).cols();
      Tensor dp({dy.rows(), w});
      for (std::size_t r = 0; r < dy.rows(); ++r)
        for (std::size_t c = 0; c < w; ++c) dp(r, c) = dy(r, offset + c);
      g.accumulate(p.id, dp);
      offset += w;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_cols");
  if (begin >= end || end > x.cols()) throw DimensionError("slice_cols: range out of bounds");
  Tensor out({x.rows(), end - begin});
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = x(r, c);
  const Var parents[] = {a};
  return a.graph->record("slice_cols", std::move(out), parents, [a, begin, end](Graph& g, const Tensor& dy) {
    Tensor dx(g.value(a).shape());
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t c = begin; c < end; ++c) dx(r, c) = dy(r, c - begin);
    g.accumulate(a.id, dx);
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out(std::move(shape), a.value().values());
  const Var parents[] = {a};
  return a.graph->record("reshape", std::move(out), parents, [a](Graph& g, const Tensor& dy) {
    g.accumulate(a.id, Tensor(g.value(a).shape(), dy.values()));
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const Var parents[] = {a};
  return a.graph->record("sum", Tensor::scalar(total), parents, [a](Graph& g, const Tensor& dy) {
    g.accumulate(a.id, Tensor(g.value(a).shape(), dy[0]));
  });
}

}  // namespace evlm
