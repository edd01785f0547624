// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "evlm/errors.hpp"

namespace evlm {

namespace {

double scalar_of(const Tensor& t) {
  if (t.size() != 1) throw ContractError("grad_check: function must return a single value");
  if (!std::isfinite(t[0])) throw NumericError("grad_check: function value is not finite");
  return t[0];
}

std::size_t stride_for(std::size_t n, std::size_t cap) { return cap == 0 || n <= cap ? 1 : (n + cap - 1) / cap; }

double relative_error(double analytic, double numeric, double floor) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

}  // namespace

double grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, const GradCheckOptions& opts) {
  Tensor analytic;
  {
    Graph g;
    Var in = g.variable(x);
    Var out = f(g, in);
    scalar_of(out.value());
    g.backward(out);
    analytic = g.grad(in);
  }
  auto eval = [&](const Tensor& point) {
    Graph g;
    return scalar_of(f(g, g.variable(point)).value());
  };
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); i += stride_for(x.size(), opts.max_entries_per_tensor)) {
    probe[i] = x[i] + opts.step;
    const double up = eval(probe);
    probe[i] = x[i] - opts.step;
    const double down = eval(probe);
    probe[i] = x[i];
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * opts.step), opts.floor));
  }
  return worst;
}

double grad_check(ParameterStore& store, std::span<const ParamId> ids, const std::function<Var(Graph&)>& f,
                  const GradCheckOptions& opts) {
  std::vector<Tensor> analytic;
  {
    Graph g(store);
    Var out = f(g);
    scalar_of(out.value());
    g.backward(out);
    for (auto id : ids) analytic.push_back(g.grad(g.param(id)));
  }
  auto eval = [&]() {
    Graph g(store);
    return scalar_of(f(g).value());
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    Tensor& value = store[ids[k]].value;
    for (std::size_t i = 0; i < value.size(); i += stride_for(value.size(), opts.max_entries_per_tensor)) {
      const double original = value[i];
      value[i] = original + opts.step;
      const double up = eval();
      value[i] = original - opts.step;
      const double down = eval();
      value[i] = original;
      worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * opts.step), opts.floor));
    }
  }
  return worst;
}

}  // namespace evlm
