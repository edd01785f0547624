// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "evlm/autograd.hpp"

namespace evlm {

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor for the relative error, so exact-zero gradients compare
  // on an absolute scale.
  double floor = 1e-6;
  // 0 checks every entry; otherwise entries are strided to at most this many
  // per tensor.
  std::size_t max_entries_per_tensor = 0;
};

/// Worst |analytic - numeric| / max(|analytic|, |numeric|, floor) where the
/// numeric gradient is the central difference of f at `x`.
double grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, const GradCheckOptions& opts = {});

/// Same, over parameters `ids` of `store`; `f` builds its graph from the store.
/// Parameter values are restored before returning.
double grad_check(ParameterStore& store, std::span<const ParamId> ids, const std::function<Var(Graph&)>& f,
                  const GradCheckOptions& opts = {});

}  // namespace evlm
