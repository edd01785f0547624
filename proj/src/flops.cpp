// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/flops.hpp"

#include <cmath>
#include <optional>

#include <fmt/format.h>

#include "evlm/errors.hpp"

namespace evlm {

namespace {

using i128 = __int128;

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

// Exact p/q for r when q <= 1000; nullopt otherwise.
std::optional<Rational> small_rational(double r) {
  for (std::int64_t q = 1; q <= 1000; ++q) {
    const double p = std::nearbyint(r * static_cast<double>(q));
    if (static_cast<double>(static_cast<std::int64_t>(p)) / static_cast<double>(q) == r) {
      return Rational{static_cast<std::int64_t>(p), q};
    }
  }
  return std::nullopt;
}

// Overflow-checked product of non-negative factors.
std::optional<i128> product(std::initializer_list<i128> factors) {
  i128 acc = 1;
  for (i128 f : factors) {
    if (__builtin_mul_overflow(acc, f, &acc)) return std::nullopt;
  }
  return acc;
}

std::optional<i128> checked_sum(std::initializer_list<std::optional<i128>> parts) {
  i128 acc = 0;
  for (const auto& p : parts) {
    if (!p || __builtin_add_overflow(acc, *p, &acc)) return std::nullopt;
  }
  return acc;
}

double to_double(i128 v) { return static_cast<double>(v); }

struct ExactTerms {
  std::array<i128, 4> num;  // every term over the common denominator
  i128 den;
};

std::optional<ExactTerms> exact_cross_terms(const FlopsScenario& sc) {
  const auto rc = small_rational(sc.r_xc);
  const auto rf = small_rational(sc.r_xf);
  if (!rc || !rf) return std::nullopt;
  const i128 B = sc.B, si = sc.s_img, h = sc.h_llm, d = sc.d_img;
  const i128 q = static_cast<i128>(sc.media_len) + sc.s_txt;
  const i128 den = static_cast<i128>(rc->den) * rf->den;
  // (6 + pc/qc + pf/qf) * qc * qf
  const i128 coeff = 6 * den + static_cast<i128>(rc->num) * rf->den + static_cast<i128>(rf->num) * rc->den;
  const auto t1 = product({4, coeff, B, q, h, h});
  const auto t2 = product({4, B, q, q, h, den});
  const auto t3 = product({4, rc->num, rf->den, B, si, d, h});
  const auto t4 = product({4, rc->num, rf->den, B, q, si, h});
  if (!t1 || !t2 || !t3 || !t4 || !checked_sum({t1, t2, t3, t4})) return std::nullopt;
  return ExactTerms{{*t1, *t2, *t3, *t4}, den};
}

}  // namespace

void FlopsScenario::validate() const {
  if (!(r_xc > 0.0 && r_xc <= 1.0)) throw ConfigError("r_xc must lie in (0, 1]");
  if (!(r_xf > 0.0 && r_xf <= 1.0)) throw ConfigError("r_xf must lie in (0, 1]");
}

double flops_full_attention(const FlopsScenario& sc) {
  sc.validate();
  const i128 s = static_cast<i128>(sc.s_img) + sc.s_txt;
  const auto exact = checked_sum({product({24, sc.B, s, sc.h_llm, sc.h_llm}), product({4, sc.B, s, s, sc.h_llm})});
  if (exact) return to_double(*exact);
  const double B = static_cast<double>(sc.B), sd = static_cast<double>(s), h = static_cast<double>(sc.h_llm);
  return 24.0 * B * sd * h * h + 4.0 * B * sd * sd * h;
}

std::array<double, 4> flops_cross_attention_terms(const FlopsScenario& sc) {
  sc.validate();
  if (const auto exact = exact_cross_terms(sc)) {
    std::array<double, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) out[i] = to_double(exact->num[i]) / to_double(exact->den);
    return out;
  }
  const double B = static_cast<double>(sc.B), si = static_cast<double>(sc.s_img);
  const double h = static_cast<double>(sc.h_llm), d = static_cast<double>(sc.d_img);
  const double q = static_cast<double>(sc.media_len) + static_cast<double>(sc.s_txt);
  return {4.0 * (6.0 + sc.r_xc + sc.r_xf) * B * q * h * h, 4.0 * B * q * q * h, 4.0 * sc.r_xc * B * si * d * h,
          4.0 * sc.r_xc * B * q * si * h};
}

double flops_cross_attention(const FlopsScenario& sc) {
  sc.validate();
  if (const auto exact = exact_cross_terms(sc)) {
    const i128 total = exact->num[0] + exact->num[1] + exact->num[2] + exact->num[3];
    return to_double(total) / to_double(exact->den);
  }
  const auto t = flops_cross_attention_terms(sc);
  return t[0] + t[1] + t[2] + t[3];
}

FlopsReport ratio(const FlopsScenario& sc) {
  FlopsReport r;
  r.scenario = sc;
  r.flops_full = flops_full_attention(sc);
  if (r.flops_full == 0.0) throw ContractError("full-attention FLOPs are zero; the ratio is undefined");
  r.flops_cross = flops_cross_attention(sc);
  r.terms = flops_cross_attention_terms(sc);
  r.S = r.flops_cross / r.flops_full;
  return r;
}

FlopsScenario preset(std::string_view name) {
  FlopsScenario sc;
  sc.B = 1;
  sc.s_txt = 64;
  sc.h_llm = 5120;
  sc.d_img = 1792;
  sc.r_xc = 0.2;
  sc.r_xf = 0.5;
  sc.media_len = 16;
  if (name == "pretrain") {
    sc.s_img = 256;
  } else if (name == "continual") {
    sc.s_img = 1024;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected pretrain or continual)");
  }
  return sc;
}

std::optional<double> reported_ratio(std::string_view preset_name) {
  if (preset_name == "pretrain") return 0.24;
  if (preset_name == "continual") return 0.077;
  return std::nullopt;
}

FlopsReport preset_report(std::string_view name) {
  FlopsReport r = ratio(preset(name));
  r.preset = std::string(name);
  r.reported_S = reported_ratio(name);
  return r;
}

std::string format_table(const FlopsReport& r) {
  const auto& sc = r.scenario;
  std::string out;
  out += fmt::format("{:<14} {}\n", "preset", r.preset.empty() ? "-" : r.preset);
  out += fmt::format("{:<14} B={} s_img={} s_txt={} h_llm={} d_img={} r_xc={} r_xf={} media_len={}\n", "scenario",
                     sc.B, sc.s_img, sc.s_txt, sc.h_llm, sc.d_img, sc.r_xc, sc.r_xf, sc.media_len);
  out += fmt::format("{:<14} {:>24.6e}\n", "flops_full", r.flops_full);
  out += fmt::format("{:<14} {:>24.6e}\n", "flops_cross", r.flops_cross);
  for (std::size_t i = 0; i < 4; ++i) {
    out += fmt::format("{:<14} {:>24.6e}\n", fmt::format("  term{}", i + 1), r.terms[i]);
  }
  out += fmt::format("{:<14} {:>24.6f}\n", "S (computed)", r.S);
  if (r.reported_S) {
    out += fmt::format("{:<14} {:>24.6f}\n", "S (reported)", *r.reported_S);
    out += fmt::format("{:<14} {:>24.6f}\n", "|difference|", std::fabs(r.S - *r.reported_S));
  }
  return out;
}

std::string format_record(const FlopsReport& r) {
  const auto& sc = r.scenario;
  std::string out;
  if (!r.preset.empty()) out += fmt::format("preset={}\n", r.preset);
  out += fmt::format("B={}\ns_img={}\ns_txt={}\nh_llm={}\nd_img={}\nr_xc={}\nr_xf={}\nmedia_len={}\n", sc.B, sc.s_img,
                     sc.s_txt, sc.h_llm, sc.d_img, sc.r_xc, sc.r_xf, sc.media_len);
  out += fmt::format("flops_full={}\nflops_cross={}\nS={}\n", r.flops_full, r.flops_cross, r.S);
  for (std::size_t i = 0; i < 4; ++i) out += fmt::format("term{}={}\n", i + 1, r.terms[i]);
  if (r.reported_S) {
    out += fmt::format("reported_S={}\nS_abs_diff={}\n", *r.reported_S, std::fabs(r.S - *r.reported_S));
  }
  return out;
}

}  // namespace evlm
