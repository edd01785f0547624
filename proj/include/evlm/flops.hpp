// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace evlm {

/// Inputs of the per-layer training cost model. media_len is the number of
/// learnable query tokens standing in for one image in the text stream.
struct FlopsScenario {
  std::uint64_t B = 1;
  std::uint64_t s_img = 0;
  std::uint64_t s_txt = 0;
  std::uint64_t h_llm = 0;
  std::uint64_t d_img = 0;
  double r_xc = 0.2;
  double r_xf = 0.5;
  std::uint64_t media_len = 16;

  /// Throws ConfigError unless r_xc, r_xf lie in (0, 1]. Zero extents are
  /// allowed and simply produce zero cost.
  void validate() const;
};

/// Concatenation baseline: 24 B (s_img + s_txt) h^2 + 4 B (s_img + s_txt)^2 h.
double flops_full_attention(const FlopsScenario& sc);

/// The four cross-attention terms, in order:
///   4 (6 + r_xc + r_xf) B (m + s_txt) h^2
///   4 B (m + s_txt)^2 h
///   4 r_xc B s_img d_img h
///   4 r_xc B (m + s_txt) s_img h
/// with m = media_len.
std::array<double, 4> flops_cross_attention_terms(const FlopsScenario& sc);
double flops_cross_attention(const FlopsScenario& sc);

struct FlopsReport {
  FlopsScenario scenario;
  std::string preset;  // empty for ad-hoc scenarios
  double flops_full = 0.0;
  double flops_cross = 0.0;
  double S = 0.0;
  std::array<double, 4> terms{};
  std::optional<double> reported_S;  // published figure for a named preset
};

/// Throws ContractError when flops_full is zero.
FlopsReport ratio(const FlopsScenario& sc);

/// "pretrain" (s_img 256) or "continual" (s_img 1024); both s_txt 64,
/// h 5120, d 1792, r_xc 0.2, r_xf 0.5, B 1.
FlopsScenario preset(std::string_view name);
std::optional<double> reported_ratio(std::string_view preset_name);
FlopsReport preset_report(std::string_view name);

/// Aligned human-readable table.
std::string format_table(const FlopsReport& report);
/// key=value lines: scenario echo, flops_full, flops_cross, S, term1..term4 and,
/// for presets, reported_S and S_abs_diff.
std::string format_record(const FlopsReport& report);

}  // namespace evlm
