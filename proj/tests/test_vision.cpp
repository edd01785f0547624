// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include <set>
#include <vector>

#include "doctest.h"
#include "evlm/errors.hpp"
#include "evlm/vision.hpp"

using namespace evlm;
using Indices = std::vector<std::size_t>;

TEST_CASE("tap_schedule examples") {
  CHECK(tap_schedule(1, 1, 1) == Indices{0});
  CHECK(tap_schedule(12, 8, 4) == Indices{5, 7, 9, 11});
  CHECK(tap_schedule(40, 40, 8) == Indices{4, 9, 14, 19, 24, 29, 34, 39});
  CHECK(tap_schedule(64, 40, 8) == Indices{28, 33, 38, 43, 48, 53, 58, 63});
  CHECK(tap_schedule(10, 6, 6) == Indices{4, 5, 6, 7, 8, 9});
}

TEST_CASE("tap_schedule rejects invalid windows") {
  CHECK_THROWS_AS(tap_schedule(8, 4, 5), ConfigError);
  CHECK_THROWS_AS(tap_schedule(4, 5, 2), ConfigError);
  CHECK_THROWS_AS(tap_schedule(4, 4, 0), ConfigError);
}

TEST_CASE("tap_schedule is strictly increasing, inside the window and ends at the last layer") {
  for (std::size_t L = 1; L <= 24; ++L) {
    for (std::size_t W = 1; W <= L; ++W) {
      for (std::size_t F = 1; F <= W; ++F) {
        const auto taps = tap_schedule(L, W, F);
        REQUIRE(taps.size() == F);
        REQUIRE(taps.back() == L - 1);
        REQUIRE(taps.front() >= L - W);
        for (std::size_t j = 1; j < F; ++j) REQUIRE(taps[j] > taps[j - 1]);
      }
    }
  }
}

TEST_CASE("assign_taps_to_xattn examples") {
  CHECK(assign_taps_to_xattn(1, 4) == Indices{0, 0, 0, 0});
  CHECK(assign_taps_to_xattn(4, 6) == Indices{0, 0, 1, 2, 2, 3});
  const auto blocks = assign_taps_to_xattn(8, 40);
  for (std::size_t t = 0; t < 40; ++t) CHECK(blocks[t] == t / 5);
  CHECK_THROWS_AS(assign_taps_to_xattn(4, 3), ConfigError);
}

TEST_CASE("assign_taps_to_xattn is monotone and surjective") {
  for (std::size_t F = 1; F <= 10; ++F) {
    for (std::size_t n = F; n <= 30; ++n) {
      const auto a = assign_taps_to_xattn(F, n);
      REQUIRE(a.size() == n);
      REQUIRE(a.front() == 0);
      for (std::size_t t = 1; t < n; ++t) REQUIRE(a[t] >= a[t - 1]);
      REQUIRE(std::set<std::size_t>(a.begin(), a.end()).size() == F);
    }
  }
}

TEST_CASE("ViT blocks map onto disjoint depth groups") {
  std::vector<ParamGroup> groups;
  for (std::size_t b = 0; b < 12; ++b) groups.push_back(vit_group_for_block(b, 12));
  for (std::size_t b = 0; b < 6; ++b) CHECK(groups[b] == ParamGroup::vit_front);
  for (std::size_t b = 6; b < 9; ++b) CHECK(groups[b] == ParamGroup::vit_back_half);
  for (std::size_t b = 9; b < 12; ++b) CHECK(groups[b] == ParamGroup::vit_last_quarter);

  // Odd depth: ceil(5/4) = 2 deepest blocks, ceil(5/2) = 3 in the back half.
  CHECK(vit_group_for_block(4, 5) == ParamGroup::vit_last_quarter);
  CHECK(vit_group_for_block(3, 5) == ParamGroup::vit_last_quarter);
  CHECK(vit_group_for_block(2, 5) == ParamGroup::vit_back_half);
  CHECK(vit_group_for_block(1, 5) == ParamGroup::vit_front);
  CHECK(vit_group_for_block(0, 1) == ParamGroup::vit_last_quarter);
}

TEST_CASE("encode taps the scheduled layers") {
  ParameterStore store;
  const EncoderConfig cfg;
  const auto enc = VisionEncoder::create(store, cfg, 3);
  const Tensor patches = normal_tensor({cfg.patch_count, cfg.d_img}, 1.0, 3, "patches");
  const auto feats = enc.encode(store, patches);
  CHECK(feats.source_layers == Indices{5, 7, 9, 11});
  REQUIRE(feats.taps.size() == 4);
  for (const auto& t : feats.taps) CHECK(t.shape() == Shape{cfg.patch_count, cfg.d_img});
  for (std::size_t i = 1; i < feats.taps.size(); ++i) CHECK(max_abs_diff(feats.taps[i], feats.taps[i - 1]) > 1e-6);

  const auto again = enc.encode(store, patches);
  for (std::size_t i = 0; i < feats.taps.size(); ++i) CHECK(again.taps[i] == feats.taps[i]);
}

TEST_CASE("encode degenerate single-layer case") {
  ParameterStore store;
  const EncoderConfig cfg{.num_layers = 1, .patch_count = 3, .d_img = 4, .tap_window = 1, .num_taps = 1,
                          .heads = 1, .mlp_hidden = 8};
  const auto enc = VisionEncoder::create(store, cfg, 0);
  const auto feats = enc.encode(store, normal_tensor({3, 4}, 1.0, 0, "p"));
  CHECK(feats.source_layers == Indices{0});
  CHECK(feats.taps.size() == 1);
}

TEST_CASE("zero-weight encoder passes the input through every tap") {
  ParameterStore store;
  const EncoderConfig cfg;
  const auto enc = VisionEncoder::create(store, cfg, 9);
  for (auto& p : store) p.value = Tensor(p.value.shape(), 0.0);
  const Tensor patches = normal_tensor({cfg.patch_count, cfg.d_img}, 1.0, 9, "patches");
  for (const auto& t : enc.encode(store, patches).taps) CHECK(t == patches);
}

TEST_CASE("encode rejects mismatched patch tensors") {
  ParameterStore store;
  const EncoderConfig cfg;
  const auto enc = VisionEncoder::create(store, cfg, 1);
  CHECK_THROWS_AS(enc.encode(store, Tensor({cfg.patch_count + 1, cfg.d_img})), DimensionError);
  CHECK_THROWS_AS(enc.encode(store, Tensor({cfg.patch_count, cfg.d_img - 1})), DimensionError);
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.num_taps = 9;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EncoderConfig{};
  cfg.tap_window = 13;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
