// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <string>

#include "doctest.h"
#include "evlm/config.hpp"
#include "evlm/errors.hpp"

using namespace evlm;

TEST_CASE("empty config yields the defaults") {
  const RunConfig c = parse_run_config("");
  CHECK(to_ini(c) == to_ini(default_run_config()));
  CHECK(c.train.steps == 200);
  CHECK_FALSE(c.model.moe.has_value());
  CHECK_FALSE(c.train.stage.has_value());
}

TEST_CASE("to_ini round-trips") {
  RunConfig c = default_run_config();
  c.seed = 12345678901234ULL;
  c.model.moe = MoEConfig{2, 2, 3, false, 0.125};
  c.model.mask_mode = MaskMode::video;
  c.train.stage = TrainStage::sft;
  c.train.lr = 0.037;
  c.flops.r_xc = 0.3;
  const RunConfig back = parse_run_config(to_ini(c));
  CHECK(to_ini(back) == to_ini(c));
  CHECK(back.model.moe->aux_loss_weight == 0.125);
  CHECK(back.train.lr == 0.037);
}

TEST_CASE("sections set fields") {
  const RunConfig c = parse_run_config(
      "[run]\nseed=9\n[model]\nh_llm=8\nheads=2\n[moe]\nenabled=true\nn_replicas=2\nsegments=2\ntop_k=1\n"
      "[train]\nstage=pretrain_phase1\nsteps=5\n");
  CHECK(c.seed == 9);
  CHECK(c.model.h_llm == 8);
  REQUIRE(c.model.moe.has_value());
  CHECK(c.model.moe->n_replicas == 2);
  CHECK(c.model.moe->top_k == 1);
  CHECK(c.train.stage == TrainStage::pretrain_phase1);
  CHECK(c.train.steps == 5);

  const RunConfig off = parse_run_config("[moe]\nn_replicas=2\nenabled=false\n");
  CHECK_FALSE(off.model.moe.has_value());
}

TEST_CASE("bad configs are rejected") {
  CHECK_THROWS_AS(parse_run_config("[model]\nwidth=8\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[nonsense]\nx=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("seed=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[run]\nseed=-1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[model]\nh_llm=eight\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[model]\nr_xc=1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[model]\nllm_layers=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[moe]\nenabled=true\nsegments=3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nstage=warmup\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[model]\nmask_mode=audio\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/evlm.ini"), ConfigError);
}

TEST_CASE("EVLM_SEED overrides the root seed") {
  RunConfig c = parse_run_config("[run]\nseed=4\n");
  ::setenv("EVLM_SEED", "77", 1);
  apply_seed_override(c);
  CHECK(c.seed == 77);
  ::setenv("EVLM_SEED", "x", 1);
  CHECK_THROWS_AS(apply_seed_override(c), ConfigError);
  ::unsetenv("EVLM_SEED");
  apply_seed_override(c);
  CHECK(c.seed == 77);
}
