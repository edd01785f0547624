// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <string_view>

#include "evlm/flops.hpp"
#include "evlm/model.hpp"

namespace evlm {

/// Everything a CLI run needs, loaded from an INI-style file:
///
///   [run]      seed
///   [model]    llm_layers h_llm heads vocab mlp_hidden media_len pad_len r_xc r_xf mask_mode
///   [encoder]  num_layers patch_count d_img tap_window num_taps heads mlp_hidden
///   [moe]      enabled n_replicas segments top_k use_world_expert aux_loss_weight
///   [train]    steps lr stage classes samples_per_class noise probe_trials
///   [flops]    B s_img s_txt h_llm d_img r_xc r_xf media_len
///
/// Every key is optional; unknown sections or keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainOptions train;
  std::size_t probe_trials = 40;
  FlopsScenario flops;

  void validate() const;
};

/// Defaults used by the smoke-training command when no file is given.
RunConfig default_run_config();

RunConfig parse_run_config(std::istream& in);
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

/// Serializes every field; parse_run_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& cfg);

/// EVLM_SEED, when set, replaces the root seed.
void apply_seed_override(RunConfig& cfg);

}  // namespace evlm
