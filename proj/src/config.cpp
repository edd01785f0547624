// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "evlm/errors.hpp"

namespace evlm {

namespace {

namespace pt = boost::property_tree;

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v.front() == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + v + "' is not a non-negative integer");
  }
  if (pos != v.size()) throw ConfigError("config key " + key + ": '" + v + "' is not a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + v + "' is not a number");
  }
  if (pos != v.size()) throw ConfigError("config key " + key + ": '" + v + "' is not a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + ": '" + v + "' is not a boolean");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

std::map<std::string, Setter> setters() {
  std::map<std::string, Setter> s;
  auto uint_into = [](auto getter) {
    return [getter](RunConfig& c, const std::string& k, const std::string& v) {
      getter(c) = static_cast<std::remove_reference_t<decltype(getter(c))>>(parse_uint(k, v));
    };
  };
  auto double_into = [](auto getter) {
    return [getter](RunConfig& c, const std::string& k, const std::string& v) { getter(c) = parse_double(k, v); };
  };
  auto moe = [](RunConfig& c) -> MoEConfig& {
    if (!c.model.moe) c.model.moe = MoEConfig{};
    return *c.model.moe;
  };

  s["run.seed"] = uint_into([](RunConfig& c) -> std::uint64_t& { return c.seed; });

  s["model.llm_layers"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.llm_layers; });
  s["model.h_llm"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.h_llm; });
  s["model.heads"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.heads; });
  s["model.vocab"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.vocab; });
  s["model.mlp_hidden"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.mlp_hidden; });
  s["model.media_len"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.media_len; });
  s["model.pad_len"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.pad_len; });
  s["model.r_xc"] = double_into([](RunConfig& c) -> double& { return c.model.r_xc; });
  s["model.r_xf"] = double_into([](RunConfig& c) -> double& { return c.model.r_xf; });
  s["model.mask_mode"] = [](RunConfig& c, const std::string&, const std::string& v) {
    c.model.mask_mode = mask_mode_from_string(v);
  };

  s["encoder.num_layers"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.encoder.num_layers; });
  s["encoder.patch_count"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.encoder.patch_count; });
  s["encoder.d_img"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.encoder.d_img; });
  s["encoder.tap_window"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.encoder.tap_window; });
  s["encoder.num_taps"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.encoder.num_taps; });
  s["encoder.heads"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.encoder.heads; });
  s["encoder.mlp_hidden"] = uint_into([](RunConfig& c) -> std::size_t& { return c.model.encoder.mlp_hidden; });

  // [moe] enabled=false clears the block after all keys are read.
  s["moe.enabled"] = [](RunConfig&, const std::string&, const std::string&) {};
  s["moe.n_replicas"] = uint_into([moe](RunConfig& c) -> std::size_t& { return moe(c).n_replicas; });
  s["moe.segments"] = uint_into([moe](RunConfig& c) -> std::size_t& { return moe(c).segments; });
  s["moe.top_k"] = uint_into([moe](RunConfig& c) -> std::size_t& { return moe(c).top_k; });
  s["moe.use_world_expert"] = [moe](RunConfig& c, const std::string& k, const std::string& v) {
    moe(c).use_world_expert = parse_bool(k, v);
  };
  s["moe.aux_loss_weight"] = double_into([moe](RunConfig& c) -> double& { return moe(c).aux_loss_weight; });

  s["train.steps"] = uint_into([](RunConfig& c) -> std::size_t& { return c.train.steps; });
  s["train.lr"] = double_into([](RunConfig& c) -> double& { return c.train.lr; });
  s["train.stage"] = [](RunConfig& c, const std::string&, const std::string& v) {
    if (v == "all") {
      c.train.stage.reset();
    } else {
      c.train.stage = train_stage_from_string(v);
    }
  };
  s["train.classes"] = uint_into([](RunConfig& c) -> std::size_t& { return c.train.task.classes; });
  s["train.samples_per_class"] =
      uint_into([](RunConfig& c) -> std::size_t& { return c.train.task.samples_per_class; });
  s["train.noise"] = double_into([](RunConfig& c) -> double& { return c.train.task.noise; });
  s["train.probe_trials"] = uint_into([](RunConfig& c) -> std::size_t& { return c.probe_trials; });

  s["flops.B"] = uint_into([](RunConfig& c) -> std::uint64_t& { return c.flops.B; });
  s["flops.s_img"] = uint_into([](RunConfig& c) -> std::uint64_t& { return c.flops.s_img; });
  s["flops.s_txt"] = uint_into([](RunConfig& c) -> std::uint64_t& { return c.flops.s_txt; });
  s["flops.h_llm"] = uint_into([](RunConfig& c) -> std::uint64_t& { return c.flops.h_llm; });
  s["flops.d_img"] = uint_into([](RunConfig& c) -> std::uint64_t& { return c.flops.d_img; });
  s["flops.r_xc"] = double_into([](RunConfig& c) -> double& { return c.flops.r_xc; });
  s["flops.r_xf"] = double_into([](RunConfig& c) -> double& { return c.flops.r_xf; });
  s["flops.media_len"] = uint_into([](RunConfig& c) -> std::uint64_t& { return c.flops.media_len; });
  return s;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.task.validate(model);
  if (!(train.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (probe_trials == 0) throw ConfigError("train.probe_trials must be positive");
  flops.validate();
}

RunConfig default_run_config() {
  RunConfig c;
  c.model.media_len = 4;
  c.train.lr = 0.1;
  c.train.steps = 200;
  c.flops = preset("pretrain");
  return c;
}

RunConfig parse_run_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg = default_run_config();
  const auto table = setters();
  bool moe_enabled = false;
  bool moe_seen = false;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      auto it = table.find(full);
      if (it == table.end()) throw ConfigError("config: unknown key '" + full + "'");
      const std::string v = value.get_value<std::string>();
      it->second(cfg, full, v);
      if (full == "moe.enabled") {
        moe_seen = true;
        moe_enabled = parse_bool(full, v);
      }
    }
  }
  if (moe_seen && !moe_enabled) {
    cfg.model.moe.reset();
  } else if (moe_seen && !cfg.model.moe) {
    cfg.model.moe = MoEConfig{};
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_run_config(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_run_config(in);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_run_config(in);
}

std::string to_ini(const RunConfig& c) {
  const auto& m = c.model;
  const auto& e = m.encoder;
  std::string out;
  out += fmt::format("[run]\nseed={}\n", c.seed);
  out += fmt::format(
      "[model]\nllm_layers={}\nh_llm={}\nheads={}\nvocab={}\nmlp_hidden={}\nmedia_len={}\npad_len={}\nr_xc={}\n"
      "r_xf={}\nmask_mode={}\n",
      m.llm_layers, m.h_llm, m.heads, m.vocab, m.mlp_hidden, m.media_len, m.pad_len, m.r_xc, m.r_xf,
      to_string(m.mask_mode));
  out += fmt::format("[encoder]\nnum_layers={}\npatch_count={}\nd_img={}\ntap_window={}\nnum_taps={}\nheads={}\n"
                     "mlp_hidden={}\n",
                     e.num_layers, e.patch_count, e.d_img, e.tap_window, e.num_taps, e.heads, e.mlp_hidden);
  if (m.moe) {
    out += fmt::format("[moe]\nenabled=true\nn_replicas={}\nsegments={}\ntop_k={}\nuse_world_expert={}\n"
                       "aux_loss_weight={}\n",
                       m.moe->n_replicas, m.moe->segments, m.moe->top_k, m.moe->use_world_expert,
                       m.moe->aux_loss_weight);
  } else {
    out += "[moe]\nenabled=false\n";
  }
  out += fmt::format("[train]\nsteps={}\nlr={}\nstage={}\nclasses={}\nsamples_per_class={}\nnoise={}\nprobe_trials={}\n",
                     c.train.steps, c.train.lr, c.train.stage ? to_string(*c.train.stage) : "all",
                     c.train.task.classes, c.train.task.samples_per_class, c.train.task.noise, c.probe_trials);
  out += fmt::format("[flops]\nB={}\ns_img={}\ns_txt={}\nh_llm={}\nd_img={}\nr_xc={}\nr_xf={}\nmedia_len={}\n",
                     c.flops.B, c.flops.s_img, c.flops.s_txt, c.flops.h_llm, c.flops.d_img, c.flops.r_xc,
                     c.flops.r_xf, c.flops.media_len);
  return out;
}

void apply_seed_override(RunConfig& cfg) {
  if (const char* env = std::getenv("EVLM_SEED"); env != nullptr && *env != '\0') {
    cfg.seed = parse_uint("EVLM_SEED", env);
  }
}

}  // namespace evlm
