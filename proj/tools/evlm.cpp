// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: cost reports, mask dumps, smoke training, the
// loss-argmin probe and the upcycling check.
//
// Exit codes: 0 success, 2 usage/config, 3 criterion unmet, 4 numeric
// failure, 5 invariant violation.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "evlm/config.hpp"
#include "evlm/errors.hpp"
#include "evlm/flops.hpp"
#include "evlm/fusion.hpp"
#include "evlm/model.hpp"
#include "evlm/moe.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitCriterion = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitInvariant = 5;

// Runs `body`, mapping library errors onto the exit-code contract.
int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const evlm::NumericError& e) {
    fmt::print(stderr, "numeric failure: {}\n", e.what());
    return kExitNumeric;
  } catch (const evlm::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitUsage;
  }
}

evlm::FlopsScenario parse_scenario(const std::vector<std::string>& fields) {
  std::map<std::string, std::string> kv;
  for (const auto& f : fields) {
    const auto eq = f.find('=');
    if (eq == std::string::npos) throw evlm::ConfigError("scenario field '" + f + "' is not key=value");
    kv[f.substr(0, eq)] = f.substr(eq + 1);
  }
  std::string ini = "[flops]\n";
  for (const char* required : {"B", "s_img", "s_txt", "h_llm", "d_img", "r_xc", "r_xf"}) {
    if (!kv.contains(required)) throw evlm::ConfigError(std::string("scenario is missing ") + required);
  }
  for (const auto& [k, v] : kv) ini += k + "=" + v + "\n";
  return evlm::parse_run_config(ini).flops;
}

struct CostArgs {
  std::string preset;
  std::vector<std::string> scenario;
  std::string format = "table";
};

int run_cost(const CostArgs& a) {
  if (a.preset.empty() == a.scenario.empty()) throw evlm::ConfigError("give exactly one of --preset or --scenario");
  const evlm::FlopsReport report = a.preset.empty() ? evlm::ratio(parse_scenario(a.scenario))
                                                    : evlm::preset_report(a.preset);
  fmt::print("{}", a.format == "record" ? evlm::format_record(report) : evlm::format_table(report));
  return kExitOk;
}

struct MaskArgs {
  std::string mode = "image";
  std::string seq;
  std::size_t s_img = 4;
  std::size_t pad = 1;
  std::size_t media_len = evlm::kDefaultMediaLen;
};

int run_mask(const MaskArgs& a) {
  const auto mode = evlm::mask_mode_from_string(a.mode);
  const auto seq = evlm::parse_seq_spec(a.seq, a.media_len);
  fmt::print("{}", evlm::dump_mask(evlm::build_cross_mask(seq, a.s_img, a.pad, mode), mode));
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::string checkpoint = "smoke.ckpt";
};

evlm::RunConfig resolve_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  evlm::RunConfig cfg = path.empty() ? evlm::default_run_config() : evlm::load_run_config(path);
  evlm::apply_seed_override(cfg);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

int run_train(const TrainArgs& a) {
  evlm::RunConfig cfg = resolve_config(a.config, a.seed);
  if (a.steps) cfg.train.steps = *a.steps;
  evlm::Model model = evlm::Model::create(cfg.model, cfg.seed);
  const auto curve = evlm::train_smoke(model, cfg.train, cfg.seed);
  for (std::size_t i = 0; i < curve.size(); ++i) fmt::print("step={} loss={}\n", i, curve[i]);
  const double initial = curve.front();
  const double final_loss = curve.back();
  const bool met = curve.size() > 1 && final_loss < 0.5 * initial;
  fmt::print("initial_loss={}\nfinal_loss={}\ncriterion={}\n", initial, final_loss, met ? "met" : "unmet");

  std::ofstream out(a.checkpoint);
  if (!out) throw evlm::ConfigError("cannot write checkpoint '" + a.checkpoint + "'");
  evlm::write_checkpoint(out, model, evlm::to_ini(cfg));
  fmt::print("checkpoint={}\n", a.checkpoint);
  return met ? kExitOk : kExitCriterion;
}

struct ProbeArgs {
  std::string checkpoint;
  std::size_t image = 0;
  std::vector<std::size_t> candidates;
  std::size_t sample = 0;
};

int run_probe(const ProbeArgs& a) {
  std::ifstream in(a.checkpoint);
  if (!in) throw evlm::ConfigError("cannot open checkpoint '" + a.checkpoint + "'");
  const evlm::Checkpoint ckpt = evlm::read_checkpoint(in);
  const evlm::RunConfig cfg = evlm::parse_run_config(ckpt.config_text);
  evlm::Model model = evlm::Model::create(cfg.model, cfg.seed);
  evlm::load_checkpoint(model, ckpt);

  if (a.candidates.empty()) throw evlm::ContractError("no candidates given");
  const auto& task = cfg.train.task;
  if (a.image >= task.classes) throw evlm::ConfigError("image class id outside the task's classes");
  std::vector<std::vector<int>> texts;
  for (auto c : a.candidates) {
    if (c >= task.classes) throw evlm::ConfigError("candidate class id outside the task's classes");
    texts.push_back(evlm::caption_tokens(c));
  }
  const auto img = evlm::class_image(cfg.model.encoder, a.image, task.noise, cfg.seed, "heldout", a.sample);
  std::vector<double> losses;
  const std::size_t best = evlm::loss_probe(model, img, texts, &losses);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    fmt::print("candidate={} class={} loss={}\n", i, a.candidates[i], losses[i]);
  }
  fmt::print("argmin={}\nargmin_class={}\n", best, a.candidates[best]);
  return kExitOk;
}

int run_upcycle_check(const std::string& config_path) {
  evlm::RunConfig cfg = resolve_config(config_path, std::nullopt);
  const evlm::MoEConfig moe = cfg.model.moe.value_or(evlm::MoEConfig{});
  const std::size_t width = cfg.model.h_llm;
  const std::size_t hidden = cfg.model.xattn().ffn_width();

  evlm::ParameterStore store;
  const auto dense = evlm::add_dense_ffn(store, "dense", width, hidden, evlm::ParamGroup::xattn, cfg.seed);
  evlm::ParameterStore experts;
  const auto bank = evlm::upcycle(store, dense, moe, experts, "moe");

  double slice_dev = 0.0;
  double world_dev = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    const evlm::Tensor x = evlm::normal_tensor({1, width}, 1.0, cfg.seed, "upcycle.input" + std::to_string(i));
    const evlm::Tensor ref = evlm::ffn_forward(store, dense, x);
    for (std::size_t r = 0; r < moe.n_replicas; ++r) {
      evlm::Tensor acc({1, width});
      for (std::size_t m = 0; m < moe.segments; ++m) {
        const evlm::Tensor part = evlm::ffn_forward(experts, bank.experts[r * moe.segments + m], x);
        for (std::size_t j = 0; j < width; ++j) acc[j] += part[j];
      }
      slice_dev = std::max(slice_dev, evlm::max_abs_diff(acc, ref));
    }
    if (bank.world) world_dev = std::max(world_dev, evlm::max_abs_diff(evlm::ffn_forward(experts, *bank.world, x), ref));
  }
  const double worst = std::max(slice_dev, world_dev);
  fmt::print("n_replicas={}\nsegments={}\ntop_k={}\nexperts={}\nexpert_hidden={}\n", moe.n_replicas, moe.segments,
             moe.top_k, bank.experts.size(), hidden / moe.segments);
  fmt::print("slice_sum_max_dev={}\nworld_max_dev={}\nmax_deviation={}\n", slice_dev, world_dev, worst);
  return worst < 1e-12 ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy gated cross-attention vision-language model tools"};
  app.require_subcommand(1);

  CostArgs cost;
  auto* cost_cmd = app.add_subcommand("cost", "Cross- vs full-attention FLOPs report");
  cost_cmd->add_option("--preset", cost.preset, "pretrain | continual");
  cost_cmd->add_option("--scenario", cost.scenario, "key=value fields: B s_img s_txt h_llm d_img r_xc r_xf [media_len]");
  cost_cmd->add_option("--format", cost.format)->check(CLI::IsMember({"table", "record"}));

  MaskArgs mask;
  auto* mask_cmd = app.add_subcommand("mask", "Dump a cross-attention mask");
  mask_cmd->add_option("--mode", mask.mode)->check(CLI::IsMember({"image", "video"}));
  mask_cmd->add_option("--seq", mask.seq, "space-separated I/T tokens")->required();
  mask_cmd->add_option("--s-img", mask.s_img);
  mask_cmd->add_option("--pad", mask.pad);
  mask_cmd->add_option("--media-len", mask.media_len);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train-smoke", "Train on the synthetic captioning task");
  train_cmd->add_option("--config", train.config);
  train_cmd->add_option("--steps", train.steps);
  train_cmd->add_option("--seed", train.seed);
  train_cmd->add_option("--checkpoint", train.checkpoint);

  ProbeArgs probe;
  std::string candidates;
  auto* probe_cmd = app.add_subcommand("probe", "Loss-argmin classification of one synthetic image");
  probe_cmd->add_option("--checkpoint", probe.checkpoint)->required();
  probe_cmd->add_option("--image", probe.image, "synthetic class id");
  probe_cmd->add_option("--candidates", candidates, "comma-separated class ids")->required();
  probe_cmd->add_option("--sample", probe.sample, "noise draw index");

  std::string upcycle_config;
  auto* upcycle_cmd = app.add_subcommand("upcycle-check", "Verify the dense-to-MoE upcycling identities");
  upcycle_cmd->add_option("--config", upcycle_config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (cost_cmd->parsed()) return guarded([&] { return run_cost(cost); });
  if (mask_cmd->parsed()) return guarded([&] { return run_mask(mask); });
  if (train_cmd->parsed()) return guarded([&] { return run_train(train); });
  if (probe_cmd->parsed()) {
    return guarded([&] {
      std::istringstream in(candidates);
      for (std::string tok; std::getline(in, tok, ',');) {
        if (tok.empty()) continue;
        if (tok.find_first_not_of("0123456789") != std::string::npos) {
          throw evlm::ConfigError("candidate '" + tok + "' is not a class id");
        }
        probe.candidates.push_back(std::stoul(tok));
      }
      return run_probe(probe);
    });
  }
  if (upcycle_cmd->parsed()) return guarded([&] { return run_upcycle_check(upcycle_config); });
  return kExitUsage;
}
