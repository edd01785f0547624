// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#include "evlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "evlm/errors.hpp"

namespace evlm {

void ModelConfig::validate() const {
  if (llm_layers == 0 || h_llm == 0 || heads == 0 || vocab == 0 || mlp_hidden == 0) {
    throw ConfigError("model extents must be positive");
  }
  if (h_llm % heads != 0) throw ConfigError("h_llm must be divisible by heads");
  if (media_len == 0) throw ConfigError("media_len must be positive");
  if (pad_len == 0) throw ConfigError("pad_len must be positive");
  encoder.validate();
  if (llm_layers < encoder.num_taps) throw ConfigError("llm_layers must be at least the encoder tap count");
  xattn().validate();
  if (moe) moe->validate(xattn().ffn_width());
}

namespace {

Tensor sinusoidal_positions(std::size_t len, std::size_t width) {
  Tensor pe({len, width});
  for (std::size_t p = 0; p < len; ++p) {
    for (std::size_t i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(width));
      pe(p, i) = i % 2 == 0 ? std::sin(static_cast<double>(p) * freq) : std::cos(static_cast<double>(p) * freq);
    }
  }
  return pe;
}

}  // namespace

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelConfig dense_cfg = cfg;
  dense_cfg.moe.reset();

  Model m;
  m.cfg_ = dense_cfg;
  m.seed_ = seed;
  m.encoder_ = VisionEncoder::create(m.store_, cfg.encoder, seed, "vit");
  m.token_embedding_ =
      m.store_.add("llm.tok_emb", ParamGroup::llm, normal_tensor({cfg.vocab, cfg.h_llm}, 1.0, seed, "llm.tok_emb"));
  m.media_embedding_ = m.store_.add("media_tokens", ParamGroup::media_tokens,
                                    normal_tensor({cfg.media_len, cfg.h_llm}, 1.0, seed, "media_tokens"));
  m.tap_for_layer_ = assign_taps_to_xattn(cfg.encoder.num_taps, cfg.llm_layers);
  for (std::size_t t = 0; t < cfg.llm_layers; ++t) {
    m.xattn_.push_back(GatedXAttn::create(m.store_, "xattn" + std::to_string(t), cfg.xattn(), seed));
    m.decoder_.push_back(add_transformer_block(m.store_, "llm.layer" + std::to_string(t), cfg.h_llm, cfg.heads,
                                               cfg.mlp_hidden, ParamGroup::llm, seed));
  }
  m.final_ln_ = add_layer_norm(m.store_, "llm.final_ln", cfg.h_llm, ParamGroup::llm);
  m.head_ = add_linear(m.store_, "llm.head", cfg.h_llm, cfg.vocab, ParamGroup::llm, seed);
  if (cfg.moe) return upcycle_model(m, *cfg.moe);
  return m;
}

Model upcycle_model(const Model& dense, const MoEConfig& moe) {
  for (const auto& x : dense.xattn_) {
    if (!x.dense_ffn()) throw ConfigError("model is already a mixture of experts");
  }
  moe.validate(dense.cfg_.xattn().ffn_width());
  const ParameterStore& src = dense.store_;
  Model m;
  m.cfg_ = dense.cfg_;
  m.cfg_.moe = moe;
  m.seed_ = dense.seed_;
  m.encoder_ = dense.encoder_.copied(src, m.store_);
  m.token_embedding_ = copy_param(src, m.store_, dense.token_embedding_);
  m.media_embedding_ = copy_param(src, m.store_, dense.media_embedding_);
  m.tap_for_layer_ = dense.tap_for_layer_;
  for (std::size_t t = 0; t < dense.xattn_.size(); ++t) {
    m.xattn_.push_back(dense.xattn_[t].upcycled(src, m.store_, moe));
    m.decoder_.push_back(copy_block(src, m.store_, dense.decoder_[t]));
  }
  m.final_ln_ = copy_layer_norm(src, m.store_, dense.final_ln_);
  m.head_ = copy_param(src, m.store_, dense.head_);
  for (auto& p : m.store_) p.trainable = true;
  return m;
}

Var Model::forward(Graph& g, const InterleavedSequence& seq, std::span<const Tensor> patches,
                   const ForwardOptions& opts) const {
  if (seq.size() == 0) throw SequenceError("empty sequence");
  if (seq.media_len() != cfg_.media_len) throw SequenceError("sequence media_len differs from the model's");
  if (!opts.skip_cross_attention && patches.size() != seq.num_images()) {
    throw DimensionError("forward: " + std::to_string(seq.num_images()) + " images in the sequence but " +
                         std::to_string(patches.size()) + " patch tensors");
  }

  // Embed text and media rows separately, then gather them into stream order.
  std::vector<std::size_t> text_ids, media_slots, order(seq.size());
  for (std::size_t p = 0; p < seq.size(); ++p) {
    const Element& e = seq[p];
    if (e.is_text()) {
      if (e.token_id < 0 || static_cast<std::size_t>(e.token_id) >= cfg_.vocab) {
        throw SequenceError("token id " + std::to_string(e.token_id) + " outside the vocabulary");
      }
      order[p] = text_ids.size();
      text_ids.push_back(static_cast<std::size_t>(e.token_id));
    } else {
      order[p] = media_slots.size();
      media_slots.push_back(e.slot);
    }
  }
  std::vector<Var> parts;
  if (!text_ids.empty()) parts.push_back(embedding(g.param(token_embedding_), text_ids));
  if (!media_slots.empty()) parts.push_back(embedding(g.param(media_embedding_), media_slots));
  for (std::size_t p = 0; p < seq.size(); ++p) {
    if (!seq[p].is_text() && !text_ids.empty()) order[p] += text_ids.size();
  }
  Var x = embedding(concat_rows(parts), order);
  x = add(x, g.constant(sinusoidal_positions(seq.size(), cfg_.h_llm)));

  const BoolMatrix self_mask = build_self_mask(seq);
  std::optional<CrossMask> cross;
  std::vector<std::vector<Var>> taps;  // [image][tap]
  if (!opts.skip_cross_attention) {
    cross = build_cross_mask(seq, cfg_.encoder.patch_count, cfg_.pad_len, cfg_.mask_mode);
    for (const auto& img : patches) taps.push_back(encoder_.encode(g, g.constant(img)));
  }
  MoEForwardOptions moe_opts;
  moe_opts.stats = opts.stats;
  moe_opts.aux_terms = opts.aux_terms;
  for (std::size_t t = 0; t < decoder_.size(); ++t) {
    if (!opts.skip_cross_attention) {
      std::vector<Var> feats;
      for (const auto& per_image : taps) feats.push_back(per_image[tap_for_layer_[t]]);
      Var keys = pad_features(g, feats, cfg_.pad_len, cfg_.encoder.d_img);
      x = xattn_[t].forward(g, x, keys, *cross, moe_opts);
    }
    x = block_forward(g, decoder_[t], x, self_mask);
  }
  return matmul(apply_layer_norm(g, final_ln_, x), g.param(head_));
}

Tensor Model::logits(const InterleavedSequence& seq, std::span<const Tensor> patches) const {
  Graph g(store_);
  return forward(g, seq, patches).value();
}

Tensor Model::text_only_logits(const InterleavedSequence& seq) const {
  Graph g(store_);
  ForwardOptions opts;
  opts.skip_cross_attention = true;
  return forward(g, seq, {}, opts).value();
}

std::vector<int> next_token_targets(const InterleavedSequence& seq) {
  std::vector<int> out(seq.size(), 0);
  for (std::size_t p = 0; p + 1 < seq.size(); ++p) {
    if (seq[p + 1].is_text()) out[p] = seq[p + 1].token_id;
  }
  return out;
}

std::vector<bool> text_loss_mask(const InterleavedSequence& seq) {
  std::vector<bool> out(seq.size(), false);
  for (std::size_t p = 0; p + 1 < seq.size(); ++p) out[p] = seq[p + 1].is_text();
  return out;
}

Var text_loss(Var logits, std::span<const int> targets, const InterleavedSequence& seq) {
  const std::vector<bool> mask = text_loss_mask(seq);
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw ContractError("loss: the sequence has no text prediction");
  }
  return cross_entropy(logits, targets, mask);
}

double text_loss(const Tensor& logits, std::span<const int> targets, const InterleavedSequence& seq) {
  Graph g;
  return text_loss(g.constant(logits), targets, seq).value()[0];
}

std::string_view to_string(TrainStage stage) {
  switch (stage) {
    case TrainStage::pretrain_phase1: return "pretrain_phase1";
    case TrainStage::pretrain_phase2: return "pretrain_phase2";
    case TrainStage::continual: return "continual";
    case TrainStage::sft: return "sft";
  }
  return "?";
}

TrainStage train_stage_from_string(std::string_view name) {
  for (auto s : {TrainStage::pretrain_phase1, TrainStage::pretrain_phase2, TrainStage::continual, TrainStage::sft}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown training stage '" + std::string(name) + "'");
}

std::vector<ParamGroup> trainable_groups(TrainStage stage) {
  switch (stage) {
    case TrainStage::pretrain_phase1:
      return {ParamGroup::xattn, ParamGroup::media_tokens};
    case TrainStage::pretrain_phase2:
    case TrainStage::continual:
      // The latter half of the encoder includes its last quarter.
      return {ParamGroup::xattn, ParamGroup::media_tokens, ParamGroup::vit_back_half, ParamGroup::vit_last_quarter};
    case TrainStage::sft:
      return {ParamGroup::xattn, ParamGroup::media_tokens, ParamGroup::moe, ParamGroup::vit_last_quarter};
  }
  throw ConfigError("unknown training stage");
}

std::vector<GroupTrainability> freeze_stage(ParameterStore& store, TrainStage stage) {
  const auto groups = trainable_groups(stage);
  auto is_trainable = [&](ParamGroup g) { return std::find(groups.begin(), groups.end(), g) != groups.end(); };
  for (auto& p : store) p.trainable = is_trainable(p.group);
  std::vector<GroupTrainability> out;
  for (auto g : kAllParamGroups) out.push_back({g, is_trainable(g), store.scalar_count(g)});
  return out;
}

void unfreeze_all(ParameterStore& store) {
  for (auto& p : store) p.trainable = true;
}

void SmokeTask::validate(const ModelConfig& cfg) const {
  if (classes == 0 || samples_per_class == 0) throw ConfigError("smoke task needs classes and samples");
  if (cfg.vocab < kFirstClassToken + classes) {
    throw ConfigError("vocab " + std::to_string(cfg.vocab) + " cannot hold " + std::to_string(classes) +
                      " class tokens plus the caption template");
  }
  if (!(noise >= 0.0)) throw ConfigError("noise must be >= 0");
}

std::vector<int> caption_tokens(std::size_t class_id) {
  return {0, 1, 2, kFirstClassToken + static_cast<int>(class_id), 3};
}

InterleavedSequence caption_sequence(std::span<const int> caption, std::size_t media_len) {
  std::vector<Piece> pieces{Piece::image(0)};
  for (int id : caption) pieces.push_back(Piece::text(id));
  return insert_media_tokens(pieces, media_len);
}

Tensor class_image(const EncoderConfig& enc, std::size_t class_id, double noise, std::uint64_t root_seed,
                   std::string_view split, std::size_t sample) {
  const Shape shape{enc.patch_count, enc.d_img};
  Tensor img = normal_tensor(shape, 1.0, root_seed, "smoke.class" + std::to_string(class_id));
  if (noise > 0.0) {
    const Tensor n = normal_tensor(
        shape, noise, root_seed,
        fmt::format("smoke.{}.class{}.sample{}", split, class_id, sample));
    for (std::size_t i = 0; i < img.size(); ++i) img[i] += n[i];
  }
  return img;
}

std::vector<Sample> make_smoke_dataset(const ModelConfig& cfg, const SmokeTask& task, std::uint64_t root_seed,
                                       std::string_view split) {
  task.validate(cfg);
  std::vector<Sample> out;
  for (std::size_t s = 0; s < task.samples_per_class; ++s) {
    for (std::size_t c = 0; c < task.classes; ++c) {
      Sample smp;
      const auto caption = caption_tokens(c);
      smp.seq = caption_sequence(caption, cfg.media_len);
      smp.patches.push_back(class_image(cfg.encoder, c, task.noise, root_seed, split, s));
      smp.targets = next_token_targets(smp.seq);
      smp.label = c;
      out.push_back(std::move(smp));
    }
  }
  return out;
}

double batch_loss(Model& model, std::span<const Sample> batch, bool backward) {
  if (batch.empty()) throw ContractError("empty batch");
  if (backward) model.params().zero_grad();
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& s : batch) {
    Graph g(model.params());
    std::vector<Var> aux;
    Model::ForwardOptions opts;
    opts.aux_terms = &aux;
    Var loss = text_loss(model.forward(g, s.seq, s.patches, opts), s.targets, s.seq);
    for (Var a : aux) loss = add(loss, a);
    total += loss.value()[0] * weight;
    if (backward) {
      g.backward(scale(loss, weight));
      g.accumulate_param_grads(model.params());
    }
  }
  return total;
}

std::vector<double> train_smoke(Model& model, const TrainOptions& opts, std::uint64_t root_seed) {
  if (!(opts.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  const auto data = make_smoke_dataset(model.config(), opts.task, root_seed, "train");
  if (opts.stage) {
    freeze_stage(model.params(), *opts.stage);
  } else {
    unfreeze_all(model.params());
  }
  std::vector<double> curve;
  curve.reserve(opts.steps + 1);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    curve.push_back(batch_loss(model, data, true));
    if (!std::isfinite(curve.back())) throw NumericError("loss diverged at step " + std::to_string(step));
    sgd_step(model.params(), opts.lr);
  }
  curve.push_back(batch_loss(model, data, false));
  if (!std::isfinite(curve.back())) throw NumericError("loss diverged");
  return curve;
}

std::size_t loss_probe(const Model& model, const Tensor& patches, std::span<const std::vector<int>> candidates,
                       std::vector<double>* losses) {
  if (candidates.empty()) throw ContractError("loss_probe: no candidates");
  const Tensor images[] = {patches};
  std::size_t best = 0;
  double best_loss = 0.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto seq = caption_sequence(candidates[c], model.config().media_len);
    const double l = text_loss(model.logits(seq, images), next_token_targets(seq), seq);
    if (losses != nullptr) losses->push_back(l);
    if (c == 0 || l < best_loss) {
      best = c;
      best_loss = l;
    }
  }
  return best;
}

double probe_accuracy(const Model& model, const SmokeTask& task, std::size_t trials, std::uint64_t root_seed) {
  task.validate(model.config());
  if (trials == 0) throw ContractError("probe_accuracy: no trials");
  std::vector<std::vector<int>> candidates;
  for (std::size_t c = 0; c < task.classes; ++c) candidates.push_back(caption_tokens(c));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    const std::size_t label = i % task.classes;
    const Tensor img = class_image(model.config().encoder, label, task.noise, root_seed, "heldout", i);
    hits += loss_probe(model, img, candidates) == label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

void write_checkpoint(std::ostream& out, const Model& model, std::string_view config_text) {
  std::size_t config_lines = 0;
  std::istringstream lines{std::string(config_text)};
  std::vector<std::string> cfg;
  for (std::string line; std::getline(lines, line);) cfg.push_back(line);
  config_lines = cfg.size();

  out << "evlm-checkpoint\n";
  out << "version=" << kCheckpointVersion << "\n";
  out << "config_lines=" << config_lines << "\n";
  for (const auto& l : cfg) out << l << "\n";
  out << "tensors=" << model.params().size() << "\n";
  for (const auto& p : model.params()) {
    std::string shape;
    for (std::size_t i = 0; i < p.value.shape().size(); ++i) shape += (i ? "x" : "") + std::to_string(p.value.shape()[i]);
    out << "tensor group=" << to_string(p.group) << " name=" << p.name << " shape=" << shape << "\n";
    std::string values;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (i) values += ' ';
      values += fmt::format("{}", p.value[i]);
    }
    out << values << "\n";
  }
}

namespace {

std::string expect_field(std::istream& in, std::string_view key) {
  std::string line;
  if (!std::getline(in, line) || !line.starts_with(std::string(key) + "=")) {
    throw ConfigError("checkpoint: expected '" + std::string(key) + "=' line");
  }
  return line.substr(key.size() + 1);
}

std::size_t to_size(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos);
  if (pos != s.size()) throw ConfigError("checkpoint: bad integer '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "evlm-checkpoint") throw ConfigError("not an evlm checkpoint");
  Checkpoint ck;
  try {
    ck.version = static_cast<int>(to_size(expect_field(in, "version")));
    if (ck.version != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version " + std::to_string(ck.version));
    }
    const std::size_t cfg_lines = to_size(expect_field(in, "config_lines"));
    for (std::size_t i = 0; i < cfg_lines; ++i) {
      if (!std::getline(in, line)) throw ConfigError("checkpoint: truncated config block");
      ck.config_text += line + "\n";
    }
    const std::size_t count = to_size(expect_field(in, "tensors"));
    for (std::size_t t = 0; t < count; ++t) {
      if (!std::getline(in, line)) throw ConfigError("checkpoint: truncated tensor list");
      std::istringstream header(line);
      std::string tag, group, name, shape;
      header >> tag >> group >> name >> shape;
      if (tag != "tensor" || !group.starts_with("group=") || !name.starts_with("name=") ||
          !shape.starts_with("shape=")) {
        throw ConfigError("checkpoint: malformed tensor header '" + line + "'");
      }
      Shape dims;
      std::istringstream ds(shape.substr(6));
      for (std::string d; std::getline(ds, d, 'x');) dims.push_back(to_size(d));
      if (!std::getline(in, line)) throw ConfigError("checkpoint: missing tensor data");
      std::istringstream vs(line);
      std::vector<double> values;
      for (std::string v; vs >> v;) values.push_back(std::stod(v));
      ck.tensors.emplace(name.substr(5), Checkpoint::Entry{param_group_from_string(group.substr(6)),
                                                           Tensor(std::move(dims), std::move(values))});
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("checkpoint: unparsable number");
  } catch (const std::out_of_range&) {
    throw ConfigError("checkpoint: number out of range");
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

void load_checkpoint(Model& model, const Checkpoint& ckpt) {
  if (ckpt.tensors.size() != model.params().size()) throw ConfigError("checkpoint tensor count differs from model");
  for (auto& p : model.params()) {
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) throw ConfigError("checkpoint lacks tensor " + p.name);
    if (it->second.group != p.group || !it->second.value.same_shape(p.value)) {
      throw ConfigError("checkpoint tensor " + p.name + " has a different group or shape");
    }
    p.value = it->second.value;
  }
}

}  // namespace evlm
