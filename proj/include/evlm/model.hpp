// Copyright 2026 The evlm-toy Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evlm/fusion.hpp"
#include "evlm/moe.hpp"
#include "evlm/vision.hpp"

namespace evlm {

struct ModelConfig {
  std::size_t llm_layers = 2;
  std::size_t h_llm = 16;
  std::size_t heads = 2;
  std::size_t vocab = 11;
  std::size_t mlp_hidden = 32;
  std::size_t media_len = kDefaultMediaLen;
  std::size_t pad_len = 1;
  double r_xc = 0.2;
  double r_xf = 0.5;
  std::optional<MoEConfig> moe;
  EncoderConfig encoder{.num_layers = 4, .patch_count = 5, .d_img = 8, .tap_window = 4, .num_taps = 2,
                        .heads = 1, .mlp_hidden = 16};
  MaskMode mask_mode = MaskMode::image;

  [[nodiscard]] XAttnConfig xattn() const { return {h_llm, encoder.d_img, r_xc, r_xf}; }
  void validate() const;
};

/// Toy decoder LM with a gated cross-attention layer in front of every
/// decoder layer. Cross-attention layer t reads encoder tap
/// assign_taps_to_xattn(F, llm_layers)[t] of every image in the sequence.
class Model {
 public:
  static Model create(const ModelConfig& cfg, std::uint64_t seed);

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] ParameterStore& params() { return store_; }
  [[nodiscard]] const ParameterStore& params() const { return store_; }
  [[nodiscard]] const VisionEncoder& encoder() const { return encoder_; }
  [[nodiscard]] const std::vector<GatedXAttn>& xattn_layers() const { return xattn_; }
  [[nodiscard]] const std::vector<std::size_t>& tap_assignment() const { return tap_for_layer_; }

  struct ForwardOptions {
    // Runs the decoder alone on the same interleaved stream.
    bool skip_cross_attention = false;
    RoutingStats* stats = nullptr;
    std::vector<Var>* aux_terms = nullptr;
  };

  /// Logits [len x vocab]. One patch tensor per image in `seq`.
  Var forward(Graph& g, const InterleavedSequence& seq, std::span<const Tensor> patches,
              const ForwardOptions& opts) const;
  Var forward(Graph& g, const InterleavedSequence& seq, std::span<const Tensor> patches) const {
    return forward(g, seq, patches, ForwardOptions{});
  }
  [[nodiscard]] Tensor logits(const InterleavedSequence& seq, std::span<const Tensor> patches) const;
  [[nodiscard]] Tensor text_only_logits(const InterleavedSequence& seq) const;

  friend Model upcycle_model(const Model& dense, const MoEConfig& moe);

 private:
  ModelConfig cfg_;
  std::uint64_t seed_ = 0;
  ParameterStore store_;
  VisionEncoder encoder_;
  ParamId token_embedding_ = 0;
  ParamId media_embedding_ = 0;
  std::vector<GatedXAttn> xattn_;
  std::vector<TransformerBlock> decoder_;
  LayerNormParams final_ln_;
  ParamId head_ = 0;
  std::vector<std::size_t> tap_for_layer_;
};

/// Dense model to MoE model: every cross-attention FFN is upcycled, all other
/// tensors are copied unchanged.
Model upcycle_model(const Model& dense, const MoEConfig& moe);

/// Target for position p is the token at p + 1 when that element is text, else 0.
std::vector<int> next_token_targets(const InterleavedSequence& seq);
/// True exactly where the predicted element (p + 1) is a text token.
std::vector<bool> text_loss_mask(const InterleavedSequence& seq);

/// Cross-entropy over text predictions only. Throws ContractError when the
/// sequence has no text prediction.
Var text_loss(Var logits, std::span<const int> targets, const InterleavedSequence& seq);
double text_loss(const Tensor& logits, std::span<const int> targets, const InterleavedSequence& seq);

enum class TrainStage { pretrain_phase1, pretrain_phase2, continual, sft };

std::string_view to_string(TrainStage stage);
TrainStage train_stage_from_string(std::string_view name);

struct GroupTrainability {
  ParamGroup group;
  bool trainable = false;
  std::size_t scalars = 0;
};

/// Groups trainable in `stage`.
std::vector<ParamGroup> trainable_groups(TrainStage stage);
/// Sets every parameter's trainable flag for `stage`; returns one entry per group.
std::vector<GroupTrainability> freeze_stage(ParameterStore& store, TrainStage stage);
void unfreeze_all(ParameterStore& store);

/// Synthetic captioning task: each class has a fixed patch prototype; samples
/// add Gaussian noise. Captions are "a photo of <class> ." with token ids
/// a=0 photo=1 of=2 .=3 and class c = 4 + c.
struct SmokeTask {
  std::size_t classes = 4;
  std::size_t samples_per_class = 4;
  double noise = 0.3;

  void validate(const ModelConfig& cfg) const;
};

inline constexpr int kFirstClassToken = 4;

std::vector<int> caption_tokens(std::size_t class_id);
/// "[IMG0] a photo of <class> ." as a media-expanded sequence.
InterleavedSequence caption_sequence(std::span<const int> caption, std::size_t media_len);
/// Class prototype plus noise; `sample` selects the noise draw.
Tensor class_image(const EncoderConfig& enc, std::size_t class_id, double noise, std::uint64_t root_seed,
                   std::string_view split, std::size_t sample);

struct Sample {
  InterleavedSequence seq;
  std::vector<Tensor> patches;
  std::vector<int> targets;
  std::size_t label = 0;
};

std::vector<Sample> make_smoke_dataset(const ModelConfig& cfg, const SmokeTask& task, std::uint64_t root_seed,
                                       std::string_view split);

struct TrainOptions {
  std::size_t steps = 200;
  double lr = 0.1;
  // Unset trains every group.
  std::optional<TrainStage> stage;
  SmokeTask task;
};

/// Full-batch SGD on the smoke task. Returns the loss before every step and
/// after the last one (steps + 1 values). Throws NumericError on divergence.
std::vector<double> train_smoke(Model& model, const TrainOptions& opts, std::uint64_t root_seed);

/// Mean text loss of the batch; accumulates gradients into the store when
/// `backward` is set.
double batch_loss(Model& model, std::span<const Sample> batch, bool backward);

/// Index of the candidate caption with the lowest loss given the image; ties
/// go to the lower index. Per-candidate losses go to `losses` when given.
std::size_t loss_probe(const Model& model, const Tensor& patches, std::span<const std::vector<int>> candidates,
                       std::vector<double>* losses = nullptr);

/// Fraction of held-out samples whose probe prediction matches the label.
double probe_accuracy(const Model& model, const SmokeTask& task, std::size_t trials, std::uint64_t root_seed);

/// Flat text manifest of every tensor plus an opaque config payload.
struct Checkpoint {
  int version = 1;
  std::string config_text;
  struct Entry {
    ParamGroup group;
    Tensor value;
  };
  std::map<std::string, Entry> tensors;
};

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Model& model, std::string_view config_text);
Checkpoint read_checkpoint(std::istream& in);
/// Overwrites the model's tensors; every name, group and shape must match.
void load_checkpoint(Model& model, const Checkpoint& ckpt);

}  // namespace evlm
