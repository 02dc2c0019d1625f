#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "seqgeo/autodiff.hpp"
#include "seqgeo/dataset.hpp"
#include "seqgeo/tfam.hpp"

namespace seqgeo::train {

struct TrainConfig {
  double gamma = 10.0;
  std::size_t batch_size = 24;
  std::size_t epochs = 50;
  double lr_start = 1e-5;
  double lr_end = 5e-7;
  std::size_t decay_start_epoch = 30;
  double weight_decay = 1e-6;
  // Decay applied to the weights directly instead of being added to the gradient.
  bool decoupled_weight_decay = false;
  // J: largest number of frames dropped per training sequence.
  std::size_t max_dropped = 6;
  std::uint64_t seed = 0;
  // Learn the aerial linear embedder; when false it stays at identity.
  bool train_aerial = true;
  // Hard cap on optimizer steps; 0 means no cap.
  std::size_t max_steps = 0;

  void validate() const;
};

// Sequence branch (TFAM) plus the aerial branch's linear embedder.
struct ModelParams {
  tfam::TfamParams tfam;
  Matrix aerial;  // dim x dim

  template <class F>
  void for_each(F&& f) {
    tfam.for_each(f);
    f(aerial);
  }
  template <class F>
  void for_each(F&& f) const {
    tfam.for_each(f);
    f(aerial);
  }
  std::vector<Matrix*> tensors();
};

// Rounds every weight to the nearest float, the precision checkpoints store.
void quantize_to_f32(ModelParams& params);

ModelParams init_model(const tfam::TfamConfig& cfg, std::uint64_t seed);

// v / ||v||; throws DomainError("degenerate feature") for a zero vector.
std::vector<double> l2_normalize(std::span<const double> v);

// log(1 + exp(gamma * (d_pos - d_neg))), stable for large arguments.
double triplet_loss(double d_pos, double d_neg, double gamma);

struct PairBatch {
  std::vector<Matrix> ground;              // each T x D
  std::vector<tfam::DropoutMask> masks;    // one per ground sequence
  Matrix aerial;                           // B x D raw aerial features

  std::size_t size() const { return ground.size(); }
};

// Loss over L2-normalized ground (BxD) and aerial (BxD) features whose rows
// are matched index-wise.
ad::Var feature_triplet_loss(ad::Var ground, ad::Var aerial, double gamma);
double feature_triplet_loss(const Matrix& ground, const Matrix& aerial, double gamma);

struct ModelVars {
  tfam::TfamVars tfam;
  ad::Var aerial;
};

ModelVars attach(ad::Tape& tape, const ModelParams& params, bool train_aerial);

// Full model forward and exhaustive in-batch loss, recorded on the tape.
ad::Var exhaustive_batch_loss(ad::Tape& tape, const PairBatch& batch, const ModelVars& vars,
                              const tfam::TfamConfig& cfg, double gamma);
double exhaustive_batch_loss(const PairBatch& batch, const ModelParams& params, const tfam::TfamConfig& cfg,
                             double gamma);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// One bias-corrected Adam update. Throws DomainError and leaves params and
// state untouched if any gradient entry is non-finite.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr,
               const TrainConfig& cfg);

// Constant lr_start before decay_start_epoch, then linear down to lr_end at
// the final epoch.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
  std::size_t steps = 0;  // cumulative
};

struct TrainHooks {
  // Replaces the sampled mask of pair `pair_index` at optimizer step `step`.
  std::function<std::optional<tfam::DropoutMask>(std::size_t step, std::size_t pair_index)> mask_override;
  // Called after every epoch with the current parameters.
  std::function<void(const EpochLog&, const ModelParams&)> on_epoch;
  // Called after every optimizer step with the batch loss.
  std::function<void(std::size_t step, double loss)> on_step;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
  std::size_t steps = 0;
};

TrainResult train(const PairedDataset& data, const tfam::TfamConfig& model_cfg, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

// Unit-norm retrieval descriptors.
std::vector<double> ground_descriptor(const Matrix& frames, const tfam::DropoutMask& mask,
                                      const ModelParams& params, const tfam::TfamConfig& cfg);
std::vector<double> aerial_descriptor(std::span<const double> feature, const ModelParams& params);

}  // namespace seqgeo::train
