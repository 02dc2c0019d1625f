#include "seqgeo/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "seqgeo/error.hpp"
#include "seqgeo/rng.hpp"

namespace seqgeo::train {
namespace {

enum StreamTag : std::uint64_t { kInitStream = 1, kShuffleStream = 2, kMaskStream = 3 };

}  // namespace

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (!(gamma > 0.0)) problems.push_back("gamma must be > 0");
  if (batch_size < 2) problems.push_back("batch_size must be >= 2");
  if (epochs < 1) problems.push_back("epochs must be >= 1");
  if (!(lr_start > 0.0)) problems.push_back("lr_start must be > 0");
  if (lr_end < 0.0 || lr_end > lr_start) problems.push_back("lr_end must be in [0, lr_start]");
  if (decay_start_epoch > epochs) problems.push_back("decay_start_epoch must be <= epochs");
  if (weight_decay < 0.0) problems.push_back("weight_decay must be >= 0");
  if (problems.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw DomainError(msg);
}

std::vector<Matrix*> ModelParams::tensors() {
  std::vector<Matrix*> out;
  for_each([&](Matrix& m) { out.push_back(&m); });
  return out;
}

void quantize_to_f32(ModelParams& params) {
  params.for_each([](Matrix& m) {
    for (double& v : m.data()) v = static_cast<double>(static_cast<float>(v));
  });
}

ModelParams init_model(const tfam::TfamConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kInitStream));
  return {tfam::init_params(cfg, rng), Matrix::identity(cfg.dim)};
}

std::vector<double> l2_normalize(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw DomainError("degenerate feature");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

double triplet_loss(double d_pos, double d_neg, double gamma) {
  return ad::softplus(gamma * (d_pos - d_neg));
}

ad::Var feature_triplet_loss(ad::Var ground, ad::Var aerial, double gamma) {
  const ad::Var dist = ad::pairwise_distances(ad::l2_normalize_rows(ground), ad::l2_normalize_rows(aerial));
  return ad::exhaustive_soft_margin_triplet(dist, gamma);
}

double feature_triplet_loss(const Matrix& ground, const Matrix& aerial, double gamma) {
  ad::Tape tape;
  return feature_triplet_loss(tape.constant(ground), tape.constant(aerial), gamma).value()(0, 0);
}

ModelVars attach(ad::Tape& tape, const ModelParams& params, bool train_aerial) {
  return {tfam::attach(tape, params.tfam), train_aerial ? tape.leaf(params.aerial) : tape.constant(params.aerial)};
}

ad::Var exhaustive_batch_loss(ad::Tape& tape, const PairBatch& batch, const ModelVars& vars,
                              const tfam::TfamConfig& cfg, double gamma) {
  const std::size_t b = batch.size();
  if (b < 2) throw DomainError("no negatives available: batch size " + std::to_string(b));
  if (batch.masks.size() != b || batch.aerial.rows() != b) {
    throw DomainError("batch: " + std::to_string(b) + " sequences, " + std::to_string(batch.masks.size()) +
                      " masks, " + std::to_string(batch.aerial.rows()) + " aerial rows");
  }
  std::vector<ad::Var> descriptors;
  descriptors.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto out = tfam::tfam_forward(tape, tape.constant(batch.ground[i]), batch.masks[i], vars.tfam, cfg);
    descriptors.push_back(out.descriptor);
  }
  const ad::Var ground = ad::stack_rows(descriptors);
  const ad::Var aerial = ad::matmul(tape.constant(batch.aerial), vars.aerial);
  return feature_triplet_loss(ground, aerial, gamma);
}

double exhaustive_batch_loss(const PairBatch& batch, const ModelParams& params, const tfam::TfamConfig& cfg,
                             double gamma) {
  ad::Tape tape;
  const ModelVars vars = attach(tape, params, false);
  return exhaustive_batch_loss(tape, batch, vars, cfg, gamma).value()(0, 0);
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr,
               const TrainConfig& cfg) {
  if (params.size() != grads.size()) {
    throw DomainError("adam_step: " + std::to_string(params.size()) + " params but " +
                      std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i])) {
      throw DomainError("adam_step: shape mismatch " + params[i]->shape() + " vs " + grads[i].shape());
    }
    if (!all_finite(grads[i])) {
      throw DomainError("adam_step: non-finite gradient in tensor " + std::to_string(i) + ", step refused");
    }
  }
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    const auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      double gk = g[k];
      if (!cfg.decoupled_weight_decay) gk += cfg.weight_decay * p[k];
      m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * gk;
      v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * gk * gk;
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + kAdamEps);
      if (cfg.decoupled_weight_decay) p[k] -= lr * cfg.weight_decay * p[k];
      p[k] -= lr * update;
    }
  }
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch < cfg.decay_start_epoch) return cfg.lr_start;
  const std::size_t last = cfg.epochs > 0 ? cfg.epochs - 1 : 0;
  if (last <= cfg.decay_start_epoch || epoch >= last) return cfg.lr_end;
  const double frac = static_cast<double>(epoch - cfg.decay_start_epoch) /
                      static_cast<double>(last - cfg.decay_start_epoch);
  return std::lerp(cfg.lr_start, cfg.lr_end, frac);
}

TrainResult train(const PairedDataset& data, const tfam::TfamConfig& model_cfg, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  model_cfg.validate();
  data.validate();
  if (data.seq_len != model_cfg.seq_len || data.dim != model_cfg.dim) {
    throw DomainError("dataset shape (T=" + std::to_string(data.seq_len) + ", D=" + std::to_string(data.dim) +
                      ") does not match model (T=" + std::to_string(model_cfg.seq_len) +
                      ", D=" + std::to_string(model_cfg.dim) + ")");
  }
  if (data.size() < 2) throw DomainError("no negatives available: dataset has fewer than 2 pairs");
  if (cfg.max_dropped >= model_cfg.seq_len) {
    throw DomainError("max_dropped J=" + std::to_string(cfg.max_dropped) + " must be smaller than T=" +
                      std::to_string(model_cfg.seq_len));
  }

  TrainResult result;
  result.params = init_model(model_cfg, cfg.seed);
  Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream));
  Rng mask_rng(derive_seed(cfg.seed, kMaskStream));
  AdamState adam;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps && result.steps >= cfg.max_steps) break;
    const auto start = std::chrono::steady_clock::now();
    const double lr = lr_schedule(epoch, cfg);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin + 2 <= order.size(); begin += cfg.batch_size) {
      if (cfg.max_steps && result.steps >= cfg.max_steps) break;
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      PairBatch batch;
      batch.aerial = Matrix(end - begin, data.dim);
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t idx = order[k];
        batch.ground.push_back(data.ground[idx]);
        tfam::DropoutMask mask = tfam::sample_dropout_mask(model_cfg.seq_len, cfg.max_dropped, mask_rng);
        if (hooks.mask_override) {
          if (auto forced = hooks.mask_override(result.steps, idx)) mask = std::move(*forced);
        }
        batch.masks.push_back(std::move(mask));
        std::copy(data.aerial.row(idx).begin(), data.aerial.row(idx).end(), batch.aerial.row(k - begin).begin());
      }

      ad::Tape tape;
      const ModelVars vars = attach(tape, result.params, cfg.train_aerial);
      const ad::Var loss = exhaustive_batch_loss(tape, batch, vars, model_cfg, cfg.gamma);
      std::vector<ad::Var> wrt;
      vars.tfam.for_each([&](const ad::Var& v) { wrt.push_back(v); });
      std::vector<Matrix*> targets;
      result.params.tfam.for_each([&](Matrix& m) { targets.push_back(&m); });
      if (cfg.train_aerial) {
        wrt.push_back(vars.aerial);
        targets.push_back(&result.params.aerial);
      }
      const std::vector<Matrix> grads = tape.grad(loss, wrt);
      adam_step(targets, grads, adam, lr, cfg);

      const double value = loss.value()(0, 0);
      loss_sum += value;
      ++batches;
      ++result.steps;
      if (hooks.on_step) hooks.on_step(result.steps, value);
    }
    const auto stop = std::chrono::steady_clock::now();
    EpochLog entry{epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0, lr,
                   std::chrono::duration<double, std::milli>(stop - start).count(), result.steps};
    result.log.push_back(entry);
    if (hooks.on_epoch) hooks.on_epoch(entry, result.params);
  }
  return result;
}

std::vector<double> ground_descriptor(const Matrix& frames, const tfam::DropoutMask& mask,
                                      const ModelParams& params, const tfam::TfamConfig& cfg) {
  const auto out = tfam::tfam_forward(frames, mask, params.tfam, cfg);
  return l2_normalize(out.descriptor.row(0));
}

std::vector<double> aerial_descriptor(std::span<const double> feature, const ModelParams& params) {
  if (feature.size() != params.aerial.rows()) {
    throw DomainError("aerial feature has dim " + std::to_string(feature.size()) + ", embedder expects " +
                      std::to_string(params.aerial.rows()));
  }
  const Matrix projected = matmul(Matrix::row_vector(feature), params.aerial);
  return l2_normalize(projected.row(0));
}

}  // namespace seqgeo::train
