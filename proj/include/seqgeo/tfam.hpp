#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqgeo/autodiff.hpp"
#include "seqgeo/rng.hpp"
#include "seqgeo/tensor.hpp"

namespace seqgeo::tfam {

// strict: masked keys get -inf logits and masked queries produce zero rows.
// paper_literal: masked key rows are zeroed; nothing else changes.
enum class MaskingMode { kStrict, kPaperLiteral };

std::string_view to_string(MaskingMode mode);
MaskingMode masking_mode_from_string(std::string_view name);

struct TfamConfig {
  std::size_t seq_len = 7;
  std::size_t dim = 0;
  std::size_t n_heads = 8;
  std::size_t n_layers = 6;
  MaskingMode masking = MaskingMode::kStrict;
  bool residual = false;
  // Scale logits by sqrt(dim / n_heads) instead of sqrt(dim).
  bool scale_per_head = false;
  // Test hook: disables the sinusoidal encoding.
  bool positional_encoding = true;

  std::size_t head_dim() const { return n_heads ? dim / n_heads : 0; }
  // Throws DomainError describing every violated constraint.
  void validate() const;
};

// Binary keep-mask over the T frames of a sequence; 1 means the frame is used.
class DropoutMask {
 public:
  DropoutMask() = default;
  explicit DropoutMask(std::vector<std::uint8_t> bits);

  static DropoutMask full(std::size_t seq_len);
  // Zeroes the first n positions (variable-length evaluation protocol).
  static DropoutMask drop_first(std::size_t seq_len, std::size_t n);
  // Parses strings such as "0000001".
  static DropoutMask parse(std::string_view bits);

  std::size_t size() const { return bits_.size(); }
  std::size_t kept() const;
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::string str() const;

  bool operator==(const DropoutMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

// Draws e uniformly from {0..max_dropped}, then zeroes e distinct positions
// chosen uniformly. Requires max_dropped < seq_len.
DropoutMask sample_dropout_mask(std::size_t seq_len, std::size_t max_dropped, Rng& rng);

template <class M>
struct HeadWeights {
  M query;  // dim x head_dim
  M key;
  M value;
};

template <class M>
struct LayerWeights {
  std::vector<HeadWeights<M>> heads;
  M output;  // (n_heads * head_dim) x dim
};

// Weights in declaration order: per layer, per head Q, K, V, then the layer's
// output projection. Checkpoints and optimizers rely on this order.
template <class M>
struct TfamWeights {
  std::vector<LayerWeights<M>> layers;

  template <class F>
  void for_each(F&& f) {
    for (auto& layer : layers) {
      for (auto& head : layer.heads) {
        f(head.query);
        f(head.key);
        f(head.value);
      }
      f(layer.output);
    }
  }

  template <class F>
  void for_each(F&& f) const {
    for (const auto& layer : layers) {
      for (const auto& head : layer.heads) {
        f(head.query);
        f(head.key);
        f(head.value);
      }
      f(layer.output);
    }
  }
};

using TfamParams = TfamWeights<Matrix>;
using TfamVars = TfamWeights<ad::Var>;

// N(0, 1/dim) initialization.
TfamParams init_params(const TfamConfig& cfg, Rng& rng);
// Throws DomainError if any shape disagrees with cfg.
void check_params(const TfamParams& params, const TfamConfig& cfg);
// Records every weight as a differentiable leaf.
TfamVars attach(ad::Tape& tape, const TfamParams& params);

// PE[pos, 2i] = sin(pos / 10000^(2i/D)), PE[pos, 2i+1] = cos(same). D must be even.
Matrix positional_encoding(std::size_t seq_len, std::size_t dim);

struct TfamTapeOutput {
  ad::Var aggregated;  // T x D
  ad::Var descriptor;  // 1 x D, mean over kept rows
};

TfamTapeOutput tfam_forward(ad::Tape& tape, ad::Var frames, const DropoutMask& mask,
                            const TfamVars& weights, const TfamConfig& cfg);

struct TfamOutput {
  Matrix aggregated;
  Matrix descriptor;
};

// Evaluation without gradients.
TfamOutput tfam_forward(const Matrix& frames, const DropoutMask& mask, const TfamParams& params,
                        const TfamConfig& cfg);

}  // namespace seqgeo::tfam
