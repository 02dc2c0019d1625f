#include "seqgeo/tfam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqgeo/error.hpp"

namespace seqgeo::tfam {

std::string_view to_string(MaskingMode mode) {
  return mode == MaskingMode::kStrict ? "strict" : "paper_literal";
}

MaskingMode masking_mode_from_string(std::string_view name) {
  if (name == "strict") return MaskingMode::kStrict;
  if (name == "paper_literal") return MaskingMode::kPaperLiteral;
  throw DomainError("unknown masking mode '" + std::string(name) + "' (expected strict|paper_literal)");
}

void TfamConfig::validate() const {
  std::vector<std::string> problems;
  if (seq_len < 1) problems.push_back("seq_len must be >= 1");
  if (dim < 1) problems.push_back("dim must be >= 1");
  if (n_heads < 1) problems.push_back("n_heads must be >= 1");
  else if (dim % n_heads != 0) problems.push_back("dim must be divisible by n_heads");
  if (n_layers < 1) problems.push_back("n_layers must be >= 1");
  if (positional_encoding && dim % 2 != 0) problems.push_back("dim must be even for the positional encoding");
  if (problems.empty()) return;
  std::string msg = "invalid TFAM config:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw DomainError(msg);
}

DropoutMask::DropoutMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) b = b ? 1 : 0;
  if (kept() == 0) throw DomainError("dropout mask drops every frame");
}

DropoutMask DropoutMask::full(std::size_t seq_len) {
  return DropoutMask(std::vector<std::uint8_t>(seq_len, 1));
}

DropoutMask DropoutMask::drop_first(std::size_t seq_len, std::size_t n) {
  if (n >= seq_len) {
    throw DomainError("drop count " + std::to_string(n) + " must be smaller than the sequence length " +
                      std::to_string(seq_len));
  }
  std::vector<std::uint8_t> bits(seq_len, 1);
  std::fill_n(bits.begin(), n, 0);
  return DropoutMask(std::move(bits));
}

DropoutMask DropoutMask::parse(std::string_view text) {
  std::vector<std::uint8_t> bits;
  for (char c : text) {
    if (c != '0' && c != '1') throw DomainError("mask must contain only 0 and 1: '" + std::string(text) + "'");
    bits.push_back(c == '1');
  }
  return DropoutMask(std::move(bits));
}

std::size_t DropoutMask::kept() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::string DropoutMask::str() const {
  std::string s;
  for (auto b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

DropoutMask sample_dropout_mask(std::size_t seq_len, std::size_t max_dropped, Rng& rng) {
  if (max_dropped >= seq_len) {
    throw DomainError("max dropped frames J=" + std::to_string(max_dropped) +
                      " must be smaller than T=" + std::to_string(seq_len));
  }
  const std::size_t e = rng.below(max_dropped + 1);
  std::vector<std::size_t> order(seq_len);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first e entries are a uniform e-subset.
  for (std::size_t i = 0; i < e; ++i) {
    const std::size_t j = i + rng.below(seq_len - i);
    std::swap(order[i], order[j]);
  }
  std::vector<std::uint8_t> bits(seq_len, 1);
  for (std::size_t i = 0; i < e; ++i) bits[order[i]] = 0;
  return DropoutMask(std::move(bits));
}

TfamParams init_params(const TfamConfig& cfg, Rng& rng) {
  cfg.validate();
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  TfamParams params;
  params.layers.resize(cfg.n_layers);
  for (auto& layer : params.layers) {
    layer.heads.resize(cfg.n_heads);
    for (auto& head : layer.heads) {
      head.query = Matrix::random_normal(cfg.dim, cfg.head_dim(), stddev, rng);
      head.key = Matrix::random_normal(cfg.dim, cfg.head_dim(), stddev, rng);
      head.value = Matrix::random_normal(cfg.dim, cfg.head_dim(), stddev, rng);
    }
    layer.output = Matrix::random_normal(cfg.n_heads * cfg.head_dim(), cfg.dim, stddev, rng);
  }
  return params;
}

void check_params(const TfamParams& params, const TfamConfig& cfg) {
  cfg.validate();
  auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const std::string& what) {
    if (m.rows() != r || m.cols() != c) {
      throw DomainError(what + " has shape " + m.shape() + ", expected (" + std::to_string(r) + "x" +
                        std::to_string(c) + ")");
    }
  };
  if (params.layers.size() != cfg.n_layers) {
    throw DomainError("params have " + std::to_string(params.layers.size()) + " layers, config expects " +
                      std::to_string(cfg.n_layers));
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const std::string where = "layer " + std::to_string(l);
    if (layer.heads.size() != cfg.n_heads) throw DomainError(where + ": wrong head count");
    for (const auto& head : layer.heads) {
      expect(head.query, cfg.dim, cfg.head_dim(), where + " W_Q");
      expect(head.key, cfg.dim, cfg.head_dim(), where + " W_K");
      expect(head.value, cfg.dim, cfg.head_dim(), where + " W_V");
    }
    expect(layer.output, cfg.n_heads * cfg.head_dim(), cfg.dim, where + " W_O");
  }
}

TfamVars attach(ad::Tape& tape, const TfamParams& params) {
  TfamVars vars;
  vars.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& src = params.layers[l];
    auto& dst = vars.layers[l];
    for (const auto& head : src.heads) {
      dst.heads.push_back({tape.leaf(head.query), tape.leaf(head.key), tape.leaf(head.value)});
    }
    dst.output = tape.leaf(src.output);
  }
  return vars;
}

Matrix positional_encoding(std::size_t seq_len, std::size_t dim) {
  if (dim % 2 != 0) throw DomainError("positional_encoding: dim must be even, got " + std::to_string(dim));
  Matrix pe(seq_len, dim);
  for (std::size_t pos = 0; pos < seq_len; ++pos) {
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

TfamTapeOutput tfam_forward(ad::Tape& tape, ad::Var frames, const DropoutMask& mask,
                            const TfamVars& weights, const TfamConfig& cfg) {
  cfg.validate();
  if (frames.rows() != cfg.seq_len || frames.cols() != cfg.dim) {
    throw DomainError("tfam_forward: input shape " + frames.value().shape() + " does not match T=" +
                      std::to_string(cfg.seq_len) + ", D=" + std::to_string(cfg.dim));
  }
  if (mask.size() != cfg.seq_len) {
    throw DomainError("tfam_forward: mask length " + std::to_string(mask.size()) + " != T=" +
                      std::to_string(cfg.seq_len));
  }
  if (mask.kept() == 0) throw DomainError("tfam_forward: mask drops every frame");
  if (weights.layers.size() != cfg.n_layers) throw DomainError("tfam_forward: layer count mismatch");

  const auto keep = mask.bits();
  const bool strict = cfg.masking == MaskingMode::kStrict;
  const double width = cfg.scale_per_head ? static_cast<double>(cfg.head_dim()) : static_cast<double>(cfg.dim);
  const double logit_scale = 1.0 / std::sqrt(width);

  ad::Var x = frames;
  if (cfg.positional_encoding) x = ad::add(x, tape.constant(positional_encoding(cfg.seq_len, cfg.dim)));

  for (const auto& layer : weights.layers) {
    std::vector<ad::Var> heads;
    heads.reserve(layer.heads.size());
    for (const auto& head : layer.heads) {
      const ad::Var q = ad::matmul(x, head.query);
      ad::Var k = ad::matmul(x, head.key);
      const ad::Var v = ad::matmul(x, head.value);
      if (!strict) k = ad::zero_rows(k, keep);
      const ad::Var logits = ad::scale(ad::matmul(q, ad::transpose(k)), logit_scale);
      const ad::Var attn = strict ? ad::masked_softmax_rows(logits, keep) : ad::softmax_rows(logits);
      heads.push_back(ad::matmul(attn, v));
    }
    ad::Var y = ad::matmul(ad::concat_cols(heads), layer.output);
    if (cfg.residual) y = ad::add(x, y);
    if (strict) y = ad::zero_rows(y, keep);
    x = y;
  }
  return {x, ad::masked_mean_rows(x, keep)};
}

TfamOutput tfam_forward(const Matrix& frames, const DropoutMask& mask, const TfamParams& params,
                        const TfamConfig& cfg) {
  check_params(params, cfg);
  ad::Tape tape;
  TfamVars vars;
  vars.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (const auto& head : params.layers[l].heads) {
      vars.layers[l].heads.push_back(
          {tape.constant(head.query), tape.constant(head.key), tape.constant(head.value)});
    }
    vars.layers[l].output = tape.constant(params.layers[l].output);
  }
  const auto out = tfam_forward(tape, tape.constant(frames), mask, vars, cfg);
  return {out.aggregated.value(), out.descriptor.value()};
}

}  // namespace seqgeo::tfam
