#include "seqgeo/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "seqgeo/error.hpp"
#include "seqgeo/rng.hpp"

namespace seqgeo::synth {
namespace {

enum StreamTag : std::uint64_t { kRotationStream = 11, kAerialStream = 12, kNoiseStream = 13 };

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

void normalize_in_place(std::span<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0)) throw DomainError("degenerate feature");
  for (double& x : v) x /= norm;
}

}  // namespace

std::vector<Matrix> frame_rotations(std::size_t seq_len, std::size_t dim, std::uint64_t seed,
                                    const SynthOptions& options) {
  Rng rng(derive_seed(seed, kRotationStream));
  const std::size_t planes = options.rotations_per_frame ? options.rotations_per_frame : dim;
  std::vector<Matrix> rotations;
  for (std::size_t t = 0; t < seq_len; ++t) {
    Matrix r = Matrix::identity(dim);
    if (dim >= 2 && options.max_rotation_angle > 0.0) {
      for (std::size_t k = 0; k < planes; ++k) {
        const std::size_t i = rng.below(dim);
        std::size_t j = rng.below(dim - 1);
        if (j >= i) ++j;
        const double angle = options.max_rotation_angle * (2.0 * rng.uniform() - 1.0);
        const double c = std::cos(angle), s = std::sin(angle);
        // Left-multiply by the Givens rotation in the (i, j) plane.
        for (std::size_t col = 0; col < dim; ++col) {
          const double ri = r(i, col), rj = r(j, col);
          r(i, col) = c * ri - s * rj;
          r(j, col) = s * ri + c * rj;
        }
      }
    }
    rotations.push_back(std::move(r));
  }
  return rotations;
}

PairedDataset generate_synthetic(std::size_t n_pairs, std::size_t seq_len, std::size_t dim, double noise_sigma,
                                 std::uint64_t seed, const SynthOptions& options) {
  if (n_pairs < 2) throw DomainError("generate_synthetic: need at least 2 pairs");
  if (seq_len < 1 || dim < 1) throw DomainError("generate_synthetic: seq_len and dim must be positive");
  if (noise_sigma < 0.0) throw DomainError("generate_synthetic: noise_sigma must be >= 0");

  const std::vector<Matrix> rotations = frame_rotations(seq_len, dim, seed, options);
  Rng aerial_rng(derive_seed(seed, kAerialStream));
  Rng noise_rng(derive_seed(seed, kNoiseStream));
  const double noise_scale = noise_sigma / std::sqrt(static_cast<double>(dim));

  PairedDataset data;
  data.seq_len = seq_len;
  data.dim = dim;
  data.aerial = Matrix(n_pairs, dim);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    char id[32];
    std::snprintf(id, sizeof id, "pair-%06zu", p);
    data.ids.emplace_back(id);

    auto a = data.aerial.row(p);
    for (double& v : a) v = aerial_rng.normal();
    normalize_in_place(a);

    Matrix seq(seq_len, dim);
    for (std::size_t t = 0; t < seq_len; ++t) {
      auto row = seq.row(t);
      for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dim; ++j) acc += rotations[t](i, j) * a[j];
        row[i] = acc + noise_scale * noise_rng.normal();
      }
      normalize_in_place(row);
      for (double& v : row) v = round_to_float(v);
    }
    for (double& v : a) v = round_to_float(v);
    data.ground.push_back(std::move(seq));
  }
  return data;
}

}  // namespace seqgeo::synth
