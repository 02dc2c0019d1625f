#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "seqgeo/dataset.hpp"

namespace seqgeo::synth {

struct SynthOptions {
  // Largest Givens angle (radians) in each per-frame rotation; 0 gives identity
  // rotations. With pi the frames look unrelated to each other, which keeps a
  // plain mean-pool baseline well short of a trained aggregator.
  double max_rotation_angle = 3.141592653589793;
  // Number of random plane rotations composed per frame; 0 means dim.
  std::size_t rotations_per_frame = 0;
};

// Paired ground/aerial features. Each aerial vector is a random unit vector;
// frame t of its ground sequence is normalize(R_t a + n) where R_t is a
// rotation shared by every pair and n ~ N(0, noise_sigma^2 / dim I), so the
// noise vector has expected squared norm noise_sigma^2. Values are rounded
// to float so the dataset survives the f32 file format unchanged. Pair ids
// are "pair-000000", "pair-000001", ...
PairedDataset generate_synthetic(std::size_t n_pairs, std::size_t seq_len, std::size_t dim, double noise_sigma,
                                 std::uint64_t seed, const SynthOptions& options = {});

// The per-frame rotations generate_synthetic uses for a given seed.
std::vector<Matrix> frame_rotations(std::size_t seq_len, std::size_t dim, std::uint64_t seed,
                                    const SynthOptions& options = {});

}  // namespace seqgeo::synth
