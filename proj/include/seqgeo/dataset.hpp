#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "seqgeo/tensor.hpp"

namespace seqgeo {

// Matched ground-sequence / aerial-feature pairs; index i of every member
// describes the same pair.
struct PairedDataset {
  std::size_t seq_len = 0;
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<Matrix> ground;  // each seq_len x dim
  Matrix aerial;               // size() x dim

  std::size_t size() const { return ids.size(); }
  // Throws DomainError on inconsistent shapes or duplicate ids.
  void validate() const;
  // Pairs [begin, begin + count) as a new dataset.
  PairedDataset slice(std::size_t begin, std::size_t count) const;
};

}  // namespace seqgeo
