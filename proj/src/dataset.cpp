#include "seqgeo/dataset.hpp"

#include <algorithm>
#include <unordered_set>

#include "seqgeo/error.hpp"

namespace seqgeo {

void PairedDataset::validate() const {
  if (ground.size() != ids.size() || aerial.rows() != ids.size()) {
    throw DomainError("dataset: " + std::to_string(ids.size()) + " ids, " + std::to_string(ground.size()) +
                      " ground sequences, " + std::to_string(aerial.rows()) + " aerial rows");
  }
  if (aerial.rows() > 0 && aerial.cols() != dim) {
    throw DomainError("dataset: aerial features have dim " + std::to_string(aerial.cols()) + ", expected " +
                      std::to_string(dim));
  }
  for (std::size_t i = 0; i < ground.size(); ++i) {
    if (ground[i].rows() != seq_len || ground[i].cols() != dim) {
      throw DomainError("dataset: sequence '" + ids[i] + "' has shape " + ground[i].shape());
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DomainError("dataset: duplicate id '" + id + "'");
  }
}

PairedDataset PairedDataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw DomainError("dataset slice out of range");
  PairedDataset out;
  out.seq_len = seq_len;
  out.dim = dim;
  out.ids.assign(ids.begin() + static_cast<long>(begin), ids.begin() + static_cast<long>(begin + count));
  out.ground.assign(ground.begin() + static_cast<long>(begin), ground.begin() + static_cast<long>(begin + count));
  out.aerial = Matrix(count, dim);
  for (std::size_t i = 0; i < count; ++i) {
    std::copy(aerial.row(begin + i).begin(), aerial.row(begin + i).end(), out.aerial.row(i).begin());
  }
  return out;
}

}  // namespace seqgeo
