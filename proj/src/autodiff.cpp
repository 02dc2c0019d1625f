#include "seqgeo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "seqgeo/error.hpp"

namespace seqgeo::ad {
namespace {

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw DomainError("autodiff: variable is not attached to a tape");
  return *a.tape();
}

Tape& common_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw DomainError("autodiff: variables belong to different tapes");
  return tape_of(a);
}

void check_mask(const char* op, std::span<const std::uint8_t> mask, std::size_t expected) {
  if (mask.size() != expected) {
    throw DomainError(std::string(op) + ": mask length " + std::to_string(mask.size()) +
                      " does not match " + std::to_string(expected));
  }
}

std::vector<std::uint8_t> copy_mask(std::span<const std::uint8_t> mask) {
  return {mask.begin(), mask.end()};
}

}  // namespace

const Matrix& Var::value() const { return tape_of(*this).value(id_); }

bool GradBuffer::wants(std::size_t id) const { return tape_.requires_grad(id); }

Matrix& GradBuffer::at(std::size_t id) {
  Matrix& g = grads_[id];
  if (g.empty() && tape_.value(id).size() > 0) {
    g = Matrix(tape_.value(id).rows(), tape_.value(id).cols());
  }
  return g;
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back({std::move(value), true, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), false, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw DomainError("autodiff: input recorded on another tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back({std::move(value), needs, needs ? std::move(backward) : nullptr});
  return {this, nodes_.size() - 1};
}

std::vector<Matrix> Tape::grad(Var output, std::span<const Var> wrt) const {
  if (output.tape() != this) throw DomainError("grad: output belongs to another tape");
  const Matrix& out = value(output.id());
  if (out.rows() != 1 || out.cols() != 1) {
    throw DomainError("grad: output must be scalar (1x1), got " + out.shape());
  }
  std::vector<Matrix> grads(nodes_.size());
  GradBuffer buffer(*this, grads);
  grads[output.id()] = Matrix(1, 1, 1.0);
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    if (grads[id].empty() || !nodes_[id].backward) continue;
    nodes_[id].backward(grads[id], buffer);
  }
  std::vector<Matrix> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.tape() != this) throw DomainError("grad: wrt variable belongs to another tape");
    const Matrix& g = grads[w.id()];
    result.push_back(g.empty() ? Matrix(value(w.id()).rows(), value(w.id()).cols()) : g);
  }
  return result;
}

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  const Var inputs[] = {a, b};
  return t.record(seqgeo::matmul(a.value(), b.value()), inputs,
                  [&t, ia, ib](const Matrix& g, GradBuffer& gb) {
                    if (gb.wants(ia)) gb.accumulate(ia, seqgeo::matmul(g, seqgeo::transpose(t.value(ib))));
                    if (gb.wants(ib)) gb.accumulate(ib, seqgeo::matmul(seqgeo::transpose(t.value(ia)), g));
                  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return t.record(seqgeo::transpose(a.value()), inputs, [ia](const Matrix& g, GradBuffer& gb) {
    gb.accumulate(ia, seqgeo::transpose(g));
  });
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  const Var inputs[] = {a, b};
  return t.record(seqgeo::add(a.value(), b.value()), inputs, [ia, ib](const Matrix& g, GradBuffer& gb) {
    if (gb.wants(ia)) gb.accumulate(ia, g);
    if (gb.wants(ib)) gb.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  const Var inputs[] = {a, b};
  return t.record(seqgeo::add(a.value(), seqgeo::scale(b.value(), -1.0)), inputs,
                  [ia, ib](const Matrix& g, GradBuffer& gb) {
                    if (gb.wants(ia)) gb.accumulate(ia, g);
                    if (gb.wants(ib)) gb.accumulate(ib, seqgeo::scale(g, -1.0));
                  });
}

Var add_row(Var a, Var row) {
  Tape& t = common_tape(a, row);
  const std::size_t ia = a.id(), ir = row.id();
  const Var inputs[] = {a, row};
  return t.record(seqgeo::add_row(a.value(), row.value()), inputs,
                  [ia, ir](const Matrix& g, GradBuffer& gb) {
                    if (gb.wants(ia)) gb.accumulate(ia, g);
                    if (gb.wants(ir)) {
                      Matrix& acc = gb.at(ir);
                      for (std::size_t i = 0; i < g.rows(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) acc(0, j) += g(i, j);
                    }
                  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return t.record(seqgeo::scale(a.value(), s), inputs, [ia, s](const Matrix& g, GradBuffer& gb) {
    gb.accumulate(ia, seqgeo::scale(g, s));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  std::vector<Matrix> values;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    common_tape(parts.front(), p);
    values.push_back(p.value());
    ids.push_back(p.id());
  }
  return t.record(seqgeo::concat_cols(values), parts, [&t, ids](const Matrix& g, GradBuffer& gb) {
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t width = t.value(id).cols();
      if (gb.wants(id)) {
        Matrix& acc = gb.at(id);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < width; ++j) acc(i, j) += g(i, offset + j);
      }
      offset += width;
    }
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw DomainError("stack_rows: no inputs");
  Tape& t = tape_of(rows.front());
  const std::size_t cols = rows.front().cols();
  Matrix out(rows.size(), cols);
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    common_tape(rows.front(), rows[i]);
    const Matrix& r = rows[i].value();
    if (r.rows() != 1 || r.cols() != cols) {
      throw DomainError("stack_rows: shape mismatch " + rows.front().value().shape() + " vs " + r.shape());
    }
    std::copy(r.row(0).begin(), r.row(0).end(), out.row(i).begin());
    ids.push_back(rows[i].id());
  }
  return t.record(std::move(out), rows, [ids](const Matrix& g, GradBuffer& gb) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!gb.wants(ids[i])) continue;
      Matrix& acc = gb.at(ids[i]);
      for (std::size_t j = 0; j < g.cols(); ++j) acc(0, j) += g(i, j);
    }
  });
}

Var mean_rows(Var a) {
  const std::vector<std::uint8_t> keep(a.rows(), 1);
  return masked_mean_rows(a, keep);
}

Var masked_mean_rows(Var a, std::span<const std::uint8_t> keep) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  check_mask("masked_mean_rows", keep, x.rows());
  const auto count = static_cast<std::size_t>(std::count_if(keep.begin(), keep.end(), [](auto k) { return k != 0; }));
  if (count == 0) throw DomainError("masked_mean_rows: every row is masked");
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (!keep[i]) continue;
    for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
  }
  const auto n = static_cast<double>(count);
  for (double& v : out.data()) v /= n;
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return t.record(std::move(out), inputs, [ia, n, k = copy_mask(keep)](const Matrix& g, GradBuffer& gb) {
    Matrix& acc = gb.at(ia);
    for (std::size_t i = 0; i < k.size(); ++i) {
      if (!k[i]) continue;
      for (std::size_t j = 0; j < g.cols(); ++j) acc(i, j) += g(0, j) / n;
    }
  });
}

namespace {

// dX = Y * (G - rowsum(G * Y)); zero-weight entries get zero gradient.
Matrix softmax_backward(const Matrix& y, const Matrix& g) {
  Matrix dx(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
    for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
  }
  return dx;
}

}  // namespace

Var softmax_rows(Var a) {
  const std::vector<std::uint8_t> keep(a.cols(), 1);
  return masked_softmax_rows(a, keep);
}

Var masked_softmax_rows(Var a, std::span<const std::uint8_t> keep_cols) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  check_mask("masked_softmax_rows", keep_cols, x.cols());
  if (std::none_of(keep_cols.begin(), keep_cols.end(), [](auto k) { return k != 0; })) {
    throw DomainError("masked_softmax_rows: every column is masked");
  }
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (keep_cols[j]) mx = std::max(mx, x(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (keep_cols[j]) sum += (y(i, j) = std::exp(x(i, j) - mx));
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (keep_cols[j]) y(i, j) /= sum;
  }
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  Matrix saved = y;
  return t.record(std::move(y), inputs, [ia, y = std::move(saved)](const Matrix& g, GradBuffer& gb) {
    gb.accumulate(ia, softmax_backward(y, g));
  });
}

Var zero_rows(Var a, std::span<const std::uint8_t> keep) {
  Tape& t = tape_of(a);
  check_mask("zero_rows", keep, a.rows());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    if (!keep[i]) std::fill(out.row(i).begin(), out.row(i).end(), 0.0);
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return t.record(std::move(out), inputs, [ia, k = copy_mask(keep)](const Matrix& g, GradBuffer& gb) {
    Matrix& acc = gb.at(ia);
    for (std::size_t i = 0; i < k.size(); ++i) {
      if (!k[i]) continue;
      for (std::size_t j = 0; j < g.cols(); ++j) acc(i, j) += g(i, j);
    }
  });
}

Var l2_normalize_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (double v : x.row(i)) sq += v * v;
    norms[i] = std::sqrt(sq);
    if (!(norms[i] > 0.0)) throw DomainError("degenerate feature: zero-norm row " + std::to_string(i));
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = x(i, j) / norms[i];
  }
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  Matrix saved = y;
  return t.record(std::move(y), inputs,
                  [ia, y = std::move(saved), norms = std::move(norms)](const Matrix& g, GradBuffer& gb) {
                    Matrix& acc = gb.at(ia);
                    for (std::size_t i = 0; i < y.rows(); ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < y.cols(); ++j) dot += y(i, j) * g(i, j);
                      for (std::size_t j = 0; j < y.cols(); ++j)
                        acc(i, j) += (g(i, j) - y(i, j) * dot) / norms[i];
                    }
                  });
}

Var pairwise_distances(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Matrix& x = a.value();
  const Matrix& z = b.value();
  if (x.cols() != z.cols()) {
    throw DomainError("pairwise_distances: shape mismatch " + x.shape() + " vs " + z.shape());
  }
  Matrix d(x.rows(), z.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < z.rows(); ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double diff = x(i, k) - z(j, k);
        sq += diff * diff;
      }
      d(i, j) = std::sqrt(sq);
    }
  const std::size_t ia = a.id(), ib = b.id();
  const Var inputs[] = {a, b};
  Matrix saved = d;
  return t.record(std::move(d), inputs, [&t, ia, ib, d = std::move(saved)](const Matrix& g, GradBuffer& gb) {
    const Matrix& x = t.value(ia);
    const Matrix& z = t.value(ib);
    const bool want_a = gb.wants(ia), want_b = gb.wants(ib);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < z.rows(); ++j) {
        // Subgradient zero at coincident points.
        if (d(i, j) == 0.0 || g(i, j) == 0.0) continue;
        const double w = g(i, j) / d(i, j);
        for (std::size_t k = 0; k < x.cols(); ++k) {
          const double diff = w * (x(i, k) - z(j, k));
          if (want_a) gb.at(ia)(i, k) += diff;
          if (want_b) gb.at(ib)(j, k) -= diff;
        }
      }
  });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  const Var inputs[] = {a};
  return t.record(Matrix(1, 1, s), inputs, [ia](const Matrix& g, GradBuffer& gb) {
    for (double& v : gb.at(ia).data()) v += g(0, 0);
  });
}

Var exhaustive_soft_margin_triplet(Var dist, double gamma) {
  Tape& t = tape_of(dist);
  const Matrix& d = dist.value();
  const std::size_t b = d.rows();
  if (d.cols() != b) throw DomainError("exhaustive_soft_margin_triplet: distance matrix must be square, got " + d.shape());
  if (b < 2) throw DomainError("no negatives available: batch size " + std::to_string(b));
  const double count = 2.0 * static_cast<double>(b) * static_cast<double>(b - 1);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j) continue;
      // Ground anchor i against aerial negative j, then aerial anchor i against ground negative j.
      total += softplus(gamma * (d(i, i) - d(i, j)));
      total += softplus(gamma * (d(i, i) - d(j, i)));
    }
  const std::size_t id = dist.id();
  const Var inputs[] = {dist};
  return t.record(Matrix(1, 1, total / count), inputs, [&t, id, gamma, count](const Matrix& g, GradBuffer& gb) {
    const Matrix& d = t.value(id);
    Matrix& acc = gb.at(id);
    const double upstream = g(0, 0) * gamma / count;
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) {
        if (i == j) continue;
        const double s1 = upstream * sigmoid(gamma * (d(i, i) - d(i, j)));
        acc(i, i) += s1;
        acc(i, j) -= s1;
        const double s2 = upstream * sigmoid(gamma * (d(i, i) - d(j, i)));
        acc(i, i) += s2;
        acc(j, i) -= s2;
      }
  });
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace seqgeo::ad
