#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cooc/errors.hpp"
#include "cooc/tensor.hpp"

namespace cooc {

/// Brute-force index of l2-normalized descriptors, one row per id.
template <typename Scalar>
class DescriptorIndex {
 public:
  DescriptorIndex() = default;

  DescriptorIndex(std::vector<std::string> ids, RowMatrix<Scalar> matrix)
      : ids_(std::move(ids)), matrix_(std::move(matrix)) {
    if (Index(ids_.size()) != matrix_.rows())
      throw DimensionError("index id count does not match matrix rows");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids_) {
      if (!seen.insert(id).second) throw DomainError("duplicate descriptor id '" + id + "'");
    }
  }

  Index size() const { return Index(ids_.size()); }
  Index dim() const { return matrix_.cols(); }
  bool empty() const { return ids_.empty(); }

  const std::vector<std::string>& ids() const { return ids_; }
  const RowMatrix<Scalar>& matrix() const { return matrix_; }
  auto row(Index r) const { return matrix_.row(r); }

 private:
  std::vector<std::string> ids_;
  RowMatrix<Scalar> matrix_;
};

template <typename Scalar>
struct Neighbor {
  std::string id;
  Scalar distance;
  Index row;  // position in the index
};

/// Ascending distance; ties ordered by id.
template <typename Scalar>
using RankedList = std::vector<Neighbor<Scalar>>;

/// Builds an index from (id, descriptor) entries, l2-normalizing each row.
template <typename Scalar>
DescriptorIndex<Scalar> build_index(
    std::span<const std::pair<std::string, Descriptor<Scalar>>> entries) {
  if (entries.empty()) return {};
  const Index dim = entries[0].second.size();
  std::vector<std::string> ids;
  ids.reserve(entries.size());
  RowMatrix<Scalar> matrix(Index(entries.size()), dim);
  for (std::size_t r = 0; r < entries.size(); ++r) {
    const auto& [id, d] = entries[r];
    if (d.size() != dim) throw DimensionError("descriptor '" + id + "' differs in dimension");
    ids.push_back(id);
    matrix.row(Index(r)) = l2norm(d).transpose();
  }
  return DescriptorIndex<Scalar>(std::move(ids), std::move(matrix));
}

/// Full ranking of the index by Euclidean distance to q.
template <typename Scalar>
RankedList<Scalar> query(const DescriptorIndex<Scalar>& idx, const Descriptor<Scalar>& q) {
  if (idx.empty()) return {};
  if (q.size() != idx.dim())
    throw DimensionError("query dim " + std::to_string(q.size()) + " does not match index dim " +
                         std::to_string(idx.dim()));
  const Vector<Scalar> dist = (idx.matrix().rowwise() - q.transpose()).rowwise().norm();
  RankedList<Scalar> out;
  out.reserve(std::size_t(idx.size()));
  for (Index r = 0; r < idx.size(); ++r) out.push_back({idx.ids()[std::size_t(r)], dist(r), r});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  });
  return out;
}

namespace detail {

template <typename Scalar>
std::size_t clamp_expansion(const DescriptorIndex<Scalar>& idx, const RankedList<Scalar>& ranked,
                            Index n) {
  if (n < 1) throw DomainError("query expansion needs n >= 1");
  const auto available = std::min<std::size_t>(std::size_t(idx.size()), ranked.size());
  if (std::size_t(n) > available) {
    warn("query expansion n=" + std::to_string(n) + " clamped to " + std::to_string(available));
    return available;
  }
  return std::size_t(n);
}

}  // namespace detail

/// Average query expansion: l2norm((q + sum of the top-n neighbours) / (n + 1)).
/// The 1/(n+1) factor cancels under normalization and is not applied, which
/// keeps the result bit-identical to alpha_qe with alpha = 0.
template <typename Scalar>
Descriptor<Scalar> average_qe(const DescriptorIndex<Scalar>& idx, const Descriptor<Scalar>& q,
                              const RankedList<Scalar>& ranked, Index n = 10) {
  const std::size_t count = detail::clamp_expansion(idx, ranked, n);
  Descriptor<Scalar> sum = q;
  for (std::size_t i = 0; i < count; ++i) sum += idx.row(ranked[i].row).transpose();
  return l2norm(sum);
}

/// alpha-weighted query expansion: l2norm(q + sum_i max(0, <q, x_i>)^alpha x_i).
template <typename Scalar>
Descriptor<Scalar> alpha_qe(const DescriptorIndex<Scalar>& idx, const Descriptor<Scalar>& q,
                            const RankedList<Scalar>& ranked, Index n = 50, Scalar alpha = 3) {
  if (alpha < 0) throw DomainError("alpha must be nonnegative");
  const std::size_t count = detail::clamp_expansion(idx, ranked, n);
  Descriptor<Scalar> sum = q;
  for (std::size_t i = 0; i < count; ++i) {
    const auto x = idx.row(ranked[i].row);
    const Scalar sim = std::max(Scalar(0), Scalar(x.dot(q.transpose())));
    const Scalar weight = alpha == Scalar(0) ? Scalar(1) : std::pow(sim, alpha);
    if (weight == Scalar(1)) {
      sum += x.transpose();
    } else {
      sum += weight * x.transpose();
    }
  }
  return l2norm(sum);
}

}  // namespace cooc
