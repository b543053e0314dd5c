#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cooc/errors.hpp"
#include "cooc/tensor.hpp"

namespace cooc {

/// PCA whitening learned from an auxiliary descriptor set.
template <typename Scalar>
struct WhiteningModel {
  Vector<Scalar> mean;           // input_dim
  RowMatrix<Scalar> projection;  // output_dim x input_dim, orthonormal rows
  Vector<Scalar> eigenvalues;    // output_dim, descending, positive

  Index input_dim() const { return mean.size(); }
  Index output_dim() const { return eigenvalues.size(); }
};

inline constexpr double kMinEigenvalue = 1e-12;

/// Centers the samples, eigendecomposes their covariance and keeps the top
/// `out_dim` components. Each component is signed so that its
/// largest-magnitude coordinate is positive. When there are fewer samples than
/// dimensions the decomposition runs on the n x n Gram matrix instead.
template <typename Scalar>
WhiteningModel<Scalar> fit_whitening(std::span<const Descriptor<Scalar>> descs, Index out_dim) {
  const Index n = static_cast<Index>(descs.size());
  if (out_dim < 1) throw DomainError("whitening output dimension must be positive");
  if (n < out_dim + 1)
    throw DomainError("whitening to " + std::to_string(out_dim) + " dims needs at least " +
                      std::to_string(out_dim + 1) + " descriptors, got " + std::to_string(n));
  const Index dim = descs[0].size();
  if (out_dim > dim)
    throw DomainError("whitening output dimension exceeds descriptor dimension");

  Eigen::MatrixXd x(n, dim);
  for (Index r = 0; r < n; ++r) {
    const auto& d = descs[static_cast<std::size_t>(r)];
    if (d.size() != dim) throw DimensionError("descriptors differ in dimension");
    x.row(r) = d.template cast<double>().transpose();
  }
  const Eigen::VectorXd mean = x.colwise().mean().transpose();
  x.rowwise() -= mean.transpose();

  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns in input space
  if (dim <= n) {
    const Eigen::MatrixXd cov = (x.transpose() * x) / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    values = solver.eigenvalues();
    vectors = solver.eigenvectors();
  } else {
    const Eigen::MatrixXd gram = (x * x.transpose()) / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    values = solver.eigenvalues();
    vectors = x.transpose() * solver.eigenvectors();
    for (Index c = 0; c < vectors.cols(); ++c) {
      const double norm = vectors.col(c).norm();
      if (norm > 0) vectors.col(c) /= norm;
    }
  }

  std::vector<Index> kept;
  for (Index c = values.size() - 1; c >= 0 && Index(kept.size()) < out_dim; --c) {
    if (values(c) < kMinEigenvalue) {
      warn("whitening: dropping component with eigenvalue " + std::to_string(values(c)));
      break;
    }
    kept.push_back(c);
  }
  if (kept.empty()) throw DomainError("whitening: descriptors have no variance");
  if (Index(kept.size()) < out_dim)
    warn("whitening: output dimension reduced to " + std::to_string(kept.size()));

  WhiteningModel<Scalar> model;
  model.mean = mean.cast<Scalar>();
  model.projection.resize(static_cast<Index>(kept.size()), dim);
  model.eigenvalues.resize(static_cast<Index>(kept.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    Eigen::VectorXd v = vectors.col(kept[r]);
    Index peak = 0;
    v.cwiseAbs().maxCoeff(&peak);
    if (v(peak) < 0) v = -v;
    model.projection.row(static_cast<Index>(r)) = v.cast<Scalar>().transpose();
    model.eigenvalues(static_cast<Index>(r)) = static_cast<Scalar>(values(kept[r]));
  }
  return model;
}

/// diag(1/sqrt(lambda)) * P * (d - mean), before the final l2 normalization.
template <typename Scalar>
Descriptor<Scalar> whiten(const WhiteningModel<Scalar>& m, const Descriptor<Scalar>& d) {
  if (d.size() != m.input_dim())
    throw DimensionError("descriptor dim " + std::to_string(d.size()) +
                         " does not match whitening input dim " + std::to_string(m.input_dim()));
  Descriptor<Scalar> y = m.projection * (d - m.mean);
  y.array() /= m.eigenvalues.array().sqrt();
  return y;
}

template <typename Scalar>
Descriptor<Scalar> apply_whitening(const WhiteningModel<Scalar>& m, const Descriptor<Scalar>& d) {
  return l2norm(whiten(m, d));
}

/// Mean of per-scale descriptors, l2-normalized.
template <typename Scalar>
Descriptor<Scalar> multiscale_aggregate(std::span<const Descriptor<Scalar>> descs) {
  if (descs.empty()) throw DomainError("multiscale aggregation needs at least one descriptor");
  Descriptor<Scalar> sum = descs[0];
  for (std::size_t i = 1; i < descs.size(); ++i) {
    if (descs[i].size() != sum.size()) throw DimensionError("descriptors differ in dimension");
    sum += descs[i];
  }
  return l2norm(sum / Scalar(descs.size()));
}

}  // namespace cooc
