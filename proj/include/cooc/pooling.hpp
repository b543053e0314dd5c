#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "cooc/errors.hpp"
#include "cooc/random.hpp"
#include "cooc/tensor.hpp"

namespace cooc {

/// M x N per-location weights (spatial co-occurrence weights or fixed masks).
template <typename Scalar>
using SpatialWeights = RowMatrix<Scalar>;

/// Length-D per-channel weights.
template <typename Scalar>
using ChannelWeights = Vector<Scalar>;

namespace detail {

// Row-major M x N weights viewed as one weight per location row of a tensor.
template <typename Scalar>
auto location_weights(const SpatialWeights<Scalar>& w) {
  return Eigen::Map<const Vector<Scalar>>(w.data(), w.size());
}

template <typename Scalar>
void require_spatial_shape(const Tensor<Scalar>& t, const SpatialWeights<Scalar>& w,
                           const char* what) {
  if (w.rows() != t.rows() || w.cols() != t.cols())
    throw DimensionError(std::string(what) + ": weights " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + " vs tensor " + to_string(t.shape()));
}

}  // namespace detail

/// Spatial co-occurrence weights. S(i,j) = sum_k C_T(i,j,k), then
/// alpha = (S / ||S||_a)^(1/b).
template <typename Scalar>
SpatialWeights<Scalar> spatial_cooc_weights(const Tensor<Scalar>& c, Scalar a = 2, Scalar b = 2) {
  if (!(a > 0) || !(b > 0)) throw DomainError("power-normalization exponents must be positive");
  const Vector<double> s = c.matrix().template cast<double>().rowwise().sum();
  SpatialWeights<Scalar> alpha(c.rows(), c.cols());
  const double denom = std::pow(s.array().pow(double(a)).sum(), 1.0 / double(a));
  if (denom == 0.0) {
    warn("spatial co-occurrence map is all zero");
    alpha.setZero();
    return alpha;
  }
  Eigen::Map<Vector<Scalar>>(alpha.data(), alpha.size()) =
      (s.array() / denom).pow(1.0 / double(b)).template cast<Scalar>();
  return alpha;
}

/// IDF-like channel weights, beta_k = ln(sum_l V(l) / (eps + V(k))).
template <typename Scalar>
ChannelWeights<Scalar> channel_cooc_weights(const Vector<Scalar>& v, Scalar eps = Scalar(1e-6)) {
  if (!(eps > 0)) throw DomainError("eps must be positive");
  const double total = v.template cast<double>().sum();
  if (total == 0.0) {
    warn("channel co-occurrence vector is all zero");
    return ChannelWeights<Scalar>::Zero(v.size());
  }
  return (total / (double(eps) + v.template cast<double>().array())).log().template cast<Scalar>();
}

/// Top-down prior: row i weighted (M - i) / M, constant across columns.
template <typename Scalar>
SpatialWeights<Scalar> spatial_mask_topdown(Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw DomainError("mask dimensions must be positive");
  SpatialWeights<Scalar> w(rows, cols);
  for (Index i = 0; i < rows; ++i)
    w.row(i).setConstant(static_cast<Scalar>(double(rows - i) / double(rows)));
  return w;
}

/// Center prior: isotropic Gaussian around the map center, sigma = min(M, N) / 3.
template <typename Scalar>
SpatialWeights<Scalar> spatial_mask_center(Index rows, Index cols) {
  if (rows < 1 || cols < 1) throw DomainError("mask dimensions must be positive");
  const double sigma = double(std::min(rows, cols)) / 3.0;
  const double ci = double(rows - 1) / 2.0, cj = double(cols - 1) / 2.0;
  SpatialWeights<Scalar> w(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const double d2 = (i - ci) * (i - ci) + (j - cj) * (j - cj);
      w(i, j) = static_cast<Scalar>(std::exp(-d2 / (2.0 * sigma * sigma)));
    }
  }
  return w;
}

/// A'(i,j,k) = mask(i,j) * A(i,j,k).
template <typename Scalar>
Tensor<Scalar> masked_tensor(const Tensor<Scalar>& t,
                             const std::type_identity_t<SpatialWeights<Scalar>>& mask) {
  detail::require_spatial_shape(t, mask, "masked_tensor");
  RowMatrix<Scalar> out = detail::location_weights(mask).asDiagonal() * t.matrix();
  return Tensor<Scalar>(t.shape(), std::move(out));
}

namespace detail {

template <typename Scalar>
Descriptor<Scalar> weighted_pool(const Tensor<Scalar>& t, const SpatialWeights<Scalar>& alpha,
                                 const ChannelWeights<Scalar>& beta,
                                 const SpatialWeights<Scalar>* mask) {
  require_spatial_shape(t, alpha, "linear_weighted_pool");
  if (beta.size() != t.depth())
    throw DimensionError("channel weights length does not match tensor depth");
  Vector<Scalar> w = location_weights(alpha);
  if (mask) {
    require_spatial_shape(t, *mask, "linear_weighted_pool");
    w.array() *= location_weights(*mask).array();
  }
  Descriptor<Scalar> f = t.matrix().transpose() * w;
  f.array() *= beta.array();
  return f;
}

}  // namespace detail

/// f(k) = beta_k * sum_{i,j} alpha(i,j) * A(i,j,k). Not normalized.
template <typename Scalar>
Descriptor<Scalar> linear_weighted_pool(const Tensor<Scalar>& t,
                                        const std::type_identity_t<SpatialWeights<Scalar>>& alpha,
                                        const std::type_identity_t<ChannelWeights<Scalar>>& beta) {
  return detail::weighted_pool(t, alpha, beta, static_cast<const SpatialWeights<Scalar>*>(nullptr));
}

/// As above with a fixed spatial prior multiplied into alpha.
template <typename Scalar>
Descriptor<Scalar> linear_weighted_pool(const Tensor<Scalar>& t,
                                        const std::type_identity_t<SpatialWeights<Scalar>>& alpha,
                                        const std::type_identity_t<ChannelWeights<Scalar>>& beta,
                                        const std::type_identity_t<SpatialWeights<Scalar>>& mask) {
  return detail::weighted_pool(t, alpha, beta, &mask);
}

/// Channel means over all locations.
template <typename Scalar>
Descriptor<Scalar> sum_pool(const Tensor<Scalar>& t) {
  return t.matrix().colwise().mean().transpose();
}

/// B(k, w) = sum_{i,j} A(i,j,k) * C(i,j,w).
template <typename Scalar>
RowMatrix<Scalar> bilinear_pool(const Tensor<Scalar>& t, const Tensor<Scalar>& c) {
  require_same_shape(t.shape(), c.shape(), "bilinear_pool");
  return t.matrix().transpose() * c.matrix();
}

/// Count-sketch hashes and signs for the two branches of compact bilinear
/// pooling. Fully determined by (seed, input_dim, output_dim).
struct SketchParams {
  Index input_dim = 0;
  Index output_dim = 0;
  std::uint64_t seed = 0;
  std::vector<Index> hash1, hash2;
  std::vector<std::int8_t> sign1, sign2;

  bool operator==(const SketchParams&) const = default;
};

/// Draws, from one SplitMix64 stream seeded with `seed`: D hashes for branch 1
/// (value mod d), D signs for branch 1 (LSB 1 -> +1, 0 -> -1), then the same
/// for branch 2.
inline SketchParams make_sketch(Index input_dim, Index output_dim, std::uint64_t seed) {
  if (input_dim < 1 || output_dim < 1) throw DomainError("sketch dimensions must be positive");
  SketchParams p{input_dim, output_dim, seed, {}, {}, {}, {}};
  SplitMix64 rng(seed);
  const auto d = static_cast<std::uint64_t>(output_dim);
  auto draw = [&](std::vector<Index>& hash, std::vector<std::int8_t>& sign) {
    hash.resize(static_cast<std::size_t>(input_dim));
    sign.resize(static_cast<std::size_t>(input_dim));
    for (auto& h : hash) h = static_cast<Index>(rng() % d);
    for (auto& s : sign) s = (rng() & 1u) ? std::int8_t{1} : std::int8_t{-1};
  };
  draw(p.hash1, p.sign1);
  draw(p.hash2, p.sign2);
  return p;
}

/// Psi(x)(m) = sum_{k : h(k) = m} s(k) x(k).
template <typename Derived>
Vector<typename Derived::Scalar> count_sketch(const Eigen::MatrixBase<Derived>& x,
                                              const std::vector<Index>& hash,
                                              const std::vector<std::int8_t>& sign, Index dim) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out = Vector<Scalar>::Zero(dim);
  for (Index k = 0; k < x.size(); ++k)
    out(hash[static_cast<std::size_t>(k)]) += Scalar(sign[static_cast<std::size_t>(k)]) * x(k);
  return out;
}

/// (x (*) y)(m) = sum_n x(n) y((m - n) mod d), by direct O(d^2) accumulation.
template <typename Scalar>
Vector<Scalar> circular_convolve(const Vector<Scalar>& x, const Vector<Scalar>& y) {
  const Index d = x.size();
  Vector<Scalar> out = Vector<Scalar>::Zero(d);
  for (Index n = 0; n < d; ++n) {
    if (x(n) == Scalar(0)) continue;
    for (Index m = 0; m < d; ++m) out((n + m) % d) += x(n) * y(m);
  }
  return out;
}

enum class SketchMethod {
  Direct,   // per-location sketches, direct circular convolution
  Fourier,  // per-location sketches, product of spectra, one inverse transform
  Gram,     // exact bilinear matrix scattered through the joint hash
};

/// Compact bilinear pooling of A (optionally spatially masked) with C_T:
/// z = sum_{i,j} Psi_1(mask * A_ij) (*) Psi_2(C_ij). Every method computes the
/// same quantity; they differ only in cost.
template <typename Scalar>
Descriptor<Scalar> compact_bilinear_pool(const Tensor<Scalar>& t, const Tensor<Scalar>& c,
                                         const SketchParams& p,
                                         const std::type_identity_t<SpatialWeights<Scalar>>* mask = nullptr,
                                         SketchMethod method = SketchMethod::Gram) {
  require_same_shape(t.shape(), c.shape(), "compact_bilinear_pool");
  if (p.input_dim != t.depth())
    throw DimensionError("sketch input dim " + std::to_string(p.input_dim) +
                         " does not match tensor depth " + std::to_string(t.depth()));
  RowMatrix<Scalar> x = t.matrix();
  if (mask) {
    detail::require_spatial_shape(t, *mask, "compact_bilinear_pool");
    x = detail::location_weights(*mask).asDiagonal() * x;
  }
  const Index d = p.output_dim;
  const auto& y = c.matrix();

  // Eigen's real FFT does not support length 1; the convolution is a product there.
  if (method == SketchMethod::Fourier && d == 1) method = SketchMethod::Direct;

  switch (method) {
    case SketchMethod::Direct: {
      Descriptor<Scalar> z = Descriptor<Scalar>::Zero(d);
      for (Index r = 0; r < x.rows(); ++r) {
        z += circular_convolve<Scalar>(count_sketch(x.row(r).transpose(), p.hash1, p.sign1, d),
                                       count_sketch(y.row(r).transpose(), p.hash2, p.sign2, d));
      }
      return z;
    }
    case SketchMethod::Fourier: {
      Eigen::FFT<Scalar> fft;
      std::vector<std::complex<Scalar>> acc(static_cast<std::size_t>(d));
      std::vector<std::complex<Scalar>> fx, fy;
      std::vector<Scalar> buf(static_cast<std::size_t>(d));
      for (Index r = 0; r < x.rows(); ++r) {
        const Vector<Scalar> sx = count_sketch(x.row(r).transpose(), p.hash1, p.sign1, d);
        const Vector<Scalar> sy = count_sketch(y.row(r).transpose(), p.hash2, p.sign2, d);
        std::copy(sx.data(), sx.data() + d, buf.begin());
        fft.fwd(fx, buf);
        std::copy(sy.data(), sy.data() + d, buf.begin());
        fft.fwd(fy, buf);
        for (std::size_t m = 0; m < acc.size(); ++m) acc[m] += fx[m] * fy[m];
      }
      fft.inv(buf, acc);
      return Eigen::Map<const Vector<Scalar>>(buf.data(), d);
    }
    case SketchMethod::Gram:
    default: {
      const RowMatrix<Scalar> b = x.transpose() * y;
      Descriptor<Scalar> z = Descriptor<Scalar>::Zero(d);
      for (Index k = 0; k < b.rows(); ++k) {
        const auto hk = p.hash1[static_cast<std::size_t>(k)];
        const Scalar sk = p.sign1[static_cast<std::size_t>(k)];
        for (Index w = 0; w < b.cols(); ++w) {
          z((hk + p.hash2[static_cast<std::size_t>(w)]) % d) +=
              sk * Scalar(p.sign2[static_cast<std::size_t>(w)]) * b(k, w);
        }
      }
      return z;
    }
  }
}

template <typename Scalar>
Descriptor<Scalar> compact_bilinear_pool(const Tensor<Scalar>& t, const Tensor<Scalar>& c,
                                         const SketchParams& p,
                                         const std::type_identity_t<SpatialWeights<Scalar>>& mask,
                                         SketchMethod method = SketchMethod::Gram) {
  return compact_bilinear_pool(t, c, p, &mask, method);
}

/// sign(x) * sqrt(|x|), elementwise.
template <typename Derived>
auto signed_sqrt(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out = v.array().sign() * v.array().abs().sqrt();
  return out;
}

}  // namespace cooc
