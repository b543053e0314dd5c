#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cooc/errors.hpp"
#include "cooc/tensor.hpp"

namespace cooc {

/// D x D x S x S co-occurrence convolution kernel, S = 2r + 1.
///
/// Weight (a, b, row, col) couples input channel b at spatial offset
/// (row - r, col - r) into output channel a. Storage is one D x D "tap" per
/// spatial offset, stacked row-major over the window, so a whole tap can be
/// applied to a slab of locations with one matrix product.
template <typename T>
class CoocFilter {
 public:
  using Scalar = T;

  /// Off-diagonal and diagonal values of a filter whose taps are all equal to
  /// off * (ones - I) + diag * I.
  struct Uniform {
    Scalar off;
    Scalar diag;
  };

  CoocFilter(Index depth, Index radius) : depth_(depth), radius_(radius) {
    if (depth < 1) throw DomainError("filter depth must be positive");
    if (radius < 0) throw DomainError("filter radius must be nonnegative");
    weights_.setZero(taps() * depth, depth);
  }

  Index depth() const { return depth_; }
  Index radius() const { return radius_; }
  Index window() const { return 2 * radius_ + 1; }
  Index taps() const { return window() * window(); }

  /// D x D slice for spatial offset (du, dv), each in [-r, r].
  auto tap(Index du, Index dv) const {
    return weights_.middleRows(tap_index(du, dv) * depth_, depth_);
  }

  Scalar operator()(Index out, Index in, Index row, Index col) const {
    return weights_((row * window() + col) * depth_ + out, in);
  }

  Scalar& at(Index out, Index in, Index row, Index col) {
    uniform_.reset();
    return weights_((row * window() + col) * depth_ + out, in);
  }

  /// All taps stacked: (S*S*D) x D.
  const RowMatrix<Scalar>& weights() const { return weights_; }

  /// Mutable access; drops the cached uniform structure.
  RowMatrix<Scalar>& mutable_weights() {
    uniform_.reset();
    return weights_;
  }

  /// Set when the filter is known to have the canonical all-taps-equal
  /// structure, which enables the box-sum evaluation in cooc_conv.
  const std::optional<Uniform>& uniform() const { return uniform_; }

  /// Scans the weights and caches the uniform structure if present.
  void detect_structure() {
    uniform_.reset();
    const Scalar diag = weights_(0, 0);
    const Scalar off = depth_ > 1 ? weights_(0, 1) : Scalar(0);
    for (Index t = 0; t < taps(); ++t) {
      for (Index a = 0; a < depth_; ++a) {
        for (Index b = 0; b < depth_; ++b) {
          if (weights_(t * depth_ + a, b) != (a == b ? diag : off)) return;
        }
      }
    }
    uniform_ = Uniform{off, diag};
  }

  template <typename U>
  CoocFilter<U> cast() const {
    CoocFilter<U> out(depth_, radius_);
    out.mutable_weights() = weights_.template cast<U>();
    if (uniform_) out.detect_structure();
    return out;
  }

  bool operator==(const CoocFilter& other) const {
    return depth_ == other.depth_ && radius_ == other.radius_ && weights_ == other.weights_;
  }

 private:
  Index tap_index(Index du, Index dv) const {
    return (du + radius_) * window() + (dv + radius_);
  }

  Index depth_;
  Index radius_;
  RowMatrix<Scalar> weights_;
  std::optional<Uniform> uniform_;
};

/// Canonical co-occurrence filter: every cross-channel weight is 1 and every
/// self-channel weight is `diag_value` (0 for the reference definition, 1e-10
/// as the trainable initialization).
template <typename Scalar>
CoocFilter<Scalar> make_filter(Index depth, Index radius, Scalar diag_value) {
  if (depth < 2) throw DomainError("co-occurrence needs at least two channels");
  CoocFilter<Scalar> f(depth, radius);
  auto& w = f.mutable_weights();
  w.setOnes();
  for (Index t = 0; t < f.taps(); ++t) {
    w.middleRows(t * depth, depth).diagonal().setConstant(diag_value);
  }
  f.detect_structure();
  return f;
}

enum class ConvPath {
  Auto,    // box-sum evaluation for uniform filters, direct otherwise
  Direct,  // tap-by-tap accumulation for any filter
};

namespace detail {

// Valid range [lo, hi) of an index of extent `n` whose neighbour at +shift stays
// inside [0, n).
inline std::pair<Index, Index> valid_range(Index n, Index shift) {
  return {std::max<Index>(0, -shift), std::min<Index>(n, n - shift)};
}

// Zero-padded multi-channel cross-correlation:
// out(i, j, a) = sum_{du,dv,b} W(a, b, du, dv) * x(i + du, j + dv, b).
template <typename Scalar>
RowMatrix<Scalar> correlate_direct(const Tensor<Scalar>& x, const CoocFilter<Scalar>& f) {
  const Index rows = x.rows(), cols = x.cols(), r = f.radius();
  const auto& in = x.matrix();
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(x.locations(), x.depth());
  for (Index du = -r; du <= r; ++du) {
    const auto [i0, i1] = valid_range(rows, du);
    for (Index dv = -r; dv <= r; ++dv) {
      const auto [j0, j1] = valid_range(cols, dv);
      if (j1 <= j0) continue;
      const auto w = f.tap(du, dv);
      for (Index i = i0; i < i1; ++i) {
        out.middleRows(i * cols + j0, j1 - j0).noalias() +=
            in.middleRows((i + du) * cols + j0 + dv, j1 - j0) * w.transpose();
      }
    }
  }
  return out;
}

// Per-channel sum over the (2r+1)^2 window around each location, separable.
template <typename Scalar>
RowMatrix<double> window_sum(const Tensor<Scalar>& x, Index r) {
  const Index rows = x.rows(), cols = x.cols();
  const RowMatrix<double> in = x.matrix().template cast<double>();
  RowMatrix<double> horiz = RowMatrix<double>::Zero(in.rows(), in.cols());
  for (Index i = 0; i < rows; ++i) {
    for (Index dv = -r; dv <= r; ++dv) {
      const auto [j0, j1] = valid_range(cols, dv);
      if (j1 <= j0) continue;
      horiz.middleRows(i * cols + j0, j1 - j0) += in.middleRows(i * cols + j0 + dv, j1 - j0);
    }
  }
  RowMatrix<double> box = RowMatrix<double>::Zero(in.rows(), in.cols());
  for (Index du = -r; du <= r; ++du) {
    const auto [i0, i1] = valid_range(rows, du);
    if (i1 <= i0) continue;
    box.middleRows(i0 * cols, (i1 - i0) * cols) +=
        horiz.middleRows((i0 + du) * cols, (i1 - i0) * cols);
  }
  return box;
}

// Uniform filter: out(p, a) = off * sum_{b != a} box(p, b) + diag * box(p, a).
// The cross-channel sum is formed from prefix and suffix sums, never by
// subtracting the self channel from the total.
template <typename Scalar>
RowMatrix<Scalar> correlate_uniform(const Tensor<Scalar>& x,
                                    const CoocFilter<Scalar>& f) {
  const auto& u = *f.uniform();
  const RowMatrix<double> box = window_sum(x, f.radius());
  const Index depth = x.depth();
  RowMatrix<Scalar> out(x.locations(), depth);
  std::vector<double> suffix(static_cast<std::size_t>(depth) + 1);
  for (Index p = 0; p < box.rows(); ++p) {
    const double* row = box.row(p).data();
    suffix[depth] = 0.0;
    for (Index k = depth - 1; k >= 0; --k) suffix[k] = suffix[k + 1] + row[k];
    double prefix = 0.0;
    for (Index k = 0; k < depth; ++k) {
      const double others = prefix + suffix[k + 1];
      out(p, k) = static_cast<Scalar>(double(u.off) * others + double(u.diag) * row[k]);
      prefix += row[k];
    }
  }
  return out;
}

}  // namespace detail

/// Co-occurrence tensor by convolution:
/// C_T = (conv(A * rho, F) / (D - 1)) * rho with rho = (A > threshold) and
/// zero padding of width r.
template <typename Scalar>
CoocTensor<Scalar> cooc_conv(const Tensor<Scalar>& t, const CoocFilter<Scalar>& f,
                             Scalar threshold, ConvPath path = ConvPath::Auto) {
  if (f.depth() != t.depth())
    throw DimensionError("filter depth " + std::to_string(f.depth()) +
                         " does not match tensor depth " + std::to_string(t.depth()));
  if (t.depth() < 2) throw DomainError("co-occurrence needs at least two channels");
  const BinaryMask mask = threshold_mask(t, threshold);
  const Tensor<Scalar> masked = apply_mask(t, mask);
  RowMatrix<Scalar> out = (path == ConvPath::Auto && f.uniform())
                              ? detail::correlate_uniform(masked, f)
                              : detail::correlate_direct(masked, f);
  out.array() *= mask.matrix().template cast<Scalar>().array() / Scalar(t.depth() - 1);
  return CoocTensor<Scalar>(t.shape(), std::move(out));
}

/// Same, with the threshold set to the mean activation.
template <typename Scalar>
CoocTensor<Scalar> cooc_conv(const Tensor<Scalar>& t, const CoocFilter<Scalar>& f) {
  return cooc_conv(t, f, mean_activation(t));
}

/// Literal evaluation of the co-occurrence definition: for each activation
/// above threshold, sum every other-channel activation above threshold within
/// Chebyshev distance r, divided by D - 1. Self-channel pairs are excluded at
/// every offset. O(M N D^2 r^2); used as the reference for cooc_conv.
template <typename Scalar>
CoocTensor<Scalar> cooc_bruteforce(const Tensor<Scalar>& t, Index radius, Scalar threshold) {
  const Index rows = t.rows(), cols = t.cols(), depth = t.depth();
  if (depth < 2) throw DomainError("co-occurrence needs at least two channels");
  if (radius < 0) throw DomainError("radius must be nonnegative");
  CoocTensor<Scalar> out(t.shape());
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      for (Index k = 0; k < depth; ++k) {
        if (!(t(i, j, k) > threshold)) continue;
        double sum = 0.0;
        for (Index u = std::max<Index>(0, i - radius); u <= std::min(rows - 1, i + radius); ++u) {
          for (Index v = std::max<Index>(0, j - radius); v <= std::min(cols - 1, j + radius); ++v) {
            for (Index w = 0; w < depth; ++w) {
              if (w == k) continue;
              const Scalar a = t(u, v, w);
              if (a > threshold) sum += static_cast<double>(a);
            }
          }
        }
        out(i, j, k) = static_cast<Scalar>(sum / static_cast<double>(depth - 1));
      }
    }
  }
  return out;
}

/// Spatial sum of the co-occurrence tensor per channel.
template <typename Scalar>
Vector<Scalar> channel_cooc_vector(const CoocTensor<Scalar>& c) {
  return c.matrix().colwise().sum().transpose();
}

/// Pairwise Pearson correlation between channel co-occurrence vectors.
/// A constant vector gets a zero row and column (unit diagonal kept).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cooc_correlation_matrix(
    std::span<const Vector<Scalar>> vectors) {
  const Index n = static_cast<Index>(vectors.size());
  if (n < 2) throw DomainError("correlation needs at least two vectors");
  const Index depth = vectors[0].size();
  Eigen::MatrixXd centered(depth, n);
  std::vector<bool> constant(static_cast<std::size_t>(n), false);
  for (Index c = 0; c < n; ++c) {
    const auto& v = vectors[static_cast<std::size_t>(c)];
    if (v.size() != depth) throw DimensionError("co-occurrence vectors differ in length");
    centered.col(c) = v.template cast<double>().array() - v.template cast<double>().mean();
    const double norm = centered.col(c).norm();
    if (norm == 0.0) {
      constant[static_cast<std::size_t>(c)] = true;
      warn("co-occurrence vector " + std::to_string(c) + " has zero variance");
    } else {
      centered.col(c) /= norm;
    }
  }
  Eigen::MatrixXd corr = centered.transpose() * centered;
  for (Index c = 0; c < n; ++c) {
    if (constant[static_cast<std::size_t>(c)]) {
      corr.row(c).setZero();
      corr.col(c).setZero();
    }
    corr(c, c) = 1.0;
  }
  return corr.cast<Scalar>();
}

/// Spatial displacement: dx shifts columns, dy shifts rows.
struct Offset {
  Index dx = 0;
  Index dy = 0;
  bool operator==(const Offset&) const = default;
};

class OffsetSet {
 public:
  explicit OffsetSet(std::vector<Offset> offsets) : offsets_(std::move(offsets)) {
    if (offsets_.empty()) throw DomainError("offset set must not be empty");
  }

  /// Full (2r+1)^2 grid, row-major: dy outer, dx inner.
  static OffsetSet grid(Index radius) {
    if (radius < 0) throw DomainError("radius must be nonnegative");
    std::vector<Offset> out;
    for (Index dy = -radius; dy <= radius; ++dy)
      for (Index dx = -radius; dx <= radius; ++dx) out.push_back({dx, dy});
    return OffsetSet(std::move(out));
  }

  std::span<const Offset> offsets() const { return offsets_; }
  std::size_t size() const { return offsets_.size(); }
  const Offset& operator[](std::size_t i) const { return offsets_[i]; }

 private:
  std::vector<Offset> offsets_;
};

/// max over offsets o of sum_p a^k_p * a^w_{p+o}; out-of-range p+o contributes 0.
template <typename Scalar>
Scalar shih_correlation(const Tensor<Scalar>& t, Index k, Index w, const OffsetSet& offsets) {
  if (k < 0 || k >= t.depth() || w < 0 || w >= t.depth())
    throw DimensionError("channel index out of range");
  double best = 0.0;
  bool first = true;
  for (const Offset& o : offsets.offsets()) {
    const auto [i0, i1] = detail::valid_range(t.rows(), o.dy);
    const auto [j0, j1] = detail::valid_range(t.cols(), o.dx);
    double sum = 0.0;
    for (Index i = i0; i < i1; ++i)
      for (Index j = j0; j < j1; ++j)
        sum += static_cast<double>(t(i, j, k)) * static_cast<double>(t(i + o.dy, j + o.dx, w));
    if (first || sum > best) best = sum;
    first = false;
  }
  return static_cast<Scalar>(best);
}

/// Max-correlation co-occurrence tensor adapted to M x N x D: for every ordered
/// channel pair (k, w) pick the offset maximizing the correlation (first one on
/// ties), form the map a^k_p * a^w_{p+o*}, and sum the maps over w.
template <typename Scalar>
CoocTensor<Scalar> shih_cooc_tensor(const Tensor<Scalar>& t, const OffsetSet& offsets) {
  const Index rows = t.rows(), cols = t.cols(), depth = t.depth();
  const auto& a = t.matrix();

  // Correlation of every channel pair at every offset via one Gram product each.
  RowMatrix<Scalar> best(depth, depth);
  Eigen::Matrix<std::size_t, Eigen::Dynamic, Eigen::Dynamic> arg(depth, depth);
  RowMatrix<Scalar> shifted(t.locations(), depth);
  RowMatrix<Scalar> gram(depth, depth);
  for (std::size_t n = 0; n < offsets.size(); ++n) {
    const Offset& o = offsets[n];
    shifted.setZero();
    const auto [i0, i1] = detail::valid_range(rows, o.dy);
    const auto [j0, j1] = detail::valid_range(cols, o.dx);
    if (j1 > j0) {
      for (Index i = i0; i < i1; ++i)
        shifted.middleRows(i * cols + j0, j1 - j0) =
            a.middleRows((i + o.dy) * cols + j0 + o.dx, j1 - j0);
    }
    gram.noalias() = a.transpose() * shifted;
    if (n == 0) {
      best = gram;
      arg.setZero();
      continue;
    }
    for (Index k = 0; k < depth; ++k) {
      for (Index w = 0; w < depth; ++w) {
        if (gram(k, w) > best(k, w)) {
          best(k, w) = gram(k, w);
          arg(k, w) = n;
        }
      }
    }
  }

  // sum_w a^w_{p + o*(k, w)}, channel-major so every shifted run is contiguous.
  const RowMatrix<Scalar> channels = a.transpose();
  RowMatrix<Scalar> gathered = RowMatrix<Scalar>::Zero(depth, t.locations());
  for (Index k = 0; k < depth; ++k) {
    auto dst = gathered.row(k);
    for (Index w = 0; w < depth; ++w) {
      const Offset& o = offsets[arg(k, w)];
      const auto [i0, i1] = detail::valid_range(rows, o.dy);
      const auto [j0, j1] = detail::valid_range(cols, o.dx);
      if (j1 <= j0) continue;
      const auto src = channels.row(w);
      for (Index i = i0; i < i1; ++i)
        dst.segment(i * cols + j0, j1 - j0) +=
            src.segment((i + o.dy) * cols + j0 + o.dx, j1 - j0);
    }
  }
  RowMatrix<Scalar> out = a.array() * gathered.transpose().array();
  return CoocTensor<Scalar>(t.shape(), std::move(out));
}

}  // namespace cooc
