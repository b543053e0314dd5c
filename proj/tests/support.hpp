#pragma once

// Shared helpers for the test suites: random generators, a scratch
// directory, warning capture and independent reference implementations.

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "cooc/cooc.hpp"
#include "cooc/errors.hpp"
#include "cooc/tensor.hpp"
#include "cooc/trainer.hpp"

namespace cooc::test {

namespace fs = std::filesystem;

inline fs::path fixtures() { return fs::path(COOC_FIXTURES); }

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("cooc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Counts warnings emitted while alive.
class WarningCapture {
 public:
  WarningCapture() {
    previous_ = set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_handler(previous_); }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  std::vector<std::string> messages;

 private:
  WarningHandler previous_;
};

template <typename Scalar>
Tensor<Scalar> uniform_tensor(const Shape& shape, std::mt19937_64& rng, double lo = 0.0,
                              double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = Scalar(dist(rng));
  return t;
}

/// Post-ReLU-like activations: roughly half exact zeros.
template <typename Scalar>
Tensor<Scalar> relu_tensor(const Shape& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = Scalar(std::max(0.0, dist(rng)));
  return t;
}

template <typename Scalar>
Vector<Scalar> random_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector<Scalar> v(n);
  for (Index i = 0; i < n; ++i) v(i) = Scalar(dist(rng));
  return v;
}

/// Synthetic class-structured activations: class `cls` lights channels
/// [cls * group, (cls + 1) * group) together inside a square blob at a random
/// position, over weak uniform noise on every channel.
template <typename Scalar>
Tensor<Scalar> cluster_tensor(const Shape& shape, Index cls, Index group, std::mt19937_64& rng,
                              double noise = 0.3, Index blob = 2) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = Scalar(noise * u(rng));
  std::uniform_int_distribution<Index> row(0, shape.rows - blob), col(0, shape.cols - blob);
  const Index r0 = row(rng), c0 = col(rng);
  for (Index i = r0; i < r0 + blob; ++i)
    for (Index j = c0; j < c0 + blob; ++j)
      for (Index k = cls * group; k < (cls + 1) * group; ++k) t(i, j, k) += Scalar(1.0 + u(rng));
  return t;
}

inline double relative_error(double got, double want) {
  const double denom = std::max(std::abs(want), 1e-12);
  return std::abs(got - want) / denom;
}

/// Largest elementwise relative error, with exact zeros required to match.
template <typename A, typename B>
double max_relative_error(const Eigen::MatrixBase<A>& got, const Eigen::MatrixBase<B>& want) {
  double worst = 0.0;
  for (Index r = 0; r < want.rows(); ++r) {
    for (Index c = 0; c < want.cols(); ++c) {
      const double g = double(got(r, c)), w = double(want(r, c));
      if (w == 0.0) {
        if (g != 0.0) worst = std::max(worst, std::abs(g) / 1e-12);
        continue;
      }
      worst = std::max(worst, std::abs(g - w) / std::abs(w));
    }
  }
  return worst;
}

/// Straightforward nested-loop max-correlation co-occurrence tensor, written
/// independently of shih_cooc_tensor (no Gram products, no channel-major
/// gather).
inline Tensor<double> shih_reference(const Tensor<double>& t, const std::vector<Offset>& offsets) {
  const Index M = t.rows(), N = t.cols(), D = t.depth();
  auto at = [&](Index i, Index j, Index k) {
    return (i < 0 || i >= M || j < 0 || j >= N) ? 0.0 : t(i, j, k);
  };
  Tensor<double> out(t.shape());
  for (Index k = 0; k < D; ++k) {
    for (Index w = 0; w < D; ++w) {
      double best = -std::numeric_limits<double>::infinity();
      Offset arg{};
      for (const Offset& o : offsets) {
        double c = 0.0;
        for (Index i = 0; i < M; ++i)
          for (Index j = 0; j < N; ++j) c += t(i, j, k) * at(i + o.dy, j + o.dx, w);
        if (c > best) {
          best = c;
          arg = o;
        }
      }
      for (Index i = 0; i < M; ++i)
        for (Index j = 0; j < N; ++j) out(i, j, k) += t(i, j, k) * at(i + arg.dy, j + arg.dx, w);
    }
  }
  return out;
}

struct GradientCheck {
  double max_relative_error = 0;
  std::size_t checked = 0;  // entries with |g| above the floor
};

/// Compares grad_filter against central finite differences of the pair loss
/// over every filter weight.
inline GradientCheck gradient_check(const PairSample<double>& pair, const CoocFilter<double>& f,
                                    const SketchParams& p, double tau, double h = 1e-4,
                                    double floor = 1e-8) {
  const auto analytic = grad_filter(pair, f, p, tau).grad;
  auto loss = [&](const CoocFilter<double>& g) {
    return contrastive_loss(forward_descriptor(pair.a, g, p), forward_descriptor(pair.b, g, p),
                            pair.label, tau);
  };
  GradientCheck out;
  CoocFilter<double> probe = f;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double g = analytic.data()[i];
    if (std::abs(g) <= floor) continue;
    const double w = f.weights().data()[i];
    probe.mutable_weights().data()[i] = w + h;
    const double up = loss(probe);
    probe.mutable_weights().data()[i] = w - h;
    const double down = loss(probe);
    probe.mutable_weights().data()[i] = w;
    const double fd = (up - down) / (2.0 * h);
    out.max_relative_error = std::max(out.max_relative_error, std::abs(fd - g) / std::abs(g));
    ++out.checked;
  }
  return out;
}

/// Canonical filter with every weight jittered, so no structure is shared
/// across taps.
inline CoocFilter<double> jittered_filter(Index depth, Index radius, std::mt19937_64& rng,
                                          double spread = 0.5) {
  auto f = make_filter<double>(depth, radius, 1e-10);
  std::uniform_real_distribution<double> u(-spread, spread);
  for (Index i = 0; i < f.weights().size(); ++i) f.mutable_weights().data()[i] += u(rng);
  return f;
}

}  // namespace cooc::test
