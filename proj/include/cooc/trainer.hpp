#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "cooc/cooc.hpp"
#include "cooc/errors.hpp"
#include "cooc/pooling.hpp"
#include "cooc/random.hpp"
#include "cooc/tensor.hpp"

namespace cooc {

template <typename Scalar>
struct PairSample {
  Tensor<Scalar> a;
  Tensor<Scalar> b;
  int label = 0;  // 1: same class
};

struct TrainConfig {
  double tau = 0.7;
  double learning_rate = 1e-9;
  double beta1 = 0.85;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 5;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  Index radius = 4;
  Index sketch_dim = 8192;
  double diag_init = 1e-10;

  void validate() const {
    if (!(tau > 0)) throw DomainError("margin tau must be positive");
    if (!(learning_rate >= 0)) throw DomainError("learning rate must be nonnegative");
    if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1))
      throw DomainError("Adam betas must lie in (0, 1)");
    if (!(adam_eps > 0)) throw DomainError("Adam epsilon must be positive");
    if (batch_size == 0) throw DomainError("batch size must be positive");
    if (!(validation_fraction >= 0 && validation_fraction < 1))
      throw DomainError("validation fraction must lie in [0, 1)");
    if (radius < 0) throw DomainError("radius must be nonnegative");
    if (sketch_dim < 1) throw DomainError("sketch dimension must be positive");
  }
};

template <typename Scalar>
struct AdamState {
  RowMatrix<Scalar> m;
  RowMatrix<Scalar> v;
  std::uint64_t step = 0;

  explicit AdamState(const CoocFilter<Scalar>& f)
      : m(RowMatrix<Scalar>::Zero(f.weights().rows(), f.weights().cols())),
        v(RowMatrix<Scalar>::Zero(f.weights().rows(), f.weights().cols())) {}
};

/// Intermediates of one CoOcNET branch kept for the backward pass.
template <typename Scalar>
struct ForwardPass {
  BinaryMask mask;
  Tensor<Scalar> masked;   // A * rho
  Tensor<Scalar> cooc;     // C_T
  Descriptor<Scalar> raw;  // compact bilinear vector before l2
  Descriptor<Scalar> descriptor;
  Scalar raw_norm = 0;
};

template <typename Scalar>
ForwardPass<Scalar> forward(const Tensor<Scalar>& t, const CoocFilter<Scalar>& f,
                            const SketchParams& p) {
  ForwardPass<Scalar> out;
  const Scalar threshold = mean_activation(t);
  out.mask = threshold_mask(t, threshold);
  out.masked = apply_mask(t, out.mask);
  out.cooc = cooc_conv(t, f, threshold);
  out.raw = compact_bilinear_pool(t, out.cooc, p);
  out.raw_norm = out.raw.norm();
  out.descriptor = l2norm(out.raw);
  return out;
}

/// l2norm(compact_bilinear_pool(A, cooc_conv(A, F, mean(A)))).
template <typename Scalar>
Descriptor<Scalar> forward_descriptor(const Tensor<Scalar>& t, const CoocFilter<Scalar>& f,
                                      const SketchParams& p) {
  return forward(t, f, p).descriptor;
}

/// Y d^2 + (1 - Y) max(tau - d, 0)^2 with d = ||fa - fb||.
template <typename Scalar>
Scalar contrastive_loss(const Descriptor<Scalar>& fa, const Descriptor<Scalar>& fb, int label,
                        Scalar tau) {
  if (fa.size() != fb.size()) throw DimensionError("descriptor dimensions differ");
  const Scalar d = (fa - fb).norm();
  if (label == 1) return d * d;
  const Scalar hinge = std::max(tau - d, Scalar(0));
  return hinge * hinge;
}

template <typename Scalar>
struct LossGradient {
  Scalar loss = 0;
  RowMatrix<Scalar> grad;  // shaped like CoocFilter::weights()
  bool degenerate = false;  // a descriptor was the zero vector
};

namespace detail {

// Accumulates dL/dF for one branch given dL/d(descriptor).
template <typename Scalar>
void backprop_branch(const Tensor<Scalar>& t, const ForwardPass<Scalar>& fp,
                     const Descriptor<Scalar>& grad_desc, const CoocFilter<Scalar>& f,
                     const SketchParams& p, RowMatrix<Scalar>& grad) {
  if (fp.raw_norm == Scalar(0)) return;
  const Descriptor<Scalar>& y = fp.descriptor;
  const Descriptor<Scalar> grad_raw = (grad_desc - y * y.dot(grad_desc)) / fp.raw_norm;

  // The sketch is linear in the bilinear matrix B = A^T C, B(k,w) landing in
  // bin (h1(k) + h2(w)) mod d with sign s1(k) s2(w).
  const Index depth = t.depth(), d = p.output_dim;
  RowMatrix<Scalar> grad_b(depth, depth);
  for (Index k = 0; k < depth; ++k) {
    const auto hk = p.hash1[std::size_t(k)];
    const Scalar sk = p.sign1[std::size_t(k)];
    for (Index w = 0; w < depth; ++w)
      grad_b(k, w) = sk * Scalar(p.sign2[std::size_t(w)]) * grad_raw((hk + p.hash2[std::size_t(w)]) % d);
  }
  RowMatrix<Scalar> grad_conv = t.matrix() * grad_b;
  grad_conv.array() *= fp.mask.matrix().template cast<Scalar>().array() / Scalar(depth - 1);

  const Index rows = t.rows(), cols = t.cols(), r = f.radius();
  const auto& in = fp.masked.matrix();
  for (Index du = -r; du <= r; ++du) {
    const auto [i0, i1] = valid_range(rows, du);
    for (Index dv = -r; dv <= r; ++dv) {
      const auto [j0, j1] = valid_range(cols, dv);
      if (j1 <= j0) continue;
      auto tap = grad.middleRows(((du + r) * f.window() + (dv + r)) * depth, depth);
      for (Index i = i0; i < i1; ++i) {
        tap.noalias() += grad_conv.middleRows(i * cols + j0, j1 - j0).transpose() *
                         in.middleRows((i + du) * cols + j0 + dv, j1 - j0);
      }
    }
  }
}

}  // namespace detail

/// Contrastive loss of a pair and its exact gradient with respect to every
/// filter weight (diagonal included). The threshold mask depends only on the
/// activations and is treated as a constant.
template <typename Scalar>
LossGradient<Scalar> grad_filter(const PairSample<Scalar>& pair, const CoocFilter<Scalar>& f,
                                 const SketchParams& p, Scalar tau) {
  const auto fa = forward(pair.a, f, p);
  const auto fb = forward(pair.b, f, p);
  LossGradient<Scalar> out;
  out.grad = RowMatrix<Scalar>::Zero(f.weights().rows(), f.weights().cols());
  out.degenerate = fa.raw_norm == Scalar(0) || fb.raw_norm == Scalar(0);
  out.loss = contrastive_loss(fa.descriptor, fb.descriptor, pair.label, tau);

  const Descriptor<Scalar> diff = fa.descriptor - fb.descriptor;
  const Scalar dist = diff.norm();
  Descriptor<Scalar> grad_a;
  if (pair.label == 1) {
    grad_a = Scalar(2) * diff;
  } else if (dist < tau && dist > Scalar(0)) {
    grad_a = Scalar(-2) * (tau - dist) / dist * diff;
  } else {
    return out;
  }
  detail::backprop_branch(pair.a, fa, grad_a, f, p, out.grad);
  detail::backprop_branch(pair.b, fb, Descriptor<Scalar>(-grad_a), f, p, out.grad);
  return out;
}

/// One bias-corrected Adam update of the filter weights.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, CoocFilter<Scalar>& f,
               const std::type_identity_t<RowMatrix<Scalar>>& grad, const TrainConfig& cfg) {
  auto& w = f.mutable_weights();
  if (grad.rows() != w.rows() || grad.cols() != w.cols())
    throw DimensionError("gradient shape does not match filter");
  ++state.step;
  const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grad;
  state.v = b2 * state.v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const Scalar c1 = Scalar(1) - Scalar(std::pow(cfg.beta1, double(state.step)));
  const Scalar c2 = Scalar(1) - Scalar(std::pow(cfg.beta2, double(state.step)));
  w.array() -= Scalar(cfg.learning_rate) * (state.m.array() / c1) /
               ((state.v.array() / c2).sqrt() + Scalar(cfg.adam_eps));
}

struct EpochStats {
  std::size_t epoch = 0;  // 0 is the untrained filter
  double train_loss = 0;
  std::optional<double> validation_loss;
};

template <typename Scalar>
struct TrainResult {
  CoocFilter<Scalar> filter;  // best by validation loss (train loss without a split)
  std::size_t best_epoch = 0;
  std::vector<EpochStats> history;
  SketchParams sketch;
};

/// Mean contrastive loss over a set of pairs.
template <typename Scalar>
double mean_pair_loss(std::span<const PairSample<Scalar>> pairs, std::span<const std::size_t> which,
                      const CoocFilter<Scalar>& f, const SketchParams& p, Scalar tau) {
  if (which.empty()) return 0.0;
  double sum = 0.0;
  for (auto i : which) {
    const auto& pair = pairs[i];
    sum += double(contrastive_loss(forward_descriptor(pair.a, f, p), forward_descriptor(pair.b, f, p),
                                   pair.label, tau));
  }
  return sum / double(which.size());
}

/// Siamese training of the co-occurrence filter over precomputed tensors.
///
/// Pairs are shuffled once with `cfg.seed` to carve out the validation split,
/// then reshuffled every epoch for mini-batching. History entry 0 records the
/// losses of `initial` before any update.
template <typename Scalar>
TrainResult<Scalar> train(std::span<const PairSample<Scalar>> pairs, const TrainConfig& cfg,
                          CoocFilter<Scalar> initial) {
  cfg.validate();
  if (pairs.empty()) throw DomainError("training needs at least one pair");
  const Index depth = pairs[0].a.depth();
  for (const auto& pair : pairs) {
    if (pair.a.depth() != depth || pair.b.depth() != depth)
      throw DimensionError("all training tensors must share the same depth");
    if (pair.label != 0 && pair.label != 1) throw DomainError("pair labels must be 0 or 1");
  }
  if (initial.depth() != depth) throw DimensionError("initial filter depth mismatch");

  SplitMix64 rng(cfg.seed);
  auto order = iota_indices(pairs.size());
  shuffle(std::span<std::size_t>(order), rng);
  std::size_t n_val = std::size_t(std::floor(cfg.validation_fraction * double(pairs.size())));
  if (n_val >= pairs.size()) n_val = pairs.size() - 1;
  const std::vector<std::size_t> val(order.begin(), order.begin() + std::ptrdiff_t(n_val));
  std::vector<std::size_t> trn(order.begin() + std::ptrdiff_t(n_val), order.end());

  TrainResult<Scalar> result{initial, 0, {}, make_sketch(depth, cfg.sketch_dim, cfg.seed)};
  const SketchParams& sketch = result.sketch;
  const Scalar tau = Scalar(cfg.tau);
  CoocFilter<Scalar> filter = std::move(initial);
  AdamState<Scalar> adam(filter);

  auto record = [&](std::size_t epoch) {
    EpochStats s;
    s.epoch = epoch;
    s.train_loss = mean_pair_loss<Scalar>(pairs, trn, filter, sketch, tau);
    if (!val.empty()) s.validation_loss = mean_pair_loss<Scalar>(pairs, val, filter, sketch, tau);
    const double score = s.validation_loss.value_or(s.train_loss);
    const auto& best = result.history.empty() ? s : result.history[result.best_epoch];
    if (result.history.empty() || score < best.validation_loss.value_or(best.train_loss)) {
      result.best_epoch = epoch;
      result.filter = filter;
    }
    result.history.push_back(s);
  };

  record(0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(trn), rng);
    std::size_t usable_batches = 0;
    for (std::size_t start = 0; start < trn.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(trn.size(), start + cfg.batch_size);
      RowMatrix<Scalar> grad = RowMatrix<Scalar>::Zero(filter.weights().rows(), filter.weights().cols());
      std::size_t degenerate = 0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto lg = grad_filter(pairs[trn[i]], filter, sketch, tau);
        if (lg.degenerate) ++degenerate;
        grad += lg.grad;
      }
      if (degenerate == stop - start) continue;
      ++usable_batches;
      grad /= Scalar(stop - start);
      adam_step(adam, filter, grad, cfg);
    }
    if (usable_batches == 0)
      throw DomainError("every training batch in epoch " + std::to_string(epoch) +
                        " produced a zero descriptor; check the input tensors");
    record(epoch);
  }
  return result;
}

/// Trains from the canonical filter (cross-channel weights 1, self-channel
/// weights cfg.diag_init).
template <typename Scalar>
TrainResult<Scalar> train(std::span<const PairSample<Scalar>> pairs, const TrainConfig& cfg) {
  if (pairs.empty()) throw DomainError("training needs at least one pair");
  return train(pairs, cfg,
               make_filter<Scalar>(pairs[0].a.depth(), cfg.radius, Scalar(cfg.diag_init)));
}

}  // namespace cooc
