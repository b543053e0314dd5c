#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cooc/cooc.hpp"
#include "cooc/pooling.hpp"
#include "cooc/tensor.hpp"

namespace cooc {

enum class PoolMode {
  UCrow,            // channel means
  ChcoSct,          // linear pooling with spatial and channel co-occurrence weights
  Bilinear,         // vec(A^T C_T), D*D values
  CompactBilinear,  // count-sketch approximation of the above
};

enum class MaskMode { None, TopDown, Center };

PoolMode parse_pool_mode(const std::string& s);
MaskMode parse_mask_mode(const std::string& s);
std::string to_string(PoolMode m);
std::string to_string(MaskMode m);

struct AggregateOptions {
  PoolMode pool = PoolMode::ChcoSct;
  MaskMode mask = MaskMode::None;
  Index radius = 4;
  double diag = 0.0;
  std::optional<double> threshold;  // unset: mean activation of each tensor
  double a = 2.0;
  double b = 2.0;
  double eps = 1e-6;
  Index sketch_dim = 8192;
  std::uint64_t seed = 0;
  bool signed_sqrt = false;
};

/// Turns activation tensors of a fixed depth into raw (un-normalized)
/// descriptors. Holds the filter and sketch so they are built once per run;
/// immutable after construction and safe to share across threads.
class Aggregator {
 public:
  Aggregator(AggregateOptions options, Index depth,
             std::optional<CoocFilter<float>> filter = std::nullopt);

  Descriptor<float> operator()(const Tensor<float>& t) const;

  const AggregateOptions& options() const { return options_; }
  Index depth() const { return depth_; }
  const CoocFilter<float>& filter() const { return filter_; }

 private:
  SpatialWeights<float> mask_for(const Tensor<float>& t) const;

  AggregateOptions options_;
  Index depth_;
  CoocFilter<float> filter_;
  std::optional<SketchParams> sketch_;
};

struct BenchResult {
  Shape shape;
  Index radius = 0;
  std::size_t reps = 0;
  double conv_ms = 0;  // mean per call
  double shih_ms = 0;
  double conv_checksum = 0;  // sum of the output tensor, for determinism checks
  double shih_checksum = 0;

  double speedup() const { return conv_ms > 0 ? shih_ms / conv_ms : 0.0; }
};

/// Times cooc_conv (canonical filter, mean threshold) against shih_cooc_tensor
/// (full offset grid of the same radius) on one random nonnegative tensor.
BenchResult bench_cooc(const Shape& shape, Index radius, std::size_t reps, std::uint64_t seed);

/// Uniform [0, 1) tensor from SplitMix64.
Tensor<float> random_tensor(const Shape& shape, std::uint64_t seed);

}  // namespace cooc
