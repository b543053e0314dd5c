#include "cooc/pipeline.hpp"

#include <chrono>

#include "cooc/random.hpp"

namespace cooc {

PoolMode parse_pool_mode(const std::string& s) {
  if (s == "ucrow") return PoolMode::UCrow;
  if (s == "chco-sct") return PoolMode::ChcoSct;
  if (s == "bp") return PoolMode::Bilinear;
  if (s == "cbp") return PoolMode::CompactBilinear;
  throw DomainError("unknown pooling mode '" + s + "'");
}

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "none") return MaskMode::None;
  if (s == "topdown") return MaskMode::TopDown;
  if (s == "center") return MaskMode::Center;
  throw DomainError("unknown mask mode '" + s + "'");
}

std::string to_string(PoolMode m) {
  switch (m) {
    case PoolMode::UCrow: return "ucrow";
    case PoolMode::ChcoSct: return "chco-sct";
    case PoolMode::Bilinear: return "bp";
    case PoolMode::CompactBilinear: return "cbp";
  }
  return "?";
}

std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::None: return "none";
    case MaskMode::TopDown: return "topdown";
    case MaskMode::Center: return "center";
  }
  return "?";
}

namespace {

CoocFilter<float> default_filter(const AggregateOptions& o, Index depth) {
  // ucrow never touches the filter; depth 1 tensors are legal there.
  if (o.pool == PoolMode::UCrow && depth < 2) return CoocFilter<float>(depth, o.radius);
  return make_filter<float>(depth, o.radius, float(o.diag));
}

}  // namespace

Aggregator::Aggregator(AggregateOptions options, Index depth,
                       std::optional<CoocFilter<float>> filter)
    : options_(options),
      depth_(depth),
      filter_(filter ? std::move(*filter) : default_filter(options, depth)) {
  if (filter_.depth() != depth)
    throw DimensionError("filter depth " + std::to_string(filter_.depth()) +
                         " does not match tensor depth " + std::to_string(depth));
  if (options_.pool == PoolMode::CompactBilinear)
    sketch_ = make_sketch(depth, options_.sketch_dim, options_.seed);
}

SpatialWeights<float> Aggregator::mask_for(const Tensor<float>& t) const {
  switch (options_.mask) {
    case MaskMode::TopDown: return spatial_mask_topdown<float>(t.rows(), t.cols());
    case MaskMode::Center: return spatial_mask_center<float>(t.rows(), t.cols());
    case MaskMode::None: break;
  }
  return SpatialWeights<float>::Ones(t.rows(), t.cols());
}

Descriptor<float> Aggregator::operator()(const Tensor<float>& t) const {
  if (t.depth() != depth_)
    throw DimensionError("tensor depth " + std::to_string(t.depth()) + " differs from run depth " +
                         std::to_string(depth_));
  const SpatialWeights<float> mask = mask_for(t);
  if (options_.pool == PoolMode::UCrow) return sum_pool(masked_tensor(t, mask));

  const float threshold = options_.threshold ? float(*options_.threshold) : mean_activation(t);
  const Tensor<float> c = cooc_conv(t, filter_, threshold);
  Descriptor<float> f;
  switch (options_.pool) {
    case PoolMode::ChcoSct: {
      const auto alpha = spatial_cooc_weights(c, float(options_.a), float(options_.b));
      const auto beta = channel_cooc_weights(channel_cooc_vector(c), float(options_.eps));
      f = linear_weighted_pool(t, alpha, beta, mask);
      break;
    }
    case PoolMode::Bilinear: {
      const RowMatrix<float> b = bilinear_pool(masked_tensor(t, mask), c);
      f = Eigen::Map<const Vector<float>>(b.data(), b.size());
      break;
    }
    case PoolMode::CompactBilinear:
      f = compact_bilinear_pool(t, c, *sketch_, mask);
      break;
    case PoolMode::UCrow:
      break;
  }
  if (options_.signed_sqrt) f = signed_sqrt(f);
  return f;
}

Tensor<float> random_tensor(const Shape& shape, std::uint64_t seed) {
  Tensor<float> t(shape);
  SplitMix64 rng(seed);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(rng.uniform());
  return t;
}

BenchResult bench_cooc(const Shape& shape, Index radius, std::size_t reps, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  if (reps == 0) throw DomainError("bench needs at least one repetition");
  const Tensor<float> t = random_tensor(shape, seed);
  const auto filter = make_filter<float>(shape.depth, radius, 0.0f);
  const auto offsets = OffsetSet::grid(radius);

  BenchResult r{shape, radius, reps};
  double conv_total = 0, shih_total = 0;
  for (std::size_t i = 0; i < reps; ++i) {
    auto t0 = clock::now();
    const auto c = cooc_conv(t, filter);
    auto t1 = clock::now();
    const auto s = shih_cooc_tensor(t, offsets);
    auto t2 = clock::now();
    conv_total += std::chrono::duration<double, std::milli>(t1 - t0).count();
    shih_total += std::chrono::duration<double, std::milli>(t2 - t1).count();
    r.conv_checksum = c.matrix().cast<double>().sum();
    r.shih_checksum = s.matrix().cast<double>().sum();
  }
  r.conv_ms = conv_total / double(reps);
  r.shih_ms = shih_total / double(reps);
  return r;
}

}  // namespace cooc
