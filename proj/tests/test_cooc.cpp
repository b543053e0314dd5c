#include <algorithm>
#include <numeric>

#include "cooc/cooc.hpp"
#include "cooc/io.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cooc;
using namespace cooc::test;

namespace {

// Nested-loop evaluation of the thresholded correlation for an arbitrary
// filter, indexed exactly as the filter layout is documented.
Tensor<double> general_reference(const Tensor<double>& t, const CoocFilter<double>& f,
                                 double thr) {
  const Index M = t.rows(), N = t.cols(), D = t.depth(), r = f.radius();
  auto masked = [&](Index i, Index j, Index k) {
    if (i < 0 || i >= M || j < 0 || j >= N) return 0.0;
    return t(i, j, k) > thr ? t(i, j, k) : 0.0;
  };
  Tensor<double> out(t.shape());
  for (Index i = 0; i < M; ++i)
    for (Index j = 0; j < N; ++j)
      for (Index k = 0; k < D; ++k) {
        if (!(t(i, j, k) > thr)) continue;
        double s = 0.0;
        for (Index du = -r; du <= r; ++du)
          for (Index dv = -r; dv <= r; ++dv)
            for (Index b = 0; b < D; ++b) s += f(k, b, du + r, dv + r) * masked(i + du, j + dv, b);
        out(i, j, k) = s / double(D - 1);
      }
  return out;
}

Shape random_shape(std::mt19937_64& rng, Index max_side, Index max_depth) {
  std::uniform_int_distribution<Index> side(1, max_side), depth(2, max_depth);
  return {side(rng), side(rng), depth(rng)};
}

Tensor<float> permute_channels(const Tensor<float>& t, const std::vector<Index>& perm) {
  Tensor<float> out(t.shape());
  for (Index c = 0; c < t.depth(); ++c) out.matrix().col(perm[c]) = t.matrix().col(c);
  return out;
}

}  // namespace

TEST_CASE("make_filter") {
  const auto f = make_filter<float>(3, 1, 0.0f);
  CHECK(f.taps() == 9);
  CHECK(f.weights().rows() == 27);
  CHECK(f(0, 1, 0, 0) == 1.0f);
  CHECK(f(2, 2, 1, 1) == 0.0f);
  REQUIRE(f.uniform());
  CHECK(f.uniform()->off == 1.0f);
  CHECK(f.uniform()->diag == 0.0f);

  const auto g = make_filter<double>(4, 0, 1e-10);
  CHECK(g.taps() == 1);
  CHECK(g(3, 3, 0, 0) == 1e-10);

  CHECK_THROWS_AS(make_filter<float>(1, 1, 0.0f), DomainError);
  CHECK_THROWS_AS(CoocFilter<float>(2, -1), DomainError);
}

TEST_CASE("editing a filter drops the uniform structure") {
  auto f = make_filter<float>(3, 1, 0.0f);
  f.at(0, 1, 0, 0) = 2.0f;
  CHECK_FALSE(f.uniform());
  f.detect_structure();
  CHECK_FALSE(f.uniform());
  f.at(0, 1, 0, 0) = 1.0f;
  f.detect_structure();
  CHECK(f.uniform());
}

TEST_CASE("worked fixture: single location") {
  const auto t = load_tensor(fixtures() / "worked" / "single_location.cooct");
  for (Index r : {0, 1, 4}) {
    const auto c = cooc_conv(t, make_filter<float>(3, r, 0.0f));
    CHECK(c(0, 0, 0) == doctest::Approx(2.0));
    CHECK(c(0, 0, 1) == doctest::Approx(2.5));
    CHECK(c(0, 0, 2) == 0.0f);
  }
}

TEST_CASE("worked fixture: two rows") {
  const auto t = load_tensor(fixtures() / "worked" / "two_rows.cooct");
  const auto c = cooc_conv(t, make_filter<float>(2, 1, 0.0f));
  CHECK(c(0, 0, 0) == doctest::Approx(6.0));
  CHECK(c(0, 0, 1) == 0.0f);
  CHECK(c(1, 0, 0) == 0.0f);
  CHECK(c(1, 0, 1) == doctest::Approx(10.0));
  const auto v = channel_cooc_vector(c);
  CHECK(v(0) == doctest::Approx(6.0));
  CHECK(v(1) == doctest::Approx(10.0));

  // Radius 0 sees no other location.
  CHECK(cooc_conv(t, make_filter<float>(2, 0, 0.0f)).matrix().isZero());
}

TEST_CASE("constant tensor has empty co-occurrence") {
  const auto t = Tensor<float>::Constant({4, 5, 3}, 2.0f);
  CHECK(cooc_conv(t, make_filter<float>(3, 2, 0.0f)).matrix().isZero());
}

TEST_CASE("depth mismatch and depth one") {
  const auto t = Tensor<float>::Constant({2, 2, 3}, 1.0f);
  CHECK_THROWS_AS(cooc_conv(t, make_filter<float>(4, 1, 0.0f)), DimensionError);
  CHECK_THROWS_AS(cooc_bruteforce(Tensor<float>(Shape{2, 2, 1}), 1, 0.0f), DomainError);
}

TEST_CASE("convolution matches the literal definition") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const Shape shape = random_shape(rng, 8, 16);
    const Index r = std::array<Index, 4>{0, 1, 2, 4}[trial % 4];
    const auto t = relu_tensor<float>(shape, rng);
    const float thr = mean_activation(t);
    const auto want = cooc_bruteforce(t, r, thr);
    const auto f = make_filter<float>(shape.depth, r, 0.0f);
    CAPTURE(to_string(shape));
    CAPTURE(r);
    CHECK(max_relative_error(cooc_conv(t, f).matrix(), want.matrix()) < 1e-4);
    CHECK(max_relative_error(cooc_conv(t, f, thr, ConvPath::Direct).matrix(), want.matrix()) <
          1e-4);
  }
}

TEST_CASE("direct path matches a nested-loop reference for arbitrary filters") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape shape = random_shape(rng, 6, 6);
    const Index r = trial % 3;
    CoocFilter<double> f(shape.depth, r);
    for (Index i = 0; i < f.weights().size(); ++i) f.mutable_weights().data()[i] = g(rng);
    const auto t = relu_tensor<double>(shape, rng);
    const double thr = 0.3;
    const auto got = cooc_conv(t, f, thr);
    CHECK((got.matrix() - general_reference(t, f, thr).matrix()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("uniform path matches direct path for any diagonal") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape shape = random_shape(rng, 9, 12);
    const Index r = trial % 5;
    const double diag = std::array<double, 4>{0.0, 1e-10, 0.5, 2.0}[trial % 4];
    const auto t = uniform_tensor<double>(shape, rng);
    const auto f = make_filter<double>(shape.depth, r, diag);
    const double thr = mean_activation(t);
    const auto fast = cooc_conv(t, f, thr);
    const auto slow = cooc_conv(t, f, thr, ConvPath::Direct);
    CHECK((fast.matrix() - slow.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("support is contained in the threshold mask") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const Shape shape = random_shape(rng, 7, 9);
    const auto t = relu_tensor<float>(shape, rng);
    const auto c = cooc_conv(t, make_filter<float>(shape.depth, 1 + trial % 3, 0.0f));
    const auto rho = threshold_mask(t, mean_activation(t));
    CHECK((c.matrix().array() >= 0.0f).all());
    CHECK(((c.matrix().array() != 0.0f) <= (rho.matrix().array() != 0)).all());
  }
}

TEST_CASE("support shrinks as the threshold rises") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape shape = random_shape(rng, 7, 8);
    const auto t = uniform_tensor<float>(shape, rng);
    const auto f = make_filter<float>(shape.depth, 2, 0.0f);
    const float lo = 0.2f + 0.3f * float(trial % 3) / 3.0f;
    const auto c_lo = cooc_conv(t, f, lo);
    const auto c_hi = cooc_conv(t, f, lo + 0.25f);
    CHECK(((c_hi.matrix().array() != 0.0f) <= (c_lo.matrix().array() != 0.0f)).all());
  }
}

TEST_CASE("channel permutation commutes with co-occurrence") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape shape = random_shape(rng, 6, 10);
    const auto t = relu_tensor<float>(shape, rng);
    std::vector<Index> perm(static_cast<std::size_t>(shape.depth));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto f = make_filter<float>(shape.depth, 2, 0.0f);
    const auto lhs = cooc_conv(permute_channels(t, perm), f);
    const auto rhs = permute_channels(cooc_conv(t, f), perm);
    CHECK(max_relative_error(lhs.matrix(), rhs.matrix()) < 1e-5);
  }
}

TEST_CASE("cooc_correlation_matrix") {
  Vector<double> a(4), b(4);
  a << 1, 2, 3, 5;
  b << 2, 0, 1, 7;
  SUBCASE("identical vectors") {
    const std::vector<Vector<double>> v{a, a, b};
    const auto c = cooc_correlation_matrix<double>(v);
    CHECK(c(0, 1) == doctest::Approx(1.0));
    CHECK(c(0, 0) == 1.0);
    CHECK(c.isApprox(c.transpose()));
    CHECK((c.array().abs() <= 1.0 + 1e-12).all());
  }
  SUBCASE("negated vectors") {
    const std::vector<Vector<double>> v{a, -a};
    CHECK(cooc_correlation_matrix<double>(v)(0, 1) == doctest::Approx(-1.0));
  }
  SUBCASE("zero variance") {
    WarningCapture warnings;
    const std::vector<Vector<double>> v{a, Vector<double>::Constant(4, 3.0)};
    const auto c = cooc_correlation_matrix<double>(v);
    CHECK(c(0, 1) == 0.0);
    CHECK(c(1, 1) == 1.0);
    CHECK(warnings.messages.size() == 1);
  }
  SUBCASE("too few vectors") {
    const std::vector<Vector<double>> v{a};
    CHECK_THROWS_AS(cooc_correlation_matrix<double>(v), DomainError);
  }
}

TEST_CASE("offset grid order") {
  const auto g = OffsetSet::grid(1);
  REQUIRE(g.size() == 9);
  CHECK(g[0] == Offset{-1, -1});
  CHECK(g[1] == Offset{0, -1});
  CHECK(g[3] == Offset{-1, 0});
  CHECK(g[4] == Offset{0, 0});
  CHECK(g[8] == Offset{1, 1});
  CHECK_THROWS_AS(OffsetSet(std::vector<Offset>{}), DomainError);
  CHECK_THROWS_AS(OffsetSet::grid(-1), DomainError);
}

TEST_CASE("shih_correlation") {
  // Channel 0 lit at column 0, channel 1 lit at column 1.
  Tensor<double> t(1, 2, 2);
  t(0, 0, 0) = 1.0;
  t(0, 1, 1) = 1.0;
  CHECK(shih_correlation(t, 0, 1, OffsetSet::grid(1)) == 1.0);
  CHECK(shih_correlation(t, 0, 1, OffsetSet({Offset{0, 0}})) == 0.0);
  CHECK(shih_correlation(t, 0, 1, OffsetSet({Offset{-1, 0}})) == 0.0);
  CHECK(shih_correlation(t, 0, 0, OffsetSet({Offset{0, 0}})) == 1.0);
  CHECK_THROWS_AS(shih_correlation(t, 0, 2, OffsetSet::grid(1)), DimensionError);

  // A symmetric offset set makes the correlation symmetric in (k, w).
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = uniform_tensor<double>(random_shape(rng, 6, 5), rng);
    const Index k = trial % x.depth(), w = (trial / 2) % x.depth();
    const auto grid = OffsetSet::grid(1 + trial % 2);
    CHECK(shih_correlation(x, k, w, grid) == doctest::Approx(shih_correlation(x, w, k, grid)));
  }
}

TEST_CASE("shih_cooc_tensor") {
  std::mt19937_64 rng(21);
  SUBCASE("zero offset only") {
    const auto t = uniform_tensor<double>({3, 4, 5}, rng);
    const auto c = shih_cooc_tensor(t, OffsetSet({Offset{0, 0}}));
    for (Index p = 0; p < t.locations(); ++p)
      for (Index k = 0; k < t.depth(); ++k)
        CHECK(c.matrix()(p, k) ==
              doctest::Approx(t.matrix()(p, k) * t.matrix().row(p).sum()));
  }
  SUBCASE("zero tensor") {
    const auto c = shih_cooc_tensor(Tensor<double>(Shape{4, 4, 3}), OffsetSet::grid(1));
    CHECK(c.matrix().isZero());
  }
  SUBCASE("matches the nested-loop reference") {
    for (int trial = 0; trial < 8; ++trial) {
      const Shape shape = trial == 0 ? Shape{8, 8, 4} : random_shape(rng, 7, 6);
      const auto t = relu_tensor<double>(shape, rng);
      const auto grid = OffsetSet::grid(1 + trial % 2);
      const std::vector<Offset> offsets(grid.offsets().begin(), grid.offsets().end());
      const auto want = shih_reference(t, offsets);
      CHECK((shih_cooc_tensor(t, grid).matrix() - want.matrix()).cwiseAbs().maxCoeff() <
            1e-9 * (1.0 + want.matrix().cwiseAbs().maxCoeff()));
    }
  }
}
