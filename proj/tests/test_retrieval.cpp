#include <cmath>

#include "cooc/retrieval.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cooc;
using namespace cooc::test;

namespace {

using Entry = std::pair<std::string, Descriptor<double>>;

Descriptor<double> vec2(double a, double b) {
  Descriptor<double> v(2);
  v << a, b;
  return v;
}

DescriptorIndex<double> random_index(std::mt19937_64& rng, Index n, Index dim) {
  std::vector<Entry> entries;
  for (Index i = 0; i < n; ++i)
    entries.emplace_back("img" + std::to_string(1000 + i), random_vector<double>(dim, rng));
  return build_index<double>(entries);
}

std::vector<std::string> ids_of(const RankedList<double>& r) {
  std::vector<std::string> out;
  for (const auto& n : r) out.push_back(n.id);
  return out;
}

}  // namespace

TEST_CASE("build_index") {
  CHECK(build_index<double>(std::vector<Entry>{}).empty());

  const std::vector<Entry> one{{"a", vec2(3, 4)}};
  const auto idx = build_index<double>(one);
  CHECK(idx.size() == 1);
  CHECK(idx.row(0)(0) == doctest::Approx(0.6));

  const std::vector<Entry> dup{{"a", vec2(1, 0)}, {"a", vec2(0, 1)}};
  CHECK_THROWS_AS(build_index<double>(dup), DomainError);

  const std::vector<Entry> mixed{{"a", vec2(1, 0)}, {"b", Vector<double>::Ones(3)}};
  CHECK_THROWS_AS(build_index<double>(mixed), DimensionError);

  std::mt19937_64 rng(1);
  const auto big = random_index(rng, 50, 9);
  CHECK(big.ids()[7] == "img1007");
  CHECK((big.matrix().rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("query") {
  const std::vector<Entry> e{{"b", vec2(0, 1)}, {"a", vec2(1, 0)}};
  const auto idx = build_index<double>(e);
  const auto r = query(idx, vec2(1, 0));
  REQUIRE(r.size() == 2);
  CHECK(r[0].id == "a");
  CHECK(r[0].distance == 0.0);
  CHECK(r[1].id == "b");
  CHECK(r[1].distance == doctest::Approx(std::sqrt(2.0)));

  // Equidistant entries are ordered by id.
  const auto tie = query(idx, l2norm(vec2(1, 1)));
  CHECK(ids_of(tie) == std::vector<std::string>{"a", "b"});

  CHECK(query(DescriptorIndex<double>{}, vec2(1, 0)).empty());
  CHECK_THROWS_AS(query(idx, Vector<double>::Ones(3).eval()), DimensionError);
}

TEST_CASE("distance order equals similarity order") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto idx = random_index(rng, 30, 8);
    const auto q = l2norm(random_vector<double>(8, rng));
    const auto r = query(idx, q);
    for (std::size_t i = 1; i < r.size(); ++i) {
      CHECK(r[i - 1].distance <= r[i].distance);
      CHECK(idx.row(r[i - 1].row).dot(q) >= idx.row(r[i].row).dot(q) - 1e-12);
    }
  }
}

TEST_CASE("ranking is invariant under rotation") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Index dim = 6;
    const Eigen::MatrixXd rot =
        Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(dim, dim)).householderQ();
    std::vector<Entry> plain, rotated;
    for (int i = 0; i < 25; ++i) {
      const auto v = random_vector<double>(dim, rng);
      plain.emplace_back("x" + std::to_string(i), v);
      rotated.emplace_back("x" + std::to_string(i), rot * v);
    }
    const auto q = l2norm(random_vector<double>(dim, rng));
    const Descriptor<double> rq = rot * q;
    CHECK(ids_of(query(build_index<double>(plain), q)) ==
          ids_of(query(build_index<double>(rotated), rq)));
  }
}

TEST_CASE("average_qe") {
  const std::vector<Entry> e{{"a", vec2(1, 0)}, {"b", vec2(0, 1)}};
  const auto idx = build_index<double>(e);

  SUBCASE("top hit equal to query is a fixed point") {
    const auto q = vec2(1, 0);
    const auto out = average_qe(idx, q, query(idx, q), 1);
    CHECK((out - q).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("closed form") {
    const auto q = vec2(1, 0);
    const RankedList<double> ranked{{"b", 0.0, 1}};
    const auto out = average_qe(idx, q, ranked, 1);
    CHECK(out(0) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(out(1) == doctest::Approx(1.0 / std::sqrt(2.0)));
  }
  SUBCASE("n equal to the index size") {
    const auto q = l2norm(vec2(2, 1));
    const auto out = average_qe(idx, q, query(idx, q), 2);
    CHECK((out - l2norm((q + vec2(1, 1)).eval())).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("n beyond the index size is clamped") {
    WarningCapture warnings;
    const auto q = vec2(1, 0);
    const auto out = average_qe(idx, q, query(idx, q), 10);
    CHECK(warnings.messages.size() == 1);
    CHECK((out - average_qe(idx, q, query(idx, q), 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("n must be positive") {
    CHECK_THROWS_AS(average_qe(idx, vec2(1, 0), query(idx, vec2(1, 0)), 0), DomainError);
  }
}

TEST_CASE("average_qe is unit norm and order free") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto idx = random_index(rng, 40, 7);
    const auto q = l2norm(random_vector<double>(7, rng));
    auto ranked = query(idx, q);
    const auto out = average_qe(idx, q, ranked, 5);
    CHECK(out.norm() == doctest::Approx(1.0).epsilon(1e-9));
    std::reverse(ranked.begin(), ranked.begin() + 5);
    CHECK((average_qe(idx, q, ranked, 5) - out).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("alpha_qe") {
  SUBCASE("closed form") {
    const std::vector<Entry> e{{"x", vec2(1, 1)}};
    const auto idx = build_index<double>(e);
    const auto q = vec2(1, 0);
    const auto out = alpha_qe(idx, q, query(idx, q), 1, 1.0);
    const auto want = l2norm(vec2(1.5, 0.5));
    CHECK((out - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("orthogonal neighbours leave the query unchanged") {
    const std::vector<Entry> e{{"y", vec2(0, 1)}, {"z", vec2(0, -1)}};
    const auto idx = build_index<double>(e);
    const auto q = vec2(1, 0);
    CHECK((alpha_qe(idx, q, query(idx, q), 2, 3.0) - q).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("alpha = 0 reproduces average_qe") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const auto idx = random_index(rng, 30, 6);
      const auto q = l2norm(random_vector<double>(6, rng));
      const auto ranked = query(idx, q);
      const auto a = alpha_qe(idx, q, ranked, 7, 0.0);
      const auto b = average_qe(idx, q, ranked, 7);
      CHECK(a == b);
      CHECK(ids_of(query(idx, a)) == ids_of(query(idx, b)));
    }
  }
  SUBCASE("negative alpha") {
    const std::vector<Entry> e{{"x", vec2(1, 1)}};
    const auto idx = build_index<double>(e);
    CHECK_THROWS_AS(alpha_qe(idx, vec2(1, 0), query(idx, vec2(1, 0)), 1, -1.0), DomainError);
  }
}
