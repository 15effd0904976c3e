#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "instances.hpp"
#include "pushsum/cones.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <limits>
#include <vector>

using namespace pushsum;
using namespace testing_instances;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index k = 0;
  for (const double x : v) out(k++) = x;
  return out;
}

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (const double x : r) out(i, j++) = x;
    ++i;
  }
  return out;
}

// Pairwise form: log max over coordinate pairs of (x_k / y_k) / (x_l / y_l).
double pairwise_hilbert(const Vector& x, const Vector& y) {
  double best = 0.0;
  for (Index k = 0; k < x.size(); ++k) {
    for (Index l = 0; l < x.size(); ++l) {
      if (x(k) > 0 && x(l) > 0) best = std::max(best, std::log((x(k) / y(k)) / (x(l) / y(l))));
    }
  }
  return best;
}

}  // namespace

TEST_CASE("hilbert distance on reference vectors") {
  CHECK(hilbert_distance(vec({1, 2, 3}), vec({2, 4, 6})).value() == doctest::Approx(0.0));
  CHECK(hilbert_distance(vec({1, 2}), vec({2, 1})).value() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(hilbert_distance(vec({1, 0}), vec({1, 1})).is_infinite());
  CHECK(hilbert_distance(vec({0, 3, 1}), vec({0, 1, 1})).value() == doctest::Approx(std::log(3.0)));
}

TEST_CASE("hilbert distance from the inf/sup definition") {
  CHECK(hilbert_distance_by_definition(vec({1, 1}), vec({1, 1})).value() == doctest::Approx(0.0));
  CHECK(hilbert_distance_by_definition(vec({1, 2}), vec({2, 1})).value() == doctest::Approx(std::log(4.0)));
  CHECK(hilbert_distance_by_definition(vec({0, 1}), vec({1, 0})).is_infinite());
}

TEST_CASE("hilbert distance rejects zero and negative vectors") {
  CHECK_THROWS_AS(hilbert_distance(vec({0, 0}), vec({1, 1})), DomainError);
  CHECK_THROWS_AS(hilbert_distance(vec({1, -1}), vec({1, 1})), DomainError);
  CHECK_THROWS_AS(hilbert_distance_by_definition(vec({1, 1}), vec({0, 0})), DomainError);
  CHECK_THROWS_AS(hilbert_distance(vec({1, 1}), vec({1, 1, 1})), DomainError);
}

TEST_CASE("formula, definition and pairwise form agree on random pairs") {
  Rng rng(11, 0);
  int infinite = 0;
  for (int t = 0; t < 10000; ++t) {
    const Index p = 1 + static_cast<Index>(rng.below(6));
    const Vector x = random_nonneg(rng, p, 0.25);
    const Vector y = rng.bernoulli(0.5) ? Vector(x.cwiseProduct(random_positive(rng, p))) : random_nonneg(rng, p, 0.25);
    const auto a = hilbert_distance(x, y);
    const auto b = hilbert_distance_by_definition(x, y);
    REQUIRE(a.is_infinite() == b.is_infinite());
    const bool same_face = ((x.array() > 0) == (y.array() > 0)).all();
    REQUIRE(a.is_infinite() == !same_face);
    if (a.is_infinite()) {
      ++infinite;
      continue;
    }
    REQUIRE(std::abs(a.value() - b.value()) <= 1e-10);
    REQUIRE(std::abs(a.value() - pairwise_hilbert(x, y)) <= 1e-10);
  }
  CHECK(infinite > 1000);
}

TEST_CASE("hilbert distance is scale invariant and satisfies the triangle inequality") {
  Rng rng(12, 0);
  for (int t = 0; t < 2000; ++t) {
    const Index p = 2 + static_cast<Index>(rng.below(5));
    const Vector x = random_positive(rng, p);
    const Vector y = random_positive(rng, p);
    const Vector z = random_positive(rng, p);
    const double a = rng.uniform(0.1, 10.0);
    const double b = rng.uniform(0.1, 10.0);
    REQUIRE(hilbert_distance(Vector(a * x), Vector(b * y)).value() ==
            doctest::Approx(hilbert_distance(x, y).value()).epsilon(1e-12));
    REQUIRE(hilbert_distance(x, z).value() <=
            hilbert_distance(x, y).value() + hilbert_distance(y, z).value() + 1e-12);
  }
}

TEST_CASE("extended reals follow the infinity over infinity convention") {
  const Extended inf = Extended::infinity();
  CHECK(extended_ratio(inf, inf).value() == 1.0);
  CHECK(extended_ratio(inf, Extended(2.0)).is_infinite());
  CHECK(extended_ratio(Extended(2.0), inf).value() == 0.0);
  CHECK(extended_ratio(Extended(3.0), Extended(2.0)).value() == 1.5);
  CHECK(Extended(1e300) < inf);
  CHECK_THROWS(inf.value());
}

TEST_CASE("phi and tau on reference matrices") {
  const Matrix ones = Matrix::Ones(3, 3);
  CHECK(phi(ones).value() == 0.0);
  CHECK(tau(ones) == 0.0);
  const Matrix a = mat({{2, 1}, {1, 2}});
  CHECK(phi(a).value() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(std::abs(tau(a) - 1.0 / 3.0) <= 1e-12);
  CHECK(phi(Matrix(Matrix::Identity(2, 2))).is_infinite());
  CHECK(tau(Matrix(Matrix::Identity(2, 2))) == 1.0);
  CHECK_THROWS_AS(phi(Matrix(Matrix::Zero(2, 2))), DomainError);
  CHECK_THROWS_AS(tau(Matrix(Matrix::Zero(3, 3))), DomainError);
}

TEST_CASE("phi is the largest hilbert distance between columns") {
  Rng rng(13, 0);
  for (int t = 0; t < 1000; ++t) {
    const Index p = 2 + static_cast<Index>(rng.below(4));
    const Matrix a = rng.bernoulli(0.5) ? random_positive_matrix(rng, p) : random_positive_or_zero_rows(rng, p);
    double best = 0.0;
    for (Index i = 0; i < p; ++i) {
      for (Index j = 0; j < p; ++j) {
        best = std::max(best, hilbert_distance_by_definition(Vector(a.col(i)), Vector(a.col(j))).value());
      }
    }
    REQUIRE(phi(a).value() == doctest::Approx(best).epsilon(1e-10));
  }
}

TEST_CASE("tau < 1 exactly when every row is positive or zero") {
  Rng rng(14, 0);
  for (int t = 0; t < 2000; ++t) {
    const Index p = 2 + static_cast<Index>(rng.below(4));
    const Matrix a = random_column_allowable(rng, p, 0.3);
    const NonNegMatrix m(a);
    REQUIRE((tau(a) < 1.0) == rows_positive_or_zero(m.support()));
  }
}

TEST_CASE("tau bounds the contraction of positive pairs") {
  Rng rng(15, 0);
  for (int t = 0; t < 10000; ++t) {
    const Index p = 2 + static_cast<Index>(rng.below(4));
    const Matrix a = random_positive_matrix(rng, p);
    const Vector x = random_positive(rng, p);
    const Vector y = random_positive(rng, p);
    const double h = hilbert_distance(x, y).value();
    if (!(h > 0.0)) continue;
    REQUIRE(hilbert_distance(Vector(a * x), Vector(a * y)).value() <= tau(a) * h * (1.0 + 1e-12) + 1e-15);
  }
}

TEST_CASE("tau is submultiplicative and TV is bounded by the hilbert distance") {
  Rng rng(16, 0);
  for (int t = 0; t < 10000; ++t) {
    const Index p = 2 + static_cast<Index>(rng.below(4));
    const Matrix a = random_column_allowable(rng, p, 0.2);
    const Matrix b = random_column_allowable(rng, p, 0.2);
    REQUIRE(tau(Matrix(a * b)) <= tau(a) * tau(b) * (1.0 + 1e-12) + 1e-15);

    Vector xi = random_nonneg(rng, p, 0.2);
    Vector eta = xi.cwiseProduct(random_positive(rng, p));
    xi /= xi.sum();
    eta /= eta.sum();
    REQUIRE(tv_distance(xi, eta) <= 0.5 * std::expm1(hilbert_distance(xi, eta).value()) * (1.0 + 1e-12));
  }
}

TEST_CASE("tau witness sequence approaches one") {
  const NonNegMatrix a(mat({{1, 0}, {1, 1}}));
  const TauWitness w10 = tau_witness_sequence(a, 10);
  CHECK(w10.ratio == doctest::Approx(std::log(1.0 + 1.0 / 11.0) / std::log(1.0 + 1.0 / 10.0)).epsilon(1e-12));
  CHECK(w10.permutation[0] == 0);
  CHECK(w10.permutation[1] == 1);
  CHECK(1.0 - tau_witness_sequence(a, 1000000).ratio < 1e-5);

  double previous = 0.0;
  for (long n = 1; n <= 100000; n *= 3) {
    const double r = tau_witness_sequence(a, n).ratio;
    CHECK(r > previous);
    CHECK(r < 1.0);
    previous = r;
  }
  CHECK_THROWS_AS(tau_witness_sequence(NonNegMatrix(mat({{2, 1}, {1, 2}})), 10), DomainError);
  CHECK_THROWS_AS(tau_witness_sequence(NonNegMatrix(mat({{1, 0}, {1, 0}})), 10), DomainError);
}

TEST_CASE("tau witness permutes a mixed row into the leading columns") {
  const NonNegMatrix a(mat({{1, 1, 1}, {0, 2, 1}, {1, 1, 1}}));
  const TauWitness w = tau_witness_sequence(a, 100);
  CHECK(w.mixed_row == 1);
  CHECK(w.permutation[0] == 1);
  CHECK(w.permutation[1] == 0);
  CHECK(w.ratio > 0.9);
}

TEST_CASE("total variation distance") {
  CHECK(tv_distance(vec({0.3, 0.7}), vec({0.3, 0.7})) == 0.0);
  CHECK(tv_distance(vec({1, 0}), vec({0, 1})) == 1.0);
  CHECK(tv_distance(vec({0.5, 0.5}), vec({0.25, 0.75})) == doctest::Approx(0.25));
  CHECK_THROWS_AS(tv_distance(vec({0.5, 0.6}), vec({0.5, 0.5})), DomainError);
  CHECK_NOTHROW(tv_distance(vec({0.5, 0.5 + 5e-10}), vec({0.5, 0.5})));
}

TEST_CASE("nonnegative matrices track their support exactly") {
  const NonNegMatrix a(mat({{0, 1e-300}, {2, 0}}));
  CHECK_FALSE(a.support()(0, 0));
  CHECK(a.support()(0, 1));
  CHECK(a.column_allowable());
  CHECK_FALSE(NonNegMatrix(mat({{0, 1}, {0, 1}})).column_allowable());
  CHECK_THROWS_AS(NonNegMatrix(mat({{-1, 1}, {1, 1}})), DomainError);
  const auto range = a.positive_entry_range();
  CHECK(range[0] == 1e-300);
  CHECK(range[1] == 2.0);
  CHECK(NonNegMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}).entries()(0, 0) == 3.0);
}

TEST_CASE("scaled products") {
  SUBCASE("identity times A reconstructs A") {
    const Matrix a = mat({{0.2, 3}, {0, 7}});
    const ScaledProduct p = multiply_accumulate(ScaledProduct::identity(2), NonNegMatrix(a));
    CHECK((p.reconstruct() - a).cwiseAbs().maxCoeff() <= 1e-15 * 7);
    CHECK(p.numeric().maxCoeff() > 0.5);
    CHECK(p.numeric().maxCoeff() <= 1.0);
    CHECK(p.steps() == 1);
  }
  SUBCASE("sixty halvings") {
    ScaledProduct p = ScaledProduct::identity(3);
    const NonNegMatrix half(Matrix(0.5 * Matrix::Identity(3, 3)));
    for (int k = 0; k < 60; ++k) p.left_multiply(half);
    CHECK(p.log_scale() == doctest::Approx(60.0 * std::log(0.5)).epsilon(1e-14));
    CHECK(p.numeric() == Matrix::Identity(3, 3));
  }
  SUBCASE("support of a lower triangular square") {
    const NonNegMatrix a(mat({{1, 0}, {1, 1}}));
    ScaledProduct p = ScaledProduct::identity(2);
    p.left_multiply(a);
    p.left_multiply(a);
    CHECK(p.support()(0, 0));
    CHECK_FALSE(p.support()(0, 1));
    CHECK(p.support()(1, 0));
    CHECK(p.support()(1, 1));
  }
  SUBCASE("long products do not overflow") {
    ScaledProduct p = ScaledProduct::identity(2);
    const NonNegMatrix a(mat({{3, 1}, {1, 3}}));
    for (int k = 0; k < 5000; ++k) p.left_multiply(a);
    CHECK(p.log_scale() / 5000.0 == doctest::Approx(std::log(4.0)).epsilon(1e-3));
    CHECK(std::isfinite(p.numeric().sum()));
  }
  SUBCASE("vanishing product is an error") {
    ScaledProduct p = ScaledProduct::identity(2);
    CHECK_THROWS_AS(p.left_multiply(NonNegMatrix(mat({{0, 0}, {0, 0}}))), DomainError);
  }
}

TEST_CASE("row classification") {
  const auto id = row_classification(ScaledProduct::identity(3));
  for (const auto c : id) CHECK(c == RowClass::Mixed);
  const auto all = row_classification(SupportPattern::Constant(2, 2, true));
  for (const auto c : all) CHECK(c == RowClass::Positive);
  SupportPattern s(2, 2);
  s << true, true, false, false;
  const auto rc = row_classification(s);
  CHECK(rc[0] == RowClass::Positive);
  CHECK(rc[1] == RowClass::Zero);
  CHECK(rows_positive_or_zero(s));
}

TEST_CASE("boolean support products") {
  SupportPattern id = SupportPattern::Constant(3, 3, false);
  id.matrix().diagonal().setConstant(true);
  SupportPattern q(3, 3);
  q << true, false, false, true, true, false, false, false, true;
  CHECK((support_product(id, q) == q).all());
  SupportPattern l(2, 2);
  l << true, false, true, true;
  CHECK((support_product(l, l) == l).all());
  CHECK(support_product(SupportPattern::Constant(3, 3, true), q).all());
  CHECK_THROWS_AS(support_product(l, q), DomainError);
}

TEST_CASE("scaled product support matches exact rational products") {
  using boost::multiprecision::cpp_rational;
  using Exact = std::vector<std::vector<cpp_rational>>;
  Rng rng(17, 0);
  for (int t = 0; t < 300; ++t) {
    const Index p = 2 + static_cast<Index>(rng.below(4));
    Exact exact(static_cast<std::size_t>(p), std::vector<cpp_rational>(static_cast<std::size_t>(p)));
    for (Index i = 0; i < p; ++i) exact[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1;
    ScaledProduct prod = ScaledProduct::identity(p);
    const int factors = 1 + static_cast<int>(rng.below(8));
    for (int f = 0; f < factors; ++f) {
      Matrix a(p, p);
      for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) a(i, j) = rng.bernoulli(0.6) ? 0.0 : static_cast<double>(1 + rng.below(9));
      }
      for (Index j = 0; j < p; ++j) {
        if (!(a.col(j).maxCoeff() > 0.0)) a(j, j) = 1.0;
      }
      prod.left_multiply(NonNegMatrix(a));
      Exact next(static_cast<std::size_t>(p), std::vector<cpp_rational>(static_cast<std::size_t>(p)));
      for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) {
          cpp_rational acc = 0;
          for (Index k = 0; k < p; ++k) {
            acc += cpp_rational(static_cast<int>(a(i, k))) * exact[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
          }
          next[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = acc;
        }
      }
      exact = std::move(next);
    }
    const Matrix recon = prod.reconstruct();
    for (Index i = 0; i < p; ++i) {
      for (Index j = 0; j < p; ++j) {
        const cpp_rational& e = exact[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        REQUIRE(prod.support()(i, j) == (e > 0));
        const double ed = static_cast<double>(e);
        REQUIRE(std::abs(recon(i, j) - ed) <= 1e-12 * std::max(1.0, ed));
      }
    }
  }
}
