#include <doctest.h>

#include <cmath>
#include <functional>

#include "yamabe/asymptotics.hpp"
#include "yamabe/soliton.hpp"

using namespace yamabe;
using doctest::Approx;

namespace {

// w(s) on [1, 200] with the given remainder beyond A s + K
RadialProfile synthetic(int n, double A, double K, const std::function<double(double)>& rest,
                        const std::function<double(double)>& rest_s) {
  const int N = 4000;
  RadialProfile p;
  p.coord_kind = Coordinate::S;
  p.rep = Representation::W;
  p.params = derive_params(n, (n - 1.0) * (n - 2.0) / A, 1.0, SolitonKind::Steady);
  p.coords.resize(N);
  p.values.resize(N);
  p.deriv.resize(N);
  p.tail_deriv.resize(N);
  for (int i = 0; i < N; ++i) {
    const double s = 1.0 + 199.0 * i / (N - 1);
    p.coords[i] = s;
    p.values[i] = A * s + K + rest(s);
    p.tail_deriv[i] = rest_s(s);
    p.deriv[i] = A + p.tail_deriv[i];
  }
  return p;
}

}  // namespace

TEST_SUITE("asymptotics") {

TEST_CASE("fit recovers synthetic tail constants") {
  const double A = 2, K = 2.9495, C3 = -1.5, D = 4.0;
  const auto p = synthetic(
      3, A, K, [&](double s) { return C3 / s + D / (s * s); },
      [&](double s) { return -C3 / (s * s) - 2 * D / (s * s * s); });
  const auto f = fit_steady_asymptotics(p, {100, 200});
  // three halvings leave O(D / b^3)
  CHECK(f.A == Approx(A).epsilon(1e-5));
  CHECK(f.K == Approx(K).epsilon(1e-5));
  CHECK(f.C3 == Approx(C3).epsilon(1e-4));
  CHECK(f.hs_limit == Approx(-C3).epsilon(1e-4));
  CHECK(f.normalized_K() == Approx(K / A).epsilon(1e-5));
  CHECK(f.residual < 1e-4);
}

TEST_CASE("non-converging remainder raises FitError") {
  const auto p = synthetic(
      3, 2, 1, [](double s) { return 0.5 * std::sin(s); }, [](double s) { return 0.5 * std::cos(s); });
  CHECK_THROWS_AS(fit_steady_asymptotics(p, {100, 200}), FitError);
}

TEST_CASE("fit rejects bad windows") {
  const auto p = synthetic(
      3, 2, 1, [](double) { return 0.0; }, [](double) { return 0.0; });
  CHECK_THROWS_AS(fit_steady_asymptotics(p, {150, 100}), DomainError);
  CHECK_THROWS_AS(fit_steady_asymptotics(p, {100, 400}), DomainError);
  CHECK_THROWS_AS(fit_steady_asymptotics(p, {1.5, 2.5}), FitError);
}

TEST_CASE("kappa fixtures match the independent oracle") {
  // frozen from tests/oracles/kappa_oracle.py (scipy DOP853)
  CHECK(*kappa_fixture(3) == Approx(1.474773865).epsilon(1e-7));
  CHECK(*kappa_fixture(4) == Approx(0.06881447076).epsilon(1e-6));
  CHECK(*kappa_fixture(5) == Approx(-0.5539370739).epsilon(1e-7));
  CHECK(*kappa_fixture(6) == Approx(-0.9453295288).epsilon(1e-7));
  CHECK(*kappa_fixture(8) == Approx(-1.450801962).epsilon(1e-7));
  CHECK_FALSE(kappa_fixture(7));
}

TEST_CASE("library kappa agrees with the fixtures") {
  for (int n : {3, 6}) {
    CAPTURE(n);
    CHECK(std::abs(estimate_kappa(n, 1e-6) - *kappa_fixture(n)) < 1e-4);
  }
}

TEST_CASE("kappa is invariant under beta and lambda") {
  for (auto [beta, lambda] : {std::pair{0.5, 4.0}, std::pair{2.0, 0.5}}) {
    const auto p = derive_params(4, beta, lambda, SolitonKind::Steady);
    CylindricalOptions o;
    o.s_end = 200;
    const auto f = fit_steady_asymptotics(integrate_steady_cylindrical(p, o));
    CHECK(kappa_from_fit(p, f) == Approx(*kappa_fixture(4)).epsilon(1e-3));
    CHECK(f.hs_limit == Approx(2.0 * 3.0 / (4.0 * beta)).epsilon(0.05));
  }
}

TEST_CASE("n = 6 has no 1/s term") {
  const auto p = derive_params(6, 1.0, 1.0, SolitonKind::Steady);
  CylindricalOptions o;
  o.s_end = 100;
  const auto f = fit_steady_asymptotics(integrate_steady_cylindrical(p, o));
  CHECK(std::abs(f.hs_limit) < 1e-3);
  CHECK(f.C3 == 0.0);
}

TEST_CASE("lambda inversion") {
  for (int n : {3, 5, 8})
    for (double beta : {0.5, 2.0})
      for (double lambda : {0.3, 1.0, 7.0}) {
        const double kappa = *kappa_fixture(n);
        const double nk = 2 * std::log(lambda) / (n + 2.0) + 0.5 * std::log(beta) + kappa;
        CHECK(lambda_from_tail(n, beta, nk, kappa) == Approx(lambda).epsilon(1e-12));
      }
  CHECK_THROWS_AS(lambda_from_tail(3, 0.0, 1.0, 1.0), DomainError);
}

}
