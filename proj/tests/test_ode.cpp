#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "yamabe/ode.hpp"

using namespace yamabe;
using doctest::Approx;
using Vec1 = Eigen::Matrix<double, 1, 1>;
using Vec2 = Eigen::Matrix<double, 2, 1>;

namespace {

auto ignore = [](double, const auto&) {};

Vec2 oscillator(double, const Vec2& y) { return Vec2(y[1], -y[0]); }

double fixed_error(double h) {
  ode::StepControl<double> c;
  c.fixed = true;
  c.h_max = h;
  const auto r = ode::integrate(oscillator, 0.0, Vec2(1, 0), 2.0, c, std::span<const double>{}, ignore);
  return std::abs(r.y[0] - std::cos(2.0));
}

}  // namespace

TEST_SUITE("ode") {

TEST_CASE("exponential growth to tolerance") {
  ode::StepControl<double> c;
  c.rtol = 1e-12;
  const auto r = ode::integrate([](double, const Vec1& y) { return Vec1(y); }, 0.0, Vec1(1.0), 1.0, c,
                                std::span<const double>{}, ignore);
  CHECK(r.t == 1.0);
  CHECK(r.y[0] == Approx(std::numbers::e).epsilon(1e-11));
  CHECK_FALSE(r.stopped);
}

TEST_CASE("oscillator returns after a full period") {
  ode::StepControl<double> c;
  c.rtol = 1e-12;
  const auto r = ode::integrate(oscillator, 0.0, Vec2(1, 0), 2 * std::numbers::pi, c, std::span<const double>{}, ignore);
  CHECK(std::abs(r.y[0] - 1.0) < 1e-10);
  CHECK(std::abs(r.y[1]) < 1e-10);
}

TEST_CASE("fixed steps converge at fifth order") {
  // coarser steps mix the h^5 amplitude and h^6 phase errors of the oscillator
  const double e1 = fixed_error(0.05), e2 = fixed_error(0.025);
  const double order = std::log2(e1 / e2);
  CAPTURE(order);
  CHECK(order > 4.6);
  CHECK(order < 5.4);
}

TEST_CASE("outputs are hit exactly") {
  const std::vector<double> out{0.0, 0.25, 0.5, 1.75};
  std::vector<double> seen;
  ode::StepControl<double> c;
  c.h_init = 0.3;
  ode::integrate(oscillator, 0.0, Vec2(1, 0), 2.0, c, std::span<const double>(out),
                 [&](double t, const Vec2& y) {
                   seen.push_back(t);
                   CHECK(y[0] == Approx(std::cos(t)).epsilon(1e-8));
                 });
  CHECK(seen == out);
}

TEST_CASE("stop predicate ends early") {
  ode::StepControl<double> c;
  const auto r = ode::integrate([](double, const Vec1&) { return Vec1(1.0); }, 0.0, Vec1(0.0), 10.0, c,
                                std::span<const double>{}, ignore,
                                [](double, const Vec1& y) { return y[0] > 3.0; });
  CHECK(r.stopped);
  CHECK(r.t < 10.0);
  CHECK(r.y[0] > 3.0);
}

TEST_CASE("invalid interval and blow-up are reported") {
  ode::StepControl<double> c;
  CHECK_THROWS_AS(ode::integrate(oscillator, 1.0, Vec2(1, 0), 1.0, c, std::span<const double>{}, ignore), DomainError);
  // y' = y^2 from 1 blows up at t = 1
  CHECK_THROWS_AS(ode::integrate([](double, const Vec1& y) { return Vec1(y[0] * y[0]); }, 0.0, Vec1(1.0), 2.0, c,
                                 std::span<const double>{}, ignore),
                  SolverError);
}

}
