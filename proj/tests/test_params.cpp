#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "yamabe/params.hpp"
#include "yamabe/profile.hpp"
#include "yamabe/soliton.hpp"

using namespace yamabe;
using doctest::Approx;

TEST_SUITE("params") {

TEST_CASE("derived exponents") {
  for (int n : {3, 4, 5, 6, 8, 11}) {
    CAPTURE(n);
    const auto s = derive_params(n, 1.5, 2.0, SolitonKind::Steady);
    const double m = (n - 2.0) / (n + 2.0);
    CHECK(s.m == Approx(m).epsilon(1e-15));
    CHECK(s.gamma == Approx(2 * 1.5 / (1 - m)).epsilon(1e-14));
    const auto k = derive_params(n, 1.5, 2.0, SolitonKind::Shrinker);
    CHECK(k.gamma == Approx((2 * 1.5 + 1) / (1 - m)).epsilon(1e-14));
    CHECK(s.cylinder_level() == (n - 1) * (n - 2));
    CHECK(s.tail_slope() == Approx((n - 1.0) * (n - 2.0) / 1.5));
  }
}

TEST_CASE("invalid parameters are rejected") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(derive_params(2, 1, 1, SolitonKind::Steady), DomainError);
  CHECK_THROWS_AS(derive_params(3, 0, 1, SolitonKind::Steady), DomainError);
  CHECK_THROWS_AS(derive_params(3, -1, 1, SolitonKind::Steady), DomainError);
  CHECK_THROWS_AS(derive_params(3, nan, 1, SolitonKind::Steady), DomainError);
  CHECK_THROWS_AS(derive_params(3, inf, 1, SolitonKind::Steady), DomainError);
  CHECK_THROWS_AS(derive_params(3, 1, 0, SolitonKind::Shrinker), DomainError);
  CHECK_THROWS_AS(derive_params(3, 1, -2, SolitonKind::Shrinker), DomainError);
}

TEST_CASE("kind names") {
  CHECK(soliton_kind_from_string("steady") == SolitonKind::Steady);
  CHECK(soliton_kind_from_string("shrinker") == SolitonKind::Shrinker);
  CHECK(to_string(SolitonKind::Shrinker) == "shrinker");
  CHECK_THROWS_AS(soliton_kind_from_string("expander"), DomainError);
}

TEST_CASE("scaling factor composes") {
  // c(β, λ) = λ^{2/(n+2)} sqrt(β) for steady solitons
  const auto a = derive_params(4, 2.0, 3.0, SolitonKind::Steady);
  CHECK(scaling_factor(a) == Approx(std::pow(3.0, 1.0 / 3.0) * std::sqrt(2.0)));
  const auto b = derive_params(4, 2.0, 3.0, SolitonKind::Shrinker);
  CHECK(scaling_factor(b) == Approx(std::pow(3.0, 1.0 / 3.0)));
  CHECK(scaling_factor(derive_params(7, 1, 1, SolitonKind::Steady)) == 1.0);
}

TEST_CASE("params json round trip") {
  const auto p = derive_params(5, 0.75, 1.3, SolitonKind::Shrinker);
  const auto text = params_json(p);
  CHECK(text.find("\"schema\": \"yamabe.params/1\"") != std::string::npos);
  CHECK(params_from_json(text) == p);
  CHECK_THROWS_AS(params_from_json(R"({"n":5,"beta":0.75,"lambda":1.3,"kind":"steady","gamma":1})"), DomainError);
  CHECK_THROWS_AS(params_from_json(R"({"n":5,"beta":0.75})"), DomainError);
  CHECK_THROWS_AS(params_from_json("{"), DomainError);
}

TEST_CASE("profile csv round trip is exact") {
  const auto p = derive_params(3, 1, 1, SolitonKind::Steady);
  const auto prof = integrate_radial(p, 50.0);
  std::stringstream ss;
  write_profile_csv(ss, prof);
  const auto text = ss.str();
  CHECK(text.rfind("# schema=yamabe.profile/1", 0) == 0);
  const auto back = read_profile_csv(ss, p);
  REQUIRE(back.size() == prof.size());
  CHECK(back.coord_kind == Coordinate::R);
  CHECK(back.rep == Representation::U);
  CHECK((back.coords.array() == prof.coords.array()).all());
  CHECK((back.values.array() == prof.values.array()).all());
  CHECK((back.deriv.array() == prof.deriv.array()).all());
}

TEST_CASE("profile csv rejects broken input") {
  const auto p = derive_params(3, 1, 1, SolitonKind::Steady);
  std::stringstream a("x,value,deriv\n0,1,0\n");
  CHECK_THROWS_AS(read_profile_csv(a, p), DomainError);
  std::stringstream b("r,value,deriv\n0,1,0\n1,-1,0\n");
  CHECK_THROWS_AS(read_profile_csv(b, p), DomainError);
  std::stringstream c("r,value,deriv\n0,1,0\n0,1,0\n");
  CHECK_THROWS_AS(read_profile_csv(c, p), DomainError);
  std::stringstream d("r,value,deriv\n0,1\n");
  CHECK_THROWS_AS(read_profile_csv(d, p), DomainError);
}

}
