#include "yamabe/profile.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "numfmt.hpp"

namespace yamabe {

std::string_view to_string(SolitonKind kind) {
  return kind == SolitonKind::Steady ? "steady" : "shrinker";
}

SolitonKind soliton_kind_from_string(std::string_view name) {
  if (name == "steady") return SolitonKind::Steady;
  if (name == "shrinker") return SolitonKind::Shrinker;
  throw DomainError("unknown soliton kind '" + std::string(name) + "'");
}

SolitonParams derive_params(int n, double beta, double lambda, SolitonKind kind) {
  if (n < 3) throw DomainError("derive_params: n must be >= 3, got " + std::to_string(n));
  if (!(beta > 0) || !std::isfinite(beta)) throw DomainError("derive_params: beta must be positive");
  if (!(lambda > 0) || !std::isfinite(lambda)) throw DomainError("derive_params: lambda must be positive");
  SolitonParams p;
  p.n = n;
  p.m = fast_diffusion_exponent(n);
  p.beta = beta;
  p.lambda = lambda;
  p.kind = kind;
  // 1 - m = 4/(n+2) exactly
  const double one_minus_m = 4.0 / (n + 2.0);
  p.gamma = kind == SolitonKind::Steady ? 2.0 * beta / one_minus_m : (2.0 * beta + 1.0) / one_minus_m;
  return p;
}

double scaling_factor(const SolitonParams& p) {
  const double c = std::pow(p.lambda, 2.0 / (p.n + 2.0));
  return p.kind == SolitonKind::Steady ? c * std::sqrt(p.beta) : c;
}

void RadialProfile::validate() const {
  const auto N = coords.size();
  if (N < 2) throw DomainError("RadialProfile: need at least two nodes");
  if (values.size() != N || deriv.size() != N) throw DomainError("RadialProfile: column size mismatch");
  for (Eigen::Index i = 1; i < N; ++i)
    if (!(coords[i] > coords[i - 1]))
      throw DomainError("RadialProfile: mesh not strictly increasing at node " + std::to_string(i));
  if (coord_kind == Coordinate::R && coords[0] < 0) throw DomainError("RadialProfile: negative radius");
  for (Eigen::Index i = 0; i < N; ++i)
    if (!(values[i] > 0))
      throw DomainError("RadialProfile: nonpositive value at node " + std::to_string(i));
  if (rep == Representation::W && params.kind == SolitonKind::Steady)
    for (Eigen::Index i = 0; i < N; ++i)
      if (!(deriv[i] > 0))
        throw DomainError("RadialProfile: w_s <= 0 at node " + std::to_string(i));
}

Eigen::Index RadialProfile::locate(double x) const {
  auto b = coords.data(), e = coords.data() + coords.size();
  auto it = std::upper_bound(b, e, x);
  Eigen::Index i = static_cast<Eigen::Index>(it - b) - 1;
  return std::clamp<Eigen::Index>(i, 0, coords.size() - 2);
}

void write_profile_csv(std::ostream& out, const RadialProfile& p) {
  const bool s = p.coord_kind == Coordinate::S;
  out << "# schema=yamabe.profile/1 coordinate=" << (s ? "s" : "r")
      << " representation=" << (p.rep == Representation::W ? "w" : "u") << '\n';
  out << (s ? "s" : "r") << ",value,deriv\n";
  for (Eigen::Index i = 0; i < p.size(); ++i)
    out << detail::fmt(p.coords[i]) << ',' << detail::fmt(p.values[i]) << ','
        << detail::fmt(p.deriv[i]) << '\n';
}

RadialProfile read_profile_csv(std::istream& in, const SolitonParams& params) {
  RadialProfile p;
  p.params = params;
  std::string line;
  bool have_header = false, have_rep = false;
  std::vector<double> c, v, d;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("representation=w") != std::string::npos) p.rep = Representation::W, have_rep = true;
      if (line.find("representation=u") != std::string::npos) p.rep = Representation::U, have_rep = true;
      continue;
    }
    if (!have_header) {
      if (line == "s,value,deriv") p.coord_kind = Coordinate::S;
      else if (line == "r,value,deriv") p.coord_kind = Coordinate::R;
      else throw DomainError("read_profile_csv: bad header '" + line + "'");
      have_header = true;
      continue;
    }
    std::string_view sv(line);
    auto c1 = sv.find(','), c2 = sv.find(',', c1 + 1);
    if (c1 == sv.npos || c2 == sv.npos) throw DomainError("read_profile_csv: bad row '" + line + "'");
    try {
      c.push_back(detail::parse_double(sv.substr(0, c1)));
      v.push_back(detail::parse_double(sv.substr(c1 + 1, c2 - c1 - 1)));
      d.push_back(detail::parse_double(sv.substr(c2 + 1)));
    } catch (const std::invalid_argument& e) {
      throw DomainError(std::string("read_profile_csv: ") + e.what());
    }
  }
  if (!have_header) throw DomainError("read_profile_csv: missing header");
  if (!have_rep) p.rep = p.coord_kind == Coordinate::S ? Representation::W : Representation::U;
  p.coords = Eigen::Map<Eigen::VectorXd>(c.data(), c.size());
  p.values = Eigen::Map<Eigen::VectorXd>(v.data(), v.size());
  p.deriv = Eigen::Map<Eigen::VectorXd>(d.data(), d.size());
  p.validate();
  return p;
}

std::string params_json(const SolitonParams& p) {
  nlohmann::ordered_json j;
  j["schema"] = "yamabe.params/1";
  j["n"] = p.n;
  j["beta"] = p.beta;
  j["lambda"] = p.lambda;
  j["kind"] = std::string(to_string(p.kind));
  j["gamma"] = p.gamma;
  j["m"] = p.m;
  return j.dump(2) + "\n";
}

SolitonParams params_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    auto p = derive_params(j.at("n").get<int>(), j.at("beta").get<double>(), j.at("lambda").get<double>(),
                           soliton_kind_from_string(j.at("kind").get<std::string>()));
    if (j.contains("gamma") && std::abs(j["gamma"].get<double>() - p.gamma) > 1e-12 * p.gamma)
      throw DomainError("params_from_json: gamma inconsistent with kind and beta");
    if (j.contains("m") && std::abs(j["m"].get<double>() - p.m) > 1e-15)
      throw DomainError("params_from_json: m inconsistent with n");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("params_from_json: ") + e.what());
  }
}

}  // namespace yamabe
