#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "yamabe/params.hpp"

namespace yamabe {

/// Boundary data u(r, t) supplied in closed form.
struct DirichletSeries {
  std::function<double(double r, double t)> value;
  std::string label;  ///< echoed into manifests
};

enum class OuterKind { FrozenTail, DriftingTail, Dirichlet };

/// Far-field condition at r_max. FrozenTail and DriftingTail describe the tail
/// r^2 u^{1-m} = A ln r + K(t) with K(0) = K0; DriftingTail moves K at the
/// cylinder rate, K(t) = K0 - (n-1)(n-2) t, in original variables.
struct OuterBC {
  OuterKind kind = OuterKind::DriftingTail;
  double A = 0;
  double K0 = 0;
  DirichletSeries series;

  static OuterBC frozen(double A, double K0) { return {OuterKind::FrozenTail, A, K0, {}}; }
  static OuterBC drifting(double A, double K0) { return {OuterKind::DriftingTail, A, K0, {}}; }
  static OuterBC dirichlet(DirichletSeries s) { return {OuterKind::Dirichlet, 0, 0, std::move(s)}; }
};

enum class InnerKind { Symmetry, Dirichlet };

struct InnerBC {
  InnerKind kind = InnerKind::Symmetry;
  DirichletSeries series;
};

/// Radial mesh with precomputed finite-volume geometry.
///
/// Node i owns the shell between the neighbouring face midpoints; volumes and
/// face areas drop the common factor ω_{n-1}.
struct FlowGrid {
  Eigen::VectorXd nodes;
  int n = 3;
  InnerBC inner;
  OuterBC outer;

  Eigen::VectorXd faces;      ///< size N-1, midpoints
  Eigen::VectorXd coupling;   ///< r_f^{n-1} / (r_{i+1} - r_i)
  Eigen::VectorXd volume;     ///< (r_{i+1/2}^n - r_{i-1/2}^n) / n
  Eigen::VectorXd face_pow_n; ///< r_f^n

  Eigen::Index size() const { return nodes.size(); }
  double r_max() const { return nodes[nodes.size() - 1]; }
  Eigen::Index first_unknown() const { return inner.kind == InnerKind::Dirichlet ? 1 : 0; }
  Eigen::Index last_unknown() const { return nodes.size() - 2; }
};

/// Checks invariants and fills the geometry arrays.
std::shared_ptr<const FlowGrid> make_grid(Eigen::VectorXd nodes, int n, InnerBC inner, OuterBC outer);

/// Uniform on [0, 1] with spacing h0, geometric with ratio 1 + h0 beyond,
/// h0 chosen so that the node count is close to `total_nodes`.
Eigen::VectorXd graded_nodes(double r_max = 162754.79141900392 /* e^12 */, int total_nodes = 2048);
Eigen::VectorXd annulus_nodes(double r_in, double r_out, int intervals);

struct FlowState {
  std::shared_ptr<const FlowGrid> grid;
  double t = 0;
  Eigen::VectorXd u;
  bool rescaled = false;
  double beta = 0;   ///< rescaling rate when rescaled
  int n = 3;
  double m = 0.2;
  double gamma = 0;  ///< 2β/(1-m) when rescaled

  /// Throws DomainError unless u is positive and sized to the grid.
  void validate() const;
};

FlowState make_state(std::shared_ptr<const FlowGrid> grid, Eigen::VectorXd u, double t = 0,
                     std::optional<double> rescaled_beta = std::nullopt);

struct CurvatureField {
  Eigen::VectorXd values;
  Eigen::VectorXd noise;  ///< rounding bound of values
  double max_R = 0;       ///< over non-Dirichlet nodes whose noise is below 1% of |R|
  bool resolved = true;   ///< false when no node qualified and max_R is the plain maximum
  double argmax_r = 0;
  Eigen::Index argmax = 0;
};

/// R = -(1-m)(n-1)/m u^{-1} Δu^m. Unknown nodes use the finite-volume
/// Laplacian, Dirichlet nodes a one-sided quadratic stencil.
CurvatureField scalar_curvature(const FlowState& state);

/// u at r_max (or r_in for the inner series) at time t.
/// Throws TailExtinct when the tail level r^2 u^{1-m} would be nonpositive.
struct TailExtinct : SolverError {
  using SolverError::SolverError;
};
double outer_bc_value(double t, const OuterBC& bc, const FlowState& shape);

struct NewtonOptions {
  int max_iterations = 30;
  double tolerance = 1e-11;  ///< max |δU|/U
  int max_halvings = 12;     ///< recursive dt splits before giving up
};

struct StepReport {
  int newton_iterations = 0;  ///< summed over substeps
  int substeps = 1;
};

/// One backward-Euler step of length dt (split recursively on Newton failure).
FlowState step(const FlowState& state, double dt, const NewtonOptions& opts = {}, StepReport* report = nullptr);

struct Controller {
  double dt_init = 1e-4;
  double dt_min = 1e-14;
  double dt_max = 1e30;
  double target_change = 1e-3;   ///< max relative change of u per step
  double reject_factor = 3.0;    ///< reject when change > reject_factor * target
  int newton_target = 6;
  bool fixed_dt = false;         ///< ignore the targets, step by dt_init
  std::vector<double> snapshot_times;
  double extinction_floor = 1e-8;  ///< relative to the initial max u
  std::size_t max_steps = 10'000'000;
  NewtonOptions newton;
  /// Called after each accepted step; returning true ends the run.
  std::function<bool(const FlowState&, const CurvatureField&)> on_step;
};

enum class Termination { Reached, Extinct, TailExtinct, Stopped };
std::string_view to_string(Termination t);

struct Trajectory {
  std::vector<FlowState> snapshots;  ///< initial state first, then snapshot_times
  // per accepted step (index 0 is the initial state)
  std::vector<double> times, max_R, argmax_r, max_u, integral_max_R;
  std::optional<double> extinction_time;  ///< floor crossing, interpolated in u^{1-m}
  Termination termination = Termination::Reached;
  std::size_t steps = 0, rejected = 0;
  FlowState final_state;
};

Trajectory evolve(const FlowState& state, double t_end, const Controller& ctl);

enum class Direction { ToRescaled, ToOriginal };

/// ū(x, t) = e^{γt} u(e^{βt}x, t) on the same grid. Points beyond r_max take
/// the outer tail; nothing is extrapolated.
FlowState rescale(const FlowState& state, double beta, Direction dir);

/// Monotone piecewise cubic in (asinh r, ln u).
double interpolate_profile(const Eigen::VectorXd& r, const Eigen::VectorXd& u, double x);
Eigen::VectorXd interpolate_profile(const Eigen::VectorXd& r, const Eigen::VectorXd& u, const Eigen::VectorXd& x);

double unit_sphere_area(int n);  ///< ω_{n-1}

/// ∫_{|x| <= radius} |u_a - u_b| dx, trapezoid in r with weight ω_{n-1} r^{n-1}.
/// b is resampled onto a's mesh when the meshes differ.
double l1_distance(const FlowState& a, const FlowState& b, double radius);
double sup_distance(const FlowState& a, const FlowState& b, double radius);

struct LowerBoundReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst_ratio = 1;  ///< min over nodes of lhs / rhs
  double worst_t = 0, worst_r = 0;
  bool passed = false;
};

/// u^{1-m}(x,t) >= u_0^{1-m}(x) exp(-∫_0^t f), f = recorded max R, at every
/// snapshot and non-Dirichlet node. Rescaled runs compare along the
/// dilation x̄ e^{βt}; `rel_slack` absorbs the interpolation there.
LowerBoundReport pointwise_lower_bound_check(const Trajectory& traj, double rel_slack = 1e-9);

}  // namespace yamabe
