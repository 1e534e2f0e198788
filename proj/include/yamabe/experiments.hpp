#pragma once

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "yamabe/flow.hpp"
#include "yamabe/params.hpp"
#include "yamabe/profile.hpp"

namespace yamabe {

// ---------------------------------------------------------------------------
// Initial data

/// Cylinder is the exact shrinking cylinder on an annulus with exact Dirichlet
/// data at both ends; it is the type I reference.
enum class InitialKind { SolitonPerturbed, LogTail, SlowLogTail, CylinderCapped, CylindricalEnd, Custom, Cylinder };

std::string_view to_string(InitialKind k);
InitialKind initial_kind_from_string(std::string_view name);

/// Parameters per kind; unused fields are ignored. With ρ² = r² + r1²
/// (r1 = cap_radius) the capped kinds are
///   LogTail         u0^{1-m} = (A ln ρ + K) / ρ²
///   CylinderCapped  u0^{1-m} = ((n-1)(n-2) T - C / ln ρ) / ρ²
///   SlowLogTail     u0^{1-m} = sqrt(ln ρ) / ρ²
/// SolitonPerturbed is u_{β,λ} (1 + amplitude b(r / support_radius)) with the
/// C² bump b(x) = (1 - x²)³ on x < 1. CylindricalEnd adds
/// amplitude (ε² / ((r - support_radius)² + ε²))^{1/(1-m)} u_{β,λ} with
/// ε = end_width, a regularized off-origin singular factor.
struct InitialDataSpec {
  InitialKind kind = InitialKind::SolitonPerturbed;
  int n = 3;
  double beta = 1.0;
  double lambda = 1.0;
  double amplitude = 0.0;
  double support_radius = 1.0;
  double end_width = 0.1;
  double T = 1.0;
  double C = 1.0;
  double A = 0.0;
  double K = 0.0;
  double cap_radius = 2.718281828459045;
  std::function<double(double)> custom;  ///< u0(r) for Custom
  double custom_tail_slope = 0.0;        ///< A of the Custom tail

  /// Throws DomainError when the kind's hypotheses fail.
  void validate() const;
  /// Slope A of the declared tail r²u^{1-m} = A ln r + K(r).
  double tail_slope() const;
  /// Declared r²u0^{1-m} at radius r (nullopt for Custom and CylindricalEnd).
  std::optional<double> declared_tail(double r) const;
  /// Constant K of the declared tail A ln r + K + o(1); for soliton-based
  /// kinds it follows from the κ relation (nullopt without a κ fixture).
  std::optional<double> tail_constant() const;
};

/// Samples the data on `nodes` and builds the grid: symmetry at r = 0 and a
/// drifting tail whose constant matches the data at r_max. Cylinder takes
/// annulus nodes and exact Dirichlet series at both ends.
/// Throws DomainError when r²u0^{1-m} misses the declared tail at r_max by
/// more than 1%.
FlowState make_initial_data(const InitialDataSpec& spec, const Eigen::VectorXd& nodes,
                            std::optional<double> rescaled_beta = std::nullopt);

/// Exact shrinking cylinder, u^{1-m} = (n-1)(n-2)(T - t) / r².
double cylinder_exact(int n, double T, double r, double t);

// ---------------------------------------------------------------------------
// Local extinction times

/// Records, per unknown node with r >= 1, the time at which w = r²u^{1-m}
/// would vanish when extrapolated linearly from the step crossing half its
/// initial value. Feed it from Controller::on_step.
class ExtinctionTracker {
 public:
  explicit ExtinctionTracker(const FlowState& initial);
  void observe(const FlowState& s);

  /// Fit t_i = T̂ - b / ln r_i over crossed nodes with ln r_i in the outer half
  /// of [0, ln r_max]; nullopt with fewer than 5 such nodes.
  std::optional<double> estimate() const;
  std::size_t crossed() const;

 private:
  Eigen::VectorXd w0_, w_prev_, t_ext_;
  Eigen::VectorXd log_r_;
  double t_prev_;
  double m_;
};

// ---------------------------------------------------------------------------
// Curvature traces and classification

enum class TraceMode { FiniteTime, InfiniteTime };
enum class Verdict { TypeI, TypeII, Inconclusive };
std::string_view to_string(Verdict v);

struct CurvatureTrace {
  std::vector<double> times, max_R, argmax_r, diagnostic;
  std::optional<double> T;       ///< horizon of finite-time runs
  double window_begin = 0, window_end = 0;
  int resolution = 0;            ///< node count of the run
};

struct TraceWindowOptions {
  double floor_margin = 1e3;     ///< trust while max u >= floor_margin * floor
  double boundary_margin = 15;   ///< trust while ln argmax_r <= ln r_max - margin
};

/// Diagnostic d = max_R (T - t) in finite mode, max_R otherwise. The trusted
/// window starts at the first sample and ends before the floor dynamics or
/// the boundary layer reach the curvature maximum.
CurvatureTrace make_trace(const Trajectory& traj, std::optional<double> T, double absolute_floor,
                          const TraceWindowOptions& opts = {});

struct ClassifyOptions {
  double growth_factor = 10;     ///< TypeII threshold
  double bounded_factor = 2;     ///< TypeI: sup d <= bounded_factor * d(window start)
  int samples = 32;              ///< checkpoints over the window
  double transient = 0;          ///< leading fraction of the window skipped
  double monotone_slack = 1e-3;  ///< relative dip tolerated between checkpoints
  double agreement = 0.1;        ///< relative diagnostic spread across resolutions
};

struct RungEvidence {
  int resolution = 0;
  double growth = 0;             ///< last / first checkpoint
  double sup_ratio = 0;          ///< max / first checkpoint
  double min_value = 0, max_value = 0;
  bool monotone = false;
  Verdict verdict = Verdict::Inconclusive;
};

struct ClassificationReport {
  Verdict verdict = Verdict::Inconclusive;
  double growth = 0;             ///< smallest growth over the rungs
  double window_begin = 0, window_end = 0;
  bool resolution_sensitive = false;
  double max_disagreement = 0;
  std::optional<double> growth_exponent;  ///< slope of ln d against -ln(T - t), or ln max_R against ln t
  std::vector<RungEvidence> rungs;
  std::string message;
};

/// Checkpoints are equally spaced in ln(T - t) (finite) or t (infinite) over
/// the common trusted window. A rung is TypeII when its checkpoints grow
/// monotonically by at least growth_factor, TypeI when they stay within
/// bounded_factor of the first. Disagreeing rungs, or TypeII rungs whose
/// diagnostics differ by more than `agreement`, give Inconclusive.
ClassificationReport classify(const std::vector<CurvatureTrace>& traces, TraceMode mode,
                              const ClassifyOptions& opts = {});

// ---------------------------------------------------------------------------
// Runs

struct MeshOptions {
  double log_r_max = 12;
  int nodes = 2048;
};

struct RunOptions {
  MeshOptions mesh;
  Controller controller = [] {
    Controller c;
    c.dt_init = 1e-3;
    c.dt_max = 0.05;
    return c;
  }();
  int snapshots = 16;            ///< equally spaced snapshots
  double lemma_slack = 1e-3;     ///< rescaled comparisons interpolate along the dilation
};

struct CylinderOracleOptions {
  int n = 3;
  double T = 1;
  double r_in = 1, r_out = 10;
  int intervals = 200;
  double target_change = 1e-3;
  std::vector<double> check_times{0.25, 0.5, 0.75, 0.9};
  double extinction_floor = 1e-8;
  std::vector<int> space_ladder{25, 50, 100};
  double space_dt = 1e-5;
  std::vector<double> time_ladder{1e-2, 5e-3, 2.5e-3};
  int time_intervals = 1600;
  double ladder_time = 0.5;
};

struct CylinderOracleReport {
  double max_rel_error = 0;      ///< over check_times
  std::optional<double> extinction_estimate;
  std::optional<double> floor_crossing;
  std::vector<double> space_errors, space_orders;
  std::vector<double> time_errors, time_orders;
  Trajectory trajectory;
  LowerBoundReport lemma;
  std::size_t ladder_lemma_failures = 0;  ///< fixed-step runs failing the lower bound
};

/// Adaptive run against the exact cylinder plus fixed-step ladders: space at
/// a small dt, time on a mesh fine enough that the time error dominates.
CylinderOracleReport run_cylinder_oracle(const CylinderOracleOptions& opts = {});

struct StationarityReport {
  double drift_per_time = 0;     ///< max over snapshots of |u(t)-u(0)|_∞ / |u(0)|_∞ / t
  std::vector<double> times, drift;
  Trajectory trajectory;
  LowerBoundReport lemma;
};

/// Steady soliton under the rescaled flow.
StationarityReport run_stationarity(const SolitonParams& params, double horizon, const RunOptions& opts = {});

struct TailConstant {
  double K = 0;                  ///< constant of w - A s = K + C3 / s
  double C3 = 0;
  double residual = 0;
};

/// Least squares of w - A s over s in `window` at unknown nodes: against
/// {1, 1/s}, or, when C3 is known, of w - A s - C3/s against {1, 1/s²}.
TailConstant fit_tail_constant(const FlowState& state, double A, std::pair<double, double> window,
                               std::optional<double> known_C3 = std::nullopt);

struct ConvergenceOptions {
  // the discrete stationary state sits O(h²) off u_{β,λ}; 8192 nodes keep
  // that offset below the tested decay
  RunOptions run = [] {
    RunOptions r;
    r.mesh.nodes = 8192;
    return r;
  }();
  double ball_radius = 10;
  std::pair<double, double> tail_window{6, 11};  ///< C3 = -(6-n)(n-1)/(4β) is subtracted
};

struct ConvergenceReport {
  double lambda_target = 0;      ///< λ(K) from the κ relation
  double lambda_identified = 0;  ///< ū(0) at the end of the run
  double tail_K = 0;             ///< declared when available, else fitted
  TailConstant tail;             ///< fitted from the sampled data
  std::vector<double> times, l1, sup;
  bool l1_monotone = false, sup_monotone = false;
  double l1_reduction = 0;       ///< l1.front() / l1.back()
  Trajectory trajectory;
  LowerBoundReport lemma;
};

/// Rescaled flow from data with the steady tail A = (n-1)(n-2)/β; distances
/// on the ball to u_{β,λ(K)} at the snapshots. K is the declared tail
/// constant, or the fitted one for Custom data. Throws FitError when κ(n) has
/// no fixture.
ConvergenceReport run_convergence(const InitialDataSpec& spec, double beta, double horizon,
                                  const ConvergenceOptions& opts = {});

struct ContractionReport {
  std::vector<double> times, gap, envelope;
  double slack = 0.05;
  std::size_t violations = 0;
  double fitted_rate = 0;        ///< slope of ln gap in t
  double predicted_rate = 0;     ///< γ - nβ
  bool passed = false;
  Trajectory trajectory_a, trajectory_b;
  LowerBoundReport lemma_a, lemma_b;
};

/// L¹ gap over the whole mesh between two rescaled runs with a common tail.
ContractionReport run_contraction(const InitialDataSpec& a, const InitialDataSpec& b, double beta,
                                  double horizon, const RunOptions& opts = {}, double slack = 0.05);

struct TailDriftOptions {
  RunOptions run = [] {
    RunOptions r;
    r.mesh.log_r_max = 20;
    return r;
  }();
  std::pair<double, double> window{10, 16};
  bool frozen_boundary = true;   ///< hold K fixed at r_max so the drift is not imposed
  double lemma_slack = 1e-9;
};

struct TailDriftReport {
  std::vector<double> times, K;
  double rate = 0;               ///< -dK/dt from a linear fit
  double expected = 0;           ///< (n-1)(n-2)
  double rel_error = 0;
  Trajectory trajectory;
  LowerBoundReport lemma;
};

/// Original-variable run from LogTail data; K(t) fitted on `window`.
TailDriftReport run_tail_drift(const InitialDataSpec& spec, double horizon, const TailDriftOptions& opts = {});

// ---------------------------------------------------------------------------
// Stationary operator and barriers

/// N[v] = (n-1)/m Δv^m + β r v_r + γ v from the stored r-derivatives of a
/// u(r) profile; at r = 0 the radial Laplacian uses its limit n v_rr.
Eigen::VectorXd soliton_operator_residual(const RadialProfile& profile, const SolitonParams& params);

struct BarrierReport {
  double h = 0, r_outer = 0;
  std::size_t nodes = 0;
  std::size_t super_violations = 0;   ///< nodes with N[v̄] > 0
  std::size_t sub_violations = 0;     ///< nodes with N[v̲] < 0
  double max_super = 0, min_sub = 0;
  std::size_t working_bound_violations = 0;  ///< nodes with N[v̄] > β/2 r u f_r
  bool passed = false;
};

/// v̄ = (r²/(r²-h²))^{1/(1-m)} u and v̲ = ((r²-h²)/r²)^{1/(1-m)} u on a
/// geometric mesh of (h, r_outer_factor h].
BarrierReport verify_barrier(const SolitonParams& params, double h, double r_outer_factor = 100, int nodes = 2000);

enum class BarrierSide { Both, Super, Sub };

/// Least h in [h_lo, h_hi] certifying `side`, by bisection to `rel_tol`.
/// Throws FitError when h_hi does not certify.
double barrier_threshold(const SolitonParams& params, double h_lo, double h_hi, double rel_tol = 1e-3,
                         double r_outer_factor = 100, BarrierSide side = BarrierSide::Both);

// ---------------------------------------------------------------------------
// Domination

struct DominationFamily {
  SolitonKind kind = SolitonKind::Steady;
  double beta = 1;
  double T = 1;                  ///< shrinker members are T^γ v_λ(x T^β)
};

struct DominationResult {
  std::optional<double> lambda;  ///< least dominating grid value
  std::vector<double> tried;
  std::string message;
};

/// Geometric search λ_k = lambda_min q^k, k < max_steps. The mesh is checked
/// nodewise; beyond r_max the tails are compared analytically from the
/// state's outer condition.
DominationResult domination_search(const FlowState& u0, const DominationFamily& family, double lambda_min = 1e-3,
                                   double q = 1.25, int max_steps = 200);

// ---------------------------------------------------------------------------
// Singularity experiments

struct SingularityOptions {
  std::vector<int> ladder{2560, 5120};  ///< node counts (intervals for Cylinder)
  double log_r_max = 50;
  std::pair<double, double> annulus{1, 10};  ///< Cylinder only
  double target_change = 0.05;
  double extinction_floor = 1e-280;
  int snapshots = 24;
  TraceWindowOptions window;
  ClassifyOptions classify;
  double lemma_slack = 1e-9;
};

struct SingularityRun {
  CurvatureTrace trace;
  LowerBoundReport lemma;
  std::optional<double> extinction_estimate;  ///< local extinction times
  std::optional<double> floor_crossing;
  Termination termination = Termination::Reached;
  std::size_t steps = 0;
  double r_max = 0;
  Trajectory trajectory;
};

struct SingularityReport {
  std::vector<SingularityRun> runs;
  ClassificationReport classification;
};

/// One run per ladder rung from `spec` in original variables, classified in
/// the given mode (FiniteTime uses spec.T).
SingularityReport run_singularity(const InitialDataSpec& spec, TraceMode mode, double horizon,
                                  const SingularityOptions& opts = {});

/// CylinderCapped(T, C) data to extinction.
SingularityReport run_finite_time_typeII(double T, double C, const SingularityOptions& opts = {}, int n = 3);

/// SlowLogTail data on a long horizon.
SingularityReport run_infinite_time_typeII(double horizon, const SingularityOptions& opts = {}, int n = 3);

}  // namespace yamabe
