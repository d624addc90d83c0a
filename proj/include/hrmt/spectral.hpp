#pragma once

// Eigenvalue spectral density of sample correlation matrices built from
// vectors with a hierarchical variance background. The inverse resolvent
//   z(g) = 1/g + \int f(eps) eps / (1 - q g eps) d eps
// is evaluated by quadrature and inverted numerically; rho follows from the
// boundary value of the resolvent on the real axis.

#include <array>
#include <complex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hrmt/background.hpp"

namespace hrmt {

using cplx = std::complex<double>;

struct SpectralModel {
  BackgroundModel background;
  double q;

  /// Throws DomainError unless 0 < q <= 1.
  SpectralModel(BackgroundModel bg, double q);
};

struct ResolventSolution {
  double lambda = 0.0;
  cplx g{};
  /// |z(g) - (lambda + i delta)|
  double residual = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct EsdCurve {
  std::vector<double> lambdas;
  std::vector<double> rho;
  std::vector<bool> converged;
  /// Smallest lambda where rho exceeds 1e-4 of the peak.
  double bulk_edge_lower = 0.0;
  /// Trapezoidal mass over converged points.
  double mass = 0.0;
};

// Marchenko-Pastur baseline ------------------------------------------------

std::pair<double, double> mp_edges(double eps0, double q);
double mp_density(double eps0, double q, double lambda);
/// Closed-form MP resolvent on the physical branch (g ~ 1/z at infinity).
cplx mp_resolvent(double eps0, double q, cplx z);

// Inverse resolvent --------------------------------------------------------

/// Default table for z(g): step 0.01, trim 1e-30.
TableOptions resolvent_table_options();

/// z(g) and dz/dg for a fixed model. For N >= 1 the background density is
/// interpolated by local cubics through the nodes of its BackgroundTable; panels
/// close to the pole 1 - q g eps = 0 are integrated in closed form, the rest
/// with fixed Gauss-Legendre rules.
class InverseResolvent {
 public:
  explicit InverseResolvent(const SpectralModel& model,
                            const TableOptions& table = resolvent_table_options());

  const SpectralModel& model() const noexcept { return model_; }

  cplx operator()(cplx g) const { return evaluate(g).first; }
  /// (z(g), z'(g)). Throws DomainError at g = 0 or when a real g puts the
  /// pole on the integration contour.
  std::pair<cplx, cplx> evaluate(cplx g) const;

 private:
  SpectralModel model_;
  std::vector<double> eps_;
  std::vector<double> f_;
  // Per panel: centre, half width and cubic coefficients of f in
  // t = (eps - centre) / half_width.
  std::vector<double> center_;
  std::vector<double> half_;
  std::vector<std::array<double, 4>> coef_;
};

cplx inverse_resolvent(const SpectralModel& model, cplx g);

// Resolvent and density ----------------------------------------------------

struct SolverOptions {
  int max_iterations = 200;
  /// Newton stops when |z(g) - zeta| <= tol * max(1, |zeta|).
  double tolerance = 1e-13;
  /// Continuation starts at start_factor * eps0 * (1 + sqrt q)^2.
  double start_factor = 50.0;
  /// Maximum bisection depth of a continuation step.
  int max_refinements = 14;
};

/// {1e-3, 3e-4, 1e-4} * eps0.
std::vector<double> default_delta_schedule(double eps0);

/// g solving z(g) = lambda + i delta on the physical branch, reached by
/// continuation in decreasing lambda from the large-lambda asymptote.
ResolventSolution resolvent(const SpectralModel& model, double lambda,
                            double delta, const SolverOptions& opts = {});
ResolventSolution resolvent(const InverseResolvent& zfun, double lambda,
                            double delta, const SolverOptions& opts = {});

/// Resolvent along a whole grid (one continuation per call). lambdas must be
/// positive and strictly increasing; solutions are returned in grid order.
std::vector<ResolventSolution> resolvent_path(const InverseResolvent& zfun,
                                              std::span<const double> lambdas,
                                              double delta,
                                              const SolverOptions& opts = {});

/// rho(lambda) on the grid: (1/pi)|Im g(lambda + i delta)| for each delta of
/// the schedule, Richardson-extrapolated to delta -> 0.
EsdCurve esd_curve(const SpectralModel& model, std::span<const double> lambdas,
                   std::span<const double> delta_schedule,
                   const SolverOptions& opts = {});
EsdCurve esd_curve(const InverseResolvent& zfun,
                   std::span<const double> lambdas,
                   std::span<const double> delta_schedule,
                   const SolverOptions& opts = {});
/// Uses default_delta_schedule.
EsdCurve esd_curve(const SpectralModel& model, std::span<const double> lambdas);

/// Peak (location, height) of a curve, refined by a parabola through the
/// largest sample and its neighbours.
std::pair<double, double> curve_peak(const EsdCurve& curve);

/// Unnormalized large-lambda asymptote of rho_N.
double esd_tail(const SpectralModel& model, double lambda);

struct TailConsistencyReport {
  std::vector<double> lambdas;
  std::vector<double> ratios;  // rho(lambda) / h(lambda / (eps0 q))
  /// (max - min) / min of the ratio over the last decade of the grid.
  double drift = 0.0;
  /// Asymptotic value of the ratio, 1 / (q^2 eps0).
  double expected_limit = 0.0;
  bool sufficient = false;  // enough resolvable tail mass to judge
  bool passed = false;      // sufficient && drift <= 0.15
  std::string note;
};

/// Checks rho(lambda) ~ h(lambda / (eps0 q)) in the deep tail, h being the
/// background density of eps / eps0. Throws DomainError for N = 0.
TailConsistencyReport tail_consistency(const SpectralModel& model,
                                       std::span<const double> lambdas);

}  // namespace hrmt
