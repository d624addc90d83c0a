#pragma once

// Hierarchical variance backgrounds: an N-level cascade of mean-preserving
// gamma (Wishart class) or inverse-gamma (inverse-Wishart class) multipliers
// acting on a base variance eps0, and the Gaussian compounds built on them.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hrmt {

enum class BackgroundClass { Wishart, InverseWishart };

std::string to_string(BackgroundClass cls);
/// Accepts "wishart" / "inverse_wishart" (also "inverse-wishart", "iw", "w").
BackgroundClass parse_background_class(const std::string& name);

class BackgroundModel {
 public:
  /// Throws DomainError unless every beta > 0 and eps0 > 0.
  BackgroundModel(BackgroundClass cls, std::vector<double> betas, double eps0);

  /// N levels sharing one shape parameter.
  static BackgroundModel uniform(BackgroundClass cls, int levels, double beta,
                                 double eps0);
  /// Degenerate background f(eps) = delta(eps - eps0), i.e. N = 0.
  static BackgroundModel delta(double eps0,
                               BackgroundClass cls = BackgroundClass::Wishart);

  BackgroundClass cls() const noexcept { return cls_; }
  int levels() const noexcept { return static_cast<int>(betas_.size()); }
  const std::vector<double>& betas() const noexcept { return betas_; }
  double eps0() const noexcept { return eps0_; }
  /// Product of the level shapes.
  double omega() const noexcept;
  bool is_delta() const noexcept { return betas_.empty(); }

  bool operator==(const BackgroundModel&) const = default;

 private:
  BackgroundClass cls_;
  std::vector<double> betas_;
  double eps0_;
};

/// Tabulated density. When log_spaced, points are uniform in log(eps) and
/// integrals are taken in the log coordinate.
struct DensityGrid {
  std::vector<double> points;
  std::vector<double> values;
  bool log_spaced = false;
};

/// Trapezoidal mass of a grid (in u = log eps when log_spaced).
double grid_mass(const DensityGrid& grid);
/// Trapezoidal first moment of a grid.
double grid_mean(const DensityGrid& grid);

/// f(eps_i | eps_{i-1}) for level i in 1..N. eps = 0 returns the boundary
/// limit of the kernel; negative eps or nonpositive eps_prev are rejected.
double conditional_kernel(const BackgroundModel& model, int level, double eps,
                          double eps_prev);

struct TableOptions {
  /// Minimum number of nodes of the log grid.
  std::size_t min_points = 2048;
  /// Upper bound on the log-grid step.
  double max_step = 0.02;
  /// Hard cap on the number of nodes; the step widens to respect it.
  std::size_t max_points = 16384;
  /// Support is trimmed where density * max(1, eps/eps0) falls below this
  /// fraction of the peak.
  double trim = 1e-80;
};

/// Density of log(eps_N / eps0) tabulated on a uniform grid by recursive
/// discrete convolution of the level kernels. The trapezoid rule is
/// spectrally accurate for these smooth, rapidly decaying integrands, so the
/// table reproduces mass and mean to near machine precision.
class BackgroundTable {
 public:
  explicit BackgroundTable(const BackgroundModel& model,
                           const TableOptions& opts = {});

  const BackgroundModel& model() const noexcept { return model_; }
  double u_min() const noexcept { return u0_; }
  double u_max() const noexcept { return u0_ + du_ * (h_.size() - 1); }
  double step() const noexcept { return du_; }
  std::size_t size() const noexcept { return h_.size(); }
  /// Density in u = log(eps/eps0) at node i.
  double log_density_node(std::size_t i) const { return h_[i]; }
  double eps_node(std::size_t i) const;

  /// Density in u; six-point Lagrange interpolation of log h, 0 outside.
  double log_density(double u) const;
  /// f_N(eps).
  double density(double eps) const;
  /// P(eps_N <= eps).
  double cdf(double eps) const;

  /// The table as a DensityGrid over eps (values are f_N(eps)).
  DensityGrid grid() const;

 private:
  template <typename Kernels, typename Supports>
  void build(const Kernels& ks, const Supports& supports, double du,
             double trim);

  static constexpr double kMaxLogSpan = 690.0;

  BackgroundModel model_;
  double u0_ = 0.0;
  double du_ = 0.0;
  std::vector<double> h_;
  std::vector<double> log_h_;
  std::vector<double> cum_;
};

/// f_N evaluated on the caller's grid (interpolated from a BackgroundTable).
/// Throws DomainError for N = 0.
DensityGrid density_fN(const BackgroundModel& model,
                       std::span<const double> eps_grid);

/// Automatically sized log-spaced grid covering the effective support.
DensityGrid make_density_grid(const BackgroundModel& model,
                              const TableOptions& opts = {});

/// Pointwise f_N(eps) by nested adaptive quadrature of the level kernels.
/// Independent of the convolution table; slower (N - 1 nested integrals).
/// Throws ConvergenceError when a nested integral misses tolerance.
double density_direct(const BackgroundModel& model, double eps);

/// Asymptotic (unnormalized) large-eps form of f_N: modified stretched
/// exponential for Wishart, power law for inverse-Wishart.
double tail_fN(const BackgroundModel& model, double eps);

/// iid draws of eps_N: eps0 times N independent mean-one gamma or
/// inverse-gamma multipliers. Deterministic for a given seed.
std::vector<double> sample_cascade(const BackgroundModel& model,
                                   std::size_t count, std::uint64_t seed);

/// Univariate Gaussian compound density P_N(r).
double return_density(const BackgroundModel& model, double r);
double return_density(const BackgroundTable& table, double r);

/// p-variate compound density at any r with r' Sigma0^{-1} r = qform, for
/// Sigma0 = eps0 * identity. Throws DomainError when the compound integral
/// diverges or its integrand is not contained in the tabulated support.
double multivariate_density_qform(const BackgroundModel& model, double qform,
                                  int p);

/// <eps^k> of the background, closed form (may be +inf).
double background_moment(const BackgroundModel& model, int k);

}  // namespace hrmt
