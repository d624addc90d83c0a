#pragma once

// Least-squares fits of background and eigenvalue densities to empirical
// histograms, rolling variance estimation and window selection.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hrmt/background.hpp"
#include "hrmt/spectral.hpp"

namespace hrmt {

// Histograms ---------------------------------------------------------------

struct Histogram {
  std::vector<double> bin_edges;
  std::vector<double> densities;
  std::vector<std::size_t> counts;
  /// Samples inside the bins.
  std::size_t count = 0;
  /// Samples left out (outside the range or above a bulk cutoff).
  std::size_t excluded = 0;

  std::size_t bins() const noexcept { return densities.size(); }
  double center(std::size_t i) const {
    return 0.5 * (bin_edges[i] + bin_edges[i + 1]);
  }
  double width(std::size_t i) const { return bin_edges[i + 1] - bin_edges[i]; }
  std::vector<double> centers() const;
  /// count / (count + excluded): scales densities to the full sample.
  double retained_fraction() const;
};

struct HistogramOptions {
  /// 0 selects the Freedman-Diaconis rule.
  std::size_t bins = 0;
  /// Defaults to [min, max] of the data.
  std::optional<std::pair<double, double>> range;
};

/// ceil(range / (2 IQR n^{-1/3})), clamped to [1, 10000].
std::size_t freedman_diaconis_bins(std::span<const double> data);

/// Density-normalized histogram (sum density * width = 1). Throws DataError
/// for empty input or when no sample falls inside the range.
Histogram make_histogram(std::span<const double> data,
                         const HistogramOptions& opts = {});

// Rolling variance and window selection ------------------------------------

/// Population variance over each L-point window; length len - L + 1.
std::vector<double> rolling_variance(std::span<const double> series, int L);

struct WindowSelection {
  int L_star = 0;
  std::map<int, double> rmse_by_L;
};

/// Gaussian compounded with a variance histogram:
/// sum_b m_b N(x; 0, eps_b) over bins with positive centre and count.
double compound_gaussian(const Histogram& eps_hist, double x);

/// Candidate L in [4, 64].
std::vector<int> default_window_candidates();

/// L minimizing the RMSE between the return histogram and the Gaussian
/// compounded with the eps_L histogram, both on the return-histogram bin
/// centres. Throws DataError when a histogram collapses to one bin.
WindowSelection select_window(std::span<const double> aggregated,
                              std::span<const int> candidates,
                              const HistogramOptions& opts = {});

// Optimizer ----------------------------------------------------------------

struct NelderMeadResult {
  std::vector<double> x;
  double fx = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Downhill simplex. Stops when the spread of function values is below
/// rel_tol * |f_best| (plus a tiny absolute floor) and the simplex diameter
/// is below rel_tol * max(1, |x|).
NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x0, std::vector<double> step, double rel_tol = 1e-6,
    int max_evaluations = 1000);

// Fits ---------------------------------------------------------------------

struct SelectionRow {
  BackgroundClass cls = BackgroundClass::Wishart;
  int N = 0;
  double beta = 0.0;
  double rmse = 0.0;
  bool converged = false;
};

struct MpBaseline {
  double eps0 = 0.0;
  double q = 0.0;
  double rmse = 0.0;
  bool q_free = false;
};

struct FitReport {
  /// "background" or "esd".
  std::string kind;
  BackgroundModel background = BackgroundModel::delta(1.0);
  std::optional<double> q;
  double rmse = 0.0;
  std::map<std::string, double> fitted;
  std::map<std::string, double> fixed;
  std::vector<SelectionRow> selection_table;
  std::optional<WindowSelection> window;
  std::vector<MpBaseline> mp_baselines;
  std::size_t excluded_eigenvalues = 0;
  bool converged = true;
  std::string message;
};

/// Weighted RMSE sqrt(sum w r^2 / sum w) of model - data at the bin centres,
/// weights = bin counts; data densities are scaled by retained_fraction().
double weighted_rmse(const Histogram& hist,
                     const std::function<double(double)>& model);

/// beta of f_N with eps0 = 1 fixed: log-lattice 0.1..100, then simplex.
FitReport fit_background(const Histogram& eps_hist, BackgroundClass cls, int N);

/// Both classes, N = 1..N_max; the minimum-rmse row wins.
FitReport select_model(const Histogram& eps_hist, int N_max);

/// Auto bulk cutoff: the lower end of the first gap wider than 5 median
/// spacings among gaps ending above 3 * mean; +inf when there is none.
double auto_bulk_cutoff(std::span<const double> eigenvalues);

/// Histogram of eigenvalues <= cutoff (auto when empty). Throws DataError for
/// non-positive eigenvalues or when more than half would be excluded.
Histogram empirical_esd(std::span<const double> eigenvalues,
                        std::optional<double> bulk_cutoff = {},
                        const HistogramOptions& opts = {});

/// (beta, eps0) for fixed q, N and class, plus MP baselines with eps0 free
/// and with (eps0, q) free. N = 0 fits MP with q fixed as the main model.
FitReport fit_esd(const Histogram& hist, double q, int N, BackgroundClass cls);

/// Fitted eps0 of an ESD fit.
double noise_fraction(const FitReport& report);

}  // namespace hrmt
