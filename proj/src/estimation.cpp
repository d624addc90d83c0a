#include "hrmt/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "hrmt/errors.hpp"

namespace hrmt {

namespace {

constexpr const char* kModule = "estimation";
constexpr double kPenalty = 1e300;

// Fixed lattices of the multi-start grid.
std::vector<double> log_lattice(double lo, double hi, int points) {
  std::vector<double> out(points);
  for (int i = 0; i < points; ++i) {
    out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
  }
  return out;
}

std::size_t argmin(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) -
                                  v.begin());
}

// Evaluates f on every lattice point concurrently; results in lattice order.
template <typename F>
std::vector<double> eval_lattice(const std::vector<double>& xs, F&& f) {
  std::vector<std::future<double>> jobs;
  jobs.reserve(xs.size());
  for (double x : xs) {
    jobs.push_back(std::async(std::launch::async, [&f, x] { return f(x); }));
  }
  std::vector<double> out;
  out.reserve(xs.size());
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

// Fitting table: coarser than the defaults, ample for density comparisons.
TableOptions fit_table_options() {
  TableOptions opts;
  opts.min_points = 512;
  opts.max_step = 0.03;
  opts.trim = 1e-16;
  return opts;
}

// One-dimensional fit of log x: lattice, then simplex from the best point.
struct ScalarFit {
  double x = 0.0;
  double fx = 0.0;
  bool converged = false;
};

ScalarFit fit_log_scalar(const std::function<double(double)>& f,
                         const std::vector<double>& lattice, double lo,
                         double hi) {
  const auto values = eval_lattice(lattice, f);
  const std::size_t best = argmin(values);
  const double step =
      0.5 * std::log(lattice[1] / lattice[0]);
  auto objective = [&](const std::vector<double>& y) {
    const double x = std::exp(y[0]);
    if (!(x >= lo && x <= hi)) return kPenalty;
    return f(x);
  };
  const auto nm = nelder_mead(objective, {std::log(lattice[best])}, {step});
  ScalarFit out;
  if (nm.fx <= values[best]) {
    out = {std::exp(nm.x[0]), nm.fx, nm.converged};
  } else {
    out = {lattice[best], values[best], nm.converged};
  }
  return out;
}

// rho for eps0 = 1 on a uniform log grid; rho_eps0(l) = rho_1(l/eps0)/eps0.
class ScaledCurve {
 public:
  ScaledCurve(const SpectralModel& unit_model, double x_lo, double x_hi,
              int points)
      : log_lo_(std::log(x_lo)),
        dlog_(std::log(x_hi / x_lo) / (points - 1)) {
    std::vector<double> xs(points);
    for (int i = 0; i < points; ++i) xs[i] = std::exp(log_lo_ + dlog_ * i);
    const InverseResolvent zfun(unit_model, fit_table_options());
    const auto curve =
        esd_curve(zfun, xs, default_delta_schedule(1.0), SolverOptions{});
    rho_ = curve.rho;
    for (bool c : curve.converged) converged_ = converged_ && c;
  }

  bool converged() const noexcept { return converged_; }

  double operator()(double lambda, double eps0) const {
    const double t = (std::log(lambda / eps0) - log_lo_) / dlog_;
    const auto n = static_cast<long>(rho_.size());
    if (!(t >= 0.0) || t > static_cast<double>(n - 1)) return 0.0;
    const long i = std::min(static_cast<long>(t), n - 2);
    const double s = t - static_cast<double>(i);
    auto at = [&](long k) { return rho_[std::clamp(k, 0L, n - 1)]; };
    const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
    // Catmull-Rom.
    const double v =
        p1 + 0.5 * s *
                 (p2 - p0 +
                  s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
                       s * (3.0 * (p1 - p2) + p3 - p0)));
    return std::max(0.0, v) / eps0;
  }

 private:
  double log_lo_;
  double dlog_;
  std::vector<double> rho_;
  bool converged_ = true;
};

constexpr double kEps0Lo = 0.02;
constexpr double kEps0Hi = 5.0;

ScalarFit fit_eps0(const Histogram& hist,
                   const std::function<double(double, double)>& rho) {
  return fit_log_scalar(
      [&](double eps0) {
        return weighted_rmse(hist, [&](double l) { return rho(l, eps0); });
      },
      log_lattice(0.05, 2.0, 30), kEps0Lo, kEps0Hi);
}

MpBaseline fit_mp_fixed_q(const Histogram& hist, double q) {
  const auto fit = fit_eps0(
      hist, [q](double l, double e) { return mp_density(e, q, l); });
  return {fit.x, q, fit.fx, false};
}

MpBaseline fit_mp_free_q(const Histogram& hist) {
  auto rmse = [&](double eps0, double q) {
    return weighted_rmse(hist, [&](double l) { return mp_density(eps0, q, l); });
  };
  const auto eps_lat = log_lattice(0.05, 2.0, 30);
  const auto q_lat = log_lattice(0.02, 1.0, 20);
  double best = kPenalty, be = eps_lat[0], bq = q_lat[0];
  for (double q : q_lat) {
    const auto vals = eval_lattice(eps_lat, [&](double e) { return rmse(e, q); });
    const std::size_t i = argmin(vals);
    if (vals[i] < best) best = vals[i], be = eps_lat[i], bq = q;
  }
  auto objective = [&](const std::vector<double>& y) {
    const double e = std::exp(y[0]);
    const double q = std::exp(y[1]);
    if (!(e >= kEps0Lo && e <= kEps0Hi && q > 1e-3 && q <= 1.0)) {
      return kPenalty;
    }
    return rmse(e, q);
  };
  const auto nm = nelder_mead(objective, {std::log(be), std::log(bq)},
                              {0.05, 0.05});
  if (nm.fx < best) {
    be = std::exp(nm.x[0]);
    bq = std::exp(nm.x[1]);
    best = nm.fx;
  }
  return {be, bq, best, true};
}

}  // namespace

// Histograms ---------------------------------------------------------------

std::vector<double> Histogram::centers() const {
  std::vector<double> out(bins());
  for (std::size_t i = 0; i < bins(); ++i) out[i] = center(i);
  return out;
}

double Histogram::retained_fraction() const {
  const std::size_t total = count + excluded;
  return total == 0 ? 1.0
                    : static_cast<double>(count) / static_cast<double>(total);
}

std::size_t freedman_diaconis_bins(std::span<const double> data) {
  if (data.size() < 2) return 1;
  std::vector<double> v(data.begin(), data.end());
  std::sort(v.begin(), v.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1.0 - f) + v[i + 1] * f : v[i];
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  const double range = v.back() - v.front();
  if (!(iqr > 0.0) || !(range > 0.0)) return 1;
  const double h = 2.0 * iqr * std::cbrt(1.0 / static_cast<double>(v.size()));
  return static_cast<std::size_t>(
      std::clamp(std::ceil(range / h), 1.0, 10000.0));
}

Histogram make_histogram(std::span<const double> data,
                         const HistogramOptions& opts) {
  if (data.empty()) {
    throw DataError(kModule, "make_histogram", "empty sample");
  }
  double lo, hi;
  if (opts.range) {
    std::tie(lo, hi) = *opts.range;
  } else {
    const auto [mn, mx] = std::minmax_element(data.begin(), data.end());
    lo = *mn;
    hi = *mx;
  }
  if (!(hi >= lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw DataError(kModule, "make_histogram", "invalid histogram range",
                    {{"lo", to_param(lo)}, {"hi", to_param(hi)}});
  }
  std::size_t bins = opts.bins;
  if (bins == 0) {
    if (opts.range) {
      std::vector<double> inside;
      for (double x : data) {
        if (x >= lo && x <= hi) inside.push_back(x);
      }
      bins = freedman_diaconis_bins(inside);
    } else {
      bins = freedman_diaconis_bins(data);
    }
  }
  if (hi == lo) {
    // Degenerate sample: a single unit-width bin around the value.
    lo -= 0.5;
    hi += 0.5;
    bins = 1;
  }
  Histogram h;
  h.bin_edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    h.bin_edges[i] = lo + (hi - lo) * static_cast<double>(i) /
                              static_cast<double>(bins);
  }
  h.counts.assign(bins, 0);
  const double scale = static_cast<double>(bins) / (hi - lo);
  for (double x : data) {
    if (!(x >= lo && x <= hi)) {
      ++h.excluded;
      continue;
    }
    const auto i = std::min(static_cast<std::size_t>((x - lo) * scale), bins - 1);
    ++h.counts[i];
    ++h.count;
  }
  if (h.count == 0) {
    throw DataError(kModule, "make_histogram", "no sample inside the range",
                    {{"lo", to_param(lo)}, {"hi", to_param(hi)}});
  }
  h.densities.resize(bins);
  double mass = 0.0;
  for (std::size_t i = 0; i < bins; ++i) {
    h.densities[i] = static_cast<double>(h.counts[i]) /
                     (static_cast<double>(h.count) * h.width(i));
    mass += h.densities[i] * h.width(i);
  }
  // Remove the rounding drift of the uniform edges.
  for (double& d : h.densities) d /= mass;
  return h;
}

// Rolling variance and window selection ------------------------------------

std::vector<double> rolling_variance(std::span<const double> series, int L) {
  if (L < 2 || series.size() <= static_cast<std::size_t>(L)) {
    throw DomainError(kModule, "rolling_variance",
                      "require 2 <= L < series length",
                      {{"L", std::to_string(L)},
                       {"length", std::to_string(series.size())}});
  }
  const std::size_t n = series.size() - static_cast<std::size_t>(L) + 1;
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const auto w = series.subspan(t, static_cast<std::size_t>(L));
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / L;
    double s = 0.0;
    for (double x : w) s += (x - mean) * (x - mean);
    out[t] = s / L;
  }
  return out;
}

double compound_gaussian(const Histogram& eps_hist, double x) {
  double p = 0.0;
  for (std::size_t b = 0; b < eps_hist.bins(); ++b) {
    const double e = eps_hist.center(b);
    if (eps_hist.counts[b] == 0 || !(e > 0.0)) continue;
    p += eps_hist.densities[b] * eps_hist.width(b) *
         std::exp(-0.5 * x * x / e) / std::sqrt(2.0 * M_PI * e);
  }
  return p;
}

std::vector<int> default_window_candidates() {
  std::vector<int> out;
  for (int L = 4; L <= 64; ++L) out.push_back(L);
  return out;
}

WindowSelection select_window(std::span<const double> aggregated,
                              std::span<const int> candidates,
                              const HistogramOptions& opts) {
  if (candidates.size() < 2) {
    throw DomainError(kModule, "select_window",
                      "need at least two candidate windows");
  }
  const Histogram ret = make_histogram(aggregated, opts);
  if (ret.bins() < 2) {
    throw DataError(kModule, "select_window",
                    "return histogram collapses to a single bin");
  }
  const auto centers = ret.centers();
  auto rmse_for = [&](int L) {
    const auto eps = rolling_variance(aggregated, L);
    const Histogram eh = make_histogram(eps);
    if (eh.bins() < 2) {
      throw DataError(kModule, "select_window",
                      "variance histogram collapses to a single bin",
                      {{"L", std::to_string(L)}});
    }
    double s2 = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const double p = compound_gaussian(eh, centers[i]);
      s2 += (p - ret.densities[i]) * (p - ret.densities[i]);
    }
    return std::sqrt(s2 / static_cast<double>(centers.size()));
  };
  std::vector<std::future<double>> jobs;
  for (int L : candidates) {
    jobs.push_back(std::async(std::launch::async, rmse_for, L));
  }
  WindowSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double r = jobs[k].get();
    sel.rmse_by_L[candidates[k]] = r;
    if (r < best) {
      best = r;
      sel.L_star = candidates[k];
    }
  }
  return sel;
}

// Optimizer ----------------------------------------------------------------

NelderMeadResult nelder_mead(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x0, std::vector<double> step, double rel_tol,
    int max_evaluations) {
  const std::size_t n = x0.size();
  if (n == 0 || step.size() != n) {
    throw DomainError(kModule, "nelder_mead", "bad dimensions");
  }
  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step[i];
  std::vector<double> fv(n + 1);
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : kPenalty;
  };
  for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(pts[i]);

  std::vector<std::size_t> order(n + 1);
  bool converged = false;
  while (evals < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    double diam = 0.0, scale = 1.0;
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t d = 0; d < n; ++d) {
        diam = std::max(diam, std::abs(pts[i][d] - pts[best][d]));
        scale = std::max(scale, std::abs(pts[best][d]));
      }
    }
    const double spread = fv[worst] - fv[best];
    if (spread <= rel_tol * std::abs(fv[best]) + 1e-300 &&
        diam <= rel_tol * scale) {
      converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t d = 0; d < n; ++d) centroid[d] += pts[i][d] / n;
    }
    auto along = [&](double t) {
      std::vector<double> x(n);
      for (std::size_t d = 0; d < n; ++d) {
        x[d] = centroid[d] + t * (pts[worst][d] - centroid[d]);
      }
      return x;
    };
    const auto xr = along(-1.0);
    const double fr = eval(xr);
    if (fr < fv[best]) {
      const auto xe = along(-2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        fv[worst] = fe;
      } else {
        pts[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      pts[worst] = xr;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const auto xc = along(outside ? -0.5 : 0.5);
      const double fc = eval(xc);
      if (fc < (outside ? fr : fv[worst])) {
        pts[worst] = xc;
        fv[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= n; ++i) {
          if (i == best) continue;
          for (std::size_t d = 0; d < n; ++d) {
            pts[i][d] = pts[best][d] + 0.5 * (pts[i][d] - pts[best][d]);
          }
          fv[i] = eval(pts[i]);
        }
      }
    }
  }
  const std::size_t best = argmin(fv);
  return {pts[best], fv[best], evals, converged};
}

// Fits ---------------------------------------------------------------------

double weighted_rmse(const Histogram& hist,
                     const std::function<double(double)>& model) {
  const double s = hist.retained_fraction();
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < hist.bins(); ++i) {
    const double w = static_cast<double>(hist.counts[i]);
    if (w == 0.0) continue;
    // Bin average of the model (3-point Gauss-Legendre).
    const double c = hist.center(i), hw = 0.5 * hist.width(i);
    const double a = std::sqrt(0.6) * hw;
    const double m =
        (5.0 * model(c - a) + 8.0 * model(c) + 5.0 * model(c + a)) / 18.0;
    const double r = m - s * hist.densities[i];
    num += w * r * r;
    den += w;
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

FitReport fit_background(const Histogram& eps_hist, BackgroundClass cls,
                         int N) {
  if (N < 1) {
    throw DomainError(kModule, "fit_background", "require N >= 1",
                      {{"N", std::to_string(N)}});
  }
  auto rmse = [&](double beta) {
    const BackgroundTable table(BackgroundModel::uniform(cls, N, beta, 1.0),
                                fit_table_options());
    return weighted_rmse(eps_hist, [&](double e) { return table.density(e); });
  };
  const auto fit = fit_log_scalar(rmse, log_lattice(0.1, 100.0, 13), 1e-2, 1e4);
  FitReport r;
  r.kind = "background";
  r.background = BackgroundModel::uniform(cls, N, fit.x, 1.0);
  r.rmse = fit.fx;
  r.fitted["beta"] = fit.x;
  r.fixed["eps0"] = 1.0;
  r.fixed["N"] = N;
  r.converged = fit.converged;
  if (!fit.converged) r.message = "simplex hit the evaluation cap; best-so-far";
  r.selection_table.push_back({cls, N, fit.x, fit.fx, fit.converged});
  return r;
}

FitReport select_model(const Histogram& eps_hist, int N_max) {
  if (N_max < 1) {
    throw DomainError(kModule, "select_model", "require N_max >= 1",
                      {{"N_max", std::to_string(N_max)}});
  }
  std::vector<std::future<FitReport>> jobs;
  for (auto cls : {BackgroundClass::Wishart, BackgroundClass::InverseWishart}) {
    for (int N = 1; N <= N_max; ++N) {
      jobs.push_back(std::async(std::launch::async, [&eps_hist, cls, N] {
        return fit_background(eps_hist, cls, N);
      }));
    }
  }
  std::vector<FitReport> fits;
  for (auto& j : jobs) fits.push_back(j.get());
  std::size_t best = 0;
  for (std::size_t i = 1; i < fits.size(); ++i) {
    if (fits[i].rmse < fits[best].rmse) best = i;
  }
  FitReport out = fits[best];
  out.selection_table.clear();
  for (const auto& f : fits) out.selection_table.push_back(f.selection_table[0]);
  return out;
}

double auto_bulk_cutoff(std::span<const double> eigenvalues) {
  std::vector<double> v(eigenvalues.begin(), eigenvalues.end());
  if (v.size() < 3) return std::numeric_limits<double>::infinity();
  std::sort(v.begin(), v.end());
  std::vector<double> gaps(v.size() - 1);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) gaps[i] = v[i + 1] - v[i];
  std::vector<double> tmp = gaps;
  std::nth_element(tmp.begin(), tmp.begin() + tmp.size() / 2, tmp.end());
  const double median = tmp[tmp.size() / 2];
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    if (v[i + 1] > 3.0 * mean && gaps[i] > 5.0 * median) return v[i];
  }
  return std::numeric_limits<double>::infinity();
}

Histogram empirical_esd(std::span<const double> eigenvalues,
                        std::optional<double> bulk_cutoff,
                        const HistogramOptions& opts) {
  for (double x : eigenvalues) {
    if (!(x > 0.0)) {
      throw DataError(kModule, "empirical_esd", "eigenvalues must be positive",
                      {{"eigenvalue", to_param(x)}});
    }
  }
  const double cutoff = bulk_cutoff ? *bulk_cutoff : auto_bulk_cutoff(eigenvalues);
  std::vector<double> kept;
  for (double x : eigenvalues) {
    if (x <= cutoff) kept.push_back(x);
  }
  const std::size_t excluded = eigenvalues.size() - kept.size();
  if (2 * excluded > eigenvalues.size()) {
    throw DataError(kModule, "empirical_esd",
                    "cutoff excludes more than half of the eigenvalues",
                    {{"cutoff", to_param(cutoff)},
                     {"excluded", std::to_string(excluded)},
                     {"total", std::to_string(eigenvalues.size())}});
  }
  HistogramOptions o = opts;
  if (o.range) {
    o.range->second = std::min(o.range->second, cutoff);
  }
  Histogram h = make_histogram(kept, o);
  h.excluded += excluded;
  return h;
}

FitReport fit_esd(const Histogram& hist, double q, int N, BackgroundClass cls) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw DomainError(kModule, "fit_esd", "require 0 < q <= 1",
                      {{"q", to_param(q)}});
  }
  if (N < 0) {
    throw DomainError(kModule, "fit_esd", "require N >= 0",
                      {{"N", std::to_string(N)}});
  }
  FitReport r;
  r.kind = "esd";
  r.q = q;
  r.fixed["q"] = q;
  r.fixed["N"] = N;
  r.excluded_eigenvalues = hist.excluded;
  r.mp_baselines.push_back(fit_mp_fixed_q(hist, q));
  r.mp_baselines.push_back(fit_mp_free_q(hist));

  if (N == 0) {
    const auto& mp = r.mp_baselines[0];
    r.background = BackgroundModel::delta(mp.eps0);
    r.rmse = mp.rmse;
    r.fitted["eps0"] = mp.eps0;
    return r;
  }

  const double c_lo = hist.center(0);
  const double c_hi = hist.center(hist.bins() - 1);
  const double x_lo = 0.9 * c_lo / kEps0Hi;
  const double x_hi = 1.1 * c_hi / kEps0Lo;
  constexpr int kPoints = 400;

  struct Profile {
    double eps0, rmse;
    bool converged;
  };
  auto profile = [&](double beta) {
    const SpectralModel unit(BackgroundModel::uniform(cls, N, beta, 1.0), q);
    const ScaledCurve curve(unit, x_lo, x_hi, kPoints);
    const auto fit = fit_eps0(hist, [&](double l, double e) { return curve(l, e); });
    return Profile{fit.x, fit.fx, fit.converged && curve.converged()};
  };
  std::map<double, Profile> cache;
  auto cached = [&](double beta) -> const Profile& {
    auto it = cache.find(beta);
    if (it == cache.end()) it = cache.emplace(beta, profile(beta)).first;
    return it->second;
  };

  const auto lattice = log_lattice(0.1, 100.0, 13);
  {
    std::vector<std::future<Profile>> jobs;
    for (double b : lattice) {
      jobs.push_back(std::async(std::launch::async, profile, b));
    }
    for (std::size_t i = 0; i < lattice.size(); ++i) {
      cache.emplace(lattice[i], jobs[i].get());
    }
  }
  const auto fit = fit_log_scalar([&](double b) { return cached(b).rmse; },
                                  lattice, 1e-2, 1e4);
  const Profile& best = cached(fit.x);
  r.background = BackgroundModel::uniform(cls, N, fit.x, best.eps0);
  r.rmse = best.rmse;
  r.fitted["beta"] = fit.x;
  r.fitted["eps0"] = best.eps0;
  r.converged = fit.converged && best.converged;
  if (!r.converged) {
    r.message = "fit did not meet tolerance everywhere; best-so-far reported";
  }
  return r;
}

double noise_fraction(const FitReport& report) {
  const auto it = report.fitted.find("eps0");
  if (it == report.fitted.end()) {
    throw DomainError(kModule, "noise_fraction", "report has no fitted eps0");
  }
  return it->second;
}

}  // namespace hrmt
