#include "hrmt/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <numbers>

#include <Eigen/Dense>

#include "hrmt/errors.hpp"
#include "hrmt/quadrature.hpp"

namespace hrmt {

namespace {

constexpr const char* kModule = "spectral_engine";
constexpr double kPi = std::numbers::pi;
// Residual accepted when Newton stalls at the floating-point floor.
constexpr double kStallResidual = 5e-11;

constexpr std::array<double, 3> kGauss3Nodes = {-0.774596669241483377035853,
                                                0.0, 0.774596669241483377035853};
constexpr std::array<double, 3> kGauss3Weights = {5.0 / 9.0, 8.0 / 9.0,
                                                  5.0 / 9.0};

void check_mp_args(double eps0, double q, const char* op) {
  if (!(eps0 > 0.0) || !(q > 0.0 && q <= 1.0)) {
    throw DomainError(kModule, op, "require eps0 > 0 and 0 < q <= 1",
                      {{"eps0", to_param(eps0)}, {"q", to_param(q)}});
  }
}

// Integral over s in [-hw, hw] of P(s) / w(s)^k, w(s) = wc - a s, with P given
// by monomial coefficients in s. Exact up to rounding; used for panels close
// to the zero of w where fixed-order rules lose accuracy.
template <std::size_t M>
cplx pole_panel(const std::array<double, M>& p, cplx a, cplx wc, double hw,
                int k) {
  const cplx ainv = 1.0 / a;
  // B_l = (-1)^l sum_{j >= l} p_j a^{-j} C(j, l) wc^{j - l}
  std::array<cplx, M> pa{};
  cplx apow = 1.0;
  for (std::size_t j = 0; j < M; ++j) {
    pa[j] = p[j] * apow;
    apow *= ainv;
  }
  const cplx w1 = wc + a * hw;
  const cplx w2 = wc - a * hw;
  cplx total = 0.0;
  for (std::size_t l = 0; l < M; ++l) {
    cplx b = 0.0;
    cplx wpow = 1.0;
    double binom = 1.0;
    for (std::size_t j = l; j < M; ++j) {
      b += pa[j] * binom * wpow;
      binom = binom * static_cast<double>(j + 1) / static_cast<double>(j + 1 - l);
      wpow *= wc;
    }
    if (l % 2 == 1) b = -b;
    const int n = static_cast<int>(l) - k;
    cplx iw;
    if (n == -1) {
      iw = std::log(w2 / w1);
    } else if (n == -2) {
      iw = (w2 - w1) / (w1 * w2);
    } else {
      iw = (std::pow(w2, n + 1) - std::pow(w1, n + 1)) / static_cast<double>(n + 1);
    }
    total += b * iw;
  }
  return -ainv * total;
}

struct NewtonResult {
  cplx g;
  cplx dz;
  double residual = 0.0;
  bool converged = false;
  int iterations = 0;
};

NewtonResult newton(const InverseResolvent& zfun, cplx zeta, cplx g0,
                    const SolverOptions& opts) {
  NewtonResult r;
  r.g = g0;
  const double tol =
      std::min(opts.tolerance * std::max(1.0, std::abs(zeta)), 1e-11);
  std::pair<cplx, cplx> ev;
  try {
    ev = zfun.evaluate(r.g);
  } catch (const DomainError&) {
    r.residual = std::numeric_limits<double>::infinity();
    return r;
  }
  cplx F = ev.first - zeta;
  r.dz = ev.second;
  r.residual = std::abs(F);
  for (int it = 0; it < opts.max_iterations; ++it) {
    r.iterations = it;
    if (r.residual <= tol) {
      r.converged = true;
      return r;
    }
    const cplx step = -F / r.dz;
    double damp = 1.0;
    bool improved = false;
    for (int h = 0; h < 60; ++h, damp *= 0.5) {
      const cplx gt = r.g + damp * step;
      if (zeta.imag() > 0.0 && !(gt.imag() < 0.0)) continue;
      std::pair<cplx, cplx> et;
      try {
        et = zfun.evaluate(gt);
      } catch (const DomainError&) {
        continue;
      }
      const cplx Ft = et.first - zeta;
      if (std::abs(Ft) < r.residual) {
        r.g = gt;
        F = Ft;
        r.dz = et.second;
        r.residual = std::abs(Ft);
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  r.converged = r.residual <= tol || r.residual <= kStallResidual;
  return r;
}

struct PathState {
  double lambda;
  cplx g;
  cplx dz;
};

// Moves the continuation from cur to target, bisecting the step when the
// Newton solve fails or lands off the predicted branch.
bool advance(const InverseResolvent& zfun, PathState& cur, double target,
             double delta, const SolverOptions& opts, int depth,
             ResolventSolution& out) {
  const cplx zeta(target, delta);
  const cplx g_pred = cur.g + (target - cur.lambda) / cur.dz;
  const NewtonResult nr = newton(zfun, zeta, g_pred, opts);
  const bool on_branch =
      nr.converged && nr.g.imag() < 0.0 &&
      std::abs(nr.g - g_pred) <=
          0.5 * std::abs(g_pred - cur.g) + 1e-8 * std::abs(cur.g);
  if (on_branch || (depth >= opts.max_refinements && nr.converged &&
                    nr.g.imag() < 0.0)) {
    cur = {target, nr.g, nr.dz};
    out = {target, nr.g, nr.residual, true, nr.iterations};
    return true;
  }
  if (depth >= opts.max_refinements) {
    out = {target, nr.g, nr.residual, false, nr.iterations};
    return false;
  }
  const double mid = 0.5 * (cur.lambda + target);
  ResolventSolution tmp;
  if (!advance(zfun, cur, mid, delta, opts, depth + 1, tmp)) {
    out = tmp;
    out.lambda = target;
    out.converged = false;
    return false;
  }
  return advance(zfun, cur, target, delta, opts, depth + 1, out);
}

double extrapolate_to_zero(const std::vector<double>& x,
                           const std::vector<double>& y) {
  // Neville's scheme evaluated at x = 0.
  std::vector<double> p = y;
  const std::size_t n = x.size();
  for (std::size_t m = 1; m < n; ++m) {
    for (std::size_t i = 0; i + m < n; ++i) {
      p[i] = (x[i + m] * p[i] - x[i] * p[i + 1]) / (x[i + m] - x[i]);
    }
  }
  return p[0];
}

void check_grid(std::span<const double> lambdas, const char* op) {
  if (lambdas.empty()) {
    throw DomainError(kModule, op, "lambda grid is empty");
  }
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0) || (i > 0 && !(lambdas[i] > lambdas[i - 1]))) {
      throw DomainError(kModule, op,
                        "lambda grid must be positive and increasing",
                        {{"index", std::to_string(i)},
                         {"lambda", to_param(lambdas[i])}});
    }
  }
}

}  // namespace

SpectralModel::SpectralModel(BackgroundModel bg, double q_)
    : background(std::move(bg)), q(q_) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw DomainError(kModule, "SpectralModel", "q must lie in (0, 1]",
                      {{"q", to_param(q)}});
  }
}

std::pair<double, double> mp_edges(double eps0, double q) {
  check_mp_args(eps0, q, "mp_edges");
  const double s = std::sqrt(q);
  return {eps0 * (1.0 - s) * (1.0 - s), eps0 * (1.0 + s) * (1.0 + s)};
}

double mp_density(double eps0, double q, double lambda) {
  const auto [lo, hi] = mp_edges(eps0, q);
  if (!(lambda > lo && lambda < hi)) return 0.0;
  return std::sqrt((hi - lambda) * (lambda - lo)) /
         (2.0 * kPi * q * eps0 * lambda);
}

cplx mp_resolvent(double eps0, double q, cplx z) {
  const auto [lo, hi] = mp_edges(eps0, q);
  const cplx s = std::sqrt(z - hi) * std::sqrt(z - lo);
  return (z - eps0 * (1.0 - q) - s) / (2.0 * z * q * eps0);
}

// InverseResolvent ----------------------------------------------------------

TableOptions resolvent_table_options() {
  TableOptions opts;
  opts.max_step = 0.01;
  // Mass below this level does not move z(g); a tighter trim only costs nodes.
  opts.trim = 1e-30;
  return opts;
}

InverseResolvent::InverseResolvent(const SpectralModel& model,
                                   const TableOptions& table)
    : model_(model) {
  if (model.background.is_delta()) return;
  const BackgroundTable tab(model.background, table);
  const std::size_t n = tab.size();
  eps_.resize(n);
  f_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    eps_[i] = tab.eps_node(i);
    f_[i] = tab.log_density_node(i) / eps_[i];
  }
  // Cubic in t = (eps - center) / half_width through four neighbouring nodes.
  const std::size_t panels = n - 1;
  coef_.resize(panels);
  center_.resize(panels);
  half_.resize(panels);
  for (std::size_t i = 0; i < panels; ++i) {
    const double c = 0.5 * (eps_[i] + eps_[i + 1]);
    const double hw = 0.5 * (eps_[i + 1] - eps_[i]);
    center_[i] = c;
    half_[i] = hw;
    std::size_t first = i >= 1 ? i - 1 : 0;
    first = std::min(first, n - 4);
    Eigen::Matrix4d v;
    Eigen::Vector4d y;
    for (int r = 0; r < 4; ++r) {
      const double t = (eps_[first + r] - c) / hw;
      v(r, 0) = 1.0;
      v(r, 1) = t;
      v(r, 2) = t * t;
      v(r, 3) = t * t * t;
      y(r) = f_[first + r];
    }
    const Eigen::Vector4d e = v.partialPivLu().solve(y);
    coef_[i] = {e(0), e(1), e(2), e(3)};
  }
}

std::pair<cplx, cplx> InverseResolvent::evaluate(cplx g) const {
  if (g == cplx(0.0)) {
    throw DomainError(kModule, "inverse_resolvent", "g must be nonzero");
  }
  const double q = model_.q;
  const double eps0 = model_.background.eps0();
  if (model_.background.is_delta()) {
    const cplx w = 1.0 - q * eps0 * g;
    if (w == cplx(0.0)) {
      throw DomainError(kModule, "inverse_resolvent",
                        "pole on the integration contour",
                        {{"g", to_param(g.real())}});
    }
    return {1.0 / g + eps0 / w, -1.0 / (g * g) + q * eps0 * eps0 / (w * w)};
  }
  const cplx a = q * g;
  if (g.imag() == 0.0 && g.real() > 0.0) {
    const double pole = 1.0 / a.real();
    if (pole >= eps_.front() && pole <= eps_.back()) {
      throw DomainError(kModule, "inverse_resolvent",
                        "pole on the integration contour",
                        {{"g", to_param(g.real())}, {"q", to_param(q)}});
    }
  }
  const double abs_a = std::abs(a);
  cplx r0 = 0.0;
  cplx r1 = 0.0;
  for (std::size_t i = 0; i < coef_.size(); ++i) {
    const double c = center_[i];
    const double hw = half_[i];
    const auto& e = coef_[i];
    const cplx wc = 1.0 - a * c;
    // Distance from 0 to the segment w(s), s in [-hw, hw].
    const cplx dw = -2.0 * a * hw;
    const cplx w1 = wc + a * hw;
    double t = -(std::conj(w1) * dw).real() / std::norm(dw);
    t = std::clamp(t, 0.0, 1.0);
    const double dist = std::abs(w1 + t * dw);
    const double ratio = dist / (2.0 * abs_a * hw);
    if (ratio <= 5.0) {
      // f(s) = sum e_j (s / hw)^j; P0 = f eps, P1 = f eps^2.
      std::array<double, 4> fs{};
      double hp = 1.0;
      for (int j = 0; j < 4; ++j) {
        fs[j] = e[j] / hp;
        hp *= hw;
      }
      std::array<double, 5> p0{};
      for (int j = 0; j < 4; ++j) {
        p0[j] += c * fs[j];
        p0[j + 1] += fs[j];
      }
      std::array<double, 6> p1{};
      for (int j = 0; j < 5; ++j) {
        p1[j] += c * p0[j];
        p1[j + 1] += p0[j];
      }
      r0 += pole_panel(p0, a, wc, hw, 1);
      r1 += pole_panel(p1, a, wc, hw, 2);
    } else {
      auto accumulate = [&](const auto& nodes, const auto& weights) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          const double x = nodes[k];
          const double f = e[0] + x * (e[1] + x * (e[2] + x * e[3]));
          const double eps = c + hw * x;
          const cplx inv = 1.0 / (1.0 - a * eps);
          const cplx term = (weights[k] * hw * f * eps) * inv;
          r0 += term;
          r1 += term * eps * inv;
        }
      };
      if (ratio <= 100.0) {
        accumulate(quad::kGauss6Nodes, quad::kGauss6Weights);
      } else {
        accumulate(kGauss3Nodes, kGauss3Weights);
      }
    }
  }
  return {1.0 / g + r0, -1.0 / (g * g) + q * r1};
}

cplx inverse_resolvent(const SpectralModel& model, cplx g) {
  return InverseResolvent(model)(g);
}

// Resolvent -----------------------------------------------------------------

std::vector<double> default_delta_schedule(double eps0) {
  return {1e-3 * eps0, 3e-4 * eps0, 1e-4 * eps0};
}

std::vector<ResolventSolution> resolvent_path(const InverseResolvent& zfun,
                                              std::span<const double> lambdas,
                                              double delta,
                                              const SolverOptions& opts) {
  check_grid(lambdas, "resolvent");
  if (!(delta > 0.0)) {
    throw DomainError(kModule, "resolvent", "delta must be positive",
                      {{"delta", to_param(delta)}});
  }
  const auto& m = zfun.model();
  const double eps0 = m.background.eps0();
  const double top = lambdas.back();
  const double start = std::max(
      opts.start_factor * eps0 * std::pow(1.0 + std::sqrt(m.q), 2), top);

  const cplx zeta0(start, delta);
  const NewtonResult first = newton(zfun, zeta0, 1.0 / zeta0, opts);
  if (!first.converged || !(first.g.imag() < 0.0)) {
    throw ConvergenceError(kModule, "resolvent",
                           "no solution at the continuation start",
                           {{"lambda", to_param(start)},
                            {"delta", to_param(delta)},
                            {"residual", to_param(first.residual)}});
  }
  PathState cur{start, first.g, first.dz};
  ResolventSolution scratch{start, first.g, first.residual, true,
                            first.iterations};
  while (cur.lambda > top) {
    const double next = std::max(top, 0.8 * cur.lambda);
    if (!advance(zfun, cur, next, delta, opts, 0, scratch)) break;
    if (next == top) break;
  }
  std::vector<ResolventSolution> out(lambdas.size());
  for (std::size_t k = lambdas.size(); k-- > 0;) {
    if (cur.lambda == lambdas[k]) {
      out[k] = scratch;
      out[k].lambda = lambdas[k];
      continue;
    }
    advance(zfun, cur, lambdas[k], delta, opts, 0, out[k]);
  }
  return out;
}

ResolventSolution resolvent(const InverseResolvent& zfun, double lambda,
                            double delta, const SolverOptions& opts) {
  const double grid[1] = {lambda};
  return resolvent_path(zfun, grid, delta, opts).front();
}

ResolventSolution resolvent(const SpectralModel& model, double lambda,
                            double delta, const SolverOptions& opts) {
  return resolvent(InverseResolvent(model), lambda, delta, opts);
}

// ESD -----------------------------------------------------------------------

EsdCurve esd_curve(const InverseResolvent& zfun,
                   std::span<const double> lambdas,
                   std::span<const double> deltas, const SolverOptions& opts) {
  check_grid(lambdas, "esd_curve");
  if (deltas.empty()) {
    throw DomainError(kModule, "esd_curve", "delta schedule is empty");
  }
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0) || (i > 0 && !(deltas[i] < deltas[i - 1]))) {
      throw DomainError(kModule, "esd_curve",
                        "delta schedule must be positive and decreasing",
                        {{"index", std::to_string(i)},
                         {"delta", to_param(deltas[i])}});
    }
  }
  // One continuation per delta, run concurrently.
  std::vector<std::future<std::vector<ResolventSolution>>> jobs;
  for (double d : deltas) {
    jobs.push_back(std::async(std::launch::async, [&zfun, lambdas, d, &opts] {
      return resolvent_path(zfun, lambdas, d, opts);
    }));
  }
  std::vector<std::vector<ResolventSolution>> paths;
  for (auto& j : jobs) paths.push_back(j.get());

  EsdCurve curve;
  const std::size_t n = lambdas.size();
  curve.lambdas.assign(lambdas.begin(), lambdas.end());
  curve.rho.assign(n, 0.0);
  curve.converged.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      const auto& s = paths[k][i];
      if (!s.converged) continue;
      xs.push_back(deltas[k]);
      ys.push_back(-s.g.imag() / kPi);
    }
    curve.converged[i] = xs.size() == deltas.size();
    if (xs.empty()) continue;
    curve.rho[i] = std::max(0.0, extrapolate_to_zero(xs, ys));
  }

  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (curve.converged[i]) peak = std::max(peak, curve.rho[i]);
  }
  curve.bulk_edge_lower = curve.lambdas.front();
  for (std::size_t i = 0; i < n; ++i) {
    if (curve.converged[i] && curve.rho[i] > 1e-4 * peak) {
      curve.bulk_edge_lower = curve.lambdas[i];
      break;
    }
  }
  std::size_t prev = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!curve.converged[i]) continue;
    if (prev < n) {
      curve.mass += 0.5 * (curve.rho[i] + curve.rho[prev]) *
                    (curve.lambdas[i] - curve.lambdas[prev]);
    }
    prev = i;
  }
  return curve;
}

EsdCurve esd_curve(const SpectralModel& model, std::span<const double> lambdas,
                   std::span<const double> deltas, const SolverOptions& opts) {
  return esd_curve(InverseResolvent(model), lambdas, deltas, opts);
}

EsdCurve esd_curve(const SpectralModel& model,
                   std::span<const double> lambdas) {
  const auto deltas = default_delta_schedule(model.background.eps0());
  return esd_curve(model, lambdas, deltas);
}

std::pair<double, double> curve_peak(const EsdCurve& curve) {
  std::size_t best = curve.rho.size();
  for (std::size_t i = 0; i < curve.rho.size(); ++i) {
    if (!curve.converged[i]) continue;
    if (best == curve.rho.size() || curve.rho[i] > curve.rho[best]) best = i;
  }
  if (best == curve.rho.size()) {
    throw DataError(kModule, "curve_peak", "curve has no converged points");
  }
  if (best == 0 || best + 1 >= curve.rho.size() ||
      !curve.converged[best - 1] || !curve.converged[best + 1]) {
    return {curve.lambdas[best], curve.rho[best]};
  }
  const double x0 = curve.lambdas[best - 1], x1 = curve.lambdas[best],
               x2 = curve.lambdas[best + 1];
  const double y0 = curve.rho[best - 1], y1 = curve.rho[best],
               y2 = curve.rho[best + 1];
  // Parabola through three points in Newton form.
  const double d1 = (y1 - y0) / (x1 - x0);
  const double d2 = (y2 - y1) / (x2 - x1);
  const double c2 = (d2 - d1) / (x2 - x0);
  if (!(c2 < 0.0)) return {x1, y1};
  const double xv = 0.5 * (x0 + x1) - d1 / (2.0 * c2);
  const double yv = y0 + d1 * (xv - x0) + c2 * (xv - x0) * (xv - x1);
  return {std::clamp(xv, x0, x2), std::max(yv, y1)};
}

double esd_tail(const SpectralModel& model, double lambda) {
  if (model.background.is_delta()) {
    return mp_density(model.background.eps0(), model.q, lambda);
  }
  return tail_fN(model.background, lambda / model.q) / (model.q * model.q);
}

TailConsistencyReport tail_consistency(const SpectralModel& model,
                                       std::span<const double> lambdas) {
  if (model.background.is_delta()) {
    throw DomainError(kModule, "tail_consistency",
                      "delta background has a compactly supported spectrum");
  }
  const double eps0 = model.background.eps0();
  const double q = model.q;
  const EsdCurve curve = esd_curve(model, lambdas);
  const BackgroundTable table(model.background);

  TailConsistencyReport rep;
  rep.expected_limit = 1.0 / (q * q * eps0);
  const double floor = 1e-12 / eps0;
  const double last = lambdas.back();
  const double from = std::max(lambdas.front(), last / 10.0);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!curve.converged[i] || curve.rho[i] < floor) continue;
    const double h = eps0 * table.density(lambdas[i] / q);
    if (!(h > 0.0)) continue;
    const double r = curve.rho[i] / h;
    rep.lambdas.push_back(lambdas[i]);
    rep.ratios.push_back(r);
    if (lambdas[i] >= from) {
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  }
  std::size_t in_window = 0;
  for (double l : rep.lambdas) in_window += l >= from ? 1 : 0;
  if (in_window < 5) {
    rep.note = "insufficient resolvable tail mass on the grid";
    return rep;
  }
  rep.sufficient = true;
  rep.drift = (hi - lo) / lo;
  rep.passed = rep.drift <= 0.15;
  if (!rep.passed) rep.note = "tail ratio drifts by more than 15%";
  return rep;
}

}  // namespace hrmt
