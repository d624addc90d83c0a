#include "hrmt/background.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/special_functions/trigamma.hpp>

#include "hrmt/errors.hpp"
#include "hrmt/quadrature.hpp"
#include "hrmt/random.hpp"

namespace hrmt {

namespace {

constexpr const char* kModule = "background_models";
constexpr double kMaxLevelSpan = 350.0;

// Density of v = log X for one mean-one level multiplier X.
struct LogKernel {
  BackgroundClass cls;
  double beta;
  double log_norm;

  LogKernel(BackgroundClass c, double b) : cls(c), beta(b) {
    if (cls == BackgroundClass::Wishart) {
      log_norm = beta * std::log(beta) - std::lgamma(beta);
    } else {
      log_norm = (beta + 1.0) * std::log(beta) - std::lgamma(beta + 1.0);
    }
  }

  double log_g(double v) const {
    if (cls == BackgroundClass::Wishart) {
      return log_norm + beta * v - beta * std::exp(v);
    }
    return log_norm - (beta + 1.0) * v - beta * std::exp(-v);
  }

  double g(double v) const { return std::exp(log_g(v)); }

  double mode() const {
    return cls == BackgroundClass::Wishart ? 0.0
                                           : std::log(beta / (beta + 1.0));
  }

  double sd() const {
    const double shape = cls == BackgroundClass::Wishart ? beta : beta + 1.0;
    return std::sqrt(boost::math::trigamma(shape));
  }

  // [lo, hi] outside of which g(v) * max(1, e^v) < e^{-drop} * g(mode).
  std::pair<double, double> support(double drop) const {
    const double m = mode();
    const double peak = log_g(m);
    auto weight = [&](double v) {
      return log_g(v) + std::max(v, 0.0) - peak + drop;
    };
    auto edge = [&](double dir) {
      double inner = m;
      double step = std::max(1.0, sd());
      double outer = m + dir * step;
      while (weight(outer) > 0.0) {
        inner = outer;
        step *= 2.0;
        outer = m + dir * step;
        if (step > 1e6) break;
      }
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (inner + outer);
        if (weight(mid) > 0.0) {
          inner = mid;
        } else {
          outer = mid;
        }
        if (std::abs(outer - inner) < 1e-12 * std::max(1.0, std::abs(mid)))
          break;
      }
      return outer;
    };
    return {edge(-1.0), edge(+1.0)};
  }
};

std::vector<LogKernel> kernels_of(const BackgroundModel& model) {
  std::vector<LogKernel> ks;
  ks.reserve(model.betas().size());
  for (double b : model.betas()) ks.emplace_back(model.cls(), b);
  return ks;
}

void require_levels(const BackgroundModel& model, const char* op) {
  if (model.is_delta()) {
    throw DomainError(kModule, op,
                      "delta background (N = 0) has no density",
                      {{"N", "0"}, {"eps0", to_param(model.eps0())}});
  }
}

// Hermite interpolation of tabulated y with slope dy on a uniform grid.
double hermite(double t, double y0, double y1, double d0, double d1,
               double h) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0 +
         (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1;
}

}  // namespace

std::string to_string(BackgroundClass cls) {
  return cls == BackgroundClass::Wishart ? "wishart" : "inverse_wishart";
}

BackgroundClass parse_background_class(const std::string& name) {
  if (name == "wishart" || name == "w" || name == "W") {
    return BackgroundClass::Wishart;
  }
  if (name == "inverse_wishart" || name == "inverse-wishart" || name == "iw" ||
      name == "IW") {
    return BackgroundClass::InverseWishart;
  }
  throw DomainError(kModule, "parse_background_class",
                    "unknown background class '" + name + "'",
                    {{"class", name}});
}

BackgroundModel::BackgroundModel(BackgroundClass cls, std::vector<double> betas,
                                 double eps0)
    : cls_(cls), betas_(std::move(betas)), eps0_(eps0) {
  if (!(eps0_ > 0.0) || !std::isfinite(eps0_)) {
    throw DomainError(kModule, "BackgroundModel", "eps0 must be positive",
                      {{"eps0", to_param(eps0_)}});
  }
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0) || !std::isfinite(betas_[i])) {
      throw DomainError(kModule, "BackgroundModel",
                        "every beta must be positive",
                        {{"level", std::to_string(i + 1)},
                         {"beta", to_param(betas_[i])}});
    }
  }
}

BackgroundModel BackgroundModel::uniform(BackgroundClass cls, int levels,
                                         double beta, double eps0) {
  if (levels < 0) {
    throw DomainError(kModule, "BackgroundModel", "N must be >= 0",
                      {{"N", std::to_string(levels)}});
  }
  return BackgroundModel(cls, std::vector<double>(levels, beta), eps0);
}

BackgroundModel BackgroundModel::delta(double eps0, BackgroundClass cls) {
  return BackgroundModel(cls, {}, eps0);
}

double BackgroundModel::omega() const noexcept {
  double w = 1.0;
  for (double b : betas_) w *= b;
  return w;
}

double grid_mass(const DensityGrid& grid) {
  double s = 0.0;
  for (std::size_t i = 1; i < grid.points.size(); ++i) {
    if (grid.log_spaced) {
      const double du = std::log(grid.points[i] / grid.points[i - 1]);
      s += 0.5 * du *
           (grid.values[i] * grid.points[i] +
            grid.values[i - 1] * grid.points[i - 1]);
    } else {
      s += 0.5 * (grid.points[i] - grid.points[i - 1]) *
           (grid.values[i] + grid.values[i - 1]);
    }
  }
  return s;
}

double grid_mean(const DensityGrid& grid) {
  double s = 0.0;
  for (std::size_t i = 1; i < grid.points.size(); ++i) {
    const double a = grid.points[i - 1];
    const double b = grid.points[i];
    if (grid.log_spaced) {
      s += 0.5 * std::log(b / a) *
           (grid.values[i] * b * b + grid.values[i - 1] * a * a);
    } else {
      s += 0.5 * (b - a) * (grid.values[i] * b + grid.values[i - 1] * a);
    }
  }
  return s;
}

double conditional_kernel(const BackgroundModel& model, int level, double eps,
                          double eps_prev) {
  if (level < 1 || level > model.levels()) {
    throw DomainError(kModule, "conditional_kernel", "level out of range",
                      {{"level", std::to_string(level)},
                       {"N", std::to_string(model.levels())}});
  }
  if (eps < 0.0 || !(eps_prev > 0.0)) {
    throw DomainError(kModule, "conditional_kernel",
                      "eps must be >= 0 and eps_prev > 0",
                      {{"eps", to_param(eps)}, {"eps_prev", to_param(eps_prev)}});
  }
  const double beta = model.betas()[level - 1];
  if (model.cls() == BackgroundClass::Wishart) {
    // Gamma with shape beta and mean eps_prev.
    const double rate = beta / eps_prev;
    if (eps == 0.0) {
      if (beta < 1.0) return std::numeric_limits<double>::infinity();
      return beta == 1.0 ? rate : 0.0;
    }
    return std::exp(beta * std::log(rate) + (beta - 1.0) * std::log(eps) -
                    rate * eps - std::lgamma(beta));
  }
  // Inverse gamma with shape beta + 1 and mean eps_prev.
  if (eps == 0.0) return 0.0;
  const double scale = beta * eps_prev;
  const double shape = beta + 1.0;
  return std::exp(shape * std::log(scale) - (shape + 1.0) * std::log(eps) -
                  scale / eps - std::lgamma(shape));
}

// ---------------------------------------------------------------------------
// Convolution table

BackgroundTable::BackgroundTable(const BackgroundModel& model,
                                 const TableOptions& opts)
    : model_(model) {
  require_levels(model, "density_fN");
  const auto ks = kernels_of(model);
  const double drop = -std::log(opts.trim);

  double sd_min = std::numeric_limits<double>::infinity();
  double range = 0.0;
  std::vector<std::pair<double, double>> supports;
  for (const auto& k : ks) {
    auto s = k.support(drop);
    s.first = std::max(s.first, -kMaxLevelSpan);
    s.second = std::min(s.second, kMaxLevelSpan);
    supports.push_back(s);
    sd_min = std::min(sd_min, k.sd());
    range += s.second - s.first;
  }
  double du = std::min(opts.max_step, sd_min / 20.0);
  du = std::min(du, range / static_cast<double>(opts.min_points - 1));
  du = std::max(du, range / static_cast<double>(opts.max_points - 1));

  // Trimming can shrink the support below min_points; refine once if so.
  for (int attempt = 0; attempt < 3; ++attempt) {
    build(ks, supports, du, opts.trim);
    if (h_.size() >= opts.min_points) break;
    du *= static_cast<double>(h_.size() - 1) /
          static_cast<double>(opts.min_points + 16);
  }

  log_h_.resize(h_.size());
  for (std::size_t i = 0; i < h_.size(); ++i) {
    log_h_[i] = h_[i] > 0.0 ? std::log(h_[i]) : -745.0;
  }

  // Cumulative mass: trapezoid plus the Euler-Maclaurin end correction.
  cum_.assign(h_.size(), 0.0);
  auto slope = [&](std::size_t i) {
    if (h_.size() < 3) return 0.0;
    if (i == 0) return (h_[1] - h_[0]) / du_;
    if (i + 1 == h_.size()) return (h_[i] - h_[i - 1]) / du_;
    return (h_[i + 1] - h_[i - 1]) / (2.0 * du_);
  };
  for (std::size_t i = 1; i < h_.size(); ++i) {
    cum_[i] = cum_[i - 1] + 0.5 * du_ * (h_[i] + h_[i - 1]) -
              du_ * du_ / 12.0 * (slope(i) - slope(i - 1));
  }
}

template <typename Kernels, typename Supports>
void BackgroundTable::build(const Kernels& ks, const Supports& supports,
                            double du, double trim) {
  du_ = du;
  // Each kernel lives on integer multiples of du.
  auto sample = [&](const auto& k, std::pair<double, double> s, long& lo) {
    lo = static_cast<long>(std::floor(s.first / du));
    const long hi = static_cast<long>(std::ceil(s.second / du));
    std::vector<double> v(static_cast<std::size_t>(hi - lo + 1));
    for (long i = lo; i <= hi; ++i) v[i - lo] = k.g(i * du);
    return v;
  };

  long lo = 0;
  std::vector<double> h = sample(ks[0], supports[0], lo);
  for (std::size_t lvl = 1; lvl < ks.size(); ++lvl) {
    long klo = 0;
    const std::vector<double> g = sample(ks[lvl], supports[lvl], klo);
    std::vector<double> next(h.size() + g.size() - 1, 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double gj = g[j] * du;
      if (gj == 0.0) continue;
      double* out = next.data() + j;
      for (std::size_t i = 0; i < h.size(); ++i) out[i] += gj * h[i];
    }
    h = std::move(next);
    lo += klo;
  }

  // Trim negligible ends and keep eps representable.
  double peak = 0.0;
  for (double v : h) peak = std::max(peak, v);
  auto u_at = [&](std::size_t i) { return (lo + static_cast<long>(i)) * du; };
  auto negligible = [&](std::size_t i) {
    const double u = u_at(i);
    return u < -kMaxLogSpan || u > kMaxLogSpan ||
           h[i] * std::exp(std::clamp(u, 0.0, kMaxLogSpan)) < trim * peak;
  };
  std::size_t first = 0;
  while (first + 1 < h.size() && negligible(first)) ++first;
  std::size_t last = h.size() - 1;
  while (last > first + 1 && negligible(last)) --last;
  if (first > 0 && u_at(first - 1) >= -kMaxLogSpan) --first;
  if (last + 1 < h.size() && u_at(last + 1) <= kMaxLogSpan) ++last;

  h_.assign(h.begin() + first, h.begin() + last + 1);
  u0_ = u_at(first);
}

double BackgroundTable::eps_node(std::size_t i) const {
  return model_.eps0() * std::exp(u0_ + du_ * static_cast<double>(i));
}

double BackgroundTable::log_density(double u) const {
  const double x = (u - u0_) / du_;
  const auto n = static_cast<long>(h_.size());
  if (x < 0.0 || x > static_cast<double>(n - 1)) return 0.0;
  // Six-point Lagrange interpolation of log h around x.
  long i0 = static_cast<long>(std::floor(x)) - 2;
  i0 = std::clamp(i0, 0L, std::max(0L, n - 6));
  const long m = std::min(6L, n);
  double acc = 0.0;
  for (long j = 0; j < m; ++j) {
    double w = 1.0;
    for (long k = 0; k < m; ++k) {
      if (k != j) w *= (x - (i0 + k)) / static_cast<double>(j - k);
    }
    acc += w * log_h_[i0 + j];
  }
  return std::exp(acc);
}

double BackgroundTable::density(double eps) const {
  if (!(eps > 0.0)) return 0.0;
  const double u = std::log(eps / model_.eps0());
  return log_density(u) / eps;
}

double BackgroundTable::cdf(double eps) const {
  if (!(eps > 0.0)) return 0.0;
  const double x = (std::log(eps / model_.eps0()) - u0_) / du_;
  if (x <= 0.0) return 0.0;
  if (x >= static_cast<double>(h_.size() - 1)) return cum_.back();
  const auto i = static_cast<std::size_t>(x);
  const double t = x - static_cast<double>(i);
  return hermite(t, cum_[i], cum_[i + 1], h_[i], h_[i + 1], du_);
}

DensityGrid BackgroundTable::grid() const {
  DensityGrid g;
  g.log_spaced = true;
  g.points.resize(h_.size());
  g.values.resize(h_.size());
  for (std::size_t i = 0; i < h_.size(); ++i) {
    g.points[i] = eps_node(i);
    g.values[i] = h_[i] / g.points[i];
  }
  return g;
}

DensityGrid density_fN(const BackgroundModel& model,
                       std::span<const double> eps_grid) {
  require_levels(model, "density_fN");
  DensityGrid out;
  out.points.assign(eps_grid.begin(), eps_grid.end());
  out.values.resize(out.points.size());
  bool log_spaced = out.points.size() > 2;
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    if (!(out.points[i] > 0.0) ||
        (i > 0 && !(out.points[i] > out.points[i - 1]))) {
      throw DomainError(kModule, "density_fN",
                        "grid must be positive and strictly increasing",
                        {{"index", std::to_string(i)},
                         {"eps", to_param(out.points[i])}});
    }
    if (i >= 2) {
      const double r1 = std::log(out.points[i] / out.points[i - 1]);
      const double r0 = std::log(out.points[i - 1] / out.points[i - 2]);
      if (std::abs(r1 - r0) > 1e-9 * std::abs(r0)) log_spaced = false;
    }
  }
  out.log_spaced = log_spaced;
  const BackgroundTable table(model);
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    out.values[i] = table.density(out.points[i]);
  }
  return out;
}

DensityGrid make_density_grid(const BackgroundModel& model,
                              const TableOptions& opts) {
  return BackgroundTable(model, opts).grid();
}

// ---------------------------------------------------------------------------
// Nested-quadrature route

namespace {

// h_k(u): density of the sum of the first k log-multipliers.
double nested_log_density(const std::vector<LogKernel>& ks,
                          const std::vector<std::pair<double, double>>& sup,
                          std::size_t k, double u) {
  if (k == 1) return ks[0].g(u);
  const auto& kern = ks[k - 1];
  quad::Tolerance tol;
  tol.abs = 1e-300;
  tol.rel = 1e-11;
  tol.max_panels = 2000;
  auto integrand = [&](double v) {
    return kern.g(v) * nested_log_density(ks, sup, k - 1, u - v);
  };
  auto r = quad::integrate<double>(integrand, sup[k - 1].first,
                                   sup[k - 1].second, tol);
  if (!r.converged && r.error > 1e-8 * std::abs(r.value) + 1e-200) {
    throw ConvergenceError(kModule, "density_fN",
                           "nested quadrature did not converge",
                           {{"level", std::to_string(k)}, {"u", to_param(u)},
                            {"error", to_param(r.error)}});
  }
  return r.value;
}

}  // namespace

double density_direct(const BackgroundModel& model, double eps) {
  require_levels(model, "density_fN");
  if (!(eps > 0.0)) return 0.0;
  const auto ks = kernels_of(model);
  std::vector<std::pair<double, double>> sup;
  for (const auto& k : ks) sup.push_back(k.support(60.0));
  const double u = std::log(eps / model.eps0());
  return nested_log_density(ks, sup, ks.size(), u) / eps;
}

double tail_fN(const BackgroundModel& model, double eps) {
  require_levels(model, "tail_fN");
  if (!(eps > 0.0)) {
    throw DomainError(kModule, "tail_fN", "eps must be positive",
                      {{"eps", to_param(eps)}});
  }
  const double n = model.levels();
  const double x = eps / model.eps0();
  if (model.cls() == BackgroundClass::Wishart) {
    // G^{N,0}_{0,N}(y | beta - 1) ~ y^theta exp(-N y^{1/N}), y = omega x.
    double sum_b = 0.0;
    for (double b : model.betas()) sum_b += b - 1.0;
    const double theta = (sum_b - 0.5 * (n - 1.0)) / n;
    const double y = model.omega() * x;
    return std::exp(theta * std::log(y) - n * std::pow(y, 1.0 / n));
  }
  const double beta_min =
      *std::min_element(model.betas().begin(), model.betas().end());
  return std::pow(x / model.omega(), -beta_min - 2.0);
}

std::vector<double> sample_cascade(const BackgroundModel& model,
                                   std::size_t count, std::uint64_t seed) {
  if (count == 0) {
    throw DomainError(kModule, "sample_cascade", "count must be >= 1",
                      {{"count", "0"}});
  }
  std::vector<double> out(count, model.eps0());
  if (model.is_delta()) return out;
  constexpr std::size_t kBlock = 4096;
  const CounterRng root(seed, 0x5ca1ab1eULL);
  std::vector<std::gamma_distribution<double>> dists;
  for (double b : model.betas()) {
    const double shape =
        model.cls() == BackgroundClass::Wishart ? b : b + 1.0;
    dists.emplace_back(shape, 1.0);
  }
  for (std::size_t start = 0; start < count; start += kBlock) {
    CounterRng rng = root.split(start / kBlock);
    for (auto& d : dists) d.reset();
    const std::size_t end = std::min(count, start + kBlock);
    for (std::size_t i = start; i < end; ++i) {
      double eps = model.eps0();
      for (std::size_t lvl = 0; lvl < dists.size(); ++lvl) {
        const double b = model.betas()[lvl];
        const double y = dists[lvl](rng);
        eps *= model.cls() == BackgroundClass::Wishart ? y / b : b / y;
      }
      out[i] = eps;
    }
  }
  return out;
}

namespace {

// Trapezoid over the table nodes of h(u) * kernel(eps(u)); spectrally
// accurate. Throws if the integrand is still significant at a table edge.
template <typename F>
double compound_sum(const BackgroundTable& table, F&& kernel, const char* op,
                    double edge_tol) {
  double s = 0.0;
  double peak = 0.0;
  double first = 0.0;
  double last = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double v = table.log_density_node(i) * kernel(table.eps_node(i));
    const double w = (i == 0 || i + 1 == table.size()) ? 0.5 : 1.0;
    s += w * v;
    peak = std::max(peak, v);
    if (i == 0) first = v;
    last = v;
  }
  if (!std::isfinite(s) || first > edge_tol * peak || last > edge_tol * peak) {
    throw DomainError(kModule, op,
                      "compound integrand not contained in the background "
                      "support (integral divergent or outside validity)",
                      {{"edge_ratio", to_param(std::max(first, last) / peak)}});
  }
  return s * table.step();
}

}  // namespace

double return_density(const BackgroundTable& table, double r) {
  const double r2 = r * r;
  return compound_sum(
      table,
      [r2](double eps) {
        return std::exp(-0.5 * r2 / eps) / std::sqrt(2.0 * std::numbers::pi * eps);
      },
      "return_density", 1e-9);
}

double return_density(const BackgroundModel& model, double r) {
  if (model.is_delta()) {
    const double v = model.eps0();
    return std::exp(-0.5 * r * r / v) / std::sqrt(2.0 * std::numbers::pi * v);
  }
  return return_density(BackgroundTable(model), r);
}

double multivariate_density_qform(const BackgroundModel& model, double qform,
                                  int p) {
  if (qform < 0.0 || p < 1) {
    throw DomainError(kModule, "multivariate_density_qform",
                      "requires qform >= 0 and p >= 1",
                      {{"qform", to_param(qform)}, {"p", std::to_string(p)}});
  }
  const double half_p = 0.5 * p;
  const double rr = qform * model.eps0();  // r' r
  auto gauss = [&](double eps) {
    return std::exp(-0.5 * rr / eps - half_p * std::log(2.0 * std::numbers::pi * eps));
  };
  if (model.is_delta()) return gauss(model.eps0());
  if (model.cls() == BackgroundClass::Wishart && qform == 0.0) {
    const double beta_min =
        *std::min_element(model.betas().begin(), model.betas().end());
    if (beta_min <= half_p) {
      throw DomainError(kModule, "multivariate_density_qform",
                        "compound integral diverges at qform = 0: requires "
                        "beta > p/2",
                        {{"beta_min", to_param(beta_min)},
                         {"p", std::to_string(p)}});
    }
  }
  return compound_sum(BackgroundTable(model), gauss,
                      "multivariate_density_qform", 1e-9);
}

double background_moment(const BackgroundModel& model, int k) {
  double m = std::pow(model.eps0(), k);
  for (double b : model.betas()) {
    if (model.cls() == BackgroundClass::Wishart) {
      m *= std::exp(std::lgamma(b + k) - std::lgamma(b) - k * std::log(b));
    } else {
      if (b + 1.0 - k <= 0.0) return std::numeric_limits<double>::infinity();
      m *= std::exp(k * std::log(b) + std::lgamma(b + 1.0 - k) -
                    std::lgamma(b + 1.0));
    }
  }
  return m;
}

}  // namespace hrmt
