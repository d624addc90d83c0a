#include "hrmt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hrmt/errors.hpp"

namespace hrmt {

namespace {
constexpr const char* kModule = "stats";
}

double ks_statistic(std::span<const double> samples,
                    const std::function<double(double)>& cdf) {
  if (samples.empty()) {
    throw DataError(kModule, "ks_statistic", "no samples");
  }
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

double ks_statistic_two_sample(std::span<const double> a,
                               std::span<const double> b) {
  if (a.empty() || b.empty()) {
    throw DataError(kModule, "ks_statistic_two_sample", "empty sample");
  }
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double na = static_cast<double>(x.size());
  const double nb = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

double kolmogorov_sf(double x) {
  if (!(x > 0.0)) return 1.0;
  if (x < 1.18) {
    // Theta-function form converges quickly for small x.
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const double t = -pi2 / (8.0 * x * x);
    double s = 0.0;
    for (int k = 1; k <= 9; k += 2) s += std::exp(k * k * t);
    return 1.0 - std::sqrt(2.0 * std::numbers::pi) / x * s;
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

double ks_pvalue(double d, double n) {
  const double sn = std::sqrt(n);
  // Stephens' small-sample correction.
  return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
}

TabulatedCdf::TabulatedCdf(std::span<const double> xs,
                           std::span<const double> density)
    : x(xs.begin(), xs.end()), cdf(xs.size(), 0.0) {
  if (xs.size() < 2 || xs.size() != density.size()) {
    throw DataError(kModule, "TabulatedCdf",
                    "need at least two matching abscissae and values");
  }
  for (std::size_t i = 1; i < x.size(); ++i) {
    cdf[i] = cdf[i - 1] + 0.5 * (density[i] + density[i - 1]) * (x[i] - x[i - 1]);
  }
  const double total = cdf.back();
  if (!(total > 0.0)) {
    throw DataError(kModule, "TabulatedCdf", "density has no mass");
  }
  for (double& c : cdf) c /= total;
}

double TabulatedCdf::operator()(double v) const {
  if (v <= x.front()) return 0.0;
  if (v >= x.back()) return 1.0;
  const auto it = std::upper_bound(x.begin(), x.end(), v);
  const std::size_t i = static_cast<std::size_t>(it - x.begin());
  const double t = (v - x[i - 1]) / (x[i] - x[i - 1]);
  return cdf[i - 1] + t * (cdf[i] - cdf[i - 1]);
}

}  // namespace hrmt
