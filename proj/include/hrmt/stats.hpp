#pragma once

// Kolmogorov-Smirnov distances and the asymptotic Kolmogorov p-value.

#include <functional>
#include <span>
#include <vector>

namespace hrmt {

/// sup |F_n - F| for the empirical CDF of samples against a model CDF.
double ks_statistic(std::span<const double> samples,
                    const std::function<double(double)>& cdf);

/// Two-sample statistic sup |F_a - F_b|.
double ks_statistic_two_sample(std::span<const double> a,
                               std::span<const double> b);

/// P(K > x) for the Kolmogorov distribution.
double kolmogorov_sf(double x);

/// Asymptotic p-value for an observed statistic d with effective size n
/// (n = n_a n_b / (n_a + n_b) in the two-sample case).
double ks_pvalue(double d, double n);

/// Piecewise-linear CDF of a tabulated density by cumulative trapezoid,
/// normalized to end at 1.
struct TabulatedCdf {
  std::vector<double> x;
  std::vector<double> cdf;

  TabulatedCdf(std::span<const double> xs, std::span<const double> density);
  double operator()(double v) const;
};

}  // namespace hrmt
