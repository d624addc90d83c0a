#pragma once

// Adaptive Gauss-Legendre panel quadrature (7-point Gauss rule embedded in a
// 15-point Kronrod extension). Works for real and complex integrands.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <queue>
#include <vector>

namespace hrmt::quad {

struct Tolerance {
  double abs = 1e-10;
  double rel = 1e-8;
  std::size_t max_panels = 4000;
};

template <typename T>
struct Result {
  T value{};
  double error = 0.0;
  std::size_t panels = 0;
  bool converged = false;
};

namespace detail {

inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(const std::complex<double>& v) { return std::abs(v); }

template <typename T>
struct Panel {
  double a, b;
  T value;
  double error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <typename T, typename F>
Panel<T> kronrod15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const T fc = f(c);
  T kronrod = fc * kWgk[7];
  T gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXgk[j];
    const T f1 = f(c - dx);
    const T f2 = f(c + dx);
    kronrod += (f1 + f2) * kWgk[j];
    if (j % 2 == 1) gauss += (f1 + f2) * kWg[j / 2];
  }
  Panel<T> p{a, b, kronrod * h, 0.0};
  p.error = magnitude((kronrod - gauss) * h);
  return p;
}

}  // namespace detail

/// Globally adaptive integration of f over [a, b]: the panel with the largest
/// error estimate is bisected until the summed error meets the tolerance.
template <typename T = double, typename F>
Result<T> integrate(F&& f, double a, double b, const Tolerance& tol = {}) {
  Result<T> out;
  if (a == b) {
    out.converged = true;
    return out;
  }
  std::priority_queue<detail::Panel<T>> heap;
  auto first = detail::kronrod15<T>(f, a, b);
  T total = first.value;
  double err = first.error;
  heap.push(first);
  std::size_t panels = 1;
  while (err > std::max(tol.abs, tol.rel * detail::magnitude(total)) &&
         panels < tol.max_panels) {
    auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      // Panel can no longer be split in floating point.
      heap.push(worst);
      break;
    }
    auto left = detail::kronrod15<T>(f, worst.a, mid);
    auto right = detail::kronrod15<T>(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++panels;
  }
  // Re-sum to shed the drift accumulated by incremental updates.
  T sum{};
  double esum = 0.0;
  while (!heap.empty()) {
    sum += heap.top().value;
    esum += heap.top().error;
    heap.pop();
  }
  out.value = sum;
  out.error = esum;
  out.panels = panels;
  out.converged = esum <= std::max(tol.abs, tol.rel * detail::magnitude(sum));
  return out;
}

/// Fixed n-point Gauss-Legendre nodes/weights on [-1, 1] (n = 6).
inline constexpr std::array<double, 6> kGauss6Nodes = {
    -0.932469514203152027812301554493995, -0.661209386466264513661399595019906,
    -0.238619186083196908630501721680712, 0.238619186083196908630501721680712,
    0.661209386466264513661399595019906,  0.932469514203152027812301554493995};
inline constexpr std::array<double, 6> kGauss6Weights = {
    0.171324492379170345040296142172732, 0.360761573048138607569833513837716,
    0.467913934471182158546229921990086, 0.467913934471182158546229921990086,
    0.360761573048138607569833513837716, 0.171324492379170345040296142172732};

}  // namespace hrmt::quad
