#include "hrmt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hrmt/errors.hpp"

namespace hrmt {

namespace {

constexpr const char* kModule = "linalg_core";

std::vector<std::string> default_labels(const char* prefix, Eigen::Index n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Column indices sorted lexicographically by column contents.
std::vector<Eigen::Index> canonical_columns(const Eigen::MatrixXd& m) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.cols()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (m(r, a) != m(r, b)) return m(r, a) < m(r, b);
    }
    return false;
  });
  return idx;
}

double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

ReturnPanel make_panel(Eigen::MatrixXd values, bool standardized) {
  ReturnPanel p;
  p.asset_ids = default_labels("a", values.rows());
  p.timestamps = default_labels("", values.cols());
  p.values = std::move(values);
  p.standardized = standardized;
  return p;
}

ReturnPanel log_returns(const Eigen::MatrixXd& prices,
                        std::vector<std::string> asset_ids,
                        std::vector<std::string> timestamps) {
  if (prices.cols() < 2 || prices.rows() < 1) {
    throw DataError(kModule, "log_returns",
                    "need at least one asset and two prices",
                    {{"rows", std::to_string(prices.rows())},
                     {"cols", std::to_string(prices.cols())}});
  }
  if (asset_ids.empty()) asset_ids = default_labels("a", prices.rows());
  if (timestamps.empty()) timestamps = default_labels("", prices.cols());
  if (static_cast<Eigen::Index>(asset_ids.size()) != prices.rows() ||
      static_cast<Eigen::Index>(timestamps.size()) != prices.cols()) {
    throw DataError(kModule, "log_returns", "label count mismatch",
                    {{"assets", std::to_string(asset_ids.size())},
                     {"timestamps", std::to_string(timestamps.size())},
                     {"rows", std::to_string(prices.rows())},
                     {"cols", std::to_string(prices.cols())}});
  }
  for (Eigen::Index i = 0; i < prices.rows(); ++i) {
    for (Eigen::Index t = 0; t < prices.cols(); ++t) {
      if (!(prices(i, t) > 0.0)) {
        throw DataError(kModule, "log_returns", "nonpositive price",
                        {{"asset", asset_ids[i]},
                         {"timestamp", timestamps[t]},
                         {"price", to_param(prices(i, t))}});
      }
    }
  }
  ReturnPanel p;
  const Eigen::MatrixXd lp = prices.array().log().matrix();
  p.values = lp.rightCols(prices.cols() - 1) - lp.leftCols(prices.cols() - 1);
  p.asset_ids = std::move(asset_ids);
  p.timestamps.assign(timestamps.begin() + 1, timestamps.end());
  return p;
}

ReturnPanel standardize(const ReturnPanel& panel) {
  const Eigen::Index t = panel.periods();
  if (t < 2) {
    throw DataError(kModule, "standardize", "need at least two periods");
  }
  ReturnPanel out = panel;
  std::vector<double> row(static_cast<std::size_t>(t));
  for (Eigen::Index i = 0; i < panel.assets(); ++i) {
    for (Eigen::Index k = 0; k < t; ++k) row[k] = panel.values(i, k);
    const double mean = sorted_sum(row) / t;
    for (Eigen::Index k = 0; k < t; ++k) {
      const double d = panel.values(i, k) - mean;
      row[k] = d * d;
    }
    const double var = sorted_sum(row) / t;
    if (!(var > 0.0)) {
      throw DataError(kModule, "standardize", "constant return series",
                      {{"asset", panel.asset_ids.empty()
                                     ? std::to_string(i)
                                     : panel.asset_ids[i]}});
    }
    const double sd = std::sqrt(var);
    out.values.row(i) = (panel.values.row(i).array() - mean) / sd;
  }
  out.standardized = true;
  return out;
}

Eigen::MatrixXd second_moment_matrix(const ReturnPanel& panel) {
  const Eigen::Index t = panel.periods();
  if (t < 1) throw DataError(kModule, "second_moment_matrix", "empty panel");
  const auto order = canonical_columns(panel.values);
  Eigen::MatrixXd sorted(panel.assets(), t);
  for (Eigen::Index k = 0; k < t; ++k) sorted.col(k) = panel.values.col(order[k]);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(panel.assets(), panel.assets());
  c.selfadjointView<Eigen::Lower>().rankUpdate(sorted, 1.0 / t);
  return c.selfadjointView<Eigen::Lower>();
}

Eigen::MatrixXd correlation_matrix(const ReturnPanel& panel) {
  if (!panel.standardized) {
    throw DataError(kModule, "correlation_matrix",
                    "panel must be standardized first");
  }
  Eigen::MatrixXd c = second_moment_matrix(panel);
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    if (std::abs(c(i, i) - 1.0) > 1e-10) {
      throw DataError(kModule, "correlation_matrix",
                      "row does not have unit variance",
                      {{"row", std::to_string(i)}, {"variance", to_param(c(i, i))}});
    }
  }
  return c;
}

EigenSystem sym_eig(const Eigen::MatrixXd& c, const JacobiOptions& opts) {
  const Eigen::Index n = c.rows();
  if (n == 0 || c.cols() != n) {
    throw DomainError(kModule, "sym_eig", "matrix must be square and nonempty");
  }
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DomainError(kModule, "sym_eig", "matrix is not symmetric");
  }
  Eigen::MatrixXd a = 0.5 * (c + c.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double norm = a.norm();
  const double target = opts.tolerance * norm;

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = j + 1; i < n; ++i) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  EigenSystem out;
  double off = off_norm();
  int sweep = 0;
  while (off > target && norm > 0.0) {
    if (sweep >= opts.max_sweeps) {
      throw ConvergenceError(kModule, "sym_eig", "Jacobi sweep limit reached",
                             {{"sweeps", std::to_string(sweep)},
                              {"off_norm", to_param(off)}});
    }
    ++sweep;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Skip rotations that cannot change the diagonal in floating point.
        if (sweep > 3 && std::abs(apq) * 1e18 < std::abs(a(p, p)) &&
            std::abs(apq) * 1e18 < std::abs(a(q, q))) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        // Columns p, q.
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        // Rows p, q.
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = cs * vkp - sn * vkq;
          v(k, q) = sn * vkp + cs * vkq;
        }
      }
    }
    off = off_norm();
  }

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index x, Eigen::Index y) {
    return a(x, x) > a(y, y);
  });
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.eigenvalues(k) = a(idx[k], idx[k]);
    Eigen::VectorXd col = v.col(idx[k]);
    Eigen::Index big = 0;
    for (Eigen::Index i = 1; i < n; ++i) {
      if (std::abs(col(i)) > std::abs(col(big))) big = i;
    }
    if (col(big) < 0.0) col = -col;
    out.eigenvectors.col(k) = col;
  }
  out.sweeps = sweep;
  return out;
}

ReturnPanel whiten(const ReturnPanel& panel, const EigenSystem& eig) {
  if (eig.eigenvalues.size() != panel.assets()) {
    throw DataError(kModule, "whiten", "eigensystem size does not match panel");
  }
  for (Eigen::Index k = 0; k < eig.eigenvalues.size(); ++k) {
    if (!(eig.eigenvalues(k) > 0.0)) {
      throw DataError(kModule, "whiten",
                      "nonpositive eigenvalue (rank-deficient panel)",
                      {{"index", std::to_string(k)},
                       {"eigenvalue", to_param(eig.eigenvalues(k))}});
    }
  }
  ReturnPanel out = panel;
  // Already white: the eigenbasis of a (numerically) degenerate spectrum is
  // arbitrary, and identity is the canonical whitening.
  if ((eig.eigenvalues.array() - 1.0).abs().maxCoeff() <= 1e-9) return out;
  const Eigen::VectorXd inv_sqrt = eig.eigenvalues.array().rsqrt();
  out.values = inv_sqrt.asDiagonal() * (eig.eigenvectors.transpose() * panel.values);
  out.asset_ids = default_labels("w", panel.assets());
  return out;
}

ReturnPanel whiten_clipped(const ReturnPanel& panel, const EigenSystem& eig,
                           double bulk_cutoff) {
  const Eigen::Index p = eig.eigenvalues.size();
  if (p != panel.assets()) {
    throw DataError(kModule, "whiten_clipped",
                    "eigensystem size does not match panel");
  }
  double bulk_sum = 0.0;
  Eigen::Index bulk = 0;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (eig.eigenvalues(k) <= bulk_cutoff) {
      bulk_sum += eig.eigenvalues(k);
      ++bulk;
    }
  }
  if (bulk == 0 || !(bulk_sum > 0.0)) {
    throw DataError(kModule, "whiten_clipped", "no positive bulk eigenvalues",
                    {{"cutoff", to_param(bulk_cutoff)}});
  }
  const double bulk_mean = bulk_sum / static_cast<double>(bulk);
  Eigen::VectorXd inv_sqrt(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double l = eig.eigenvalues(k) <= bulk_cutoff ? bulk_mean : eig.eigenvalues(k);
    inv_sqrt(k) = 1.0 / std::sqrt(l);
  }
  ReturnPanel out = panel;
  if (bulk == p) {
    out.values /= std::sqrt(bulk_mean);
    return out;
  }
  const Eigen::MatrixXd& u = eig.eigenvectors;
  out.values = u * (inv_sqrt.asDiagonal() * (u.transpose() * panel.values));
  return out;
}

std::vector<double> aggregate(const ReturnPanel& panel, AggregationOrder order) {
  const Eigen::Index p = panel.assets();
  const Eigen::Index t = panel.periods();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(p * t));
  if (order == AggregationOrder::AssetMajor) {
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index k = 0; k < t; ++k) out.push_back(panel.values(i, k));
  } else {
    for (Eigen::Index k = 0; k < t; ++k)
      for (Eigen::Index i = 0; i < p; ++i) out.push_back(panel.values(i, k));
  }
  return out;
}

}  // namespace hrmt
