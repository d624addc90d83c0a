#pragma once

// Return panels, correlation matrices, symmetric eigensystems, whitening and
// aggregation of component series.

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hrmt {

/// p x T matrix of returns: assets as rows, time as columns.
struct ReturnPanel {
  Eigen::MatrixXd values;
  std::vector<std::string> asset_ids;
  std::vector<std::string> timestamps;
  bool standardized = false;

  Eigen::Index assets() const { return values.rows(); }
  Eigen::Index periods() const { return values.cols(); }
};

/// Builds a panel with default labels ("a0", "a1", ... and "0", "1", ...).
ReturnPanel make_panel(Eigen::MatrixXd values, bool standardized = false);

/// r_i(t) = log x_i(t + 1) - log x_i(t) for a p x (T + 1) price matrix.
/// timestamps, when given, label the T + 1 price rows; the panel keeps the
/// labels of the later price of each pair.
ReturnPanel log_returns(const Eigen::MatrixXd& prices,
                        std::vector<std::string> asset_ids = {},
                        std::vector<std::string> timestamps = {});

/// Rows shifted to mean 0 and scaled to unit population variance. Row sums
/// are taken over sorted values, so the result does not depend on column
/// order. Throws DataError for a constant row.
ReturnPanel standardize(const ReturnPanel& panel);

/// C = (1/T) sum_t r_t r_t' of a standardized panel. Throws DataError when the
/// panel is not flagged standardized or a row fails the unit-variance check.
Eigen::MatrixXd correlation_matrix(const ReturnPanel& panel);

/// (1/T) sum_t r_t r_t' without any normalization requirement. Columns are
/// accumulated in a canonical (lexicographic) order, so any permutation of
/// the time columns yields a bit-identical matrix.
Eigen::MatrixXd second_moment_matrix(const ReturnPanel& panel);

struct EigenSystem {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // columns, orthonormal
  int sweeps = 0;
};

struct JacobiOptions {
  int max_sweeps = 60;
  /// Stop when the off-diagonal Frobenius norm falls below tol * ||C||_F.
  double tolerance = 1e-15;
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvalues are
/// sorted descending; each eigenvector has its largest-magnitude component
/// positive (first such index on ties).
EigenSystem sym_eig(const Eigen::MatrixXd& c, const JacobiOptions& opts = {});

/// r~_t = Lambda^{-1/2} U' r_t. A panel whose eigenvalues are all within
/// 1e-9 of 1 is returned unchanged. Throws DataError for a nonpositive
/// eigenvalue.
ReturnPanel whiten(const ReturnPanel& panel, const EigenSystem& eig);

/// U L^{-1/2} U' r_t with L keeping eigenvalues above bulk_cutoff and
/// replacing the rest by their mean: removes the outlier modes without
/// inverting the sampling noise of the bulk. Asset labels are kept.
ReturnPanel whiten_clipped(const ReturnPanel& panel, const EigenSystem& eig,
                           double bulk_cutoff);

enum class AggregationOrder { AssetMajor, TimeMajor };

/// Flattens a panel into one series of length p T. AssetMajor concatenates
/// full asset series; TimeMajor interleaves assets period by period.
std::vector<double> aggregate(const ReturnPanel& panel,
                              AggregationOrder order = AggregationOrder::AssetMajor);

}  // namespace hrmt
