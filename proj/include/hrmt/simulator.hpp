#pragma once

// Synthetic panels r_t = eps_t^{1/2} eta_t (scalar background) or
// r_t = Sigma_t^{1/2} eta_t (matrix background), iid across time.

#include <cstdint>
#include <string>

#include "hrmt/background.hpp"
#include "hrmt/linalg.hpp"

namespace hrmt {

enum class SimPath { Scalar, Matrix };

std::string to_string(SimPath path);
SimPath parse_sim_path(const std::string& name);

struct SimConfig {
  BackgroundModel background;
  int p = 1;
  int T = 1;
  SimPath path = SimPath::Scalar;
  std::uint64_t seed = 0;
};

/// Throws DomainError for p < 1, T < 1, or a matrix path with a Wishart
/// level violating 2 beta > p - 1.
void validate(const SimConfig& config);

/// p x T panel (not standardized). Column t draws from its own split stream,
/// so the panel is a pure function of the config.
ReturnPanel simulate_panel(const SimConfig& config);

/// One Sigma_N draw of the matrix cascade started at eps0 * I.
Eigen::MatrixXd sample_matrix_cascade(const BackgroundModel& model, int p,
                                      std::uint64_t seed, std::uint64_t stream);

/// Eigenvalues (descending) of the correlation matrix of a standardized
/// panel, or of the second-moment matrix (1/T) R R' otherwise.
Eigen::VectorXd esd_of_panel(const ReturnPanel& panel);

struct CftReport {
  double ks = 0.0;
  double p_value = 0.0;
  std::size_t samples = 0;  // per path
  bool passed = false;      // p_value > 0.01
};

/// Two-sample KS between components drawn through the scalar and matrix
/// paths. One component per simulated column (cycling through the p
/// coordinates) keeps the pooled samples independent.
CftReport cft_equivalence_test(const BackgroundModel& background, int p, int T,
                               int trials, std::uint64_t seed);

}  // namespace hrmt
