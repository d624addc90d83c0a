#include "hrmt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <thread>

#include "hrmt/errors.hpp"
#include "hrmt/random.hpp"
#include "hrmt/stats.hpp"

namespace hrmt {

namespace {

constexpr const char* kModule = "simulator";

double draw_gamma(double shape, CounterRng& rng) {
  return std::gamma_distribution<double>(shape, 1.0)(rng);
}

double draw_scalar_cascade(const BackgroundModel& m, CounterRng& rng) {
  double eps = m.eps0();
  for (double b : m.betas()) {
    if (m.cls() == BackgroundClass::Wishart) {
      eps *= draw_gamma(b, rng) / b;
    } else {
      eps *= b / draw_gamma(b + 1.0, rng);
    }
  }
  return eps;
}

// Lower-triangular Bartlett factor: A A' ~ Wishart(df, I).
Eigen::MatrixXd bartlett(int p, double df, CounterRng& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(2.0 * draw_gamma(0.5 * (df - i), rng));
    for (int j = 0; j < i; ++j) a(i, j) = nd(rng);
  }
  return a;
}

Eigen::MatrixXd draw_matrix_cascade(const BackgroundModel& m, int p,
                                    CounterRng& rng) {
  Eigen::MatrixXd sigma = m.eps0() * Eigen::MatrixXd::Identity(p, p);
  for (double b : m.betas()) {
    const Eigen::MatrixXd l = sigma.llt().matrixL();
    if (m.cls() == BackgroundClass::Wishart) {
      // Wishart(2 beta, Sigma / (2 beta)): mean Sigma.
      const Eigen::MatrixXd la = l * bartlett(p, 2.0 * b, rng);
      sigma = la * la.transpose() / (2.0 * b);
    } else {
      // Inverse of Wishart(2 beta + p + 1, Sigma^{-1} / (2 beta)): mean Sigma.
      const Eigen::MatrixXd a = bartlett(p, 2.0 * b + p + 1.0, rng);
      const Eigen::MatrixXd k =
          a.triangularView<Eigen::Lower>().solve(l.transpose()).transpose();
      sigma = 2.0 * b * k * k.transpose();
    }
    sigma = 0.5 * (sigma + sigma.transpose());
  }
  return sigma;
}

// Fills columns [begin, end) of the panel.
void fill_columns(const SimConfig& c, Eigen::MatrixXd& out, int begin,
                  int end) {
  const CounterRng root(c.seed);
  std::normal_distribution<double> nd;
  for (int t = begin; t < end; ++t) {
    CounterRng rng = root.split(static_cast<std::uint64_t>(t));
    Eigen::VectorXd eta(c.p);
    if (c.path == SimPath::Scalar || c.background.is_delta()) {
      const double eps = draw_scalar_cascade(c.background, rng);
      for (int i = 0; i < c.p; ++i) eta(i) = nd(rng);
      out.col(t) = std::sqrt(eps) * eta;
    } else {
      const Eigen::MatrixXd sigma = draw_matrix_cascade(c.background, c.p, rng);
      for (int i = 0; i < c.p; ++i) eta(i) = nd(rng);
      out.col(t) = sigma.llt().matrixL() * eta;
    }
  }
}

}  // namespace

std::string to_string(SimPath path) {
  return path == SimPath::Scalar ? "scalar" : "matrix";
}

SimPath parse_sim_path(const std::string& name) {
  if (name == "scalar") return SimPath::Scalar;
  if (name == "matrix") return SimPath::Matrix;
  throw DomainError(kModule, "parse_sim_path", "unknown sampling path",
                    {{"path", name}});
}

void validate(const SimConfig& c) {
  if (c.p < 1 || c.T < 1) {
    throw DomainError(kModule, "simulate_panel", "require p >= 1 and T >= 1",
                      {{"p", std::to_string(c.p)}, {"T", std::to_string(c.T)}});
  }
  if (c.path == SimPath::Matrix &&
      c.background.cls() == BackgroundClass::Wishart) {
    for (std::size_t i = 0; i < c.background.betas().size(); ++i) {
      const double b = c.background.betas()[i];
      if (!(2.0 * b > c.p - 1.0)) {
        throw DomainError(kModule, "simulate_panel",
                          "matrix path requires 2 beta > p - 1",
                          {{"level", std::to_string(i + 1)},
                           {"beta", to_param(b)},
                           {"p", std::to_string(c.p)}});
      }
    }
  }
}

ReturnPanel simulate_panel(const SimConfig& config) {
  validate(config);
  Eigen::MatrixXd values(config.p, config.T);
  const int workers = static_cast<int>(std::clamp(
      std::thread::hardware_concurrency(), 1u,
      static_cast<unsigned>(std::max(1, config.T / 256))));
  if (workers == 1) {
    fill_columns(config, values, 0, config.T);
  } else {
    std::vector<std::future<void>> jobs;
    for (int w = 0; w < workers; ++w) {
      const int b = config.T * w / workers;
      const int e = config.T * (w + 1) / workers;
      jobs.push_back(std::async(std::launch::async, [&, b, e] {
        fill_columns(config, values, b, e);
      }));
    }
    for (auto& j : jobs) j.get();
  }
  return make_panel(std::move(values));
}

Eigen::MatrixXd sample_matrix_cascade(const BackgroundModel& model, int p,
                                      std::uint64_t seed,
                                      std::uint64_t stream) {
  CounterRng rng = CounterRng(seed).split(stream);
  return draw_matrix_cascade(model, p, rng);
}

Eigen::VectorXd esd_of_panel(const ReturnPanel& panel) {
  const Eigen::MatrixXd c = panel.standardized ? correlation_matrix(panel)
                                               : second_moment_matrix(panel);
  return sym_eig(c).eigenvalues;
}

CftReport cft_equivalence_test(const BackgroundModel& background, int p, int T,
                               int trials, std::uint64_t seed) {
  if (trials < 1) {
    throw DomainError(kModule, "cft_equivalence_test", "trials must be >= 1");
  }
  std::vector<double> scalar, matrix;
  for (int k = 0; k < trials; ++k) {
    SimConfig c{background, p, T, SimPath::Scalar,
                seed + 2 * static_cast<std::uint64_t>(k)};
    const auto a = simulate_panel(c);
    c.path = SimPath::Matrix;
    c.seed = seed + 2 * static_cast<std::uint64_t>(k) + 1;
    const auto b = simulate_panel(c);
    for (int t = 0; t < T; ++t) {
      scalar.push_back(a.values(t % p, t));
      matrix.push_back(b.values(t % p, t));
    }
  }
  CftReport r;
  r.samples = scalar.size();
  r.ks = ks_statistic_two_sample(scalar, matrix);
  r.p_value = ks_pvalue(r.ks, 0.5 * static_cast<double>(r.samples));
  r.passed = r.p_value > 0.01;
  return r;
}

}  // namespace hrmt
