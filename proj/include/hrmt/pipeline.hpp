#pragma once

// End-to-end analysis of a return panel: correlation spectrum, whitening,
// aggregation, window selection, background model selection and ESD fit.

#include <optional>
#include <string>
#include <vector>

#include "hrmt/estimation.hpp"
#include "hrmt/linalg.hpp"

namespace hrmt {

enum class Whitening {
  /// Lambda^{-1/2} U' r: empirical correlation becomes the identity.
  Full,
  /// Bulk eigenvalues clipped to their mean (see whiten_clipped).
  Clipped,
};

std::string to_string(Whitening w);
Whitening parse_whitening(const std::string& name);

struct PipelineOptions {
  std::vector<int> L_candidates = default_window_candidates();
  /// Skips window selection when set.
  std::optional<int> L_fixed;
  int N_max = 3;
  AggregationOrder order = AggregationOrder::AssetMajor;
  Whitening whitening = Whitening::Full;
  /// Auto cutoff when empty.
  std::optional<double> bulk_cutoff;
  HistogramOptions esd_bins;
  HistogramOptions return_bins;
  HistogramOptions eps_bins;
};

struct PipelineResult {
  Eigen::VectorXd eigenvalues;  // descending
  Histogram esd_hist;
  std::vector<double> aggregated;
  WindowSelection window;
  Histogram eps_hist;
  /// select_model over the eps_{L*} histogram.
  FitReport background;
  /// fit_esd with class and N from `background`; carries window and
  /// selection table.
  FitReport esd;
  double noise_fraction = 0.0;
};

struct WhitenedSeries {
  Eigen::VectorXd eigenvalues;  // descending
  Histogram esd_hist;
  std::vector<double> aggregated;
};

/// Front half shared by the background commands: standardize, correlate,
/// diagonalize, histogram the bulk, whiten and aggregate.
WhitenedSeries whitened_series(const ReturnPanel& returns,
                               const PipelineOptions& opts);

/// Window selection (or the fixed L) and the eps_L histogram.
std::pair<WindowSelection, Histogram> variance_histogram(
    std::span<const double> aggregated, const PipelineOptions& opts);

PipelineResult run_pipeline(const ReturnPanel& returns,
                            const PipelineOptions& opts = {});

}  // namespace hrmt
