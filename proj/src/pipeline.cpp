#include "hrmt/pipeline.hpp"

#include "hrmt/errors.hpp"

namespace hrmt {

std::string to_string(Whitening w) {
  return w == Whitening::Full ? "full" : "clipped";
}

Whitening parse_whitening(const std::string& name) {
  if (name == "full") return Whitening::Full;
  if (name == "clipped") return Whitening::Clipped;
  throw DomainError("pipeline", "parse_whitening", "unknown whitening",
                    {{"whitening", name}});
}

WhitenedSeries whitened_series(const ReturnPanel& returns,
                               const PipelineOptions& opts) {
  if (returns.assets() > returns.periods()) {
    throw DataError("pipeline", "whitened_series",
                    "need at least as many periods as assets",
                    {{"p", std::to_string(returns.assets())},
                     {"T", std::to_string(returns.periods())}});
  }
  const ReturnPanel z = returns.standardized ? returns : standardize(returns);
  const EigenSystem eig = sym_eig(correlation_matrix(z));
  WhitenedSeries out;
  out.eigenvalues = eig.eigenvalues;
  const std::vector<double> ev(eig.eigenvalues.data(),
                               eig.eigenvalues.data() + eig.eigenvalues.size());
  const double cutoff =
      opts.bulk_cutoff ? *opts.bulk_cutoff : auto_bulk_cutoff(ev);
  out.esd_hist = empirical_esd(ev, cutoff, opts.esd_bins);
  const ReturnPanel w = opts.whitening == Whitening::Full
                            ? whiten(z, eig)
                            : whiten_clipped(z, eig, cutoff);
  out.aggregated = aggregate(w, opts.order);
  return out;
}

std::pair<WindowSelection, Histogram> variance_histogram(
    std::span<const double> aggregated, const PipelineOptions& opts) {
  WindowSelection window;
  if (opts.L_fixed) {
    window.L_star = *opts.L_fixed;
  } else {
    window = select_window(aggregated, opts.L_candidates, opts.return_bins);
  }
  const auto eps = rolling_variance(aggregated, window.L_star);
  return {window, make_histogram(eps, opts.eps_bins)};
}

PipelineResult run_pipeline(const ReturnPanel& returns,
                            const PipelineOptions& opts) {
  PipelineResult r;
  auto front = whitened_series(returns, opts);
  r.eigenvalues = std::move(front.eigenvalues);
  r.esd_hist = std::move(front.esd_hist);
  r.aggregated = std::move(front.aggregated);
  std::tie(r.window, r.eps_hist) = variance_histogram(r.aggregated, opts);
  r.background = select_model(r.eps_hist, opts.N_max);
  r.background.window = r.window;

  const double q = static_cast<double>(returns.assets()) /
                   static_cast<double>(returns.periods());
  r.esd = fit_esd(r.esd_hist, q, r.background.background.levels(),
                  r.background.background.cls());
  r.esd.window = r.window;
  r.esd.selection_table = r.background.selection_table;
  r.esd.fitted["background_beta"] = r.background.fitted.at("beta");
  r.noise_fraction = noise_fraction(r.esd);
  return r;
}

}  // namespace hrmt
