// Command-line front end: simulate, esd, fit-esd, fit-background,
// select-model, full-pipeline.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hrmt/errors.hpp"
#include "hrmt/estimation.hpp"
#include "hrmt/io.hpp"
#include "hrmt/pipeline.hpp"
#include "hrmt/simulator.hpp"
#include "hrmt/spectral.hpp"

using namespace hrmt;

namespace {

struct Options {
  std::string out;
  std::uint64_t seed = 0;

  // Input.
  std::string prices;
  std::string panel;
  std::string missing = "drop";
  bool standardize_panel = false;

  // Model.
  std::string cls = "wishart";
  int N = 2;
  double beta = 1.0;
  double eps0 = 1.0;
  std::optional<double> q;

  // Simulation.
  int p = 100;
  int T = 400;
  std::string path = "scalar";

  // Theoretical curve grid.
  std::optional<double> lambda_min;
  std::optional<double> lambda_max;
  int points = 400;

  // Histograms and fits.
  std::size_t bins = 0;
  std::optional<double> cutoff;
  std::string order = "asset";
  std::string whitening = "full";
  int L_min = 4;
  int L_max = 64;
  std::optional<int> L;
  int N_max = 3;
};

// Provenance stamped on every output file.
struct Run {
  std::string command;
  Json config;
  std::string hash;
  std::uint64_t seed = 0;

  std::string comment() const {
    return "config_hash=" + hash + " seed=" + std::to_string(seed);
  }
  Json envelope(Json body) const {
    Json j;
    j["command"] = command;
    j["config_hash"] = hash;
    j["seed"] = seed;
    j["config"] = config;
    for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
    return j;
  }
};

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cli_io", "load_input", "cannot open input file",
                    {{"path", path}});
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

Json optional_json(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Run make_run(const std::string& command, const Options& o) {
  Run r;
  r.command = command;
  r.seed = o.seed;
  Json c;
  c["command"] = command;
  c["seed"] = o.seed;
  if (command == "simulate") {
    c["class"] = o.cls;
    c["N"] = o.N;
    c["beta"] = o.beta;
    c["eps0"] = o.eps0;
    c["p"] = o.p;
    c["T"] = o.T;
    c["path"] = o.path;
  } else {
    if (!o.prices.empty()) {
      c["prices"] = o.prices;
      c["prices_digest"] = file_digest(o.prices);
      c["missing"] = o.missing;
    }
    if (!o.panel.empty()) {
      c["panel"] = o.panel;
      c["panel_digest"] = file_digest(o.panel);
      c["standardize"] = o.standardize_panel;
    }
    if (command == "esd" && o.prices.empty() && o.panel.empty()) {
      c["class"] = o.cls;
      c["N"] = o.N;
      c["beta"] = o.beta;
      c["eps0"] = o.eps0;
      c["q"] = optional_json(o.q);
      c["lambda_min"] = optional_json(o.lambda_min);
      c["lambda_max"] = optional_json(o.lambda_max);
      c["points"] = o.points;
    } else {
      c["bins"] = o.bins;
      c["cutoff"] = optional_json(o.cutoff);
    }
    if (command == "fit-esd") {
      c["class"] = o.cls;
      c["N"] = o.N;
      c["q"] = optional_json(o.q);
    }
    if (command == "fit-background" || command == "select-model" ||
        command == "full-pipeline") {
      c["order"] = o.order;
      c["whitening"] = o.whitening;
      c["L_min"] = o.L_min;
      c["L_max"] = o.L_max;
      c["L"] = o.L ? Json(*o.L) : Json(nullptr);
    }
    if (command == "fit-background") {
      c["class"] = o.cls;
      c["N"] = o.N;
    }
    if (command == "select-model" || command == "full-pipeline") {
      c["N_max"] = o.N_max;
    }
  }
  r.config = c;
  r.hash = fnv1a_hex(c.dump());
  return r;
}

BackgroundModel model_from(const Options& o) {
  if (o.N == 0) return BackgroundModel::delta(o.eps0);
  return BackgroundModel::uniform(parse_background_class(o.cls), o.N, o.beta,
                                  o.eps0);
}

bool has_input(const Options& o) { return !o.prices.empty() || !o.panel.empty(); }

ReturnPanel load_input(const Options& o) {
  if (o.prices.empty() == o.panel.empty()) {
    throw DomainError("cli_io", "load_input",
                      "give exactly one of --prices or --panel");
  }
  if (!o.prices.empty()) {
    const auto table = load_prices(o.prices, parse_missing_policy(o.missing));
    return standardize(price_returns(table));
  }
  const auto panel = load_panel(o.panel);
  return o.standardize_panel ? standardize(panel) : panel;
}

PipelineOptions pipeline_options(const Options& o) {
  if (o.L_min < 2 || o.L_max < o.L_min + 1) {
    throw DomainError("cli_io", "pipeline_options",
                      "require 2 <= L_min < L_max",
                      {{"L_min", std::to_string(o.L_min)},
                       {"L_max", std::to_string(o.L_max)}});
  }
  PipelineOptions p;
  p.L_candidates.clear();
  for (int L = o.L_min; L <= o.L_max; ++L) p.L_candidates.push_back(L);
  p.L_fixed = o.L;
  p.N_max = o.N_max;
  p.order = o.order == "time" ? AggregationOrder::TimeMajor
                              : AggregationOrder::AssetMajor;
  p.whitening = parse_whitening(o.whitening);
  p.bulk_cutoff = o.cutoff;
  p.esd_bins.bins = o.bins;
  return p;
}

std::vector<double> linear_grid(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
  return out;
}

std::string csv_string(std::span<const CsvColumn> cols, const Run& run) {
  std::ostringstream os;
  write_csv(os, cols, run.comment());
  return os.str();
}

std::string histogram_csv(const Histogram& h, const Run& run) {
  std::vector<double> lo, hi, c, d, n;
  for (std::size_t i = 0; i < h.bins(); ++i) {
    lo.push_back(h.bin_edges[i]);
    hi.push_back(h.bin_edges[i + 1]);
    c.push_back(h.center(i));
    d.push_back(h.densities[i]);
    n.push_back(static_cast<double>(h.counts[i]));
  }
  const std::vector<CsvColumn> cols{
      {"bin_lo", lo}, {"bin_hi", hi}, {"center", c}, {"density", d}, {"count", n}};
  return csv_string(cols, run);
}

// Fitted rho_N and both MP baselines over the histogram range.
void write_esd_curves(const OutputDir& dir, const FitReport& fit,
                      const Histogram& hist, double q, const Run& run) {
  const double lo = std::max(hist.bin_edges.front(), 1e-6);
  const double hi = hist.bin_edges.back() * 1.2;
  const auto grid = linear_grid(lo, hi, 300);
  if (!fit.background.is_delta()) {
    const auto curve = esd_curve(SpectralModel(fit.background, q), grid);
    std::ostringstream os;
    write_curve_csv(os, curve, run.comment());
    dir.write("esd_fit.csv", os.str());
  }
  std::vector<CsvColumn> mp{{"lambda", grid}};
  for (const auto& b : fit.mp_baselines) {
    std::vector<double> rho;
    for (double l : grid) rho.push_back(mp_density(b.eps0, b.q, l));
    mp.push_back({b.q_free ? "rho_mp_q_free" : "rho_mp", rho});
  }
  dir.write("mp_baseline.csv", csv_string(mp, run));
}

// Background density over the eps histogram and the compounded return law.
void write_background_curves(const OutputDir& dir, const FitReport& bg,
                             const Histogram& eps_hist,
                             std::span<const double> aggregated,
                             const HistogramOptions& return_bins,
                             const Run& run) {
  dir.write("eps_histogram.csv", histogram_csv(eps_hist, run));
  const double lo = std::max(eps_hist.bin_edges.front(), 1e-6);
  const auto eps = linear_grid(lo, eps_hist.bin_edges.back(), 300);
  const BackgroundTable table(bg.background);
  std::vector<double> f;
  for (double e : eps) f.push_back(table.density(e));
  const std::vector<CsvColumn> bcols{{"eps", eps}, {"density", f}};
  dir.write("background_fit.csv", csv_string(bcols, run));

  const Histogram ret = make_histogram(aggregated, return_bins);
  std::vector<double> x, emp, comp, model;
  for (std::size_t i = 0; i < ret.bins(); ++i) {
    x.push_back(ret.center(i));
    emp.push_back(ret.densities[i]);
    comp.push_back(compound_gaussian(eps_hist, ret.center(i)));
    model.push_back(return_density(table, ret.center(i)));
  }
  const std::vector<CsvColumn> ccols{
      {"r", x}, {"empirical", emp}, {"compound", comp}, {"model", model}};
  dir.write("return_compound.csv", csv_string(ccols, run));
}

int cmd_simulate(const Options& o, const Run& run) {
  const OutputDir dir(o.out);
  const SimConfig config{model_from(o), o.p, o.T, parse_sim_path(o.path), o.seed};
  const auto panel = simulate_panel(config);
  std::ostringstream os;
  write_panel_csv(os, panel, run.comment());
  dir.write("panel.csv", os.str());
  Json body;
  body["model"] = to_json(config.background);
  body["model"]["q"] = static_cast<double>(o.p) / o.T;
  body["files"] = {"panel.csv"};
  dir.write("simulate.json", dump(run.envelope(body)));
  return 0;
}

int cmd_esd(const Options& o, const Run& run) {
  const OutputDir dir(o.out);
  if (!has_input(o)) {
    const auto model = model_from(o);
    if (!o.q) {
      throw DomainError("cli_io", "esd", "theoretical curve needs --q");
    }
    const SpectralModel sm(model, *o.q);
    const auto [mlo, mhi] = mp_edges(model.eps0(), *o.q);
    const double lo = o.lambda_min.value_or(0.02 * mlo + 1e-3 * model.eps0());
    const double hi = o.lambda_max.value_or(3.0 * mhi);
    if (!(hi > lo && lo > 0.0) || o.points < 2) {
      throw DomainError("cli_io", "esd", "need 0 < lambda_min < lambda_max and points >= 2");
    }
    const auto curve = esd_curve(sm, linear_grid(lo, hi, o.points));
    std::ostringstream os;
    write_curve_csv(os, curve, run.comment());
    dir.write("esd_curve.csv", os.str());
    Json body;
    body["model"] = to_json(model);
    body["model"]["q"] = *o.q;
    body["curve"] = to_json(curve);
    body["files"] = {"esd_curve.csv"};
    dir.write("esd_curve.json", dump(run.envelope(body)));
    return 0;
  }
  const auto panel = load_input(o);
  const auto eig = esd_of_panel(panel);
  const std::vector<double> ev(eig.data(), eig.data() + eig.size());
  HistogramOptions ho;
  ho.bins = o.bins;
  const auto hist = empirical_esd(ev, o.cutoff, ho);
  const std::vector<CsvColumn> cols{{"eigenvalue", ev}};
  dir.write("eigenvalues.csv", csv_string(cols, run));
  dir.write("esd_histogram.csv", histogram_csv(hist, run));
  Json body;
  body["p"] = panel.assets();
  body["T"] = panel.periods();
  body["q"] = static_cast<double>(panel.assets()) / panel.periods();
  body["matrix"] = panel.standardized ? "correlation" : "second_moment";
  body["eigenvalue_sum"] = eig.sum();
  body["eigenvalues"] = ev;
  body["histogram"] = to_json(hist);
  body["files"] = {"eigenvalues.csv", "esd_histogram.csv"};
  dir.write("esd.json", dump(run.envelope(body)));
  return 0;
}

int cmd_fit_esd(const Options& o, const Run& run) {
  const OutputDir dir(o.out);
  const auto panel = load_input(o);
  const auto eig = esd_of_panel(panel);
  const std::vector<double> ev(eig.data(), eig.data() + eig.size());
  HistogramOptions ho;
  ho.bins = o.bins;
  const auto hist = empirical_esd(ev, o.cutoff, ho);
  const double q = o.q.value_or(static_cast<double>(panel.assets()) / panel.periods());
  const auto fit = fit_esd(hist, q, o.N, parse_background_class(o.cls));
  dir.write("esd_histogram.csv", histogram_csv(hist, run));
  write_esd_curves(dir, fit, hist, q, run);
  dir.write("fit_esd.json", dump(run.envelope(to_json(fit))));
  return 0;
}

int cmd_background(const Options& o, const Run& run, bool select) {
  const OutputDir dir(o.out);
  const auto opts = pipeline_options(o);
  const auto front = whitened_series(load_input(o), opts);
  const auto [window, eps_hist] = variance_histogram(front.aggregated, opts);
  FitReport fit = select ? select_model(eps_hist, o.N_max)
                         : fit_background(eps_hist, parse_background_class(o.cls), o.N);
  fit.window = window;
  write_background_curves(dir, fit, eps_hist, front.aggregated, opts.return_bins,
                          run);
  dir.write(select ? "select_model.json" : "fit_background.json",
            dump(run.envelope(to_json(fit))));
  return 0;
}

int cmd_pipeline(const Options& o, const Run& run) {
  const OutputDir dir(o.out);
  const auto opts = pipeline_options(o);
  const auto panel = load_input(o);
  const auto r = run_pipeline(panel, opts);
  const double q = static_cast<double>(panel.assets()) / panel.periods();
  dir.write("esd_histogram.csv", histogram_csv(r.esd_hist, run));
  write_esd_curves(dir, r.esd, r.esd_hist, q, run);
  write_background_curves(dir, r.background, r.eps_hist, r.aggregated,
                          opts.return_bins, run);
  Json body = to_json(r.esd);
  body["background_fit"] = to_json(r.background);
  dir.write("full_pipeline.json", dump(run.envelope(body)));
  return 0;
}

void add_input(CLI::App* c, Options& o) {
  c->add_option("--prices", o.prices, "Wide price CSV (date column + one column per asset)");
  c->add_option("--panel", o.panel, "Return panel CSV (assets as rows)");
  c->add_option("--missing", o.missing, "Missing-price policy")
      ->check(CLI::IsMember({"drop", "ffill"}));
  c->add_flag("--standardize", o.standardize_panel,
              "Standardize a --panel input (prices are always standardized)");
  c->add_option("--bins", o.bins, "Eigenvalue histogram bins (0: Freedman-Diaconis)");
  c->add_option("--cutoff", o.cutoff, "Bulk cutoff (default: automatic)");
}

void add_model(CLI::App* c, Options& o, bool with_shape) {
  c->add_option("--class", o.cls, "Background class")
      ->check(CLI::IsMember({"wishart", "inverse_wishart"}));
  c->add_option("--N", o.N, "Hierarchy depth")->check(CLI::Range(0, 64));
  if (with_shape) {
    c->add_option("--beta", o.beta, "Shape parameter")->check(CLI::PositiveNumber);
    c->add_option("--eps0", o.eps0, "Scale eps0")->check(CLI::PositiveNumber);
  }
}

void add_background(CLI::App* c, Options& o) {
  c->add_option("--order", o.order, "Aggregation order")
      ->check(CLI::IsMember({"asset", "time"}));
  c->add_option("--whitening", o.whitening, "Whitening")
      ->check(CLI::IsMember({"full", "clipped"}));
  c->add_option("--L-min", o.L_min, "Smallest window");
  c->add_option("--L-max", o.L_max, "Largest window");
  c->add_option("--L", o.L, "Fixed window (skips selection)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Marchenko-Pastur spectra: simulation and fitting"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  o.out = default_output_dir().string();
  app.add_option("--out", o.out, "Output directory (env HRMT_OUTPUT_DIR)");
  app.add_option("--seed", o.seed, "Seed recorded in every output");

  auto* sim = app.add_subcommand("simulate", "Simulate a return panel");
  add_model(sim, o, true);
  sim->add_option("--p", o.p, "Assets")->check(CLI::PositiveNumber);
  sim->add_option("--T", o.T, "Periods")->check(CLI::PositiveNumber);
  sim->add_option("--path", o.path, "Sampling path")
      ->check(CLI::IsMember({"scalar", "matrix"}));

  auto* esd = app.add_subcommand(
      "esd", "Empirical spectrum of an input, or a model curve without input");
  add_input(esd, o);
  add_model(esd, o, true);
  esd->add_option("--q", o.q, "p/T for the model curve")->check(CLI::Range(1e-9, 1.0));
  esd->add_option("--lambda-min", o.lambda_min, "Curve grid start");
  esd->add_option("--lambda-max", o.lambda_max, "Curve grid end");
  esd->add_option("--points", o.points, "Curve grid points");

  auto* fe = app.add_subcommand("fit-esd", "Fit (beta, eps0) to an eigenvalue histogram");
  add_input(fe, o);
  add_model(fe, o, false);
  fe->add_option("--q", o.q, "Override q = p/T")->check(CLI::Range(1e-9, 1.0));

  auto* fb = app.add_subcommand("fit-background", "Fit beta of one background class");
  add_input(fb, o);
  add_model(fb, o, false);
  add_background(fb, o);

  auto* sm = app.add_subcommand("select-model", "Fit both classes for N = 1..N_max");
  add_input(sm, o);
  add_background(sm, o);
  sm->add_option("--N-max", o.N_max, "Largest hierarchy depth")->check(CLI::Range(1, 8));

  auto* fp = app.add_subcommand("full-pipeline", "Spectrum, background selection and ESD fit");
  add_input(fp, o);
  add_background(fp, o);
  fp->add_option("--N-max", o.N_max, "Largest hierarchy depth")->check(CLI::Range(1, 8));

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const Run run = make_run(command, o);
    if (command == "simulate") return cmd_simulate(o, run);
    if (command == "esd") return cmd_esd(o, run);
    if (command == "fit-esd") return cmd_fit_esd(o, run);
    if (command == "fit-background") return cmd_background(o, run, false);
    if (command == "select-model") return cmd_background(o, run, true);
    return cmd_pipeline(o, run);
  } catch (const Error& e) {
    std::cerr << dump(error_json(e));
  } catch (const std::exception& e) {
    std::cerr << dump(error_json("cli_io", command, e.what()));
  }
  return 2;
}
