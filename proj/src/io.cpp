#include "hrmt/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

namespace hrmt {

namespace {

constexpr const char* kModule = "cli_io";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" ||
         cell == "null";
}

std::optional<double> parse_number(const std::string& cell) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

// Reads the next non-empty, non-comment line; returns false at EOF.
bool next_line(std::istream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    return true;
  }
  return false;
}

Error::Params at_line(const std::string& source, std::size_t lineno,
                      Error::Params extra = {}) {
  extra["source"] = source;
  extra["line"] = std::to_string(lineno);
  return extra;
}

std::ifstream open_input(const std::filesystem::path& path, const char* op) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(kModule, op, "cannot open input file",
                    {{"path", path.string()}});
  }
  return in;
}

}  // namespace

// Prices -------------------------------------------------------------------

std::string to_string(MissingPolicy policy) {
  return policy == MissingPolicy::DropIncompleteAssets ? "drop" : "ffill";
}

MissingPolicy parse_missing_policy(const std::string& name) {
  if (name == "drop") return MissingPolicy::DropIncompleteAssets;
  if (name == "ffill") return MissingPolicy::ForwardFill;
  throw DomainError(kModule, "parse_missing_policy", "unknown missing-data policy",
                    {{"policy", name}});
}

PriceTable parse_prices(std::istream& in, MissingPolicy policy,
                        const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  if (!next_line(in, line, lineno)) {
    throw DataError(kModule, "load_prices", "missing header", {{"source", source}});
  }
  const auto header = split_csv(line);
  if (header.size() < 2) {
    throw DataError(kModule, "load_prices", "header needs a date and an asset column",
                    at_line(source, lineno));
  }
  const std::vector<std::string> names(header.begin() + 1, header.end());
  const std::size_t p = names.size();

  std::vector<std::string> dates;
  std::vector<std::vector<double>> rows;  // NaN marks missing
  while (next_line(in, line, lineno)) {
    const auto cells = split_csv(line);
    if (cells.size() != p + 1) {
      throw DataError(kModule, "load_prices", "wrong number of columns",
                      at_line(source, lineno,
                              {{"expected", std::to_string(p + 1)},
                               {"found", std::to_string(cells.size())}}));
    }
    std::vector<double> row(p);
    for (std::size_t j = 0; j < p; ++j) {
      const auto& c = cells[j + 1];
      if (is_missing(c)) {
        row[j] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const auto v = parse_number(c);
      if (!v || !(*v > 0.0) || !std::isfinite(*v)) {
        throw DataError(kModule, "load_prices",
                        v ? "prices must be positive" : "unparseable cell",
                        at_line(source, lineno, {{"asset", names[j]}, {"cell", c}}));
      }
      row[j] = *v;
    }
    dates.push_back(cells[0]);
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) {
    throw DataError(kModule, "load_prices", "need at least 2 rows",
                    {{"source", source}, {"rows", std::to_string(rows.size())}});
  }

  PriceTable t;
  t.dates = dates;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < p; ++j) {
    bool ok = true;
    if (policy == MissingPolicy::DropIncompleteAssets) {
      for (const auto& r : rows) ok = ok && !std::isnan(r[j]);
    } else {
      ok = !std::isnan(rows[0][j]);
    }
    if (ok) {
      keep.push_back(j);
    } else {
      t.dropped_assets.push_back(names[j]);
    }
  }
  if (keep.empty()) {
    throw DataError(kModule, "load_prices", "no asset survives the missing-data policy",
                    {{"source", source}, {"policy", to_string(policy)}});
  }
  t.prices.resize(static_cast<Eigen::Index>(keep.size()),
                  static_cast<Eigen::Index>(rows.size()));
  for (std::size_t a = 0; a < keep.size(); ++a) {
    const std::size_t j = keep[a];
    t.assets.push_back(names[j]);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      double v = rows[k][j];
      if (std::isnan(v)) {
        v = t.prices(a, k - 1);
        ++t.filled_cells;
      }
      t.prices(a, k) = v;
    }
  }
  return t;
}

PriceTable load_prices(const std::filesystem::path& path, MissingPolicy policy) {
  auto in = open_input(path, "load_prices");
  return parse_prices(in, policy, path.string());
}

ReturnPanel price_returns(const PriceTable& table) {
  return log_returns(table.prices, table.assets, table.dates);
}

// Panels and curves --------------------------------------------------------

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

void write_panel_csv(std::ostream& out, const ReturnPanel& panel,
                     const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "asset";
  for (const auto& ts : panel.timestamps) out << ',' << ts;
  out << '\n';
  for (Eigen::Index i = 0; i < panel.assets(); ++i) {
    out << panel.asset_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < panel.periods(); ++k) {
      out << ',' << format_double(panel.values(i, k));
    }
    out << '\n';
  }
}

ReturnPanel parse_panel_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  if (!next_line(in, line, lineno)) {
    throw DataError(kModule, "load_panel", "missing header", {{"source", source}});
  }
  const auto header = split_csv(line);
  if (header.size() < 2) {
    throw DataError(kModule, "load_panel", "header needs at least one period",
                    at_line(source, lineno));
  }
  const std::size_t T = header.size() - 1;
  std::vector<std::string> ids;
  std::vector<double> flat;
  while (next_line(in, line, lineno)) {
    const auto cells = split_csv(line);
    if (cells.size() != T + 1) {
      throw DataError(kModule, "load_panel", "wrong number of columns",
                      at_line(source, lineno,
                              {{"expected", std::to_string(T + 1)},
                               {"found", std::to_string(cells.size())}}));
    }
    ids.push_back(cells[0]);
    for (std::size_t k = 0; k < T; ++k) {
      const auto v = parse_number(cells[k + 1]);
      if (!v || !std::isfinite(*v)) {
        throw DataError(kModule, "load_panel", "unparseable cell",
                        at_line(source, lineno, {{"cell", cells[k + 1]}}));
      }
      flat.push_back(*v);
    }
  }
  if (ids.empty()) {
    throw DataError(kModule, "load_panel", "panel has no rows", {{"source", source}});
  }
  Eigen::MatrixXd values(static_cast<Eigen::Index>(ids.size()),
                         static_cast<Eigen::Index>(T));
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t k = 0; k < T; ++k)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          flat[i * T + k];
  ReturnPanel panel = make_panel(std::move(values));
  panel.asset_ids = std::move(ids);
  panel.timestamps.assign(header.begin() + 1, header.end());
  return panel;
}

ReturnPanel load_panel(const std::filesystem::path& path) {
  auto in = open_input(path, "load_panel");
  return parse_panel_csv(in, path.string());
}

void write_csv(std::ostream& out, std::span<const CsvColumn> columns,
               const std::string& comment) {
  if (columns.empty()) return;
  const std::size_t n = columns[0].values.size();
  for (const auto& c : columns) {
    if (c.values.size() != n) {
      throw DomainError(kModule, "write_csv", "columns differ in length",
                        {{"column", c.name}});
    }
  }
  if (!comment.empty()) out << "# " << comment << '\n';
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out << (j ? "," : "") << columns[j].name;
  }
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      out << (j ? "," : "") << format_double(columns[j].values[i]);
    }
    out << '\n';
  }
}

void write_curve_csv(std::ostream& out, const EsdCurve& curve,
                     const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "lambda,rho,converged\n";
  for (std::size_t i = 0; i < curve.lambdas.size(); ++i) {
    out << format_double(curve.lambdas[i]) << ',' << format_double(curve.rho[i])
        << ',' << (curve.converged[i] ? 1 : 0) << '\n';
  }
}

// JSON ---------------------------------------------------------------------

Json to_json(const BackgroundModel& model) {
  Json j;
  j["class"] = model.is_delta() ? "delta" : to_string(model.cls());
  j["N"] = model.levels();
  j["betas"] = model.betas();
  j["eps0"] = model.eps0();
  return j;
}

Json to_json(const Histogram& hist) {
  Json j;
  j["bin_edges"] = hist.bin_edges;
  j["densities"] = hist.densities;
  j["counts"] = hist.counts;
  j["count"] = hist.count;
  j["excluded"] = hist.excluded;
  return j;
}

Json to_json(const WindowSelection& window) {
  Json j;
  j["L_star"] = window.L_star;
  Json by = Json::object();
  for (const auto& [L, r] : window.rmse_by_L) by[std::to_string(L)] = r;
  j["rmse_by_L"] = by;
  return j;
}

Json to_json(const FitReport& report) {
  Json j;
  j["kind"] = report.kind;
  j["model"] = to_json(report.background);
  if (report.q) j["model"]["q"] = *report.q;
  Json fixed = Json::object();
  for (const auto& [k, v] : report.fixed) {
    if (k == "N") {
      fixed[k] = static_cast<int>(v);
    } else {
      fixed[k] = v;
    }
  }
  fixed["class"] = report.background.is_delta()
                       ? std::string("delta")
                       : to_string(report.background.cls());
  j["fixed"] = fixed;
  Json fitted = Json::object();
  for (const auto& [k, v] : report.fitted) fitted[k] = v;
  j["fitted"] = fitted;
  j["rmse"] = report.rmse;
  Json table = Json::array();
  for (const auto& row : report.selection_table) {
    table.push_back({{"class", to_string(row.cls)},
                     {"N", row.N},
                     {"beta", row.beta},
                     {"rmse", row.rmse},
                     {"converged", row.converged}});
  }
  j["selection_table"] = table;
  j["window"] = report.window ? to_json(*report.window) : Json(nullptr);
  const auto nf = report.fitted.find("eps0");
  j["noise_fraction"] = report.kind == "esd" && nf != report.fitted.end()
                            ? Json(nf->second)
                            : Json(nullptr);
  j["excluded_eigenvalues"] = report.excluded_eigenvalues;
  Json mp = Json::array();
  for (const auto& b : report.mp_baselines) {
    mp.push_back({{"q_free", b.q_free}, {"eps0", b.eps0}, {"q", b.q}, {"rmse", b.rmse}});
  }
  j["mp_baselines"] = mp;
  j["converged"] = report.converged;
  j["message"] = report.message;
  return j;
}

Json to_json(const EsdCurve& curve) {
  Json j;
  j["points"] = curve.lambdas.size();
  std::size_t bad = 0;
  for (bool c : curve.converged) bad += c ? 0 : 1;
  j["unconverged"] = bad;
  j["bulk_edge_lower"] = curve.bulk_edge_lower;
  j["mass"] = curve.mass;
  return j;
}

Json error_json(const Error& e) {
  Json params = Json::object();
  for (const auto& [k, v] : e.params()) params[k] = v;
  return {{"module", e.module()},
          {"op", e.op()},
          {"message", e.what()},
          {"params", params}};
}

Json error_json(const std::string& module, const std::string& op,
                const std::string& message) {
  return {{"module", module},
          {"op", op},
          {"message", message},
          {"params", Json::object()}};
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// Output directory ---------------------------------------------------------

std::filesystem::path default_output_dir() {
  const char* env = std::getenv("HRMT_OUTPUT_DIR");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("hrmt_out");
}

OutputDir::OutputDir(std::filesystem::path root) : root_(std::move(root)) {
  if (root_.empty()) {
    throw DomainError(kModule, "output_dir", "empty output directory");
  }
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec || !std::filesystem::is_directory(root_)) {
    throw DataError(kModule, "output_dir", "cannot create output directory",
                    {{"path", root_.string()}});
  }
}

std::filesystem::path OutputDir::file(const std::string& name) const {
  const bool bad = name.empty() || name == "." || name == ".." ||
                   name.find('/') != std::string::npos ||
                   name.find('\\') != std::string::npos;
  if (bad) {
    throw DomainError(kModule, "output_dir",
                      "file name must not leave the output directory",
                      {{"name", name}});
  }
  return root_ / name;
}

void OutputDir::write(const std::string& name, const std::string& content) const {
  const auto path = file(name);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) {
    throw DataError(kModule, "output_dir", "cannot write output file",
                    {{"path", path.string()}});
  }
}

}  // namespace hrmt
