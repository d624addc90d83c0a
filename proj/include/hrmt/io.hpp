#pragma once

// Price ingestion, CSV and JSON emission, and the output-directory guard.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hrmt/errors.hpp"
#include "hrmt/estimation.hpp"
#include "hrmt/linalg.hpp"
#include "json.hpp"

namespace hrmt {

using Json = nlohmann::ordered_json;

// Prices -------------------------------------------------------------------

enum class MissingPolicy { DropIncompleteAssets, ForwardFill };

std::string to_string(MissingPolicy policy);
MissingPolicy parse_missing_policy(const std::string& name);

/// Wide table: rows are dates, columns assets. prices is assets x dates.
struct PriceTable {
  std::vector<std::string> dates;
  std::vector<std::string> assets;
  Eigen::MatrixXd prices;
  std::vector<std::string> dropped_assets;
  std::size_t filled_cells = 0;
};

/// Header "date,<asset>,...", one row per date. Empty, NA and NaN cells are
/// missing. DropIncompleteAssets drops every asset with a missing cell;
/// ForwardFill copies the previous price and drops assets missing on the
/// first date. Throws DataError with the line number for malformed rows or
/// non-positive prices, and when fewer than 2 rows or no asset survive.
PriceTable parse_prices(std::istream& in, MissingPolicy policy,
                        const std::string& source = "<stream>");
PriceTable load_prices(const std::filesystem::path& path, MissingPolicy policy);

/// Log returns of the cleaned table (timestamps are the later dates).
ReturnPanel price_returns(const PriceTable& table);

// Panels and curves --------------------------------------------------------

/// Assets as rows: header "asset,<t1>,...,<tT>". Lines starting with '#'
/// are comments.
void write_panel_csv(std::ostream& out, const ReturnPanel& panel,
                     const std::string& comment = {});
ReturnPanel parse_panel_csv(std::istream& in,
                            const std::string& source = "<stream>");
ReturnPanel load_panel(const std::filesystem::path& path);

/// Shortest representation that round-trips to the same double.
std::string format_double(double x);

struct CsvColumn {
  std::string name;
  std::vector<double> values;
};

/// Columns of equal length; an optional leading '#' comment line.
void write_csv(std::ostream& out, std::span<const CsvColumn> columns,
               const std::string& comment = {});

/// "lambda,rho,converged" rows.
void write_curve_csv(std::ostream& out, const EsdCurve& curve,
                     const std::string& comment = {});

// JSON ---------------------------------------------------------------------

Json to_json(const BackgroundModel& model);
Json to_json(const Histogram& hist);
Json to_json(const WindowSelection& window);
Json to_json(const FitReport& report);
Json to_json(const EsdCurve& curve);
/// {"module","op","message","params"}
Json error_json(const Error& e);
Json error_json(const std::string& module, const std::string& op,
                const std::string& message);

/// Two-space indented dump with a trailing newline.
std::string dump(const Json& j);

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

// Output directory ---------------------------------------------------------

/// HRMT_OUTPUT_DIR when set, otherwise ./hrmt_out.
std::filesystem::path default_output_dir();

/// Every file goes directly into root; names with separators or dot
/// components are rejected, so nothing is written outside it.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path file(const std::string& name) const;
  void write(const std::string& name, const std::string& content) const;

 private:
  std::filesystem::path root_;
};

}  // namespace hrmt
