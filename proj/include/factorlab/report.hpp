#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "factorlab/panel.hpp"
#include "factorlab/pipeline.hpp"
#include "factorlab/registry.hpp"
#include "factorlab/riskstats.hpp"

namespace factorlab::report {

inline constexpr const char* kCoverageHeading = "Coverage by Period";
inline constexpr const char* kSummaryHeading = "Spread Portfolio Summary Statistics";
inline constexpr const char* kAlphaHeading = "Alpha, Coefficients, and t-Statistics by Model";
inline constexpr const char* kSizeHeading = "Alpha and t-Statistics by Model and Size Quantile";
inline constexpr const char* kInsufficient = "insufficient data";

/// Alpha t-statistic at or above which the hurdle annotation is attached.
inline constexpr double kTHurdle = 3.0;

struct ModelAlpha {
  std::string model;
  std::optional<riskstats::RegressionResult> result;
  std::string error;
};

struct DiagnosticsReport {
  std::string factor_name;
  std::string recipe;
  std::optional<Month> first;
  std::optional<Month> last;
  std::size_t n_months = 0;
  std::map<std::string, std::string> panel_ids;  // role -> registered id
  std::string se_method;

  std::vector<riskstats::CoverageRow> coverage;
  std::string coverage_error;

  std::optional<riskstats::SummaryStats> summary;
  double turnover_mean = kMissing;
  std::string summary_error;

  std::vector<ModelAlpha> alphas;

  std::vector<int> size_bins;
  std::vector<riskstats::StratifiedCell> size_cells;
  std::string size_error;

  std::vector<std::string> annotations;
  std::string narrative;
};

struct ReportInputs {
  std::string factor_name;
  std::string recipe;
  Series spread;
  const Panel* characteristic = nullptr;
  const Panel* cap = nullptr;
  const Panel* size_bins = nullptr;
  std::vector<riskstats::FactorModel> models;
  riskstats::SpreadBuilder builder;
  std::vector<const Panel*> weights;
  std::map<std::string, std::string> panel_ids;
  riskstats::SeMethod se_method;
};

/// Fills every section; a failing section keeps its error text instead of
/// aborting the report.
DiagnosticsReport build_report(const ReportInputs& inputs);

struct RecipeReportOptions {
  /// Registered id of the spread; defaults to the recipe's `spread` param.
  std::optional<std::string> spread_id;
  std::vector<double> size_breakpoints{100.0 / 3.0, 200.0 / 3.0};
  riskstats::SeMethod se_method;
};

/// Report for a recipe whose outputs are registered under their step names.
/// Recipe params name the roles: spread, characteristic, returns, cap, nyse,
/// weights and stratify_outputs. The market factor (value-weighted by cap)
/// and the size bins (NYSE breakpoints on cap) are computed and registered.
/// Size-bin spreads re-run the recipe on a scratch registry with the
/// stratify_outputs restricted to the bin.
DiagnosticsReport build_recipe_report(PanelRegistry& registry, const pipeline::PipelineSpec& recipe,
                                      const RecipeReportOptions& options = {});

/// Headings, fixed column order, returns at 4 decimals and t-statistics at 2.
std::string render_markdown(const DiagnosticsReport& report);

/// Sorted keys, numbers rounded to 10 significant digits, null for missing.
nlohmann::json to_json(const DiagnosticsReport& report);
std::string render_json(const DiagnosticsReport& report);

}  // namespace factorlab::report
