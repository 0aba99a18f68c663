#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "factorlab/panel.hpp"

namespace factorlab::riskstats {

/// Standard-error estimator. Newey-West uses Bartlett weights and no
/// small-sample correction, so lag 0 is White's HC0.
struct SeMethod {
  enum class Kind { ols, newey_west };
  Kind kind = Kind::ols;
  int lags = 0;

  static SeMethod newey_west(int lags) { return {Kind::newey_west, lags}; }
  std::string label() const;
};

/// OLS fit on an explicit design matrix (intercept column included by the
/// caller when wanted).
struct OlsFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  Eigen::VectorXd residuals;
  double r2 = kMissing;
};

/// Throws ComputeError naming the offending columns when `x` is rank
/// deficient.
OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SeMethod& method = {},
           std::span<const std::string> column_names = {});

struct RegressionResult {
  double alpha = kMissing;
  std::vector<double> betas;
  double se_alpha = kMissing;
  std::vector<double> se_betas;
  double t_alpha = kMissing;
  std::vector<double> t_betas;
  double r2 = kMissing;
  std::size_t n_obs = 0;
  SeMethod se_method;
  std::vector<std::string> factor_names;
};

/// Time-series OLS with intercept over dates where `y` and every factor are
/// present. Needs at least #factors + 2 such dates.
RegressionResult ts_regress(const Series& y, std::span<const Series> factors, const SeMethod& method = {});

struct FMBResult {
  double mean_intercept = kMissing;
  std::vector<double> mean_coeffs;
  std::vector<double> t_stats;
  std::size_t n_months = 0;
  std::size_t skipped_months = 0;
  /// Per-month slopes (one row per used month, one column per characteristic).
  std::vector<Month> months;
  std::vector<std::vector<double>> monthly_coeffs;
  std::vector<std::string> flags;
};

/// Cross-sectional OLS of month t+1 returns on month t characteristics for
/// every usable month, without averaging.
FMBResult cross_sectional_slopes(const Panel& returns, std::span<const Panel* const> characteristics);

/// Fama-MacBeth averages of the monthly slopes with t = mean / (sd / sqrt(T)).
/// Throws ComputeError with fewer than two usable months; a zero slope
/// deviation leaves that t-stat missing and flagged.
FMBResult fama_macbeth(const Panel& returns, std::span<const Panel* const> characteristics);

struct SummaryStats {
  double mean = kMissing;
  double sd = kMissing;
  double sharpe_annualized = kMissing;
  double skewness = kMissing;
  double min = kMissing;
  double max = kMissing;
  std::size_t n_obs = 0;
  std::vector<std::string> flags;
};

SummaryStats summarize(const Series& s);

struct DateRange {
  Month first;
  Month last;
  std::string label;
};

/// Calendar decades clipped to the index span.
std::vector<DateRange> decade_buckets(const DateIndex& dates);

struct CoverageRow {
  DateRange period;
  std::size_t n_months = 0;
  double security_fraction = kMissing;
  double cap_share = kMissing;
};

std::vector<CoverageRow> coverage_by_period(const Panel& characteristic, const Panel& cap,
                                            std::span<const DateRange> buckets);

struct FactorModel {
  std::string name;
  std::vector<Series> factors;
};

/// Rebuilds a spread restricted to the given 1/0 universe panel.
using SpreadBuilder = std::function<Series(const Panel& universe)>;

struct StratifiedCell {
  int size_bin = 0;
  std::string model;
  std::optional<RegressionResult> result;
  std::string error;
};

/// One cell per (size bin, model), bins ascending, models in given order.
std::vector<StratifiedCell> size_stratified_alphas(const SpreadBuilder& builder, const Panel& size_bins,
                                                   std::span<const FactorModel> models,
                                                   const SeMethod& method = {});

}  // namespace factorlab::riskstats
