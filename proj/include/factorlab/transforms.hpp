#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factorlab/panel.hpp"

namespace factorlab {

/// Collects dates at which an operator fell back to its degenerate-case
/// policy (empty universe, zero dispersion, ...).
struct Flags {
  std::vector<std::string> warnings;

  void flag(std::string_view op, Month date, std::string_view reason);
};

namespace transforms {

enum class BinaryOp { add, sub, mul, div };
enum class UnaryOp { neg, abs, log, sqrt, rank_sign_flip };
enum class KeepIf { nonzero, zero };
enum class CompareOp { lt, ge };
enum class RollingStat { mean, std, sum, min, max };

/// Linear interpolation between closest ranks: rank = 1 + (m - 1) * pct / 100
/// over `sorted` (ascending, non-empty). This is the single percentile
/// definition used by every breakpoint-style operator.
double percentile(std::span<const double> sorted, double pct);

/// Ascending non-missing values of one row restricted to the universe.
/// `in_universe` may be empty, meaning every asset counts.
std::vector<double> sorted_universe(std::span<const double> row, std::span<const bool> in_universe);

struct BreakpointSpec {
  std::vector<double> percentiles;

  /// Throws ValidationError unless strictly increasing inside (0, 100).
  void validate() const;
};

Panel binary_op(const Panel& a, const Panel& b, BinaryOp op);
Panel unary_op(const Panel& a, UnaryOp op);

/// First non-missing value per cell, in list order.
Panel coalesce(std::span<const Panel* const> panels);

/// Clips every asset to per-date percentile bounds computed over the
/// universe. Either bound may be absent.
Panel winsorize(const Panel& a, std::optional<double> lo_pct, std::optional<double> hi_pct,
                const Panel* universe = nullptr, Flags* flags = nullptr);

/// Per-date z-score against the universe mean and sample deviation.
Panel standardize(const Panel& a, const Panel* universe = nullptr, Flags* flags = nullptr);

/// Integer bins 1..k+1 against k universe breakpoints; a value equal to a
/// breakpoint goes to the lower bin.
Panel quantile_bins(const Panel& a, const BreakpointSpec& breakpoints, const Panel* universe = nullptr,
                    Flags* flags = nullptr);

Panel mask(const Panel& a, const Panel& condition, KeepIf keep_if = KeepIf::nonzero);

/// 1/0 panel comparing each cell with the threshold for its date.
Panel compare(const Panel& a, const Series& threshold, CompareOp op);

/// One percentile per date over the universe; missing when the row is empty.
Series xs_percentile_row(const Panel& a, double pct, const Panel* universe = nullptr);

/// Value from `k` calendar months earlier, when that period is indexed.
Panel lag(const Panel& a, int k);

/// prod(1 + r) - 1 over calendar months t-window .. t-skip-1.
Panel rolling_compound_return(const Panel& returns, int window, int skip, int min_obs);

/// Trailing statistic over calendar months t-window+1 .. t.
Panel rolling_stat(const Panel& a, int window, RollingStat stat, int min_obs);

/// Recursive EWMA s = (1 - alpha) * s + alpha * x over each asset's
/// observed values, starting from the first observation.
Panel ewma(const Panel& a, double alpha, int min_periods);
std::vector<double> ewma_series(std::span<const double> values, double alpha, int min_periods);

/// Carries each value observed in `placement_month` forward over the
/// `valid_months` months starting `offset` months later.
Panel annual_to_monthly(const Panel& a, int placement_month, int offset, int valid_months);

/// 1 where the bin code equals `bin`, 0 for other codes, missing otherwise.
Panel select_bin(const Panel& bins, int bin);

/// Per-asset series function: observed values (missing marked) in date order.
using SeriesTransform =
    std::function<std::vector<double>(std::span<const double> values, const DateIndex& dates, const ParamMap& params)>;

/// Named per-asset transforms usable by `trend`.
class TransformRegistry {
 public:
  void add(std::string name, std::string description, SeriesTransform fn);
  const SeriesTransform& get(std::string_view name) const;
  bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }
  std::vector<std::string> names() const;

  /// identity, cumsum, ewma (params alpha, min_periods).
  static const TransformRegistry& builtin();

 private:
  struct Entry {
    std::string description;
    SeriesTransform fn;
  };
  std::map<std::string, Entry, std::less<>> entries_;
};

Panel trend(const Panel& a, const TransformRegistry& registry, std::string_view name, const ParamMap& params = {});

}  // namespace transforms
}  // namespace factorlab
