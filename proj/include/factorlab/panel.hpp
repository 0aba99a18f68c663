#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "factorlab/month.hpp"

namespace factorlab {

/// The missing marker. Every non-finite number is treated as missing, so no
/// operator ever stores NaN or infinity as a real value.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return !std::isfinite(v); }
inline double or_missing(double v) { return std::isfinite(v) ? v : kMissing; }

/// A dispersion this small relative to the data's magnitude is rounding
/// noise around a constant sample.
inline bool is_degenerate_sd(double sd, double magnitude) {
  return !(sd > 1e-13 * std::max(1.0, std::fabs(magnitude)));
}

/// Strictly increasing sequence of monthly periods. Gaps are allowed.
class DateIndex {
 public:
  DateIndex() = default;
  explicit DateIndex(std::vector<Month> periods);
  DateIndex(std::initializer_list<Month> periods) : DateIndex(std::vector<Month>(periods)) {}

  /// Every month from `first` to `last` inclusive.
  static DateIndex range(Month first, Month last);
  static DateIndex merge(const DateIndex& a, const DateIndex& b);

  std::size_t size() const { return periods_.size(); }
  bool empty() const { return periods_.empty(); }
  Month operator[](std::size_t t) const { return periods_[t]; }
  Month front() const { return periods_.front(); }
  Month back() const { return periods_.back(); }
  auto begin() const { return periods_.begin(); }
  auto end() const { return periods_.end(); }
  const std::vector<Month>& periods() const { return periods_; }

  /// Row of `m`, if the period is present.
  std::optional<std::size_t> find(Month m) const;

  bool operator==(const DateIndex&) const = default;

 private:
  std::vector<Month> periods_;
};

/// Provenance parameters are flat scalars or strings.
using ParamValue = std::variant<std::int64_t, double, bool, std::string>;
using ParamMap = std::map<std::string, ParamValue>;

struct Provenance {
  std::string op_name = "source";
  ParamMap params;
  std::vector<std::string> input_ids;
  std::uint64_t created_seq = 0;

  bool is_source() const { return input_ids.empty(); }
  bool operator==(const Provenance&) const = default;
};

/// Column label used when a per-date series is stored as a one-column panel.
inline constexpr std::string_view kSeriesColumn = "value";

/// Immutable T x N grid of monthly observations.
class Panel {
 public:
  Panel() = default;
  Panel(DateIndex dates, std::vector<std::string> assets, std::vector<double> values);

  static Panel filled(DateIndex dates, std::vector<std::string> assets, double value = kMissing);

  const std::string& id() const { return id_; }
  const DateIndex& dates() const { return dates_; }
  const std::vector<std::string>& assets() const { return assets_; }
  const Provenance& provenance() const { return provenance_; }

  std::size_t n_dates() const { return dates_.size(); }
  std::size_t n_assets() const { return assets_.size(); }
  double at(std::size_t t, std::size_t i) const { return values_[t * assets_.size() + i]; }
  std::span<const double> row(std::size_t t) const {
    return {values_.data() + t * assets_.size(), assets_.size()};
  }
  std::span<const double> values() const { return values_; }

  std::optional<std::size_t> asset_index(std::string_view asset) const;
  std::size_t count_nonmissing() const;
  /// Number of dates with at least one non-missing cell.
  std::size_t count_nonmissing_dates() const;
  bool is_series() const { return assets_.size() == 1; }

  /// Copy with a new identity; used by the registry and by loaders.
  Panel with_identity(std::string id, Provenance provenance) const&;
  Panel with_identity(std::string id, Provenance provenance) &&;

  /// Dates, assets, missing mask and values all exactly equal. Ids and
  /// provenance are ignored.
  bool same_content(const Panel& other) const;

 private:
  std::string id_;
  DateIndex dates_;
  std::vector<std::string> assets_;
  std::vector<double> values_;
  Provenance provenance_;
};

/// One value per date. Factor returns, thresholds and diagnostics use this.
struct Series {
  std::string name;
  DateIndex dates;
  std::vector<double> values;

  std::optional<double> value_at(Month m) const;
};

/// Stores a series as a one-column panel (column `kSeriesColumn`).
Panel to_panel(const Series& s);
/// Reads a one-column panel back as a series. Throws ValidationError otherwise.
Series to_series(const Panel& p);

/// Read-only view of a panel re-indexed onto another date/asset frame.
class FrameView {
 public:
  FrameView(const Panel& panel, const DateIndex& dates, const std::vector<std::string>& assets);

  double operator()(std::size_t t, std::size_t i) const {
    const auto r = rows_[t];
    return r < 0 ? kMissing : panel_->at(static_cast<std::size_t>(r), cols_[i]);
  }

 private:
  const Panel* panel_;
  std::vector<std::ptrdiff_t> rows_;
  std::vector<std::size_t> cols_;
};

/// Common frame for several panels: identical asset sets (in the first
/// panel's order), union of date indexes.
struct Alignment {
  DateIndex dates;
  std::vector<std::string> assets;
  std::vector<FrameView> views;
};

/// Throws AlignmentError when the asset sets differ.
Alignment align(std::span<const Panel* const> panels);
Alignment align(std::initializer_list<const Panel*> panels);

/// Checks that `other` has the same asset set as `reference`.
void require_same_assets(const Panel& reference, const Panel& other);

/// Series aligned on the union of their dates.
struct SeriesAlignment {
  DateIndex dates;
  std::vector<std::vector<double>> columns;
};
SeriesAlignment align_series(std::span<const Series* const> series);

}  // namespace factorlab
