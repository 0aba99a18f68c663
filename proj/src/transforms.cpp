#include "factorlab/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>

#include "factorlab/error.hpp"

namespace factorlab {

void Flags::flag(std::string_view op, Month date, std::string_view reason) {
  warnings.push_back(std::string(op) + " " + date.str() + ": " + std::string(reason));
}

namespace transforms {
namespace {

/// Universe membership re-indexed onto `a`'s frame.
class Universe {
 public:
  Universe(const Panel& a, const Panel* universe) {
    if (universe == nullptr) return;
    require_same_assets(a, *universe);
    view_.emplace(*universe, a.dates(), a.assets());
    n_ = a.n_assets();
    row_ = std::make_unique<bool[]>(n_);
  }

  /// Empty span when there is no universe restriction.
  std::span<const bool> row(std::size_t t) {
    if (!view_) return {};
    for (std::size_t i = 0; i < n_; ++i) {
      const double v = (*view_)(t, i);
      row_[i] = !is_missing(v) && v != 0.0;
    }
    return {row_.get(), n_};
  }

 private:
  std::optional<FrameView> view_;
  std::unique_ptr<bool[]> row_;
  std::size_t n_ = 0;
};

Panel make(const Panel& like, std::vector<double> values) {
  return Panel(like.dates(), like.assets(), std::move(values));
}

void check_percentile(double pct, bool allow_edges, std::string_view name) {
  const bool ok = allow_edges ? (pct >= 0.0 && pct <= 100.0) : (pct > 0.0 && pct < 100.0);
  if (!std::isfinite(pct) || !ok) {
    throw ValidationError(std::string(name) + " must lie in " + (allow_edges ? "[0, 100]" : "(0, 100)") +
                          ", got " + std::to_string(pct));
  }
}

}  // namespace

double percentile(std::span<const double> sorted, double pct) {
  if (sorted.empty()) throw ComputeError("percentile of an empty sample");
  const std::size_t m = sorted.size();
  const double rank = 1.0 + static_cast<double>(m - 1) * pct / 100.0;
  const double floor_rank = std::floor(rank);
  const auto lo = static_cast<std::size_t>(floor_rank);
  if (lo >= m) return sorted[m - 1];
  if (lo < 1) return sorted[0];
  const double frac = rank - floor_rank;
  return sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]);
}

std::vector<double> sorted_universe(std::span<const double> row, std::span<const bool> in_universe) {
  std::vector<double> out;
  out.reserve(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (is_missing(row[i])) continue;
    if (!in_universe.empty() && !in_universe[i]) continue;
    out.push_back(row[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void BreakpointSpec::validate() const {
  if (percentiles.empty()) throw ValidationError("breakpoints need at least one percentile");
  for (std::size_t k = 0; k < percentiles.size(); ++k) {
    check_percentile(percentiles[k], false, "percentiles[" + std::to_string(k) + "]");
    if (k > 0 && !(percentiles[k - 1] < percentiles[k])) {
      throw ValidationError("percentiles must be strictly increasing");
    }
  }
}

Panel binary_op(const Panel& a, const Panel& b, BinaryOp op) {
  const Alignment al = align({&a, &b});
  const std::size_t n = al.assets.size();
  std::vector<double> out(al.dates.size() * n, kMissing);
  for (std::size_t t = 0; t < al.dates.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double x = al.views[0](t, i);
      const double y = al.views[1](t, i);
      if (is_missing(x) || is_missing(y)) continue;
      double r = kMissing;
      switch (op) {
        case BinaryOp::add: r = x + y; break;
        case BinaryOp::sub: r = x - y; break;
        case BinaryOp::mul: r = x * y; break;
        case BinaryOp::div: r = y == 0.0 ? kMissing : x / y; break;
      }
      out[t * n + i] = r;
    }
  }
  return Panel(al.dates, al.assets, std::move(out));
}

Panel unary_op(const Panel& a, UnaryOp op) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) {
    if (is_missing(v)) continue;
    switch (op) {
      case UnaryOp::neg:
      case UnaryOp::rank_sign_flip: v = -v; break;
      case UnaryOp::abs: v = std::fabs(v); break;
      case UnaryOp::log: v = v > 0.0 ? std::log(v) : kMissing; break;
      case UnaryOp::sqrt: v = v >= 0.0 ? std::sqrt(v) : kMissing; break;
    }
  }
  return make(a, std::move(out));
}

Panel coalesce(std::span<const Panel* const> panels) {
  if (panels.empty()) throw ValidationError("coalesce needs at least one panel");
  const Alignment al = align(panels);
  const std::size_t n = al.assets.size();
  std::vector<double> out(al.dates.size() * n, kMissing);
  for (std::size_t t = 0; t < al.dates.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& view : al.views) {
        const double v = view(t, i);
        if (!is_missing(v)) {
          out[t * n + i] = v;
          break;
        }
      }
    }
  }
  return Panel(al.dates, al.assets, std::move(out));
}

Panel winsorize(const Panel& a, std::optional<double> lo_pct, std::optional<double> hi_pct, const Panel* universe,
                Flags* flags) {
  if (lo_pct) check_percentile(*lo_pct, true, "lo_pct");
  if (hi_pct) check_percentile(*hi_pct, true, "hi_pct");
  if (lo_pct && hi_pct && !(*lo_pct < *hi_pct)) throw ValidationError("lo_pct must be below hi_pct");

  Universe uni(a, universe);
  std::vector<double> out(a.values().begin(), a.values().end());
  const std::size_t n = a.n_assets();
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    const auto sample = sorted_universe(a.row(t), uni.row(t));
    if (sample.empty()) {
      if (flags) flags->flag("winsorize", a.dates()[t], "no universe values; row passed through");
      continue;
    }
    const double lo = lo_pct ? percentile(sample, *lo_pct) : -HUGE_VAL;
    const double hi = hi_pct ? percentile(sample, *hi_pct) : HUGE_VAL;
    for (std::size_t i = 0; i < n; ++i) {
      double& v = out[t * n + i];
      if (!is_missing(v)) v = std::clamp(v, lo, hi);
    }
  }
  return make(a, std::move(out));
}

Panel standardize(const Panel& a, const Panel* universe, Flags* flags) {
  Universe uni(a, universe);
  std::vector<double> out(a.values().size(), kMissing);
  const std::size_t n = a.n_assets();
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    const auto sample = sorted_universe(a.row(t), uni.row(t));
    if (sample.size() < 2) {
      if (flags && !sample.empty()) flags->flag("standardize", a.dates()[t], "fewer than 2 universe values");
      continue;
    }
    const double mean = std::accumulate(sample.begin(), sample.end(), 0.0) / static_cast<double>(sample.size());
    double ss = 0.0;
    for (double v : sample) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(sample.size() - 1));
    if (is_degenerate_sd(sd, std::max(std::fabs(sample.front()), std::fabs(sample.back())))) {
      if (flags) flags->flag("standardize", a.dates()[t], "zero standard deviation");
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double v = a.at(t, i);
      if (!is_missing(v)) out[t * n + i] = (v - mean) / sd;
    }
  }
  return make(a, std::move(out));
}

Panel quantile_bins(const Panel& a, const BreakpointSpec& breakpoints, const Panel* universe, Flags* flags) {
  breakpoints.validate();
  Universe uni(a, universe);
  std::vector<double> out(a.values().size(), kMissing);
  const std::size_t n = a.n_assets();
  std::vector<double> cuts(breakpoints.percentiles.size());
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    const auto sample = sorted_universe(a.row(t), uni.row(t));
    if (sample.empty()) {
      if (flags) flags->flag("quantile_bins", a.dates()[t], "empty universe");
      continue;
    }
    for (std::size_t k = 0; k < cuts.size(); ++k) cuts[k] = percentile(sample, breakpoints.percentiles[k]);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = a.at(t, i);
      if (is_missing(v)) continue;
      // number of breakpoints strictly below v; ties stay in the lower bin
      const auto above = std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin();
      out[t * n + i] = static_cast<double>(above + 1);
    }
  }
  return make(a, std::move(out));
}

Panel mask(const Panel& a, const Panel& condition, KeepIf keep_if) {
  require_same_assets(a, condition);
  FrameView cond(condition, a.dates(), a.assets());
  std::vector<double> out(a.values().size(), kMissing);
  const std::size_t n = a.n_assets();
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double c = cond(t, i);
      if (is_missing(c)) continue;
      const bool keep = keep_if == KeepIf::nonzero ? c != 0.0 : c == 0.0;
      if (keep) out[t * n + i] = a.at(t, i);
    }
  }
  return make(a, std::move(out));
}

Panel compare(const Panel& a, const Series& threshold, CompareOp op) {
  std::vector<double> out(a.values().size(), kMissing);
  const std::size_t n = a.n_assets();
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    const auto th = threshold.value_at(a.dates()[t]);
    if (!th) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = a.at(t, i);
      if (is_missing(v)) continue;
      const bool r = op == CompareOp::lt ? v < *th : v >= *th;
      out[t * n + i] = r ? 1.0 : 0.0;
    }
  }
  return make(a, std::move(out));
}

Series xs_percentile_row(const Panel& a, double pct, const Panel* universe) {
  check_percentile(pct, false, "pct");
  Universe uni(a, universe);
  Series s{a.id(), a.dates(), std::vector<double>(a.n_dates(), kMissing)};
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    const auto sample = sorted_universe(a.row(t), uni.row(t));
    if (!sample.empty()) s.values[t] = percentile(sample, pct);
  }
  return s;
}

Panel lag(const Panel& a, int k) {
  if (k < 1) throw ValidationError("lag k must be >= 1");
  std::vector<double> out(a.values().size(), kMissing);
  const std::size_t n = a.n_assets();
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    const auto src = a.dates().find(a.dates()[t] - k);
    if (!src) continue;
    std::copy_n(a.row(*src).begin(), n, out.begin() + static_cast<std::ptrdiff_t>(t * n));
  }
  return make(a, std::move(out));
}

Panel rolling_compound_return(const Panel& returns, int window, int skip, int min_obs) {
  if (skip < 0 || window <= skip) throw ValidationError("rolling_compound_return needs window > skip >= 0");
  if (min_obs < 1 || min_obs > window - skip) {
    throw ValidationError("min_obs must lie in [1, window - skip]");
  }
  std::vector<double> out(returns.values().size(), kMissing);
  const std::size_t n = returns.n_assets();
  std::vector<std::optional<std::size_t>> rows(static_cast<std::size_t>(window - skip));
  for (std::size_t t = 0; t < returns.n_dates(); ++t) {
    const Month now = returns.dates()[t];
    for (int lagk = skip + 1; lagk <= window; ++lagk) {
      rows[static_cast<std::size_t>(lagk - skip - 1)] = returns.dates().find(now - lagk);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double growth = 1.0;
      int obs = 0;
      for (const auto& r : rows) {
        if (!r) continue;
        const double v = returns.at(*r, i);
        if (is_missing(v)) continue;
        growth *= 1.0 + v;
        ++obs;
      }
      if (obs >= min_obs) out[t * n + i] = growth - 1.0;
    }
  }
  return make(returns, std::move(out));
}

Panel rolling_stat(const Panel& a, int window, RollingStat stat, int min_obs) {
  if (window < 1) throw ValidationError("window must be >= 1");
  if (min_obs < 1 || min_obs > window) throw ValidationError("min_obs must lie in [1, window]");
  std::vector<double> out(a.values().size(), kMissing);
  const std::size_t n = a.n_assets();
  std::vector<double> sample;
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    const Month now = a.dates()[t];
    for (std::size_t i = 0; i < n; ++i) {
      sample.clear();
      for (int back = 0; back < window; ++back) {
        const auto r = a.dates().find(now - back);
        if (!r) continue;
        const double v = a.at(*r, i);
        if (!is_missing(v)) sample.push_back(v);
      }
      if (static_cast<int>(sample.size()) < min_obs) continue;
      const double m = static_cast<double>(sample.size());
      const double sum = std::accumulate(sample.begin(), sample.end(), 0.0);
      double r = kMissing;
      switch (stat) {
        case RollingStat::mean: r = sum / m; break;
        case RollingStat::sum: r = sum; break;
        case RollingStat::min: r = *std::min_element(sample.begin(), sample.end()); break;
        case RollingStat::max: r = *std::max_element(sample.begin(), sample.end()); break;
        case RollingStat::std: {
          if (sample.size() < 2) break;
          const double mean = sum / m;
          double ss = 0.0;
          for (double v : sample) ss += (v - mean) * (v - mean);
          r = std::sqrt(ss / (m - 1.0));
          break;
        }
      }
      out[t * n + i] = r;
    }
  }
  return make(a, std::move(out));
}

std::vector<double> ewma_series(std::span<const double> values, double alpha, int min_periods) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in (0, 1]");
  if (min_periods < 1) throw ValidationError("min_periods must be >= 1");
  std::vector<double> out(values.size(), kMissing);
  double s = 0.0;
  int seen = 0;
  for (std::size_t t = 0; t < values.size(); ++t) {
    const double x = values[t];
    if (is_missing(x)) continue;
    s = seen == 0 ? x : (1.0 - alpha) * s + alpha * x;
    ++seen;
    if (seen >= min_periods) out[t] = s;
  }
  return out;
}

Panel ewma(const Panel& a, double alpha, int min_periods) {
  std::vector<double> out(a.values().size(), kMissing);
  const std::size_t n = a.n_assets();
  std::vector<double> column(a.n_dates());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < a.n_dates(); ++t) column[t] = a.at(t, i);
    const auto s = ewma_series(column, alpha, min_periods);
    for (std::size_t t = 0; t < a.n_dates(); ++t) out[t * n + i] = s[t];
  }
  return make(a, std::move(out));
}

Panel annual_to_monthly(const Panel& a, int placement_month, int offset, int valid_months) {
  if (placement_month < 1 || placement_month > 12) throw ValidationError("placement_month must lie in 1..12");
  if (offset < 0) throw ValidationError("offset must be >= 0");
  if (valid_months < 1) throw ValidationError("valid_months must be >= 1");
  std::vector<double> out(a.values().size(), kMissing);
  const std::size_t n = a.n_assets();
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    const Month placed = a.dates()[t];
    if (placed.month() != placement_month) continue;
    for (int k = 0; k < valid_months; ++k) {
      const auto target = a.dates().find(placed + offset + k);
      if (!target) continue;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = a.at(t, i);
        if (!is_missing(v)) out[*target * n + i] = v;
      }
    }
  }
  return make(a, std::move(out));
}

Panel select_bin(const Panel& bins, int bin) {
  std::vector<double> out(bins.values().begin(), bins.values().end());
  for (double& v : out) {
    if (!is_missing(v)) v = v == static_cast<double>(bin) ? 1.0 : 0.0;
  }
  return make(bins, std::move(out));
}

void TransformRegistry::add(std::string name, std::string description, SeriesTransform fn) {
  entries_[std::move(name)] = Entry{std::move(description), std::move(fn)};
}

const SeriesTransform& TransformRegistry::get(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown series transform '" + std::string(name) + "'");
  return it->second.fn;
}

std::vector<std::string> TransformRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

namespace {

double number_param(const ParamMap& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  if (const auto* d = std::get_if<double>(&it->second)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
  throw ValidationError("transform parameter '" + key + "' must be numeric");
}

}  // namespace

const TransformRegistry& TransformRegistry::builtin() {
  static const TransformRegistry registry = [] {
    TransformRegistry r;
    r.add("identity", "returns the series unchanged",
          [](std::span<const double> x, const DateIndex&, const ParamMap&) {
            return std::vector<double>(x.begin(), x.end());
          });
    r.add("cumsum", "running sum over observed values; missing cells stay missing",
          [](std::span<const double> x, const DateIndex&, const ParamMap&) {
            std::vector<double> out(x.size(), kMissing);
            double acc = 0.0;
            for (std::size_t t = 0; t < x.size(); ++t) {
              if (is_missing(x[t])) continue;
              acc += x[t];
              out[t] = acc;
            }
            return out;
          });
    r.add("ewma", "recursive exponentially weighted mean (params alpha, min_periods)",
          [](std::span<const double> x, const DateIndex&, const ParamMap& p) {
            const double alpha = number_param(p, "alpha", 0.06);
            const double min_periods = number_param(p, "min_periods", 1);
            return ewma_series(x, alpha, static_cast<int>(min_periods));
          });
    return r;
  }();
  return registry;
}

Panel trend(const Panel& a, const TransformRegistry& registry, std::string_view name, const ParamMap& params) {
  const SeriesTransform& fn = registry.get(name);
  std::vector<double> out(a.values().size(), kMissing);
  const std::size_t n = a.n_assets();
  std::vector<double> column(a.n_dates());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < a.n_dates(); ++t) column[t] = a.at(t, i);
    const auto result = fn(column, a.dates(), params);
    if (result.size() != column.size()) {
      throw ComputeError("series transform '" + std::string(name) + "' changed the series length");
    }
    for (std::size_t t = 0; t < a.n_dates(); ++t) out[t * n + i] = result[t];
  }
  return make(a, std::move(out));
}

}  // namespace transforms
}  // namespace factorlab
