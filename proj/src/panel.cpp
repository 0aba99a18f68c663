#include "factorlab/panel.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include "factorlab/error.hpp"

namespace factorlab {

DateIndex::DateIndex(std::vector<Month> periods) : periods_(std::move(periods)) {
  for (std::size_t t = 1; t < periods_.size(); ++t) {
    if (!(periods_[t - 1] < periods_[t])) {
      throw ValidationError("date index must be strictly increasing (" + periods_[t - 1].str() + " then " +
                            periods_[t].str() + ")");
    }
  }
}

DateIndex DateIndex::range(Month first, Month last) {
  std::vector<Month> out;
  for (Month m = first; m <= last; m = m + 1) out.push_back(m);
  return DateIndex(std::move(out));
}

DateIndex DateIndex::merge(const DateIndex& a, const DateIndex& b) {
  if (a == b) return a;
  std::vector<Month> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return DateIndex(std::move(out));
}

std::optional<std::size_t> DateIndex::find(Month m) const {
  auto it = std::lower_bound(periods_.begin(), periods_.end(), m);
  if (it == periods_.end() || *it != m) return std::nullopt;
  return static_cast<std::size_t>(it - periods_.begin());
}

Panel::Panel(DateIndex dates, std::vector<std::string> assets, std::vector<double> values)
    : dates_(std::move(dates)), assets_(std::move(assets)), values_(std::move(values)) {
  if (values_.size() != dates_.size() * assets_.size()) {
    throw ValidationError("panel grid has " + std::to_string(values_.size()) + " cells, expected " +
                          std::to_string(dates_.size()) + "x" + std::to_string(assets_.size()));
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& a : assets_) {
    if (!seen.insert(a).second) throw ValidationError("duplicate asset id '" + a + "'");
  }
  for (auto& v : values_) v = or_missing(v);
}

Panel Panel::filled(DateIndex dates, std::vector<std::string> assets, double value) {
  const std::size_t n = dates.size() * assets.size();
  return Panel(std::move(dates), std::move(assets), std::vector<double>(n, value));
}

std::optional<std::size_t> Panel::asset_index(std::string_view asset) const {
  auto it = std::find(assets_.begin(), assets_.end(), asset);
  if (it == assets_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - assets_.begin());
}

std::size_t Panel::count_nonmissing() const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](double v) { return !is_missing(v); }));
}

std::size_t Panel::count_nonmissing_dates() const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < n_dates(); ++t) {
    auto r = row(t);
    if (std::any_of(r.begin(), r.end(), [](double v) { return !is_missing(v); })) ++n;
  }
  return n;
}

Panel Panel::with_identity(std::string id, Provenance provenance) const& {
  Panel copy = *this;
  return std::move(copy).with_identity(std::move(id), std::move(provenance));
}

Panel Panel::with_identity(std::string id, Provenance provenance) && {
  id_ = std::move(id);
  provenance_ = std::move(provenance);
  return std::move(*this);
}

bool Panel::same_content(const Panel& other) const {
  if (dates_ != other.dates_ || assets_ != other.assets_ || values_.size() != other.values_.size()) return false;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    const bool ma = is_missing(values_[k]);
    const bool mb = is_missing(other.values_[k]);
    if (ma != mb) return false;
    // bitwise, so that 0.0 and -0.0 are told apart
    if (!ma && std::memcmp(&values_[k], &other.values_[k], sizeof(double)) != 0) return false;
  }
  return true;
}

std::optional<double> Series::value_at(Month m) const {
  auto t = dates.find(m);
  if (!t || is_missing(values[*t])) return std::nullopt;
  return values[*t];
}

Panel to_panel(const Series& s) {
  return Panel(s.dates, {std::string(kSeriesColumn)}, s.values);
}

Series to_series(const Panel& p) {
  if (!p.is_series()) {
    throw ValidationError("panel '" + p.id() + "' has " + std::to_string(p.n_assets()) +
                          " columns; a series needs exactly one");
  }
  return Series{p.id(), p.dates(), std::vector<double>(p.values().begin(), p.values().end())};
}

FrameView::FrameView(const Panel& panel, const DateIndex& dates, const std::vector<std::string>& assets)
    : panel_(&panel) {
  rows_.reserve(dates.size());
  for (Month m : dates) {
    auto r = panel.dates().find(m);
    rows_.push_back(r ? static_cast<std::ptrdiff_t>(*r) : -1);
  }
  if (assets == panel.assets()) {
    cols_.resize(assets.size());
    for (std::size_t i = 0; i < cols_.size(); ++i) cols_[i] = i;
    return;
  }
  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < panel.n_assets(); ++i) pos.emplace(panel.assets()[i], i);
  cols_.reserve(assets.size());
  for (const auto& a : assets) {
    auto it = pos.find(a);
    if (it == pos.end()) throw AlignmentError("panel '" + panel.id() + "' has no asset '" + a + "'");
    cols_.push_back(it->second);
  }
}

void require_same_assets(const Panel& reference, const Panel& other) {
  if (reference.assets() == other.assets()) return;
  if (reference.n_assets() == other.n_assets()) {
    std::vector<std::string> a = reference.assets();
    std::vector<std::string> b = other.assets();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a == b) return;
  }
  throw AlignmentError("asset sets differ between panels '" + reference.id() + "' (" +
                       std::to_string(reference.n_assets()) + " assets) and '" + other.id() + "' (" +
                       std::to_string(other.n_assets()) + " assets)");
}

Alignment align(std::span<const Panel* const> panels) {
  if (panels.empty()) throw ValidationError("align needs at least one panel");
  Alignment out;
  out.dates = panels.front()->dates();
  out.assets = panels.front()->assets();
  for (const Panel* p : panels.subspan(1)) {
    require_same_assets(*panels.front(), *p);
    out.dates = DateIndex::merge(out.dates, p->dates());
  }
  out.views.reserve(panels.size());
  for (const Panel* p : panels) out.views.emplace_back(*p, out.dates, out.assets);
  return out;
}

Alignment align(std::initializer_list<const Panel*> panels) {
  return align(std::span<const Panel* const>(panels.begin(), panels.size()));
}

SeriesAlignment align_series(std::span<const Series* const> series) {
  SeriesAlignment out;
  for (const Series* s : series) out.dates = DateIndex::merge(out.dates, s->dates);
  for (const Series* s : series) {
    std::vector<double> col(out.dates.size(), kMissing);
    for (std::size_t t = 0; t < s->dates.size(); ++t) col[*out.dates.find(s->dates[t])] = s->values[t];
    out.columns.push_back(std::move(col));
  }
  return out;
}

}  // namespace factorlab
