#include "factorlab/portfolio.hpp"

#include <cmath>

#include "factorlab/error.hpp"

namespace factorlab::portfolio {

std::string_view leg_name(Leg leg) {
  switch (leg) {
    case Leg::SG: return "SG";
    case Leg::SN: return "SN";
    case Leg::SV: return "SV";
    case Leg::BG: return "BG";
    case Leg::BN: return "BN";
    case Leg::BV: return "BV";
  }
  return "?";
}

Leg parse_leg(std::string_view name) {
  for (Leg leg : kAllLegs) {
    if (leg_name(leg) == name) return leg;
  }
  throw ValidationError("unknown 2x3 leg '" + std::string(name) + "' (expected SG, SN, SV, BG, BN or BV)");
}

Panel weights_from_membership(const Panel& member, const Panel* weight_by, Flags* flags) {
  std::optional<FrameView> wb;
  if (weight_by != nullptr) {
    require_same_assets(member, *weight_by);
    wb.emplace(*weight_by, member.dates(), member.assets());
  }
  const std::size_t n = member.n_assets();
  std::vector<double> out(member.values().size(), kMissing);
  for (std::size_t t = 0; t < member.n_dates(); ++t) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = member.at(t, i);
      if (is_missing(m) || m == 0.0) continue;
      double w = 1.0;
      if (wb) {
        w = (*wb)(t, i);
        if (is_missing(w)) continue;
        if (w < 0.0) {
          throw ValidationError("negative weight_by value for asset '" + member.assets()[i] + "' at " +
                                member.dates()[t].str());
        }
      }
      out[t * n + i] = w;
      total += w;
    }
    if (!(total > 0.0)) {
      for (std::size_t i = 0; i < n; ++i) out[t * n + i] = kMissing;
      if (flags) flags->flag("weights_from_membership", member.dates()[t], "no weighted members");
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double& w = out[t * n + i];
      if (!is_missing(w)) w /= total;
    }
  }
  return Panel(member.dates(), member.assets(), std::move(out));
}

Series portfolio_return(const Panel& weights, const Panel& returns) {
  require_same_assets(weights, returns);
  const DateIndex dates = DateIndex::merge(weights.dates(), returns.dates());
  FrameView r(returns, dates, weights.assets());
  Series s{"", dates, std::vector<double>(dates.size(), kMissing)};
  const std::size_t n = weights.n_assets();
  for (std::size_t t = 0; t < weights.n_dates(); ++t) {
    const auto next = dates.find(weights.dates()[t] + 1);
    if (!next) continue;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weights.at(t, i);
      const double ret = r(*next, i);
      if (is_missing(w) || is_missing(ret)) continue;
      num += w * ret;
      den += w;
    }
    if (den > 0.0) s.values[*next] = num / den;
  }
  return s;
}

Panel independent_sort_2x3(const Panel& size_bins, const Panel& value_bins, Leg leg) {
  const Alignment al = align({&size_bins, &value_bins});
  const int want_size = (leg == Leg::SG || leg == Leg::SN || leg == Leg::SV) ? 1 : 2;
  const int want_value = (leg == Leg::SG || leg == Leg::BG) ? 1 : (leg == Leg::SN || leg == Leg::BN) ? 2 : 3;
  const std::size_t n = al.assets.size();
  std::vector<double> out(al.dates.size() * n, kMissing);
  for (std::size_t t = 0; t < al.dates.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double sb = al.views[0](t, i);
      const double vb = al.views[1](t, i);
      if (is_missing(sb) || is_missing(vb)) continue;
      if (sb != 1.0 && sb != 2.0) throw ValidationError("size bin codes must be 1 or 2");
      if (vb != 1.0 && vb != 2.0 && vb != 3.0) throw ValidationError("value bin codes must be 1, 2 or 3");
      out[t * n + i] = (sb == want_size && vb == want_value) ? 1.0 : 0.0;
    }
  }
  return Panel(al.dates, al.assets, std::move(out));
}

Series spread_2x3(const std::array<const Series*, 6>& legs) {
  const auto al = align_series(std::span<const Series* const>(legs.data(), legs.size()));
  const auto& sg = al.columns[0];
  const auto& sv = al.columns[2];
  const auto& bg = al.columns[3];
  const auto& bv = al.columns[5];
  Series s{"", al.dates, std::vector<double>(al.dates.size(), kMissing)};
  for (std::size_t t = 0; t < al.dates.size(); ++t) {
    if (is_missing(sg[t]) || is_missing(sv[t]) || is_missing(bg[t]) || is_missing(bv[t])) continue;
    s.values[t] = 0.5 * (sv[t] + bv[t]) - 0.5 * (sg[t] + bg[t]);
  }
  return s;
}

Series spread_topbottom(const Series& top, const Series& bottom) {
  const std::array<const Series*, 2> both{&top, &bottom};
  const auto al = align_series(both);
  Series s{"", al.dates, std::vector<double>(al.dates.size(), kMissing)};
  for (std::size_t t = 0; t < al.dates.size(); ++t) {
    const double a = al.columns[0][t];
    const double b = al.columns[1][t];
    if (!is_missing(a) && !is_missing(b)) s.values[t] = a - b;
  }
  return s;
}

Series turnover(const Panel& weights) {
  Series s{"", weights.dates(), std::vector<double>(weights.n_dates(), kMissing)};
  const auto zero_if_missing = [](double v) { return is_missing(v) ? 0.0 : v; };
  for (std::size_t t = 1; t < weights.n_dates(); ++t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < weights.n_assets(); ++i) {
      sum += std::fabs(zero_if_missing(weights.at(t, i)) - zero_if_missing(weights.at(t - 1, i)));
    }
    s.values[t] = 0.5 * sum;
  }
  return s;
}

}  // namespace factorlab::portfolio
