#include "factorlab/riskstats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "factorlab/error.hpp"
#include "factorlab/transforms.hpp"

namespace factorlab::riskstats {

std::string SeMethod::label() const {
  if (kind == Kind::ols) return "ols";
  return "newey_west(" + std::to_string(lags) + ")";
}

namespace {

std::string column_label(std::span<const std::string> names, Eigen::Index j) {
  if (static_cast<std::size_t>(j) < names.size()) return names[static_cast<std::size_t>(j)];
  return "column " + std::to_string(j);
}

/// Columns that do not raise the rank when appended left to right.
std::vector<Eigen::Index> dependent_columns(const Eigen::MatrixXd& x) {
  std::vector<Eigen::Index> out;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::MatrixXd trial(x.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
    for (std::size_t k = 0; k < kept.size(); ++k) trial.col(static_cast<Eigen::Index>(k)) = x.col(kept[k]);
    trial.col(trial.cols() - 1) = x.col(j);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(trial);
    if (qr.rank() == trial.cols()) {
      kept.push_back(j);
    } else {
      out.push_back(j);
    }
  }
  return out;
}

}  // namespace

OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SeMethod& method,
           std::span<const std::string> column_names) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n <= p) throw ComputeError("regression needs more observations than coefficients");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) {
    std::string names;
    for (Eigen::Index j : dependent_columns(x)) names += (names.empty() ? "" : ", ") + column_label(column_names, j);
    throw ComputeError("rank-deficient design; collinear column(s): " + names);
  }
  OlsFit fit;
  fit.coef = qr.solve(y);
  fit.residuals = y - x * fit.coef;

  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  Eigen::MatrixXd cov;
  if (method.kind == SeMethod::Kind::ols) {
    const double s2 = fit.residuals.squaredNorm() / static_cast<double>(n - p);
    cov = s2 * xtx_inv;
  } else {
    if (method.lags < 0) throw ValidationError("Newey-West lags must be >= 0");
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index t = 0; t < n; ++t) {
      const Eigen::VectorXd xe = x.row(t).transpose() * fit.residuals(t);
      meat += xe * xe.transpose();
    }
    for (int lag = 1; lag <= method.lags; ++lag) {
      const double w = 1.0 - static_cast<double>(lag) / static_cast<double>(method.lags + 1);
      Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(p, p);
      for (Eigen::Index t = lag; t < n; ++t) {
        gamma += (x.row(t).transpose() * fit.residuals(t)) * (x.row(t - lag) * fit.residuals(t - lag));
      }
      meat += w * (gamma + gamma.transpose());
    }
    cov = xtx_inv * meat * xtx_inv;
  }
  fit.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();

  const double mean = y.mean();
  const double sst = (y.array() - mean).square().sum();
  const double ssr = fit.residuals.squaredNorm();
  fit.r2 = sst > 0.0 ? 1.0 - ssr / sst : (ssr == 0.0 ? 1.0 : kMissing);
  return fit;
}

RegressionResult ts_regress(const Series& y, std::span<const Series> factors, const SeMethod& method) {
  std::vector<const Series*> all{&y};
  for (const auto& f : factors) all.push_back(&f);
  const auto al = align_series(all);

  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t < al.dates.size(); ++t) {
    bool ok = true;
    for (const auto& col : al.columns) ok = ok && !is_missing(col[t]);
    if (ok) rows.push_back(t);
  }
  const std::size_t k = factors.size();
  if (rows.size() < k + 2) {
    throw ComputeError("ts_regress needs at least " + std::to_string(k + 2) + " overlapping dates, found " +
                       std::to_string(rows.size()));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(k + 1));
  Eigen::VectorXd yy(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t t = rows[static_cast<std::size_t>(r)];
    yy(r) = al.columns[0][t];
    x(r, 0) = 1.0;
    for (std::size_t j = 0; j < k; ++j) x(r, static_cast<Eigen::Index>(j + 1)) = al.columns[j + 1][t];
  }
  std::vector<std::string> names{"intercept"};
  for (std::size_t j = 0; j < k; ++j) {
    names.push_back(factors[j].name.empty() ? "factor " + std::to_string(j) : factors[j].name);
  }
  const OlsFit fit = ols(x, yy, method, names);

  RegressionResult out;
  const auto t_of = [](double coef, double se) { return se > 0.0 ? coef / se : kMissing; };
  out.alpha = fit.coef(0);
  out.se_alpha = fit.se(0);
  out.t_alpha = t_of(out.alpha, out.se_alpha);
  for (std::size_t j = 0; j < k; ++j) {
    const auto c = static_cast<Eigen::Index>(j + 1);
    out.betas.push_back(fit.coef(c));
    out.se_betas.push_back(fit.se(c));
    out.t_betas.push_back(t_of(fit.coef(c), fit.se(c)));
  }
  out.r2 = fit.r2;
  out.n_obs = rows.size();
  out.se_method = method;
  out.factor_names.assign(names.begin() + 1, names.end());
  return out;
}

FMBResult cross_sectional_slopes(const Panel& returns, std::span<const Panel* const> characteristics) {
  if (characteristics.empty()) throw ValidationError("fama_macbeth needs at least one characteristic");
  std::vector<const Panel*> all{&returns};
  all.insert(all.end(), characteristics.begin(), characteristics.end());
  const Alignment al = align(all);
  const std::size_t k = characteristics.size();
  const std::size_t n = al.assets.size();

  FMBResult out;
  std::vector<std::size_t> members;
  for (std::size_t t = 0; t < al.dates.size(); ++t) {
    const auto next = al.dates.find(al.dates[t] + 1);
    if (!next) continue;
    members.clear();
    for (std::size_t i = 0; i < n; ++i) {
      bool ok = !is_missing(al.views[0](*next, i));
      for (std::size_t j = 0; j < k && ok; ++j) ok = !is_missing(al.views[j + 1](t, i));
      if (ok) members.push_back(i);
    }
    if (members.empty()) continue;
    if (members.size() < k + 2) {
      ++out.skipped_months;
      out.flags.push_back(al.dates[t].str() + ": fewer than " + std::to_string(k + 2) + " complete assets");
      continue;
    }
    const auto m = static_cast<Eigen::Index>(members.size());
    Eigen::MatrixXd x(m, static_cast<Eigen::Index>(k + 1));
    Eigen::VectorXd y(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const std::size_t i = members[static_cast<std::size_t>(r)];
      y(r) = al.views[0](*next, i);
      x(r, 0) = 1.0;
      for (std::size_t j = 0; j < k; ++j) x(r, static_cast<Eigen::Index>(j + 1)) = al.views[j + 1](t, i);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols()) {
      ++out.skipped_months;
      out.flags.push_back(al.dates[t].str() + ": characteristics collinear with the intercept");
      continue;
    }
    const Eigen::VectorXd coef = qr.solve(y);
    out.months.push_back(al.dates[t]);
    std::vector<double> row(k + 1);
    for (std::size_t j = 0; j <= k; ++j) row[j] = coef(static_cast<Eigen::Index>(j));
    out.monthly_coeffs.push_back(std::move(row));
  }
  out.n_months = out.months.size();

  // Averages are filled whenever at least one month was usable.
  if (out.n_months > 0) {
    const double T = static_cast<double>(out.n_months);
    std::vector<double> mean(k + 1, 0.0);
    for (const auto& row : out.monthly_coeffs) {
      for (std::size_t j = 0; j <= k; ++j) mean[j] += row[j];
    }
    for (double& v : mean) v /= T;
    out.mean_intercept = mean[0];
    out.mean_coeffs.assign(mean.begin() + 1, mean.end());
    out.t_stats.assign(k, kMissing);
    if (out.n_months >= 2) {
      for (std::size_t j = 1; j <= k; ++j) {
        double ss = 0.0;
        for (const auto& row : out.monthly_coeffs) ss += (row[j] - mean[j]) * (row[j] - mean[j]);
        const double sd = std::sqrt(ss / (T - 1.0));
        if (!is_degenerate_sd(sd, mean[j])) {
          out.t_stats[j - 1] = mean[j] / (sd / std::sqrt(T));
        } else {
          out.flags.push_back("characteristic " + std::to_string(j - 1) + ": zero slope deviation, t-stat missing");
        }
      }
    }
  }
  // strip the intercept column from the per-month rows
  for (auto& row : out.monthly_coeffs) row.erase(row.begin());
  return out;
}

FMBResult fama_macbeth(const Panel& returns, std::span<const Panel* const> characteristics) {
  FMBResult out = cross_sectional_slopes(returns, characteristics);
  if (out.n_months < 2) {
    throw ComputeError("fama_macbeth needs at least 2 usable months, found " + std::to_string(out.n_months));
  }
  return out;
}

SummaryStats summarize(const Series& s) {
  std::vector<double> x;
  for (double v : s.values) {
    if (!is_missing(v)) x.push_back(v);
  }
  if (x.size() < 2) throw ComputeError("summarize needs at least 2 observations");
  SummaryStats out;
  const double n = static_cast<double>(x.size());
  out.n_obs = x.size();
  double sum = 0.0;
  for (double v : x) sum += v;
  out.mean = sum / n;
  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : x) {
    const double d = v - out.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  out.sd = std::sqrt(m2 / (n - 1.0));
  m2 /= n;
  m3 /= n;
  out.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : kMissing;
  out.min = *std::min_element(x.begin(), x.end());
  out.max = *std::max_element(x.begin(), x.end());
  const double scale = std::max(std::fabs(out.min), std::fabs(out.max));
  if (!is_degenerate_sd(out.sd, scale)) {
    out.sharpe_annualized = out.mean / out.sd * std::sqrt(12.0);
  } else {
    out.flags.push_back("zero standard deviation; Sharpe ratio undefined");
  }
  return out;
}

std::vector<DateRange> decade_buckets(const DateIndex& dates) {
  std::vector<DateRange> out;
  if (dates.empty()) return out;
  const auto decade_of = [](Month m) { return m.year() - ((m.year() % 10) + 10) % 10; };
  for (int d = decade_of(dates.front()); d <= decade_of(dates.back()); d += 10) {
    const Month first = std::max(Month(d, 1), dates.front());
    const Month last = std::min(Month(d + 9, 12), dates.back());
    out.push_back({first, last, first.str() + " to " + last.str()});
  }
  return out;
}

std::vector<CoverageRow> coverage_by_period(const Panel& characteristic, const Panel& cap,
                                            std::span<const DateRange> buckets) {
  for (std::size_t b = 1; b < buckets.size(); ++b) {
    if (!(buckets[b - 1].last < buckets[b].first)) throw ValidationError("coverage buckets must not overlap");
  }
  const Alignment al = align({&characteristic, &cap});
  const std::size_t n = al.assets.size();
  std::vector<CoverageRow> rows;
  for (const auto& bucket : buckets) {
    CoverageRow row{bucket};
    double frac_sum = 0.0;
    double share_sum = 0.0;
    for (std::size_t t = 0; t < al.dates.size(); ++t) {
      if (al.dates[t] < bucket.first || bucket.last < al.dates[t]) continue;
      std::size_t present = 0;
      std::size_t covered = 0;
      double cap_total = 0.0;
      double cap_covered = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = al.views[1](t, i);
        if (is_missing(c)) continue;
        ++present;
        cap_total += c;
        if (!is_missing(al.views[0](t, i))) {
          ++covered;
          cap_covered += c;
        }
      }
      if (present == 0) continue;
      ++row.n_months;
      frac_sum += static_cast<double>(covered) / static_cast<double>(present);
      share_sum += cap_total > 0.0 ? cap_covered / cap_total : 0.0;
    }
    if (row.n_months > 0) {
      row.security_fraction = frac_sum / static_cast<double>(row.n_months);
      row.cap_share = share_sum / static_cast<double>(row.n_months);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<StratifiedCell> size_stratified_alphas(const SpreadBuilder& builder, const Panel& size_bins,
                                                   std::span<const FactorModel> models, const SeMethod& method) {
  std::set<int> bins;
  for (double v : size_bins.values()) {
    if (!is_missing(v)) bins.insert(static_cast<int>(std::lround(v)));
  }
  std::vector<StratifiedCell> cells;
  for (int bin : bins) {
    const Panel universe = transforms::select_bin(size_bins, bin);
    std::optional<Series> spread;
    std::string build_error;
    try {
      spread = builder(universe);
    } catch (const Error& e) {
      build_error = e.what();
    }
    for (const auto& model : models) {
      StratifiedCell cell{bin, model.name, std::nullopt, build_error};
      if (spread) {
        try {
          cell.result = ts_regress(*spread, model.factors, method);
        } catch (const Error& e) {
          cell.error = e.what();
        }
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace factorlab::riskstats
