#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "factorlab/error.hpp"
#include "factorlab/riskstats.hpp"

#include "oracles/oracles.hpp"

using namespace factorlab;
using namespace factorlab::riskstats;

namespace {

constexpr double M = kMissing;

Series series(std::vector<double> v, Month start = Month(2000, 1)) {
  return Series{"s", DateIndex::range(start, start + static_cast<int>(v.size() - 1)), std::move(v)};
}

std::vector<std::string> asset_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("a" + std::to_string(i));
  return out;
}

}  // namespace

TEST(TsRegress, NoiselessRecovery) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0, 0.05);
  std::vector<double> f(60), y(60);
  for (std::size_t t = 0; t < 60; ++t) {
    f[t] = z(rng);
    y[t] = 0.01 + 2.0 * f[t];
  }
  const std::vector<Series> factors{series(f)};
  const auto r = ts_regress(series(y), factors);
  EXPECT_NEAR(r.alpha, 0.01, 1e-12);
  EXPECT_NEAR(r.betas[0], 2.0, 1e-12);
  EXPECT_NEAR(r.r2, 1.0, 1e-12);
  EXPECT_EQ(r.n_obs, 60u);
}

TEST(TsRegress, AffineEquivariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(0, 1);
  for (double scale : {1e-3, 1.0, 1e3}) {
    std::vector<double> f(40), y(40);
    for (std::size_t t = 0; t < 40; ++t) {
      f[t] = scale * z(rng);
      y[t] = -0.3 + 0.7 * f[t] / scale;
    }
    const std::vector<Series> factors{series(f)};
    const auto r = ts_regress(series(y), factors);
    EXPECT_NEAR(r.alpha, -0.3, 1e-10);
    EXPECT_NEAR(r.betas[0] * scale, 0.7, 1e-10);
  }
}

TEST(TsRegress, IndependentSeriesMatchesOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0, 1);
  std::vector<double> f(50), y(50);
  std::vector<std::vector<double>> x;
  for (std::size_t t = 0; t < 50; ++t) {
    f[t] = z(rng);
    y[t] = z(rng);
    x.push_back({1.0, f[t]});
  }
  const std::vector<Series> factors{series(f)};
  const auto r = ts_regress(series(y), factors);
  const auto o = oracle::ols(x, y);
  EXPECT_NEAR(r.alpha, o.coef[0], 1e-12);
  EXPECT_NEAR(r.betas[0], o.coef[1], 1e-12);
  EXPECT_NEAR(r.se_betas[0], o.se_classical[1], 1e-12);
  EXPECT_NEAR(r.t_betas[0], o.coef[1] / o.se_classical[1], 1e-9);
  EXPECT_LT(std::fabs(r.t_betas[0]), 3.0);
}

TEST(TsRegress, CollinearFactorsNamed) {
  const Series f = series({0.1, 0.2, 0.3, 0.5, 0.1});
  const std::vector<Series> factors{f, f};
  try {
    ts_regress(series({1, 2, 3, 4, 5}), factors);
    FAIL() << "expected a rank error";
  } catch (const ComputeError& e) {
    EXPECT_NE(std::string(e.what()).find("s"), std::string::npos) << e.what();
  }
}

TEST(TsRegress, InsufficientOverlap) {
  const std::vector<Series> factors{series({0.1, 0.2, M})};
  EXPECT_THROW(ts_regress(series({1, 2, 3}), factors), ComputeError);
}

TEST(Ols, NeweyWestAgainstDirectSandwich) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0, 1);
  const int n = 50, p = 3, lags = 4;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = z(rng);
    x(i, 2) = z(rng);
    y(i) = 0.5 * x(i, 1) + z(rng);
  }
  const auto fit = ols(x, y, SeMethod::newey_west(lags));
  const Eigen::MatrixXd inv = (x.transpose() * x).inverse();
  const Eigen::VectorXd e = y - x * inv * x.transpose() * y;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (int t = 0; t < n; ++t) s += e(t) * e(t) * x.row(t).transpose() * x.row(t);
  for (int l = 1; l <= lags; ++l) {
    const double w = 1.0 - l / (lags + 1.0);
    for (int t = l; t < n; ++t) {
      const Eigen::MatrixXd g = e(t) * e(t - l) * x.row(t).transpose() * x.row(t - l);
      s += w * (g + g.transpose());
    }
  }
  const Eigen::MatrixXd v = inv * s * inv;
  for (int j = 0; j < p; ++j) EXPECT_NEAR(fit.se(j), std::sqrt(v(j, j)), 1e-12);
  EXPECT_EQ(SeMethod::newey_west(4).label(), "newey_west(4)");
  EXPECT_EQ(SeMethod{}.label(), "ols");
}

TEST(FamaMacbeth, NoiselessSlope) {
  const std::size_t T = 12, N = 10;
  const DateIndex dates = DateIndex::range(Month(2000, 1), Month(2000, 12));
  std::vector<double> c(T * N), r(T * N, M);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0, 1);
  for (auto& v : c) v = z(rng);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t i = 0; i < N; ++i) r[(t + 1) * N + i] = 0.01 + 0.5 * c[t * N + i];
  }
  const Panel chars(dates, asset_names(N), c), rets(dates, asset_names(N), r);
  const std::vector<const Panel*> list{&chars};
  const auto f = fama_macbeth(rets, list);
  EXPECT_NEAR(f.mean_coeffs[0], 0.5, 1e-12);
  EXPECT_TRUE(is_missing(f.t_stats[0]));
  EXPECT_FALSE(f.flags.empty());
}

TEST(FamaMacbeth, ConstantCharacteristicMonthSkipped) {
  const std::size_t T = 4, N = 6;
  const DateIndex dates = DateIndex::range(Month(2000, 1), Month(2000, 4));
  std::vector<double> c(T * N), r(T * N, M);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < N; ++i) c[t * N + i] = t == 1 ? 3.0 : static_cast<double>(i) + 0.1 * static_cast<double>(t * t);
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t i = 0; i < N; ++i) r[(t + 1) * N + i] = 0.2 * c[t * N + i] + 0.01 * static_cast<double>(t * i % 3);
  }
  const Panel chars(dates, asset_names(N), c), rets(dates, asset_names(N), r);
  const std::vector<const Panel*> list{&chars};
  const auto f = fama_macbeth(rets, list);
  EXPECT_EQ(f.n_months, 2u);
  EXPECT_EQ(f.skipped_months, 1u);
}

TEST(FamaMacbeth, SingleMonthEqualsCrossSectionalOls) {
  const std::size_t N = 8;
  const DateIndex dates{Month(2000, 1), Month(2000, 2)};
  std::vector<double> c1(2 * N), c2(2 * N), r(2 * N, M);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < N; ++i) {
    c1[i] = std::sin(static_cast<double>(i));
    c2[i] = std::cos(3.0 * static_cast<double>(i));
    r[N + i] = 0.3 * c1[i] - 0.2 * c2[i] + 0.01;
    x.push_back({1.0, c1[i], c2[i]});
    y.push_back(r[N + i]);
  }
  const Panel p1(dates, asset_names(N), c1), p2(dates, asset_names(N), c2), rets(dates, asset_names(N), r);
  const std::vector<const Panel*> list{&p1, &p2};
  const auto slopes = cross_sectional_slopes(rets, list);
  ASSERT_EQ(slopes.monthly_coeffs.size(), 1u);
  const auto o = oracle::ols(x, y);
  EXPECT_NEAR(slopes.monthly_coeffs[0][0], o.coef[1], 1e-12);
  EXPECT_NEAR(slopes.monthly_coeffs[0][1], o.coef[2], 1e-12);
  EXPECT_NEAR(o.coef[1], 0.3, 1e-12);
  EXPECT_NEAR(o.coef[2], -0.2, 1e-12);
  EXPECT_THROW(fama_macbeth(rets, list), ComputeError);
}

TEST(Summarize, WorkedExample) {
  const auto s = summarize(series({0.01, 0.03}));
  EXPECT_NEAR(s.mean, 0.02, 1e-15);
  EXPECT_NEAR(s.sd, 0.0141421356, 1e-9);
  EXPECT_NEAR(s.sharpe_annualized, 4.8990, 5e-5);
}

TEST(Summarize, ConstantSeriesHasNoSharpe) {
  const auto s = summarize(series({0.02, 0.02, 0.02}));
  EXPECT_TRUE(is_missing(s.sharpe_annualized));
  EXPECT_FALSE(s.flags.empty());
}

TEST(Summarize, SymmetricSkewAndTwoPassAgreement) {
  EXPECT_NEAR(summarize(series({-2, -1, 0, 1, 2})).skewness, 0.0, 1e-12);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0.01, 0.05);
  std::vector<double> v(200);
  for (double& x : v) x = z(rng);
  v[17] = M;
  double sum = 0, n = 0;
  for (double x : v) {
    if (!is_missing(x)) sum += x, n += 1;
  }
  double ss = 0;
  for (double x : v) {
    if (!is_missing(x)) ss += (x - sum / n) * (x - sum / n);
  }
  const auto s = summarize(series(v));
  EXPECT_NEAR(s.mean, sum / n, 1e-12);
  EXPECT_NEAR(s.sd, std::sqrt(ss / (n - 1)), 1e-12);
  EXPECT_EQ(s.n_obs, 199u);
}

TEST(DecadeBuckets, ClippedToSpan) {
  const auto b = decade_buckets(DateIndex::range(Month(1995, 7), Month(2012, 3)));
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].label, "1995-07 to 1999-12");
  EXPECT_EQ(b[1].label, "2000-01 to 2009-12");
  EXPECT_EQ(b[2].label, "2010-01 to 2012-03");
}

TEST(Coverage, SecurityFractionAndCapShare) {
  const DateIndex d{Month(2000, 1)};
  const Panel cap(d, {"A", "B", "C", "D", "E"}, {6, 2, 1, 1, M});
  const std::vector<DateRange> all{{Month(2000, 1), Month(2000, 12), "2000"}};
  const Panel three(d, {"A", "B", "C", "D", "E"}, {1, 1, 1, M, 1});
  EXPECT_DOUBLE_EQ(coverage_by_period(three, cap, all)[0].security_fraction, 0.75);
  const Panel largest(d, {"A", "B", "C", "D", "E"}, {1, M, M, M, M});
  EXPECT_DOUBLE_EQ(coverage_by_period(largest, cap, all)[0].cap_share, 0.6);
  const Panel none(d, {"A", "B", "C", "D", "E"}, {M, M, M, M, M});
  const auto row = coverage_by_period(none, cap, all)[0];
  EXPECT_EQ(row.security_fraction, 0.0);
  EXPECT_EQ(row.cap_share, 0.0);
}

TEST(SizeStratified, SingleBinEqualsPlainRegression) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0, 0.05);
  const DateIndex dates = DateIndex::range(Month(2000, 1), Month(2004, 12));
  std::vector<double> f(dates.size()), y(dates.size());
  for (std::size_t t = 0; t < f.size(); ++t) {
    f[t] = z(rng);
    y[t] = 0.004 + 0.3 * f[t] + z(rng);
  }
  const Series spread{"y", dates, y};
  const Panel bins = Panel::filled(dates, {"a", "b"}, 1.0);
  const std::vector<FactorModel> models{{"capm", {Series{"mkt", dates, f}}}};
  const SpreadBuilder builder = [&](const Panel&) { return spread; };
  const auto cells = size_stratified_alphas(builder, bins, models);
  ASSERT_EQ(cells.size(), 1u);
  const auto plain = ts_regress(spread, models[0].factors);
  ASSERT_TRUE(cells[0].result);
  EXPECT_EQ(cells[0].result->alpha, plain.alpha);
  EXPECT_EQ(cells[0].result->t_alpha, plain.t_alpha);
}

TEST(SizeStratified, BinsTimesModelsCells) {
  const DateIndex dates = DateIndex::range(Month(2000, 1), Month(2002, 12));
  std::vector<double> b(dates.size() * 3);
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = static_cast<double>(k % 3 + 1);
  const Panel bins(dates, {"a", "b", "c"}, b);
  std::vector<double> f(dates.size()), g(dates.size());
  for (std::size_t t = 0; t < f.size(); ++t) {
    f[t] = std::sin(static_cast<double>(t));
    g[t] = std::cos(static_cast<double>(t * t));
  }
  const std::vector<FactorModel> models{{"one", {Series{"f", dates, f}}}, {"two", {Series{"f", dates, f}, Series{"g", dates, g}}}};
  const SpreadBuilder builder = [&](const Panel& universe) {
    Series s{"s", dates, std::vector<double>(dates.size())};
    for (std::size_t t = 0; t < dates.size(); ++t) s.values[t] = 0.01 * universe.at(t, 0) + 0.5 * f[t] + 0.1 * std::sin(7.0 * t);
    return s;
  };
  const auto cells = size_stratified_alphas(builder, bins, models);
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0].size_bin, 1);
  EXPECT_EQ(cells[0].model, "one");
  EXPECT_EQ(cells[5].size_bin, 3);
  EXPECT_EQ(cells[5].model, "two");
}
