#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "factorlab/error.hpp"
#include "factorlab/evalharness.hpp"
#include "factorlab/graph.hpp"
#include "factorlab/panel_io.hpp"
#include "factorlab/pipeline.hpp"
#include "factorlab/portfolio.hpp"
#include "factorlab/report.hpp"
#include "factorlab/riskstats.hpp"
#include "factorlab/transforms.hpp"

#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace factorlab;
using namespace testing_support;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok && outcome_.pass) {
      outcome_.pass = false;
      outcome_.detail = what;
    }
  }
  void note(const std::string& text) {
    if (outcome_.pass) outcome_.detail = text;
  }
  Outcome result() const { return outcome_; }

 private:
  Outcome outcome_;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

struct SeriesComparison {
  bool same_dates = false;
  std::size_t n = 0;
  double cosine = 0.0;
  double max_abs = INFINITY;
};

SeriesComparison compare(const std::map<int, double>& engine, const std::map<int, double>& brute) {
  SeriesComparison c;
  c.same_dates = engine.size() == brute.size() &&
                 std::equal(engine.begin(), engine.end(), brute.begin(),
                            [](const auto& a, const auto& b) { return a.first == b.first; });
  double dot = 0.0, na = 0.0, nb = 0.0;
  c.max_abs = 0.0;
  for (const auto& [m, v] : engine) {
    const auto it = brute.find(m);
    if (it == brute.end()) continue;
    ++c.n;
    dot += v * it->second;
    na += v * v;
    nb += it->second * it->second;
    c.max_abs = std::max(c.max_abs, std::fabs(v - it->second));
  }
  c.cosine = dot / std::sqrt(na * nb);
  return c;
}

pipeline::RunResult run_recipe(PanelRegistry& registry, const std::string& name) {
  const auto spec = pipeline::load_recipe(kRecipes / (name + ".json"));
  return pipeline::execute(spec, registry);
}

Outcome oracle_equivalence(const std::string& recipe, const std::string& spread_id, bool value) {
  Check check;
  const auto data = synthetic::generate({});
  Stopwatch clock;
  PanelRegistry registry;
  load_synthetic(registry, data);
  const auto result = run_recipe(registry, recipe);
  const double elapsed = clock.seconds();
  check.require(result.ok(), recipe + " failed: " + (result.failure ? result.failure->message : ""));
  if (!result.ok()) return check.result();
  const auto engine = nonmissing_by_month(to_series(*registry.get(spread_id)));
  const auto brute = value ? oracle::hml(data.monthly_csv, data.annual_csv) : oracle::jkp_momentum(data.monthly_csv);
  const auto c = compare(engine, brute);
  check.require(c.n >= 60, "too few overlapping months: " + std::to_string(c.n));
  check.require(c.same_dates, "non-missing months differ (" + std::to_string(engine.size()) + " vs " +
                                  std::to_string(brute.size()) + ")");
  check.require(c.cosine >= 0.999999, "cosine " + fmt("%.12f", c.cosine));
  check.require(c.max_abs <= 1e-10, "max abs diff " + fmt("%.3e", c.max_abs));
  check.require(elapsed < 10.0, "runtime " + fmt("%.2f", elapsed) + " s");
  check.note(std::to_string(c.n) + " months, cosine " + fmt("%.12f", c.cosine) + ", max diff " +
             fmt("%.2e", c.max_abs) + ", " + fmt("%.2f", elapsed) + " s");
  return check.result();
}

Series portfolio_series(PanelRegistry& registry, const std::string& weights, const Panel& returns) {
  return portfolio::portfolio_return(*registry.get(weights), returns);
}

Outcome planted_momentum() {
  Check check;
  synthetic::GeneratorConfig cfg;
  cfg.n_months = 480;
  cfg.momentum_spread = 0.005;
  const auto data = synthetic::generate(cfg);
  PanelRegistry registry;
  load_synthetic(registry, data);
  const auto result = run_recipe(registry, "jkp_momentum");
  check.require(result.ok(), "jkp_momentum failed");
  if (!result.ok()) return check.result();
  const Series spread = to_series(*registry.get("ret_12_1_vw_cap"));

  const Panel& ret = *registry.get("RET");
  const Panel& cap = *registry.get("CAP");
  const Series market = portfolio::portfolio_return(portfolio::weights_from_membership(cap, &cap), ret);
  const std::vector<Series> factors{market};
  const auto reg = riskstats::ts_regress(spread, factors);
  const auto stats = riskstats::summarize(spread);

  // Expected returns from the generator's model, observed where returns are.
  const auto& truth = data.truth;
  std::vector<double> expected(truth.expected_return);
  const FrameView observed(ret, truth.dates, truth.assets);
  for (std::size_t t = 0; t < truth.dates.size(); ++t) {
    for (std::size_t i = 0; i < truth.assets.size(); ++i) {
      if (is_missing(observed(t, i))) expected[t * truth.assets.size() + i] = kMissing;
    }
  }
  const Panel expected_panel(truth.dates, truth.assets, std::move(expected));
  const Series top = portfolio_series(registry, "w_top", expected_panel);
  const Series bottom = portfolio_series(registry, "w_bottom", expected_panel);
  const Series implied = portfolio::spread_topbottom(top, bottom);

  double diff_sum = 0.0, implied_sum = 0.0;
  std::vector<double> diffs;
  for (std::size_t t = 0; t < spread.dates.size(); ++t) {
    const auto e = implied.value_at(spread.dates[t]);
    if (is_missing(spread.values[t]) || !e) continue;
    diffs.push_back(spread.values[t] - *e);
    diff_sum += diffs.back();
    implied_sum += *e;
  }
  const double n = static_cast<double>(diffs.size());
  const double diff_mean = diff_sum / n;
  double ss = 0.0;
  for (double d : diffs) ss += (d - diff_mean) * (d - diff_mean);
  const double se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);

  check.require(stats.mean > 0.0, "mean " + fmt("%.5f", stats.mean));
  check.require(reg.t_alpha > 2.0, "alpha t " + fmt("%.2f", reg.t_alpha));
  check.require(std::fabs(diff_mean) <= 3.0 * se,
                "realized minus model-implied mean " + fmt("%.5f", diff_mean) + " exceeds 3 SE " + fmt("%.5f", 3 * se));
  check.note("mean " + fmt("%.5f", stats.mean) + " vs model-implied " + fmt("%.5f", implied_sum / n) +
             " (|diff| " + fmt("%.5f", std::fabs(diff_mean)) + " <= 3 SE " + fmt("%.5f", 3 * se) + "), alpha t " +
             fmt("%.2f", reg.t_alpha) + ", " + std::to_string(diffs.size()) + " months");
  return check.result();
}

Outcome simk_exactness() {
  Check check;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int n = 1; n <= 10; ++n) {
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> s(static_cast<std::size_t>(n));
      for (double& v : s) v = trial % 5 == 0 ? std::round(u(rng) * 2.0) / 2.0 : u(rng);
      double prev = -INFINITY;
      for (int k = 1; k <= n; ++k) {
        const double e = eval::sim_at_k_enumerate(s, k);
        const double c = eval::sim_at_k_closed_form(s, k);
        const double o = oracle::sim_at_k(s, k);
        worst = std::max({worst, std::fabs(e - c), std::fabs(e - o)});
        check.require(std::fabs(e - c) <= 1e-12, "enumeration vs closed form at n=" + std::to_string(n));
        check.require(std::fabs(e - o) <= 1e-12, "enumeration vs bitmask oracle at n=" + std::to_string(n));
        const double v = eval::sim_at_k(s, k);
        check.require(v >= prev - 1e-12, "not monotone in k at n=" + std::to_string(n));
        prev = v;
      }
      double sum = 0.0;
      for (double v : s) sum += v;
      check.require(eval::sim_at_k(s, 1) == sum / n, "sim@1 differs from the mean");
      check.require(eval::sim_at_k(s, n) == *std::max_element(s.begin(), s.end()), "sim@n differs from the max");
    }
  }

  // Worked example through the CLI: similarities 0.5 and 1.0.
  const fs::path dir = fresh_dir("simk");
  const DateIndex dates{Month(2000, 1), Month(2000, 2)};
  const Panel reference = Panel(dates, {"value"}, {1.0, 0.0}).with_identity("reference", {});
  const Panel half = Panel(dates, {"value"}, {0.5, std::sqrt(3.0) / 2.0}).with_identity("half", {});
  const Panel same = Panel(dates, {"value"}, {2.0, 0.0}).with_identity("same", {});
  for (const Panel* p : {&reference, &half, &same}) save_panel(*p, dir);
  write_file(dir / "manifest.json",
             json{{"tasks", {{{"task_id", "example"}, {"reference", "reference.csv"},
                              {"attempts", {"half.csv", "same.csv"}}}}}}
                 .dump());
  const auto cmd = run_cli("--out-dir '" + dir.string() + "' simk '" + (dir / "manifest.json").string() + "' -k 1,2");
  check.require(cmd.exit_code == 0, "simk exited " + std::to_string(cmd.exit_code) + ": " + cmd.output);
  const json table = json::parse(read_file(dir / "simk.json"), nullptr, false);
  const std::string text = cmd.output;
  check.require(text.find("0.7500") != std::string::npos && text.find("1.0000") != std::string::npos,
                "CLI table lacks 0.7500 / 1.0000:\n" + text);
  check.require(!table.is_discarded() && table.dump().find("0.75") != std::string::npos, "simk.json lacks 0.75");
  check.note("1000 vectors, worst disagreement " + fmt("%.1e", worst) + "; CLI example 0.7500 / 1.0000");
  fs::remove_all(dir);
  return check.result();
}

Outcome ewma_conformance() {
  Check check;
  const auto spec = pipeline::load_recipe(kRecipes / "ewma_vol.json");
  const auto& ewma_step = *std::find_if(spec.steps.begin(), spec.steps.end(), [](const auto& s) { return s.op == "ewma"; });
  const double alpha = ewma_step.args.at("alpha").get<double>();
  const int min_periods = ewma_step.args.at("min_periods").get<int>();
  check.require(alpha == 0.06 && min_periods == 12, "ewma_vol recipe does not use alpha 0.06, min_periods 12");

  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 0.05);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t T = 60, N = 1000;
  std::vector<double> values(T * N);
  for (std::size_t i = 0; i < N; ++i) {
    const double miss = 0.3 * u(rng);
    for (std::size_t t = 0; t < T; ++t) values[t * N + i] = u(rng) < miss ? kMissing : z(rng);
  }
  std::vector<std::string> assets;
  for (std::size_t i = 0; i < N; ++i) assets.push_back("a" + std::to_string(i));
  PanelRegistry registry;
  registry.add_source(Panel(DateIndex::range(Month(2000, 1), Month(2000, 1) + static_cast<int>(T - 1)), assets, values), "X");
  const auto& def = pipeline::OpRegistry::builtin().get("ewma");
  const auto args = pipeline::validate_args(def, json{{"alpha", alpha}, {"min_periods", min_periods}});
  const Panel& out = *registry.get(pipeline::call_op(registry, def, {"X"}, args, "ewma_X"));

  double worst = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<double> column(T);
    for (std::size_t t = 0; t < T; ++t) column[t] = values[t * N + i];
    const auto expect = oracle::ewma(column, alpha, min_periods);
    int seen = 0;
    for (std::size_t t = 0; t < T; ++t) {
      if (!is_missing(column[t])) ++seen;
      const double got = out.at(t, i);
      check.require(is_missing(got) == is_missing(expect[t]), "missing pattern differs for asset " + assets[i]);
      if (seen < min_periods) check.require(is_missing(got), "value before the 12th observation");
      if (!is_missing(got) && !is_missing(expect[t])) worst = std::max(worst, std::fabs(got - expect[t]));
    }
  }
  check.require(worst <= 1e-12, "max abs diff " + fmt("%.3e", worst));
  check.note("1000 series, max abs diff " + fmt("%.1e", worst));
  return check.result();
}

Outcome regression_correctness() {
  Check check;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0.0, 1.0);
  const DateIndex dates = DateIndex::range(Month(1990, 1), Month(1999, 12));
  const std::size_t T = dates.size();

  // Noiseless planted alpha and betas.
  double worst_fit = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 1 + trial % 3;
    std::vector<Series> factors;
    std::vector<double> betas;
    const double alpha = 0.01 * z(rng);
    std::vector<double> y(T, alpha);
    for (int j = 0; j < k; ++j) {
      Series f{"f" + std::to_string(j), dates, std::vector<double>(T)};
      betas.push_back(z(rng));
      for (std::size_t t = 0; t < T; ++t) {
        f.values[t] = 0.05 * z(rng);
        y[t] += betas.back() * f.values[t];
      }
      factors.push_back(std::move(f));
    }
    const auto r = riskstats::ts_regress(Series{"y", dates, y}, factors);
    worst_fit = std::max(worst_fit, std::fabs(r.alpha - alpha));
    for (int j = 0; j < k; ++j) worst_fit = std::max(worst_fit, std::fabs(r.betas[static_cast<std::size_t>(j)] - betas[static_cast<std::size_t>(j)]));
  }
  check.require(worst_fit <= 1e-10, "planted coefficients missed by " + fmt("%.3e", worst_fit));

  // Orthogonality and Newey-West(0) against White on random problems.
  double worst_orth = 0.0, worst_white = 0.0, worst_coef = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 20 + static_cast<std::size_t>(trial);
    const std::size_t p = 2 + static_cast<std::size_t>(trial % 4);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    std::vector<std::vector<double>> xr(n, std::vector<double>(p));
    std::vector<double> yr(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        xr[i][j] = j == 0 ? 1.0 : z(rng);
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xr[i][j];
      }
      yr[i] = z(rng) * (1.0 + std::fabs(xr[i][p - 1]));
      y(static_cast<Eigen::Index>(i)) = yr[i];
    }
    const auto fit = riskstats::ols(x, y);
    const Eigen::VectorXd xe = x.transpose() * fit.residuals;
    worst_orth = std::max(worst_orth, xe.cwiseAbs().maxCoeff());
    const auto nw = riskstats::ols(x, y, riskstats::SeMethod::newey_west(0));
    const auto o = oracle::ols(xr, yr);
    for (std::size_t j = 0; j < p; ++j) {
      worst_white = std::max(worst_white, std::fabs(nw.se(static_cast<Eigen::Index>(j)) - o.se_white[j]));
      worst_coef = std::max(worst_coef, std::fabs(fit.coef(static_cast<Eigen::Index>(j)) - o.coef[j]));
    }
  }
  check.require(worst_orth <= 1e-8, "||X'e||inf " + fmt("%.3e", worst_orth));
  check.require(worst_white <= 1e-10, "Newey-West(0) vs White " + fmt("%.3e", worst_white));
  check.require(worst_coef <= 1e-10, "coefficients vs Gauss-Jordan " + fmt("%.3e", worst_coef));

  // Fama-MacBeth on noiseless linear panels.
  const std::size_t N = 40;
  std::vector<std::string> assets;
  for (std::size_t i = 0; i < N; ++i) assets.push_back("a" + std::to_string(i));
  std::vector<double> c1(T * N), c2(T * N), r(T * N, kMissing);
  std::vector<double> g0(T), g1(T), g2(T);
  for (std::size_t t = 0; t < T; ++t) {
    g0[t] = 0.01 * z(rng);
    g1[t] = 0.02 * z(rng);
    g2[t] = 0.02 * z(rng);
    for (std::size_t i = 0; i < N; ++i) {
      c1[t * N + i] = z(rng);
      c2[t * N + i] = z(rng);
    }
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t i = 0; i < N; ++i) r[(t + 1) * N + i] = g0[t] + g1[t] * c1[t * N + i] + g2[t] * c2[t * N + i];
  }
  const Panel returns(dates, assets, r), p1(dates, assets, c1), p2(dates, assets, c2);
  const std::vector<const Panel*> chars{&p1, &p2};
  const auto fmb = riskstats::fama_macbeth(returns, chars);
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    m0 += g0[t];
    m1 += g1[t];
    m2 += g2[t];
  }
  const double used = static_cast<double>(T - 1);
  const double worst_fmb = std::max({std::fabs(fmb.mean_intercept - m0 / used), std::fabs(fmb.mean_coeffs[0] - m1 / used),
                                     std::fabs(fmb.mean_coeffs[1] - m2 / used)});
  check.require(fmb.n_months == T - 1, "Fama-MacBeth used " + std::to_string(fmb.n_months) + " months");
  check.require(worst_fmb <= 1e-12, "Fama-MacBeth slopes off by " + fmt("%.3e", worst_fmb));
  check.note("planted fit " + fmt("%.1e", worst_fit) + ", ||X'e|| " + fmt("%.1e", worst_orth) + ", NW0-White " +
             fmt("%.1e", worst_white) + ", FMB " + fmt("%.1e", worst_fmb));
  return check.result();
}

Outcome percentile_oracle() {
  Check check;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 20);
  double worst = 0.0;
  std::size_t bins_checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(len(rng));
    const bool ties = trial % 3 == 0;
    std::vector<double> row(n), flags(n);
    std::vector<std::string> assets;
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = u(rng) < 0.15 ? kMissing : ties ? std::floor(u(rng) * 4.0) : u(rng) * 10.0 - 5.0;
      flags[i] = u(rng) < 0.75 ? 1.0 : (u(rng) < 0.5 ? 0.0 : kMissing);
      assets.push_back("a" + std::to_string(i));
    }
    const DateIndex date{Month(2001, 6)};
    const Panel a(date, assets, row), universe(date, assets, flags);
    std::vector<double> sample;
    for (std::size_t i = 0; i < n; ++i) {
      if (!is_missing(row[i]) && !is_missing(flags[i]) && flags[i] != 0.0) sample.push_back(row[i]);
    }
    const double pct = 0.1 + std::round(u(rng) * 998.0) / 10.0;
    const double lo = std::round(u(rng) * 500.0) / 10.0;
    const double hi = lo + 0.1 + std::round(u(rng) * (999.0 - 10.0 * lo)) / 10.0;
    std::vector<double> bps{std::round(u(rng) * 450.0 + 10.0) / 10.0};
    bps.push_back(bps[0] + std::round(u(rng) * 400.0 + 10.0) / 10.0);

    const Series xs = transforms::xs_percentile_row(a, pct, &universe);
    const Panel w = transforms::winsorize(a, lo, std::min(hi, 100.0), &universe);
    const Panel b = transforms::quantile_bins(a, transforms::BreakpointSpec{bps}, &universe);
    if (sample.empty()) {
      check.require(is_missing(xs.values[0]), "percentile of an empty universe is not missing");
      for (std::size_t i = 0; i < n; ++i) {
        check.require(same_bits(w.at(0, i), row[i]), "winsorize altered a row with an empty universe");
        check.require(is_missing(b.at(0, i)), "bins assigned with an empty universe");
      }
      continue;
    }
    const double expect_pct = oracle::percentile(sample, pct);
    worst = std::max(worst, std::fabs(xs.values[0] - expect_pct));
    const double wlo = oracle::percentile(sample, lo);
    const double whi = oracle::percentile(sample, std::min(hi, 100.0));
    const double c1 = oracle::percentile(sample, bps[0]);
    const double c2 = oracle::percentile(sample, bps[1]);
    for (std::size_t i = 0; i < n; ++i) {
      if (is_missing(row[i])) {
        check.require(is_missing(w.at(0, i)) && is_missing(b.at(0, i)), "missing input produced a value");
        continue;
      }
      worst = std::max(worst, std::fabs(w.at(0, i) - std::min(std::max(row[i], wlo), whi)));
      const double expect_bin = row[i] <= c1 ? 1.0 : row[i] <= c2 ? 2.0 : 3.0;
      check.require(b.at(0, i) == expect_bin, "bin mismatch in trial " + std::to_string(trial));
      ++bins_checked;
    }
  }
  check.require(worst <= 1e-12, "max abs diff " + fmt("%.3e", worst));

  // Constructed ties: a value equal to a breakpoint takes the lower bin.
  struct TieCase {
    std::vector<double> values;
    std::vector<double> pcts;
    double probe;
    double bin;
  };
  const std::vector<TieCase> cases{
      {{1, 2, 3, 4, 5}, {50}, 3, 1},
      {{1, 2, 3, 4, 5}, {25, 75}, 2, 1},
      {{1, 2, 3, 4, 5}, {25, 75}, 4, 2},
      {{7, 7, 7, 7}, {30, 70}, 7, 1},
      {{1, 2, 2, 2, 3}, {50}, 2, 1},
      {{10, 20, 30}, {50}, 20, 1},
      {{0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100}, {20, 80}, 80, 2},
  };
  int tie_pass = 0;
  for (const auto& tc : cases) {
    std::vector<std::string> assets;
    std::vector<double> row = tc.values;
    row.push_back(tc.probe);
    std::vector<double> flags(row.size(), 1.0);
    flags.back() = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) assets.push_back("a" + std::to_string(i));
    const DateIndex date{Month(2001, 6)};
    const Panel universe(date, assets, flags);
    const Panel b = transforms::quantile_bins(Panel(date, assets, row), transforms::BreakpointSpec{tc.pcts}, &universe);
    if (b.at(0, row.size() - 1) == tc.bin) ++tie_pass;
  }
  check.require(tie_pass == static_cast<int>(cases.size()),
                "tie cases: " + std::to_string(tie_pass) + "/" + std::to_string(cases.size()));
  check.note("1000 rows, " + std::to_string(bins_checked) + " bins, max diff " + fmt("%.1e", worst) + ", " +
             std::to_string(tie_pass) + " tie cases to the lower bin");
  return check.result();
}

Outcome provenance_integrity() {
  Check check;
  const auto data = synthetic::generate({});
  PanelRegistry registry;
  load_synthetic(registry, data);
  const fs::path dir = fresh_dir("roundtrip");
  std::size_t saved = 0;
  std::string summary;
  for (const std::string name : {"hml", "jkp_momentum"}) {
    const auto spec = pipeline::load_recipe(kRecipes / (name + ".json"));
    const auto result = pipeline::execute(spec, registry);
    check.require(result.ok(), name + " failed");
    if (!result.ok()) continue;
    const std::string spread = spec.params.at("spread").get<std::string>();
    const auto graph = export_graph(registry, spread);
    const std::size_t expected = spec.steps.size() + spec.source_names().size();
    check.require(is_acyclic(graph), name + " graph has a cycle");
    check.require(graph.nodes.size() == expected, name + " graph has " + std::to_string(graph.nodes.size()) +
                                                      " nodes, expected " + std::to_string(expected));
    for (const auto& e : graph.edges) {
      const auto step = std::find_if(spec.steps.begin(), spec.steps.end(), [&](const auto& s) { return s.output == e.to; });
      const bool declared = step != spec.steps.end() &&
                            std::find(step->inputs.begin(), step->inputs.end(), e.from) != step->inputs.end();
      check.require(declared, name + " edge " + e.from + " -> " + e.to + " is not a declared input");
    }
    summary += name + " " + std::to_string(graph.nodes.size()) + " nodes/" + std::to_string(graph.edges.size()) + " edges; ";
  }
  for (const auto& panel : registry.all()) {
    save_panel(*panel, dir);
    const Panel back = load_panel(dir, panel->id());
    bool identical = back.dates() == panel->dates() && back.assets() == panel->assets() &&
                     back.provenance() == panel->provenance() && back.values().size() == panel->values().size();
    for (std::size_t k = 0; identical && k < back.values().size(); ++k) {
      identical = same_bits(back.values()[k], panel->values()[k]);
    }
    check.require(identical, "round trip changed " + panel->id());
    ++saved;
  }
  fs::remove_all(dir);
  check.note(summary + std::to_string(saved) + " panels round-tripped bit-exactly");
  return check.result();
}

Outcome protocol_conformance() {
  Check check;
  const fs::path dir = fresh_dir("protocol");
  const std::string base = "--data-dir '" + (dir / "data").string() + "' --out-dir '" + (dir / "cli").string() + "' ";
  auto cmd = run_cli(base + "gen");
  check.require(cmd.exit_code == 0, "gen failed: " + cmd.output);
  cmd = run_cli(base + "run '" + (kRecipes / "hml.json").string() + "'");
  check.require(cmd.exit_code == 0, "run failed: " + cmd.output);

  const auto spec = pipeline::load_recipe(kRecipes / "hml.json");
  std::vector<json> requests;
  requests.push_back({{"jsonrpc", "2.0"}, {"id", 0}, {"method", "initialize"}, {"params", json::object()}});
  requests.push_back({{"jsonrpc", "2.0"}, {"id", 1}, {"method", "tools/call"},
                      {"params", {{"name", "load_source"},
                                  {"arguments", {{"monthly", (dir / "data" / "monthly.csv").string()},
                                                 {"annual", (dir / "data" / "annual.csv").string()}}}}}});
  int id = 2;
  for (const auto& step : spec.steps) {
    json arguments = step.args.is_object() ? step.args : json::object();
    arguments["inputs"] = step.inputs;
    arguments["output"] = step.output;
    requests.push_back({{"jsonrpc", "2.0"}, {"id", id++}, {"method", "tools/call"},
                        {"params", {{"name", step.op}, {"arguments", arguments}}}});
  }
  requests.push_back({{"jsonrpc", "2.0"}, {"id", id++}, {"method", "tools/call"},
                      {"params", {{"name", "save_panel"},
                                  {"arguments", {{"panel_id", "HML_spread"}, {"directory", (dir / "rpc").string()}}}}}});
  const int unknown_id = id++;
  requests.push_back({{"jsonrpc", "2.0"}, {"id", unknown_id}, {"method", "tools/unknown"}, {"params", json::object()}});
  const int invalid_id = id++;
  requests.push_back({{"jsonrpc", "2.0"}, {"id", invalid_id}, {"method", "tools/call"},
                      {"params", {{"name", "winsorize"},
                                  {"arguments", {{"inputs", {"CAP"}}, {"lo_pct", -5}, {"hi_pct", 120}}}}}});
  std::string script;
  for (const auto& r : requests) script += r.dump() + "\n";
  write_file(dir / "requests.jsonl", script);
  cmd = run_cli("--recipes-dir '" + kRecipes.string() + "' serve < '" + (dir / "requests.jsonl").string() + "'");
  check.require(cmd.exit_code == 0, "serve exited " + std::to_string(cmd.exit_code));

  std::map<int, json> responses;
  std::istringstream lines(cmd.output);
  std::string line;
  while (std::getline(lines, line)) {
    const json r = json::parse(line, nullptr, false);
    if (!r.is_discarded() && r.contains("id") && r["id"].is_number_integer()) responses[r["id"].get<int>()] = r;
  }
  check.require(responses.size() == requests.size(),
                "got " + std::to_string(responses.size()) + " responses for " + std::to_string(requests.size()));
  for (int k = 1; k < unknown_id; ++k) {
    check.require(responses.count(k) && responses[k].contains("result"),
                  "request " + std::to_string(k) + " failed: " + (responses.count(k) ? responses[k].dump() : "none"));
  }
  const auto code = [&](int k) { return responses.count(k) ? responses[k].value("/error/code"_json_pointer, 0) : 0; };
  check.require(code(unknown_id) == -32601, "unknown method returned " + std::to_string(code(unknown_id)));
  check.require(code(invalid_id) == -32602, "invalid params returned " + std::to_string(code(invalid_id)));

  std::size_t n = 0;
  try {
    const Panel a = load_panel(dir / "rpc", "HML_spread");
    const Panel b = load_panel(dir / "cli", "HML_spread");
    bool identical = a.dates() == b.dates() && a.values().size() == b.values().size();
    for (std::size_t k = 0; identical && k < a.values().size(); ++k) identical = same_bits(a.values()[k], b.values()[k]);
    n = a.count_nonmissing();
    check.require(identical, "RPC spread differs from the CLI run");
  } catch (const std::exception& e) {
    check.require(false, std::string("cannot compare spreads: ") + e.what());
  }
  fs::remove_all(dir);
  check.note(std::to_string(spec.steps.size()) + " steps over stdio, HML_spread identical (" + std::to_string(n) +
             " values), codes -32601/-32602");
  return check.result();
}

Outcome report_golden() {
  Check check;
  std::vector<std::pair<std::string, std::string>> runs;
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = fresh_dir("report");
    const std::string base = "--data-dir '" + (dir / "data").string() + "' --out-dir '" + (dir / "out").string() + "' ";
    auto cmd = run_cli(base + "gen");
    check.require(cmd.exit_code == 0, "gen failed: " + cmd.output);
    cmd = run_cli(base + "run '" + (kRecipes / "jkp_momentum.json").string() + "'");
    check.require(cmd.exit_code == 0, "run failed: " + cmd.output);
    for (int repeat = 0; repeat < 2; ++repeat) {
      cmd = run_cli(base + "report --recipe '" + (kRecipes / "jkp_momentum.json").string() + "'");
      check.require(cmd.exit_code == 0, "report failed: " + cmd.output);
      runs.emplace_back(read_file(dir / "out" / "report_ret_12_1_vw_cap.md"),
                        read_file(dir / "out" / "report_ret_12_1_vw_cap.json"));
    }
    fs::remove_all(dir);
  }
  for (const auto& r : runs) {
    check.require(r.first == runs.front().first, "markdown differs between runs");
    check.require(r.second == runs.front().second, "JSON differs between runs");
  }
  const std::string& md = runs.front().first;
  for (const char* heading : {report::kCoverageHeading, report::kSummaryHeading, report::kAlphaHeading, report::kSizeHeading}) {
    check.require(md.find(heading) != std::string::npos, std::string("missing heading: ") + heading);
  }
  check.require(!md.empty() && json::parse(runs.front().second, nullptr, false).is_object(), "empty or invalid report");
  check.note(std::to_string(runs.size()) + " runs byte-identical (" + std::to_string(md.size()) + " B markdown, " +
             std::to_string(runs.front().second.size()) + " B JSON), four headings present");
  return check.result();
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"HML oracle equivalence", [] { return oracle_equivalence("hml", "HML_spread", true); }},
      {"JKP momentum oracle equivalence", [] { return oracle_equivalence("jkp_momentum", "ret_12_1_vw_cap", false); }},
      {"Planted-spread sign recovery", planted_momentum},
      {"Sim@k exactness", simk_exactness},
      {"EWMA conformance", ewma_conformance},
      {"Regression correctness", regression_correctness},
      {"Percentile/breakpoint oracle", percentile_oracle},
      {"Provenance integrity", provenance_integrity},
      {"Protocol conformance", protocol_conformance},
      {"Report golden files", report_golden},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << (k + 1) << ": " << criteria[k].first << " - "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
