#include "factorlab/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "factorlab/error.hpp"

namespace factorlab::synthetic {
namespace {

/// Platform-independent draws on top of mt19937_64 (whose output sequence
/// is fixed by the standard, unlike the std distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(engine_() % static_cast<std::uint64_t>(i + 1));
      std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    return p;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

struct Firm {
  std::string id;
  bool small = false;
  bool nyse = false;
  double beta = 1.0;
  double cap = 0.0;
  double capco_multiple = 1.0;
  double value_z = 0.0;
  double value_class = 0.0;
  int fiscal_month = 12;
  int momentum_state = 0;
};

}  // namespace

void GeneratorConfig::validate() const {
  if (n_assets < 1) throw ValidationError("n_assets must be >= 1");
  if (n_months < 1) throw ValidationError("n_months must be >= 1");
  if (!(fraction_nyse >= 0.0 && fraction_nyse <= 1.0)) throw ValidationError("fraction_nyse must lie in [0, 1]");
  if (!(market_vol >= 0.0) || !(idio_vol >= 0.0)) throw ValidationError("volatilities must be non-negative");
  if (!(beta_lo <= beta_hi)) throw ValidationError("beta_lo must not exceed beta_hi");
  if (!(momentum_switch_prob >= 0.0 && momentum_switch_prob <= 1.0)) {
    throw ValidationError("momentum_switch_prob must lie in [0, 1]");
  }
  for (double rate : {ret_missing_rate, cap_missing_rate, preferred_missing_rate}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("missing rates must lie in [0, 1)");
  }
}

SyntheticData generate(const GeneratorConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int n = config.n_assets;
  const int T = config.n_months;

  std::vector<Firm> firms(static_cast<std::size_t>(n));
  const auto size_order = rng.permutation(n);
  const auto exchange_order = rng.permutation(n);
  const int n_nyse = static_cast<int>(std::lround(config.fraction_nyse * n));
  for (int k = 0; k < n; ++k) {
    firms[static_cast<std::size_t>(size_order[static_cast<std::size_t>(k)])].small = k < n / 2 + n % 2;
    firms[static_cast<std::size_t>(exchange_order[static_cast<std::size_t>(k)])].nyse = k < n_nyse;
  }
  for (int i = 0; i < n; ++i) {
    Firm& f = firms[static_cast<std::size_t>(i)];
    f.id = std::to_string(10001 + i);
    f.beta = rng.uniform(config.beta_lo, config.beta_hi);
    f.cap = std::exp((f.small ? 4.0 : 6.5) + 0.4 * rng.normal());
    f.capco_multiple = rng.bernoulli(0.2) ? 1.0 + rng.uniform(0.0, 0.5) : 1.0;
    f.value_z = rng.normal();
    f.value_class = f.value_z > 0.43 ? 0.5 : (f.value_z < -0.43 ? -0.5 : 0.0);
    const double u = rng.uniform();
    f.fiscal_month = u < 0.7 ? 12 : (u < 0.8 ? 3 : (u < 0.9 ? 6 : 9));
    f.momentum_state = rng.bernoulli(0.5) ? 1 : 0;
  }

  SyntheticData out;
  std::vector<Month> months;
  for (int t = 0; t < T; ++t) months.push_back(config.start + t);
  out.truth.dates = DateIndex(months);
  for (const auto& f : firms) {
    out.truth.assets.push_back(f.id);
    out.truth.small_group.push_back(f.small ? 1 : 0);
  }
  out.truth.expected_return.assign(static_cast<std::size_t>(T) * static_cast<std::size_t>(n), kMissing);

  std::ostringstream monthly;
  std::ostringstream annual;
  monthly << "date,asset_id,ret,cap,capco,exchange_nyse\n";
  annual << "fiscal_end,asset_id,seq,pstkrv,pstkl,pstk,at,gp,dlt\n";

  const double m = config.momentum_spread;
  const double p = config.momentum_switch_prob;
  for (int t = 0; t < T; ++t) {
    const Month date = months[static_cast<std::size_t>(t)];
    const double factor = config.market_mean + config.market_vol * rng.normal();
    for (int i = 0; i < n; ++i) {
      Firm& f = firms[static_cast<std::size_t>(i)];
      double prob_winner = 0.5;
      if (t > 0) {
        prob_winner = f.momentum_state == 1 ? 1.0 - p : p;
        if (rng.bernoulli(p)) f.momentum_state = 1 - f.momentum_state;
      }
      const bool momentum_on = !config.momentum_small_only || f.small;
      const double value_term = config.value_spread * f.value_class;
      const double expected =
          f.beta * config.market_mean + (momentum_on ? m * (prob_winner - 0.5) : 0.0) + value_term;
      double ret = f.beta * factor + (momentum_on ? m * (f.momentum_state - 0.5) : 0.0) + value_term +
                   config.idio_vol * rng.normal();
      ret = std::max(ret, -0.9);
      f.cap *= 1.0 + ret;
      out.truth.expected_return[static_cast<std::size_t>(t) * static_cast<std::size_t>(n) +
                                static_cast<std::size_t>(i)] = expected;

      const bool ret_missing = rng.bernoulli(config.ret_missing_rate);
      const bool cap_missing = rng.bernoulli(config.cap_missing_rate);
      const double capco = f.cap * f.capco_multiple;
      monthly << date.str() << ',' << f.id << ',' << (ret_missing ? "" : fixed(ret, 6)) << ','
              << (cap_missing ? "" : fixed(f.cap, 4)) << ',' << (cap_missing ? "" : fixed(capco, 4)) << ','
              << (f.nyse ? 1 : 0) << '\n';

      if (date.month() == f.fiscal_month) {
        const double bm = std::exp(-0.7 + 0.6 * f.value_z + 0.15 * rng.normal());
        const double be = bm * capco;
        const double preferred = be * rng.uniform(0.0, 0.08);
        const bool has_rv = !rng.bernoulli(config.preferred_missing_rate);
        const bool has_l = !rng.bernoulli(config.preferred_missing_rate);
        const bool has_par = !rng.bernoulli(config.preferred_missing_rate);
        const double rv = preferred;
        const double liq = preferred * rng.uniform(0.9, 1.1);
        const double par = preferred * rng.uniform(0.5, 1.0);
        const double used = has_rv ? rv : (has_l ? liq : (has_par ? par : 0.0));
        const double assets = be * rng.uniform(2.0, 3.0);
        const double gross_profit = assets * rng.uniform(0.1, 0.4);
        const double debt = assets * rng.uniform(0.0, 0.5);
        annual << date.str() << ',' << f.id << ',' << fixed(be + used, 4) << ','
               << (has_rv ? fixed(rv, 4) : "") << ',' << (has_l ? fixed(liq, 4) : "") << ','
               << (has_par ? fixed(par, 4) : "") << ',' << fixed(assets, 4) << ',' << fixed(gross_profit, 4)
               << ',' << fixed(debt, 4) << '\n';
      }
    }
  }
  out.monthly_csv = monthly.str();
  out.annual_csv = annual.str();
  return out;
}

GeneratedFiles generate_synthetic(const GeneratorConfig& config, const std::filesystem::path& out_dir) {
  const SyntheticData data = generate(config);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  GeneratedFiles files{out_dir / "monthly.csv", out_dir / "annual.csv"};
  for (const auto& [path, text] : {std::pair{files.monthly, &data.monthly_csv}, std::pair{files.annual, &data.annual_csv}}) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << *text;
    if (!os) throw IoError("write failed for " + path.string());
  }
  return files;
}

}  // namespace factorlab::synthetic
