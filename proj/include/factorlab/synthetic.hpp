#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "factorlab/month.hpp"
#include "factorlab/panel.hpp"

namespace factorlab::synthetic {

/// Parameters of the one-factor return model with planted momentum and
/// value spreads. All magnitudes are monthly decimals.
struct GeneratorConfig {
  std::uint64_t seed = 42;
  int n_assets = 50;
  int n_months = 120;
  Month start{1990, 1};
  double fraction_nyse = 0.4;

  double market_mean = 0.006;
  double market_vol = 0.045;
  double beta_lo = 0.7;
  double beta_hi = 1.3;
  double idio_vol = 0.03;

  /// Expected-return gap between winner-state and loser-state assets.
  double momentum_spread = 0.005;
  /// Monthly probability that an asset's latent momentum state flips.
  double momentum_switch_prob = 1.0 / 36.0;
  /// Restrict the momentum premium to the small-size group.
  bool momentum_small_only = false;

  /// Expected-return gap between high- and low-book-to-market assets.
  double value_spread = 0.004;

  double ret_missing_rate = 0.02;
  double cap_missing_rate = 0.005;
  double preferred_missing_rate = 0.4;

  /// Throws ValidationError on out-of-range settings.
  void validate() const;
};

/// Model-implied quantities the CSV files do not carry.
struct Truth {
  DateIndex dates;
  std::vector<std::string> assets;
  /// E[r_t | information through t-1], T x N row-major.
  std::vector<double> expected_return;
  /// 1 for the small-size group, 0 for the big group.
  std::vector<int> small_group;
};

struct SyntheticData {
  std::string monthly_csv;
  std::string annual_csv;
  Truth truth;
};

/// Deterministic in `config` (including across platforms: the generator
/// uses its own normal/uniform draws on top of mt19937_64).
SyntheticData generate(const GeneratorConfig& config);

struct GeneratedFiles {
  std::filesystem::path monthly;
  std::filesystem::path annual;
};

/// Writes `monthly.csv` and `annual.csv` into `out_dir`.
GeneratedFiles generate_synthetic(const GeneratorConfig& config, const std::filesystem::path& out_dir);

}  // namespace factorlab::synthetic
