#pragma once

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "factorlab/ingest.hpp"
#include "factorlab/panel.hpp"
#include "factorlab/registry.hpp"
#include "factorlab/synthetic.hpp"

namespace testing_support {

namespace fs = std::filesystem;

inline const fs::path kRecipes = FACTORLAB_RECIPES_DIR;
inline const std::string kCli = FACTORLAB_CLI;

inline fs::path fresh_dir(const std::string& name) {
  static std::mt19937_64 salt(std::random_device{}());
  const fs::path dir = fs::temp_directory_path() / ("factorlab_" + name + "_" + std::to_string(salt() % 1000000007));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct Command {
  int exit_code = -1;
  std::string output;
};

// Runs the CLI with `args` (already shell-quoted where needed); stdout and
// stderr are captured together.
inline Command run_cli(const std::string& args) {
  const std::string cmd = "'" + kCli + "' " + args + " 2>&1";
  Command result;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return result;
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) result.output.append(buf, got);
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

inline void load_synthetic(factorlab::PanelRegistry& registry, const factorlab::synthetic::SyntheticData& data) {
  std::istringstream monthly(data.monthly_csv);
  const auto m = factorlab::ingest::ingest_monthly(monthly);
  const auto frame = m.frame();
  std::istringstream annual(data.annual_csv);
  const auto a = factorlab::ingest::ingest_annual(annual, "annual.csv", &frame);
  factorlab::ingest::register_sources(registry, m, "monthly.csv");
  factorlab::ingest::register_sources(registry, a, "annual.csv");
}

inline bool same_bits(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return std::memcmp(&a, &b, sizeof a) == 0;
}

inline std::map<int, double> nonmissing_by_month(const factorlab::Series& s) {
  std::map<int, double> out;
  for (std::size_t t = 0; t < s.dates.size(); ++t) {
    if (!factorlab::is_missing(s.values[t])) out[s.dates[t].ordinal()] = s.values[t];
  }
  return out;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace testing_support
