#include "factorlab/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "factorlab/error.hpp"
#include "factorlab/panel_io.hpp"

namespace factorlab::eval {

PairedValues align(const Panel& a, const Panel& b) {
  PairedValues out;
  const bool series = a.is_series() && b.is_series();
  std::vector<std::pair<std::size_t, std::size_t>> cols;  // (col in a, col in b)
  if (series) {
    cols.emplace_back(0, 0);
  } else {
    for (std::size_t i = 0; i < a.n_assets(); ++i) {
      if (auto j = b.asset_index(a.assets()[i])) cols.emplace_back(i, *j);
    }
  }
  for (std::size_t t = 0; t < a.n_dates(); ++t) {
    const auto tb = b.dates().find(a.dates()[t]);
    if (!tb) continue;
    for (const auto& [i, j] : cols) {
      const double x = a.at(t, i);
      const double y = b.at(*tb, j);
      if (is_missing(x) || is_missing(y)) continue;
      out.a.push_back(x);
      out.b.push_back(y);
    }
  }
  if (out.a.empty()) throw ComputeError("no overlapping non-missing values to compare");
  return out;
}

PairedValues align(const Series& a, const Series& b) { return align(to_panel(a), to_panel(b)); }

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ComputeError("cosine needs equal-length vectors");
  if (u.empty()) throw ComputeError("cosine of empty vectors");
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    dot += u[k] * v[k];
    uu += u[k] * u[k];
    vv += v[k] * v[k];
  }
  if (uu == 0.0 || vv == 0.0) throw ComputeError("cosine of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

namespace {

void check_k(std::size_t n, int k) {
  if (n == 0) throw ValidationError("sim@k needs at least one attempt");
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    throw ValidationError("k=" + std::to_string(k) + " is outside 1.." + std::to_string(n));
  }
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace

double sim_at_k_enumerate(std::span<const double> sims, int k) {
  check_k(sims.size(), k);
  const int n = static_cast<int>(sims.size());
  if (n > 20) throw ValidationError("enumeration is limited to n <= 20");
  // walk all k-subsets in lexicographic order
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  std::size_t count = 0;
  while (true) {
    double best = sims[static_cast<std::size_t>(idx[0])];
    for (int j : idx) best = std::max(best, sims[static_cast<std::size_t>(j)]);
    total += best;
    ++count;
    int pos = k - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - k + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (int j = pos + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
  return total / static_cast<double>(count);
}

double sim_at_k_closed_form(std::span<const double> sims, int k) {
  check_k(sims.size(), k);
  std::vector<double> sorted(sims.begin(), sims.end());
  std::sort(sorted.begin(), sorted.end());
  const int n = static_cast<int>(sorted.size());
  const double denom = binomial(n, k);
  double total = 0.0;
  // the j-th smallest value is the subset maximum in C(j-1, k-1) subsets
  for (int j = k; j <= n; ++j) total += binomial(j - 1, k - 1) / denom * sorted[static_cast<std::size_t>(j - 1)];
  return total;
}

double sim_at_k(std::span<const double> sims, int k) {
  return sims.size() <= 12 ? sim_at_k_enumerate(sims, k) : sim_at_k_closed_form(sims, k);
}

double aggregate_simk(std::span<const double> per_task) {
  if (per_task.empty()) throw ValidationError("aggregate Sim@k needs at least one task");
  double sum = 0.0;
  for (double v : per_task) sum += v;
  return sum / static_cast<double>(per_task.size());
}

SimKResult evaluate_task(const std::string& task_id, const Panel& reference,
                         std::span<const std::optional<Panel>> attempts, std::span<const int> ks,
                         double failure_similarity) {
  SimKResult out;
  out.task_id = task_id;
  out.n = static_cast<int>(attempts.size());
  for (std::size_t j = 0; j < attempts.size(); ++j) {
    if (!attempts[j]) {
      out.per_attempt_sims.push_back(failure_similarity);
      out.notes.push_back("attempt " + std::to_string(j + 1) + " failed; scored " + format_shortest(failure_similarity));
      continue;
    }
    try {
      const PairedValues pv = align(*attempts[j], reference);
      out.per_attempt_sims.push_back(cosine(pv.a, pv.b));
    } catch (const ComputeError& e) {
      out.per_attempt_sims.push_back(failure_similarity);
      out.notes.push_back("attempt " + std::to_string(j + 1) + ": " + e.what() + "; scored " +
                          format_shortest(failure_similarity));
    }
  }
  for (int k : ks) out.per_k[k] = sim_at_k(out.per_attempt_sims, k);
  return out;
}

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

nlohmann::json SimKTable::to_json() const {
  nlohmann::json j;
  j["k"] = ks;
  j["tasks"] = nlohmann::json::array();
  for (const auto& t : tasks) {
    nlohmann::json task;
    task["task_id"] = t.task_id;
    task["n"] = t.n;
    task["sims"] = nlohmann::json::array();
    for (double s : t.per_attempt_sims) task["sims"].push_back(round4(s));
    for (const auto& [k, v] : t.per_k) task["sim_at_k"][std::to_string(k)] = round4(v);
    task["notes"] = t.notes;
    j["tasks"].push_back(std::move(task));
  }
  for (const auto& [k, v] : aggregate) j["aggregate"]["Sim@" + std::to_string(k)] = round4(v);
  return j;
}

std::string SimKTable::to_text() const {
  std::size_t width = 9;
  for (const auto& t : tasks) width = std::max(width, t.task_id.size());
  std::ostringstream os;
  const auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  os << pad("task");
  for (int k : ks) {
    std::string h = "Sim@" + std::to_string(k);
    os << "  " << std::string(h.size() < 6 ? 6 - h.size() : 0, ' ') << h;
  }
  os << '\n';
  const auto row = [&](const std::string& label, const std::map<int, double>& values) {
    os << pad(label);
    for (int k : ks) {
      std::string h = "Sim@" + std::to_string(k);
      std::string v = fixed4(values.at(k));
      os << "  " << std::string(std::max(h.size(), std::size_t{6}) - v.size(), ' ') << v;
    }
    os << '\n';
  };
  for (const auto& t : tasks) row(t.task_id, t.per_k);
  row("aggregate", aggregate);
  return os.str();
}

SimKTable evaluate_manifest(const std::filesystem::path& manifest, std::span<const int> ks,
                            double failure_similarity) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest.string() + ": " + e.what());
  }
  if (ks.empty()) throw ValidationError("at least one k is required");
  const auto base = manifest.parent_path();
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() ? base / path : path;
  };

  SimKTable table;
  table.ks.assign(ks.begin(), ks.end());
  if (!doc.contains("tasks") || !doc["tasks"].is_array() || doc["tasks"].empty()) {
    throw ValidationError("manifest needs a non-empty 'tasks' array");
  }
  for (const auto& task : doc["tasks"]) {
    const std::string id = task.at("task_id").get<std::string>();
    const Panel reference = load_panel_path(resolve(task.at("reference").get<std::string>()));
    std::vector<std::optional<Panel>> attempts;
    std::vector<std::string> load_notes;
    for (const auto& a : task.at("attempts")) {
      if (a.is_null()) {
        attempts.emplace_back(std::nullopt);
        continue;
      }
      try {
        attempts.emplace_back(load_panel_path(resolve(a.get<std::string>())));
      } catch (const IoError& e) {
        attempts.emplace_back(std::nullopt);
        load_notes.push_back(e.what());
      }
    }
    for (int k : ks) {
      if (k < 1 || static_cast<std::size_t>(k) > attempts.size()) {
        throw ValidationError("task '" + id + "': k=" + std::to_string(k) + " is outside 1.." +
                              std::to_string(attempts.size()));
      }
    }
    SimKResult r = evaluate_task(id, reference, attempts, ks, failure_similarity);
    r.notes.insert(r.notes.begin(), load_notes.begin(), load_notes.end());
    table.tasks.push_back(std::move(r));
  }
  for (int k : ks) {
    std::vector<double> values;
    for (const auto& t : table.tasks) values.push_back(t.per_k.at(k));
    table.aggregate[k] = aggregate_simk(values);
  }
  return table;
}

}  // namespace factorlab::eval
