#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "factorlab/panel.hpp"

namespace factorlab::eval {

struct PairedValues {
  std::vector<double> a;
  std::vector<double> b;
};

/// Intersects dates (and assets, unless both panels are one-column series),
/// drops pairs with a missing side, and flattens in (date, asset) order.
/// Throws ComputeError when nothing overlaps.
PairedValues align(const Panel& a, const Panel& b);
PairedValues align(const Series& a, const Series& b);

/// u.v / (|u| |v|). Throws ComputeError on a length mismatch, empty input or
/// a zero-norm vector.
double cosine(std::span<const double> u, std::span<const double> v);

/// Average over all C(n, k) subsets of the subset maximum, by enumeration.
double sim_at_k_enumerate(std::span<const double> sims, int k);
/// Same quantity from order statistics: sum_j C(j-1, k-1) / C(n, k) * s_(j).
double sim_at_k_closed_form(std::span<const double> sims, int k);
/// Enumeration for n <= 12, closed form beyond.
double sim_at_k(std::span<const double> sims, int k);

/// Arithmetic mean of per-task values. Throws on an empty list.
double aggregate_simk(std::span<const double> per_task);

struct SimKResult {
  std::string task_id;
  int n = 0;
  std::map<int, double> per_k;
  std::vector<double> per_attempt_sims;
  std::vector<std::string> notes;
};

/// `attempts` entries that are nullopt are failed attempts and score
/// `failure_similarity`.
SimKResult evaluate_task(const std::string& task_id, const Panel& reference,
                         std::span<const std::optional<Panel>> attempts, std::span<const int> ks,
                         double failure_similarity = -1.0);

struct SimKTable {
  std::vector<int> ks;
  std::vector<SimKResult> tasks;
  std::map<int, double> aggregate;

  /// Values rounded to 4 decimals.
  nlohmann::json to_json() const;
  /// Aligned text table, one row per task plus the aggregate.
  std::string to_text() const;
};

/// Manifest: {"tasks": [{"task_id", "reference", "attempts": [path|null]}]}.
/// Relative paths resolve against the manifest's directory. An attempt that
/// is null or cannot be loaded counts as a failure. Throws ValidationError
/// when some k is outside 1..n for a task.
SimKTable evaluate_manifest(const std::filesystem::path& manifest, std::span<const int> ks,
                            double failure_similarity = -1.0);

}  // namespace factorlab::eval
