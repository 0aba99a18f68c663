#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "factorlab/panel.hpp"

namespace factorlab {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_shortest(double v);
/// Inverse of format_shortest. Throws IoError on malformed text.
double parse_double(std::string_view text);

nlohmann::json params_to_json(const ParamMap& params);
ParamMap params_from_json(const nlohmann::json& j);
nlohmann::json provenance_to_json(const Provenance& p);
Provenance provenance_from_json(const nlohmann::json& j);

struct SavedFiles {
  std::filesystem::path csv;
  std::filesystem::path meta;
};

/// Writes `<id>.csv` (long form `date,asset,value`, missing cells omitted)
/// and `<id>.meta.json`. The panel must carry an id.
SavedFiles save_panel(const Panel& panel, const std::filesystem::path& directory);

/// Reads a panel written by save_panel. The result carries the saved id
/// and provenance.
Panel load_panel(const std::filesystem::path& directory, std::string_view panel_id);

/// Accepts `<dir>/<id>`, `<dir>/<id>.csv` or `<dir>/<id>.meta.json`.
Panel load_panel_path(const std::filesystem::path& path);

}  // namespace factorlab
