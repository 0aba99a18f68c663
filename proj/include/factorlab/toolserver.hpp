#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "factorlab/pipeline.hpp"
#include "factorlab/registry.hpp"

namespace factorlab::toolserver {

inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
inline constexpr int kRuntimeError = -32000;

struct SessionConfig {
  /// Catalog used by `catalog_lookup` when the call names none.
  std::optional<std::filesystem::path> catalog;
  /// Relative paths in tool arguments resolve against this directory.
  std::filesystem::path base_dir = ".";
};

/// One client's registry and request handling. Requests are processed in
/// arrival order; sessions share nothing.
class Session {
 public:
  explicit Session(SessionConfig config = {}, const pipeline::OpRegistry& ops = pipeline::OpRegistry::builtin());

  /// Sorted by name: every operator plus load_source, save_panel,
  /// export_graph, build_report and catalog_lookup.
  nlohmann::json list_tools() const;

  /// Response for a request object or batch; nullopt when nothing is owed
  /// (notifications, all-notification batches).
  std::optional<nlohmann::json> handle(const nlohmann::json& message);
  /// Same for one line of text, including the parse-error response.
  std::optional<std::string> handle_line(std::string_view line);

  /// Reads newline-delimited requests until end of input.
  void serve(std::istream& in, std::ostream& out);

  PanelRegistry& registry() { return registry_; }
  std::size_t request_count() const { return requests_; }

 private:
  nlohmann::json handle_single(const nlohmann::json& request, bool& respond);
  nlohmann::json call_tool(const std::string& name, const nlohmann::json& arguments);
  std::filesystem::path resolve(const std::string& path) const;

  SessionConfig config_;
  const pipeline::OpRegistry& ops_;
  PanelRegistry registry_;
  std::size_t requests_ = 0;
};

/// `{panel_id, n_dates, n_assets, n_nonmissing, date_span}`.
nlohmann::json panel_payload(const Panel& panel);

}  // namespace factorlab::toolserver
