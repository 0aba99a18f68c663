#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "factorlab/panel.hpp"

namespace factorlab {

using PanelPtr = std::shared_ptr<const Panel>;

/// Session-scoped store of immutable panels. Registration is serialized;
/// lookups may run concurrently.
class PanelRegistry {
 public:
  PanelRegistry() = default;
  PanelRegistry(const PanelRegistry&) = delete;
  PanelRegistry& operator=(const PanelRegistry&) = delete;

  /// Registers `panel` under `name`, else under the panel's own id, else
  /// under a generated `_<n>` id. Throws ValidationError on a duplicate id or
  /// on a provenance input that is not registered.
  std::string add(Panel panel, std::optional<std::string> name = std::nullopt);

  /// Registers a source panel (op "source", no inputs).
  std::string add_source(Panel panel, std::string name, ParamMap params = {});

  PanelPtr get(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::size_t size() const;

  /// All panels in registration order.
  std::vector<PanelPtr> all() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, PanelPtr, std::less<>> panels_;
  std::vector<PanelPtr> order_;
  std::uint64_t counter_ = 1;
};

}  // namespace factorlab
