#include "factorlab/registry.hpp"

#include <mutex>

#include "factorlab/error.hpp"

namespace factorlab {

std::string PanelRegistry::add(Panel panel, std::optional<std::string> name) {
  std::unique_lock lock(mutex_);
  Provenance prov = panel.provenance();
  for (const auto& input : prov.input_ids) {
    if (!panels_.contains(input)) throw ValidationError("provenance input '" + input + "' is not registered");
  }
  std::string id = name ? *name : panel.id();
  if (id.empty()) {
    do {
      id = (prov.op_name.empty() ? "panel" : prov.op_name) + "_" + std::to_string(counter_++);
    } while (panels_.contains(id));
  } else {
    if (panels_.contains(id)) throw ValidationError("panel id '" + id + "' is already registered");
    ++counter_;
  }
  prov.created_seq = order_.size() + 1;
  auto ptr = std::make_shared<const Panel>(std::move(panel).with_identity(id, std::move(prov)));
  panels_.emplace(id, ptr);
  order_.push_back(std::move(ptr));
  return id;
}

std::string PanelRegistry::add_source(Panel panel, std::string name, ParamMap params) {
  Provenance prov;
  prov.params = std::move(params);
  return add(std::move(panel).with_identity({}, std::move(prov)), std::move(name));
}

PanelPtr PanelRegistry::get(std::string_view id) const {
  std::shared_lock lock(mutex_);
  auto it = panels_.find(id);
  if (it == panels_.end()) throw ValidationError("unknown panel id '" + std::string(id) + "'");
  return it->second;
}

bool PanelRegistry::contains(std::string_view id) const {
  std::shared_lock lock(mutex_);
  return panels_.find(id) != panels_.end();
}

std::size_t PanelRegistry::size() const {
  std::shared_lock lock(mutex_);
  return panels_.size();
}

std::vector<PanelPtr> PanelRegistry::all() const {
  std::shared_lock lock(mutex_);
  return order_;
}

}  // namespace factorlab
