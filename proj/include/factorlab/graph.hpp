#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "factorlab/registry.hpp"

namespace factorlab {

struct GraphNode {
  std::string id;
  std::string op_name;
  ParamMap params;
};

struct GraphEdge {
  std::string from;
  std::string to;
};

/// Transitive-input subgraph of one panel. Nodes are in topological order
/// (inputs before the panels computed from them).
struct ProvenanceGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  nlohmann::json to_json() const;
  std::string to_dot() const;
};

ProvenanceGraph export_graph(const PanelRegistry& registry, std::string_view root_id);

/// Kahn's algorithm over the graph; false when a cycle exists.
bool is_acyclic(const ProvenanceGraph& graph);

}  // namespace factorlab
