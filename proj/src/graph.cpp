#include "factorlab/graph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "factorlab/error.hpp"
#include "factorlab/panel_io.hpp"

namespace factorlab {

ProvenanceGraph export_graph(const PanelRegistry& registry, std::string_view root_id) {
  if (!registry.contains(root_id)) throw ValidationError("unknown panel id '" + std::string(root_id) + "'");

  std::map<std::string, PanelPtr> reached;
  std::vector<std::string> stack{std::string(root_id)};
  while (!stack.empty()) {
    std::string id = std::move(stack.back());
    stack.pop_back();
    if (reached.contains(id)) continue;
    PanelPtr p = registry.get(id);
    for (const auto& in : p->provenance().input_ids) stack.push_back(in);
    reached.emplace(std::move(id), std::move(p));
  }

  std::vector<PanelPtr> ordered;
  for (auto& [id, p] : reached) ordered.push_back(p);
  // inputs are always registered first, so registration order is topological
  std::sort(ordered.begin(), ordered.end(), [](const PanelPtr& a, const PanelPtr& b) {
    return a->provenance().created_seq < b->provenance().created_seq;
  });

  ProvenanceGraph g;
  for (const auto& p : ordered) {
    g.nodes.push_back({p->id(), p->provenance().op_name, p->provenance().params});
    std::set<std::string> seen;
    for (const auto& in : p->provenance().input_ids) {
      if (seen.insert(in).second) g.edges.push_back({in, p->id()});
    }
  }
  return g;
}

bool is_acyclic(const ProvenanceGraph& graph) {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& n : graph.nodes) indegree[n.id];
  for (const auto& e : graph.edges) {
    ++indegree[e.to];
    indegree[e.from];
    out[e.from].push_back(e.to);
  }
  std::vector<std::string> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push_back(id);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    std::string id = std::move(ready.back());
    ready.pop_back();
    ++visited;
    for (const auto& next : out[id]) {
      if (--indegree[next] == 0) ready.push_back(next);
    }
  }
  return visited == indegree.size();
}

nlohmann::json ProvenanceGraph::to_json() const {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes) {
    j["nodes"].push_back({{"id", n.id}, {"op_name", n.op_name}, {"params", params_to_json(n.params)}});
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& e : edges) j["edges"].push_back({{"from", e.from}, {"to", e.to}});
  return j;
}

namespace {

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string ProvenanceGraph::to_dot() const {
  std::ostringstream os;
  os << "digraph provenance {\n  rankdir=LR;\n  node [shape=box];\n";
  for (const auto& n : nodes) {
    os << "  \"" << dot_escape(n.id) << "\" [label=\"" << dot_escape(n.id) << "\\n" << dot_escape(n.op_name)
       << "\"];\n";
  }
  for (const auto& e : edges) os << "  \"" << dot_escape(e.from) << "\" -> \"" << dot_escape(e.to) << "\";\n";
  os << "}\n";
  return os.str();
}

}  // namespace factorlab
