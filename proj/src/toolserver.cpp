#include "factorlab/toolserver.hpp"

#include <istream>
#include <ostream>

#include "factorlab/error.hpp"
#include "factorlab/graph.hpp"
#include "factorlab/ingest.hpp"
#include "factorlab/panel_io.hpp"
#include "factorlab/report.hpp"

namespace factorlab::toolserver {

using nlohmann::json;

namespace {

struct RpcError {
  int code;
  std::string message;
  json data;
};

RpcError invalid_param(const std::string& param, const std::string& message) {
  return {kInvalidParams, message, json{{"param", param}}};
}

json error_response(const json& id, const RpcError& e) {
  json err;
  err["code"] = e.code;
  err["message"] = e.message;
  if (!e.data.is_null()) err["data"] = e.data;
  return json{{"jsonrpc", "2.0"}, {"error", err}, {"id", id}};
}

json string_schema(const std::string& doc) { return json{{"type", "string"}, {"description", doc}}; }

json tool(const std::string& name, const std::string& description, json properties, json required) {
  json schema;
  schema["type"] = "object";
  schema["properties"] = std::move(properties);
  schema["required"] = std::move(required);
  schema["additionalProperties"] = false;
  return json{{"name", name}, {"description", description}, {"inputSchema", schema}};
}

json extra_tools() {
  json out = json::array();
  out.push_back(tool("build_report",
                     "Four-section diagnostics report for a recipe's spread whose outputs are registered under "
                     "their step names.",
                     {{"recipe", string_schema("path of the recipe JSON")},
                      {"spread", string_schema("registered spread id (default: the recipe's spread param)")},
                      {"format", json{{"type", "string"},
                                      {"enum", {"both", "json", "markdown"}},
                                      {"default", "both"},
                                      {"description", "documents to return"}}}},
                     {"recipe"}));
  out.push_back(tool("catalog_lookup", "Ranks catalog items by the query tokens found in their id and description.",
                     {{"query", string_schema("free text")},
                      {"catalog", string_schema("path of a catalog JSON (default: the server's catalog)")}},
                     {"query"}));
  out.push_back(tool("export_graph", "Provenance graph of a registered panel.",
                     {{"panel_id", string_schema("root panel id")},
                      {"format", json{{"type", "string"},
                                      {"enum", {"json", "dot"}},
                                      {"default", "json"},
                                      {"description", "graph document format"}}}},
                     {"panel_id"}));
  out.push_back(tool("load_source", "Ingests monthly (and optionally annual) CSV files as source panels.",
                     {{"monthly", string_schema("path of the monthly CSV")},
                      {"annual", string_schema("path of the annual CSV")}},
                     {"monthly"}));
  out.push_back(tool("save_panel", "Writes a registered panel as <id>.csv and <id>.meta.json.",
                     {{"panel_id", string_schema("panel to save")},
                      {"directory", string_schema("output directory")}},
                     {"panel_id", "directory"}));
  return out;
}

void check_keys(const json& args, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : args.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw invalid_param(key, "unknown argument '" + key + "'");
  }
}

std::string required_string(const json& args, const char* key) {
  auto it = args.find(key);
  if (it == args.end()) throw invalid_param(key, std::string("missing required argument '") + key + "'");
  if (!it->is_string()) throw invalid_param(key, std::string("argument '") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& args, const char* key) {
  auto it = args.find(key);
  if (it == args.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw invalid_param(key, std::string("argument '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

json panel_payload(const Panel& p) {
  json j;
  j["panel_id"] = p.id();
  j["n_dates"] = p.n_dates();
  j["n_assets"] = p.n_assets();
  j["n_nonmissing"] = p.count_nonmissing();
  if (p.dates().empty()) {
    j["date_span"] = nullptr;
  } else {
    j["date_span"] = {{"start", p.dates().front().str()}, {"end", p.dates().back().str()}};
  }
  return j;
}

Session::Session(SessionConfig config, const pipeline::OpRegistry& ops) : config_(std::move(config)), ops_(ops) {}

std::filesystem::path Session::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  return p.is_relative() ? config_.base_dir / p : p;
}

json Session::list_tools() const {
  std::map<std::string, json> sorted;
  for (const auto& name : ops_.names()) {
    const auto& def = ops_.get(name);
    sorted[name] = json{{"name", name}, {"description", def.description}, {"inputSchema", def.input_schema()}};
  }
  for (auto& t : extra_tools()) sorted[t["name"].get<std::string>()] = t;
  json tools = json::array();
  for (auto& [name, t] : sorted) tools.push_back(std::move(t));
  return json{{"tools", tools}};
}

json Session::call_tool(const std::string& name, const json& arguments) {
  if (!arguments.is_object()) throw invalid_param("arguments", "'arguments' must be an object");

  if (const pipeline::OpDef* def = ops_.find(name)) {
    std::vector<std::string> inputs;
    auto in_it = arguments.find("inputs");
    if (in_it == arguments.end()) throw invalid_param("inputs", "missing required argument 'inputs'");
    if (!in_it->is_array()) throw invalid_param("inputs", "'inputs' must be an array of panel ids");
    for (const auto& v : *in_it) {
      if (!v.is_string()) throw invalid_param("inputs", "'inputs' must be an array of panel ids");
      inputs.push_back(v.get<std::string>());
    }
    const auto output = optional_string(arguments, "output");
    json params = json::object();
    for (const auto& [key, value] : arguments.items()) {
      if (key != "inputs" && key != "output") params[key] = value;
    }
    json validated;
    try {
      pipeline::validate_arity(*def, inputs.size());
      validated = pipeline::validate_args(*def, params);
    } catch (const pipeline::SpecError& e) {
      throw invalid_param(e.param(), std::string(e.what()));
    }
    for (const auto& id : inputs) {
      if (!registry_.contains(id)) throw invalid_param("inputs", "unknown panel id '" + id + "'");
    }
    if (output && registry_.contains(*output)) {
      throw invalid_param("output", "panel id '" + *output + "' is already registered");
    }
    std::string id;
    try {
      id = pipeline::call_op(registry_, *def, inputs, validated, output);
    } catch (const pipeline::SpecError& e) {
      throw invalid_param(e.param(), std::string(e.what()));
    } catch (const Error& e) {
      throw RpcError{kRuntimeError, "tool '" + name + "': " + e.what(), nullptr};
    }
    return panel_payload(*registry_.get(id));
  }

  if (name == "load_source") {
    check_keys(arguments, {"monthly", "annual"});
    const auto monthly = resolve(required_string(arguments, "monthly"));
    const auto annual = optional_string(arguments, "annual");
    json result;
    result["panels"] = json::array();
    const auto add = [&](const ingest::SourcePanels& sources, const std::string& origin) {
      for (const auto& [pname, panel] : sources.panels) {
        if (registry_.contains(pname)) throw RpcError{kRuntimeError, "panel '" + pname + "' is already loaded", nullptr};
      }
      for (const auto& [pname, id] : ingest::register_sources(registry_, sources, origin)) {
        (void)pname;
        result["panels"].push_back(panel_payload(*registry_.get(id)));
      }
      for (const auto& [pname, count] : sources.report.removed) result["removed"][pname] = count;
      for (const auto& w : sources.report.warnings) result["warnings"].push_back(w);
    };
    try {
      const auto m = ingest::ingest_monthly_file(monthly);
      std::optional<ingest::SourcePanels> a;
      if (annual) {
        const auto frame = m.frame();
        a = ingest::ingest_annual_file(resolve(*annual), &frame);
      }
      add(m, monthly.filename().string());
      if (a) add(*a, resolve(*annual).filename().string());
    } catch (const Error& e) {
      throw RpcError{kRuntimeError, "tool 'load_source': " + std::string(e.what()), nullptr};
    }
    if (!result.contains("warnings")) result["warnings"] = json::array();
    return result;
  }

  if (name == "save_panel") {
    check_keys(arguments, {"panel_id", "directory"});
    const auto id = required_string(arguments, "panel_id");
    const auto dir = resolve(required_string(arguments, "directory"));
    if (!registry_.contains(id)) throw invalid_param("panel_id", "unknown panel id '" + id + "'");
    try {
      std::filesystem::create_directories(dir);
      const auto files = save_panel(*registry_.get(id), dir);
      return json{{"panel_id", id}, {"csv", files.csv.string()}, {"meta", files.meta.string()}};
    } catch (const std::exception& e) {
      throw RpcError{kRuntimeError, "tool 'save_panel': " + std::string(e.what()), nullptr};
    }
  }

  if (name == "export_graph") {
    check_keys(arguments, {"panel_id", "format"});
    const auto id = required_string(arguments, "panel_id");
    const auto format = optional_string(arguments, "format").value_or("json");
    if (format != "json" && format != "dot") throw invalid_param("format", "format must be 'json' or 'dot'");
    if (!registry_.contains(id)) throw invalid_param("panel_id", "unknown panel id '" + id + "'");
    const auto graph = export_graph(registry_, id);
    if (format == "dot") return json{{"format", "dot"}, {"dot", graph.to_dot()}};
    return graph.to_json();
  }

  if (name == "build_report") {
    check_keys(arguments, {"recipe", "spread", "format"});
    const auto recipe_path = resolve(required_string(arguments, "recipe"));
    const auto format = optional_string(arguments, "format").value_or("both");
    if (format != "both" && format != "json" && format != "markdown") {
      throw invalid_param("format", "format must be 'both', 'json' or 'markdown'");
    }
    try {
      const auto spec = pipeline::load_recipe(recipe_path, ops_);
      report::RecipeReportOptions opts;
      opts.spread_id = optional_string(arguments, "spread");
      const auto rep = report::build_recipe_report(registry_, spec, opts);
      json out;
      if (format != "markdown") out["json"] = report::to_json(rep);
      if (format != "json") out["markdown"] = report::render_markdown(rep);
      return out;
    } catch (const ValidationError& e) {
      throw invalid_param("recipe", e.what());
    } catch (const Error& e) {
      throw RpcError{kRuntimeError, "tool 'build_report': " + std::string(e.what()), nullptr};
    }
  }

  if (name == "catalog_lookup") {
    check_keys(arguments, {"query", "catalog"});
    const auto query = required_string(arguments, "query");
    const auto path = optional_string(arguments, "catalog");
    std::optional<std::filesystem::path> catalog_path;
    if (path) catalog_path = resolve(*path);
    else catalog_path = config_.catalog;
    if (!catalog_path) throw invalid_param("catalog", "no catalog configured; pass 'catalog'");
    try {
      json matches = json::array();
      for (const auto& m : pipeline::catalog_lookup(query, pipeline::load_catalog(*catalog_path))) {
        matches.push_back({{"item_id", m.entry.item_id},
                           {"description", m.entry.description},
                           {"source_table", m.entry.source_table},
                           {"score", m.score}});
      }
      return json{{"matches", matches}};
    } catch (const Error& e) {
      throw RpcError{kRuntimeError, "tool 'catalog_lookup': " + std::string(e.what()), nullptr};
    }
  }

  throw RpcError{kMethodNotFound, "unknown tool '" + name + "'", json{{"tool", name}}};
}

json Session::handle_single(const json& request, bool& respond) {
  respond = true;
  json id = nullptr;
  if (!request.is_object()) return error_response(id, {kInvalidRequest, "request must be an object", nullptr});
  if (auto it = request.find("id"); it != request.end()) {
    if (!(it->is_string() || it->is_number() || it->is_null())) {
      return error_response(nullptr, {kInvalidRequest, "id must be a string, number or null", nullptr});
    }
    id = *it;
  } else {
    respond = false;
  }
  auto version = request.find("jsonrpc");
  if (version == request.end() || *version != "2.0") {
    respond = true;
    return error_response(id, {kInvalidRequest, "jsonrpc must be \"2.0\"", nullptr});
  }
  auto method = request.find("method");
  if (method == request.end() || !method->is_string()) {
    respond = true;
    return error_response(id, {kInvalidRequest, "method must be a string", nullptr});
  }
  ++requests_;
  json params = json::object();
  if (auto it = request.find("params"); it != request.end()) params = *it;

  try {
    json result;
    const auto m = method->get<std::string>();
    if (m == "tools/list") {
      result = list_tools();
    } else if (m == "tools/call") {
      if (!params.is_object()) throw invalid_param("params", "params must be an object");
      auto name = params.find("name");
      if (name == params.end() || !name->is_string()) throw invalid_param("name", "params.name must be a string");
      json arguments = json::object();
      if (auto a = params.find("arguments"); a != params.end()) arguments = *a;
      result = call_tool(name->get<std::string>(), arguments);
    } else {
      throw RpcError{kMethodNotFound, "unknown method '" + m + "'", nullptr};
    }
    return json{{"jsonrpc", "2.0"}, {"result", result}, {"id", id}};
  } catch (const RpcError& e) {
    return error_response(id, e);
  } catch (const std::exception& e) {
    return error_response(id, {kRuntimeError, e.what(), nullptr});
  }
}

std::optional<json> Session::handle(const json& message) {
  if (message.is_array()) {
    if (message.empty()) return error_response(nullptr, {kInvalidRequest, "empty batch", nullptr});
    json out = json::array();
    for (const auto& request : message) {
      bool respond = true;
      json r = handle_single(request, respond);
      if (respond) out.push_back(std::move(r));
    }
    if (out.empty()) return std::nullopt;
    return out;
  }
  bool respond = true;
  json r = handle_single(message, respond);
  if (!respond) return std::nullopt;
  return r;
}

std::optional<std::string> Session::handle_line(std::string_view line) {
  if (line.find_first_not_of(" \t\r\n") == std::string_view::npos) return std::nullopt;
  json message;
  try {
    message = json::parse(line);
  } catch (const json::parse_error& e) {
    return error_response(nullptr, {kParseError, std::string("parse error: ") + e.what(), nullptr}).dump();
  }
  auto r = handle(message);
  if (!r) return std::nullopt;
  return r->dump();
}

void Session::serve(std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (auto response = handle_line(line)) {
      out << *response << '\n';
      out.flush();
    }
  }
}

}  // namespace factorlab::toolserver
