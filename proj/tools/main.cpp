#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "factorlab/error.hpp"
#include "factorlab/evalharness.hpp"
#include "factorlab/graph.hpp"
#include "factorlab/ingest.hpp"
#include "factorlab/panel_io.hpp"
#include "factorlab/pipeline.hpp"
#include "factorlab/registry.hpp"
#include "factorlab/report.hpp"
#include "factorlab/synthetic.hpp"
#include "factorlab/toolserver.hpp"

namespace fs = std::filesystem;
using namespace factorlab;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

/// Raised for bad command-line values detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

struct Config {
  fs::path data_dir = "data";
  fs::path out_dir = "out";
  fs::path recipes_dir = "recipes";
  std::optional<std::uint64_t> seed;
  std::string log_level = "info";

  Level level() const {
    if (log_level == "error") return Level::error;
    if (log_level == "warn") return Level::warn;
    if (log_level == "debug") return Level::debug;
    return Level::info;
  }
};

Config g_config;

void log(Level level, const std::string& message) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (static_cast<int>(level) > static_cast<int>(g_config.level())) return;
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

struct Sources {
  ingest::SourcePanels monthly;
  std::optional<ingest::SourcePanels> annual;
};

Sources read_sources() {
  const fs::path monthly = g_config.data_dir / "monthly.csv";
  const fs::path annual = g_config.data_dir / "annual.csv";
  Sources s{ingest::ingest_monthly_file(monthly), std::nullopt};
  log(Level::info, "ingested " + monthly.string() + ": " + std::to_string(s.monthly.report.rows) + " rows, " +
                       std::to_string(s.monthly.report.total_removed()) + " values screened out");
  if (fs::exists(annual)) {
    const auto frame = s.monthly.frame();
    s.annual = ingest::ingest_annual_file(annual, &frame);
    log(Level::info, "ingested " + annual.string() + ": " + std::to_string(s.annual->report.rows) + " rows");
    for (const auto& w : s.annual->report.warnings) log(Level::warn, w);
  }
  return s;
}

void register_all(PanelRegistry& registry, const Sources& s) {
  ingest::register_sources(registry, s.monthly, "monthly.csv");
  if (s.annual) ingest::register_sources(registry, *s.annual, "annual.csv");
}

/// Rebuilds a registry from every `*.meta.json` in `dir`, in creation order.
void load_saved(PanelRegistry& registry, const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("output directory " + dir.string() + " does not exist");
  std::vector<Panel> panels;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = ".meta.json";
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    panels.push_back(load_panel(dir, name.substr(0, name.size() - suffix.size())));
  }
  std::sort(panels.begin(), panels.end(), [](const Panel& a, const Panel& b) {
    if (a.provenance().created_seq != b.provenance().created_seq) {
      return a.provenance().created_seq < b.provenance().created_seq;
    }
    return a.id() < b.id();
  });
  for (auto& p : panels) {
    const std::string id = p.id();
    registry.add(std::move(p), id);
  }
}

fs::path recipe_path(const std::string& arg) {
  fs::path p(arg);
  if (fs::exists(p)) return p;
  for (const fs::path& candidate : {g_config.recipes_dir / p, g_config.recipes_dir / (arg + ".json")}) {
    if (fs::exists(candidate)) return candidate;
  }
  throw IoError("recipe " + arg + " not found");
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// ---- gen ----

struct GenArgs {
  synthetic::GeneratorConfig config;
  std::string start = "1990-01";
};

int cmd_gen(GenArgs args) {
  if (g_config.seed) args.config.seed = *g_config.seed;
  args.config.start = Month::parse(args.start);
  try {
    args.config.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  const auto files = synthetic::generate_synthetic(args.config, g_config.data_dir);
  std::cout << files.monthly.string() << '\n' << files.annual.string() << '\n';
  log(Level::info, "generated " + std::to_string(args.config.n_assets) + " assets x " +
                       std::to_string(args.config.n_months) + " months (seed " + std::to_string(args.config.seed) + ")");
  return kExitOk;
}

// ---- ingest ----

int cmd_ingest() {
  const Sources s = read_sources();
  fs::create_directories(g_config.out_dir);
  json summary;
  const auto dump = [&](const ingest::SourcePanels& sp) {
    for (const auto& [name, panel] : sp.panels) {
      PanelRegistry tmp;
      tmp.add_source(panel, name);
      save_panel(*tmp.get(name), g_config.out_dir);
      summary["panels"][name] = toolserver::panel_payload(*tmp.get(name));
    }
    for (const auto& [name, count] : sp.report.removed) summary["removed"][name] = count;
    summary["rows"][sp.panels.empty() ? "?" : (sp.panels.front().first == "RET" ? "monthly" : "annual")] =
        sp.report.rows;
  };
  dump(s.monthly);
  if (s.annual) dump(*s.annual);
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

// ---- run ----

struct RunArgs {
  std::string recipe;
  bool dry_run = false;
  std::vector<std::string> params;
};

int cmd_run(const RunArgs& args) {
  const fs::path path = recipe_path(args.recipe);
  std::ifstream in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.filename().string() + ": recipe is not valid JSON: " + e.what());
  }
  json overrides = json::object();
  for (const auto& kv : args.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--param expects key=value, got '" + kv + "'");
    const std::string value = kv.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    overrides[kv.substr(0, eq)] = parsed.is_discarded() ? json(value) : parsed;
  }

  std::optional<Sources> sources;
  std::set<std::string> source_names;
  if (!args.dry_run) {
    sources = read_sources();
    for (const auto& [name, p] : sources->monthly.panels) source_names.insert(name);
    if (sources->annual) {
      for (const auto& [name, p] : sources->annual->panels) source_names.insert(name);
    }
  }
  pipeline::PipelineSpec spec;
  try {
    spec = pipeline::parse_and_validate(doc, pipeline::OpRegistry::builtin(),
                                        args.dry_run ? std::nullopt : std::optional(source_names), overrides);
  } catch (const ValidationError& e) {
    throw ValidationError(path.filename().string() + ": " + e.what());
  }
  if (args.dry_run) {
    std::cout << spec.describe();
    return kExitOk;
  }

  PanelRegistry registry;
  register_all(registry, *sources);
  const auto result = pipeline::execute(spec, registry);

  fs::create_directories(g_config.out_dir);
  for (const auto& name : spec.source_names()) save_panel(*registry.get(name), g_config.out_dir);
  for (const auto& [name, id] : result.outputs) save_panel(*registry.get(id), g_config.out_dir);
  json log_doc = result.log_json(true);
  log_doc["recipe"] = spec.name;
  write_file(g_config.out_dir / "run_log.json", log_doc.dump(2) + "\n");

  for (const auto& s : result.log) {
    log(Level::info, "step " + std::to_string(s.index) + " " + s.op + " -> " + s.output + ": " +
                         std::to_string(s.nonnull_rows) + " non-null rows, " + std::to_string(s.nonnull_months) +
                         " months");
    for (const auto& w : s.warnings) log(Level::debug, w);
  }
  if (result.failure) {
    const auto& f = *result.failure;
    std::cerr << "error: step " << f.index << " (" << f.op << " -> " << f.output << ") failed: " << f.message << '\n';
    return kExitRuntime;
  }
  std::cout << "recipe " << spec.name << ": " << result.outputs.size() << " outputs saved to "
            << g_config.out_dir.string() << '\n';
  return kExitOk;
}

// ---- report ----

struct ReportArgs {
  std::string recipe;
  std::string spread;
  std::string model = "capm";
  std::string se = "ols";
  int nw_lags = 6;
};

int cmd_report(const ReportArgs& args) {
  if (args.model != "capm") throw UsageError("only the 'capm' model is available");
  const auto spec = pipeline::load_recipe(recipe_path(args.recipe));
  PanelRegistry registry;
  load_saved(registry, g_config.out_dir);
  report::RecipeReportOptions opts;
  if (!args.spread.empty()) {
    if (!registry.contains(args.spread)) throw IoError("panel '" + args.spread + "' not found in " + g_config.out_dir.string());
    opts.spread_id = args.spread;
  }
  if (args.se == "newey_west") opts.se_method = riskstats::SeMethod::newey_west(args.nw_lags);
  const auto rep = report::build_recipe_report(registry, spec, opts);
  const std::string stem = "report_" + rep.factor_name;
  write_file(g_config.out_dir / (stem + ".md"), report::render_markdown(rep));
  write_file(g_config.out_dir / (stem + ".json"), report::render_json(rep));
  std::cout << (g_config.out_dir / (stem + ".md")).string() << '\n'
            << (g_config.out_dir / (stem + ".json")).string() << '\n';
  return kExitOk;
}

// ---- graph ----

int cmd_graph(const std::string& panel_id, const std::string& format, const std::string& output) {
  PanelRegistry registry;
  load_saved(registry, g_config.out_dir);
  if (!registry.contains(panel_id)) throw IoError("panel '" + panel_id + "' not found in " + g_config.out_dir.string());
  const auto graph = export_graph(registry, panel_id);
  const std::string text = format == "dot" ? graph.to_dot() : graph.to_json().dump(2) + "\n";
  if (output.empty()) {
    std::cout << text;
  } else {
    write_file(output, text);
    std::cout << output << '\n';
  }
  return kExitOk;
}

// ---- simk ----

int cmd_simk(const std::string& manifest, const std::vector<int>& ks, double failure_sim, const std::string& json_out) {
  eval::SimKTable table;
  try {
    table = eval::evaluate_manifest(manifest, ks, failure_sim);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  std::cout << table.to_text();
  for (const auto& t : table.tasks) {
    for (const auto& n : t.notes) log(Level::warn, t.task_id + ": " + n);
  }
  const fs::path out = json_out.empty() ? g_config.out_dir / "simk.json" : fs::path(json_out);
  write_file(out, table.to_json().dump(2) + "\n");
  return kExitOk;
}

// ---- plot ----

std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string scatter_svg(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& x_label,
                        const std::string& y_label) {
  constexpr double size = 480.0;
  constexpr double margin = 60.0;
  double lo = std::min(*std::min_element(xs.begin(), xs.end()), *std::min_element(ys.begin(), ys.end()));
  double hi = std::max(*std::max_element(xs.begin(), xs.end()), *std::max_element(ys.begin(), ys.end()));
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double span = size - 2 * margin;
  const auto px = [&](double v) { return margin + (v - lo) / (hi - lo) * span; };
  const auto py = [&](double v) { return size - margin - (v - lo) / (hi - lo) * span; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"480\" height=\"480\" fill=\"white\"/>\n";
  os << "<rect x=\"" << fmt(margin, 2) << "\" y=\"" << fmt(margin, 2) << "\" width=\"" << fmt(span, 2)
     << "\" height=\"" << fmt(span, 2) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    os << "<text x=\"" << fmt(px(v), 2) << "\" y=\"" << fmt(size - margin + 16, 2)
       << "\" font-size=\"10\" text-anchor=\"middle\">" << fmt(v, 4) << "</text>\n";
    os << "<text x=\"" << fmt(margin - 6, 2) << "\" y=\"" << fmt(py(v) + 3, 2)
       << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(v, 4) << "</text>\n";
  }
  os << "<line class=\"identity\" x1=\"" << fmt(px(lo), 2) << "\" y1=\"" << fmt(py(lo), 2) << "\" x2=\""
     << fmt(px(hi), 2) << "\" y2=\"" << fmt(py(hi), 2) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t k = 0; k < xs.size(); ++k) {
    os << "<circle cx=\"" << fmt(px(xs[k]), 2) << "\" cy=\"" << fmt(py(ys[k]), 2)
       << "\" r=\"2.5\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n";
  }
  os << "<text x=\"240\" y=\"" << fmt(size - 16, 2) << "\" font-size=\"12\" text-anchor=\"middle\">" << x_label
     << "</text>\n";
  os << "<text x=\"16\" y=\"240\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 240)\">"
     << y_label << "</text>\n";
  os << "<text x=\"240\" y=\"30\" font-size=\"13\" text-anchor=\"middle\">" << y_label << " vs " << x_label
     << " (" << xs.size() << " months)</text>\n";
  os << "</svg>\n";
  return os.str();
}

Panel load_any(const std::string& ref) {
  fs::path p(ref);
  if (fs::exists(p) || fs::exists(fs::path(ref + ".meta.json"))) return load_panel_path(p);
  return load_panel(g_config.out_dir, ref);
}

int cmd_plot(const std::string& panel_id, const std::string& benchmark_id, const std::string& output) {
  const Panel a = load_any(panel_id);
  const Panel b = load_any(benchmark_id);
  if (!a.is_series() || !b.is_series()) throw ValidationError("plot needs two one-column series panels");
  eval::PairedValues pv;
  try {
    pv = eval::align(a, b);
  } catch (const ComputeError&) {
    throw ComputeError("'" + panel_id + "' and '" + benchmark_id + "' share no non-missing dates");
  }
  const std::string svg = scatter_svg(pv.b, pv.a, b.id().empty() ? benchmark_id : b.id(), a.id().empty() ? panel_id : a.id());
  const fs::path out = output.empty() ? g_config.out_dir / ("plot_" + fs::path(panel_id).stem().string() + ".svg")
                                      : fs::path(output);
  write_file(out, svg);
  std::cout << out.string() << '\n';
  return kExitOk;
}

// ---- serve ----

int cmd_serve() {
  toolserver::SessionConfig cfg;
  const fs::path catalog = g_config.recipes_dir / "catalog.json";
  if (fs::exists(catalog)) cfg.catalog = catalog;
  toolserver::Session session(cfg);
  session.serve(std::cin, std::cout);
  log(Level::info, "input closed after " + std::to_string(session.request_count()) + " requests");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panel-data factor research engine"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.add_option("--data-dir", g_config.data_dir, "directory with monthly.csv and annual.csv");
  app.add_option("--out-dir", g_config.out_dir, "directory for saved panels, logs and reports");
  app.add_option("--recipes-dir", g_config.recipes_dir, "directory searched for recipe names");
  app.add_option("--seed", g_config.seed, "generator seed");
  app.add_option("--log-level", g_config.log_level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  std::function<int()> action;

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "write synthetic monthly.csv and annual.csv into --data-dir");
  gen_cmd->add_option("--n-assets", gen.config.n_assets, "number of assets");
  gen_cmd->add_option("--n-months", gen.config.n_months, "number of months");
  gen_cmd->add_option("--start", gen.start, "first month (YYYY-MM)");
  gen_cmd->add_option("--fraction-nyse", gen.config.fraction_nyse, "share of NYSE-listed assets");
  gen_cmd->add_option("--momentum-spread", gen.config.momentum_spread, "planted monthly momentum premium");
  gen_cmd->add_flag("--momentum-small-only", gen.config.momentum_small_only, "plant momentum in small stocks only");
  gen_cmd->add_option("--value-spread", gen.config.value_spread, "planted monthly value premium");
  gen_cmd->add_option("--ret-missing", gen.config.ret_missing_rate, "probability a return is missing");
  gen_cmd->callback([&] { action = [&] { return cmd_gen(gen); }; });

  auto* ingest_cmd = app.add_subcommand("ingest", "ingest --data-dir CSVs and save the source panels to --out-dir");
  ingest_cmd->callback([&] { action = [] { return cmd_ingest(); }; });

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "execute a recipe on the ingested data");
  run_cmd->add_option("recipe", run.recipe, "recipe path or name under --recipes-dir")->required();
  run_cmd->add_flag("--dry-run", run.dry_run, "print the validated plan without executing");
  run_cmd->add_option("--param", run.params, "recipe parameter override key=value");
  run_cmd->callback([&] { action = [&] { return cmd_run(run); }; });

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "diagnostics report for a recipe's spread saved in --out-dir");
  rep_cmd->add_option("--recipe", rep.recipe, "recipe that produced the spread")->required();
  rep_cmd->add_option("--spread", rep.spread, "spread panel id (default: the recipe's spread)");
  rep_cmd->add_option("--model", rep.model, "benchmark model")->check(CLI::IsMember({"capm"}));
  rep_cmd->add_option("--se", rep.se, "standard errors")->check(CLI::IsMember({"ols", "newey_west"}));
  rep_cmd->add_option("--nw-lags", rep.nw_lags, "Newey-West lags")->check(CLI::NonNegativeNumber);
  rep_cmd->callback([&] { action = [&] { return cmd_report(rep); }; });

  std::string graph_id;
  std::string graph_format = "json";
  std::string graph_out;
  auto* graph_cmd = app.add_subcommand("graph", "export the provenance graph of a saved panel");
  graph_cmd->add_option("panel_id", graph_id, "root panel id")->required();
  graph_cmd->add_option("--format", graph_format, "dot or json")->check(CLI::IsMember({"dot", "json"}));
  graph_cmd->add_option("--output", graph_out, "write to this file instead of stdout");
  graph_cmd->callback([&] { action = [&] { return cmd_graph(graph_id, graph_format, graph_out); }; });

  std::string manifest;
  std::vector<int> ks{1, 2, 5};
  double failure_sim = -1.0;
  std::string simk_json;
  auto* simk_cmd = app.add_subcommand("simk", "Sim@k table for an evaluation manifest");
  simk_cmd->add_option("manifest", manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
  simk_cmd->add_option("-k,--k", ks, "k values")->delimiter(',');
  simk_cmd->add_option("--failure-sim", failure_sim, "similarity assigned to failed attempts");
  simk_cmd->add_option("--json", simk_json, "JSON output path (default: --out-dir/simk.json)");
  simk_cmd->callback([&] { action = [&] { return cmd_simk(manifest, ks, failure_sim, simk_json); }; });

  std::string plot_id;
  std::string plot_bench;
  std::string plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "SVG scatter of a series against a benchmark with the 45-degree line");
  plot_cmd->add_option("panel_id", plot_id, "series panel id or path")->required();
  plot_cmd->add_option("benchmark_id", plot_bench, "benchmark panel id or path")->required();
  plot_cmd->add_option("--output", plot_out, "SVG path (default: --out-dir/plot_<id>.svg)");
  plot_cmd->callback([&] { action = [&] { return cmd_plot(plot_id, plot_bench, plot_out); }; });

  auto* serve_cmd = app.add_subcommand("serve", "JSON-RPC tool server on stdin/stdout");
  serve_cmd->callback([&] { action = [] { return cmd_serve(); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
