#include "factorlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

#include "factorlab/error.hpp"
#include "factorlab/portfolio.hpp"
#include "factorlab/transforms.hpp"

namespace factorlab::report {

using nlohmann::json;
using riskstats::RegressionResult;

namespace {

std::string fixed(double v, int decimals) {
  if (is_missing(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  // "-0.0000" reads as a sign where there is none
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string ret4(double v) { return fixed(v, 4); }
std::string t2(double v) { return fixed(v, 2); }

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : xs) {
    if (is_missing(x)) continue;
    s += x;
    ++n;
  }
  return n ? s / static_cast<double>(n) : kMissing;
}

const riskstats::StratifiedCell* find_cell(const DiagnosticsReport& r, const std::string& model, int bin) {
  for (const auto& c : r.size_cells) {
    if (c.model == model && c.size_bin == bin) return &c;
  }
  return nullptr;
}

double cell_t(const riskstats::StratifiedCell* c) {
  return c && c->result ? c->result->t_alpha : kMissing;
}

std::string bin_label(const DiagnosticsReport& r, int bin) {
  std::string label = std::to_string(bin);
  if (r.size_bins.size() > 1) {
    if (bin == r.size_bins.front()) label += " (small)";
    else if (bin == r.size_bins.back()) label += " (big)";
  }
  return label;
}

void annotate(DiagnosticsReport& r) {
  for (const auto& a : r.alphas) {
    if (a.result && !is_missing(a.result->t_alpha) && a.result->t_alpha >= kTHurdle) {
      r.annotations.push_back(a.model + " alpha t-statistic " + t2(a.result->t_alpha) +
                              " clears the 3.0 hurdle for new factors.");
    }
  }
  if (r.size_bins.size() >= 2 && !r.alphas.empty()) {
    const std::string& model = r.alphas.front().model;
    const double t_small = cell_t(find_cell(r, model, r.size_bins.front()));
    const double t_big = cell_t(find_cell(r, model, r.size_bins.back()));
    bool small_is_max = !is_missing(t_small);
    for (int bin : r.size_bins) {
      const double t = cell_t(find_cell(r, model, bin));
      if (!is_missing(t) && t > t_small) small_is_max = false;
    }
    if (small_is_max && t_small >= 2.0 && !is_missing(t_big) && std::fabs(t_big) < 2.0) {
      r.annotations.push_back("Caution: performance is concentrated in the smallest size bin (" + model +
                              " alpha t-statistic " + t2(t_small) + " in bin " + std::to_string(r.size_bins.front()) +
                              " versus " + t2(t_big) + " in bin " + std::to_string(r.size_bins.back()) +
                              "); the spread may not survive in larger, more liquid stocks.");
    }
  }
}

std::string narrate(const DiagnosticsReport& r) {
  std::ostringstream os;
  if (r.summary) {
    os << "The " << r.factor_name << " spread averages " << ret4(r.summary->mean) << " per month over "
       << r.summary->n_obs << " months with an annualized Sharpe ratio of " << ret4(r.summary->sharpe_annualized)
       << ".";
  } else {
    os << "Summary statistics for the " << r.factor_name << " spread are unavailable (" << kInsufficient << ").";
  }
  for (const auto& a : r.alphas) {
    if (a.result) {
      os << " Under " << a.model << ", the alpha is " << ret4(a.result->alpha) << " per month (t = "
         << t2(a.result->t_alpha) << ").";
    } else {
      os << " The " << a.model << " regression could not be estimated (" << kInsufficient << ").";
    }
  }
  const bool hurdle = std::any_of(r.annotations.begin(), r.annotations.end(),
                                  [](const std::string& s) { return s.find("3.0 hurdle") != std::string::npos; });
  os << (hurdle ? " At least one alpha clears the 3.0 t-statistic hurdle."
                : " No alpha clears the 3.0 t-statistic hurdle.");
  const bool caution = std::any_of(r.annotations.begin(), r.annotations.end(),
                                   [](const std::string& s) { return s.rfind("Caution", 0) == 0; });
  if (!r.size_cells.empty()) {
    os << (caution ? " The size breakdown shows the effect concentrated in the smallest stocks."
                   : " The size breakdown does not show the effect concentrated in the smallest stocks.");
  }
  os << " Read the sections together: a spread can have a weak Sharpe ratio but a positive alpha, or the reverse.";
  return os.str();
}

}  // namespace

DiagnosticsReport build_report(const ReportInputs& in) {
  DiagnosticsReport r;
  r.factor_name = in.factor_name;
  r.recipe = in.recipe;
  r.panel_ids = in.panel_ids;
  r.se_method = in.se_method.label();

  for (std::size_t t = 0; t < in.spread.dates.size(); ++t) {
    if (is_missing(in.spread.values[t])) continue;
    if (!r.first) r.first = in.spread.dates[t];
    r.last = in.spread.dates[t];
    ++r.n_months;
  }

  try {
    if (!in.characteristic || !in.cap) throw ValidationError("characteristic and cap panels are required");
    const auto buckets = riskstats::decade_buckets(in.characteristic->dates());
    r.coverage = riskstats::coverage_by_period(*in.characteristic, *in.cap, buckets);
    if (r.coverage.empty()) throw ComputeError("no dates to cover");
  } catch (const Error& e) {
    r.coverage.clear();
    r.coverage_error = e.what();
  }

  try {
    auto s = riskstats::summarize(in.spread);
    if (is_missing(s.sharpe_annualized)) {
      std::string why = "zero dispersion";
      if (!s.flags.empty()) why = s.flags.front();
      throw ComputeError(why);
    }
    r.summary = std::move(s);
    std::vector<double> means;
    for (const Panel* w : in.weights) {
      if (w) means.push_back(mean_of(portfolio::turnover(*w).values));
    }
    r.turnover_mean = mean_of(means);
  } catch (const Error& e) {
    r.summary.reset();
    r.summary_error = e.what();
  }

  for (const auto& model : in.models) {
    ModelAlpha a{model.name, std::nullopt, {}};
    try {
      a.result = riskstats::ts_regress(in.spread, model.factors, in.se_method);
    } catch (const Error& e) {
      a.error = e.what();
    }
    r.alphas.push_back(std::move(a));
  }

  try {
    if (!in.size_bins || !in.builder) throw ValidationError("size bins and a spread builder are required");
    r.size_cells = riskstats::size_stratified_alphas(in.builder, *in.size_bins, in.models, in.se_method);
    std::set<int> bins;
    for (const auto& c : r.size_cells) bins.insert(c.size_bin);
    r.size_bins.assign(bins.begin(), bins.end());
    if (r.size_cells.empty()) throw ComputeError("no size bins");
  } catch (const Error& e) {
    r.size_cells.clear();
    r.size_bins.clear();
    r.size_error = e.what();
  }

  annotate(r);
  r.narrative = narrate(r);
  return r;
}

namespace {

std::string param_or(const json& params, const char* key, const std::string& fallback) {
  auto it = params.find(key);
  return it != params.end() && it->is_string() ? it->get<std::string>() : fallback;
}

std::vector<std::string> list_param(const json& params, const char* key) {
  std::vector<std::string> out;
  auto it = params.find(key);
  if (it == params.end()) return out;
  if (!it->is_array()) throw ValidationError(std::string("recipe param '") + key + "' must be a list of names");
  for (const auto& v : *it) out.push_back(v.get<std::string>());
  return out;
}

}  // namespace

DiagnosticsReport build_recipe_report(PanelRegistry& registry, const pipeline::PipelineSpec& recipe,
                                      const RecipeReportOptions& options) {
  const json& params = recipe.params;
  const std::string spread_name = param_or(params, "spread", "");
  if (spread_name.empty() && !options.spread_id) throw ValidationError("recipe has no 'spread' param");
  const std::string spread_id = options.spread_id.value_or(spread_name);
  const std::string char_id = param_or(params, "characteristic", "");
  const std::string ret_id = param_or(params, "returns", "RET");
  const std::string cap_id = param_or(params, "cap", "CAP");
  const std::string nyse_id = param_or(params, "nyse", "NYSE");
  const auto weight_ids = list_param(params, "weights");
  const auto stratify = list_param(params, "stratify_outputs");

  const auto& ops = pipeline::OpRegistry::builtin();
  const PanelPtr spread_panel = registry.get(spread_id);

  const std::string mkt_weights = pipeline::call_op(registry, ops.get("weights_from_membership"), {cap_id, cap_id},
                                                    pipeline::validate_args(ops.get("weights_from_membership"), json::object()),
                                                    std::nullopt);
  const std::string mkt_id = pipeline::call_op(registry, ops.get("portfolio_return"), {mkt_weights, ret_id},
                                               json::object(), std::nullopt);
  json bin_args;
  bin_args["breakpoints"] = options.size_breakpoints;
  const std::string size_id =
      pipeline::call_op(registry, ops.get("quantile_bins"), {cap_id, nyse_id},
                        pipeline::validate_args(ops.get("quantile_bins"), bin_args), std::nullopt);

  Series mkt = to_series(*registry.get(mkt_id));
  mkt.name = "MKT";

  ReportInputs in;
  in.factor_name = spread_id;
  in.recipe = recipe.name;
  in.spread = to_series(*spread_panel);
  in.spread.name = spread_id;
  const PanelPtr char_panel = char_id.empty() ? nullptr : registry.get(char_id);
  const PanelPtr cap_panel = registry.get(cap_id);
  const PanelPtr size_panel = registry.get(size_id);
  in.characteristic = char_panel.get();
  in.cap = cap_panel.get();
  in.size_bins = size_panel.get();
  in.models.push_back({"CAPM", {mkt}});
  in.se_method = options.se_method;
  std::vector<PanelPtr> weights;
  for (const auto& id : weight_ids) weights.push_back(registry.get(id));
  for (const auto& w : weights) in.weights.push_back(w.get());

  in.panel_ids["spread"] = spread_id;
  if (!char_id.empty()) in.panel_ids["characteristic"] = char_id;
  in.panel_ids["cap"] = cap_id;
  in.panel_ids["returns"] = ret_id;
  in.panel_ids["market"] = mkt_id;
  in.panel_ids["size_bins"] = size_id;

  const std::set<std::string> masked(stratify.begin(), stratify.end());
  const std::string rebuilt = spread_name.empty() ? spread_id : spread_name;
  in.builder = [&registry, &recipe, masked, rebuilt](const Panel& universe) {
    PanelRegistry scratch;
    for (const auto& name : recipe.source_names()) scratch.add_source(*registry.get(name), name);
    pipeline::ExecuteOptions opts;
    opts.post_step = [&](const pipeline::Step& step, Panel result) {
      if (!masked.count(step.output)) return result;
      return transforms::mask(result, universe);
    };
    const auto run = pipeline::execute(recipe, scratch, pipeline::OpRegistry::builtin(), opts);
    if (!run.ok()) {
      throw ComputeError("step " + std::to_string(run.failure->index) + " (" + run.failure->op +
                         "): " + run.failure->message);
    }
    return to_series(*scratch.get(run.outputs.at(rebuilt)));
  };
  return build_report(in);
}

std::string render_markdown(const DiagnosticsReport& r) {
  std::ostringstream os;
  os << "# Factor diagnostics: " << r.factor_name << "\n\n";
  os << "- Recipe: " << (r.recipe.empty() ? "n/a" : r.recipe) << "\n";
  os << "- Sample: ";
  if (r.first) os << r.first->str() << " to " << r.last->str() << " (" << r.n_months << " months)";
  else os << kInsufficient;
  os << "\n";
  os << "- Standard errors: " << r.se_method << "\n";
  os << "- Panels:";
  for (const auto& [role, id] : r.panel_ids) os << " " << role << "=" << id;
  os << "\n\n";

  os << "## " << kCoverageHeading << "\n\n";
  if (r.coverage.empty()) {
    os << kInsufficient << " (" << r.coverage_error << ")\n\n";
  } else {
    os << "| Period | Months | Security fraction | Cap share |\n";
    os << "|---|---:|---:|---:|\n";
    for (const auto& row : r.coverage) {
      os << "| " << row.period.label << " | " << row.n_months << " | " << ret4(row.security_fraction) << " | "
         << ret4(row.cap_share) << " |\n";
    }
    os << "\n";
  }

  os << "## " << kSummaryHeading << "\n\n";
  if (!r.summary) {
    os << kInsufficient << " (" << r.summary_error << ")\n\n";
  } else {
    const auto& s = *r.summary;
    os << "| Mean | SD | Sharpe (annualized) | Skewness | Min | Max | Months | Turnover |\n";
    os << "|---:|---:|---:|---:|---:|---:|---:|---:|\n";
    os << "| " << ret4(s.mean) << " | " << ret4(s.sd) << " | " << ret4(s.sharpe_annualized) << " | "
       << ret4(s.skewness) << " | " << ret4(s.min) << " | " << ret4(s.max) << " | " << s.n_obs << " | "
       << ret4(r.turnover_mean) << " |\n\n";
  }

  os << "## " << kAlphaHeading << "\n\n";
  if (r.alphas.empty()) {
    os << kInsufficient << " (no models)\n\n";
  } else {
    os << "| Model | Alpha | t(Alpha) | Coefficients | R2 | Months |\n";
    os << "|---|---:|---:|---|---:|---:|\n";
    for (const auto& a : r.alphas) {
      if (!a.result) {
        os << "| " << a.model << " | " << kInsufficient << " | | | | |\n";
        continue;
      }
      const auto& res = *a.result;
      std::string coefs;
      for (std::size_t j = 0; j < res.betas.size(); ++j) {
        if (j) coefs += "; ";
        coefs += res.factor_names[j] + " " + ret4(res.betas[j]) + " (t " + t2(res.t_betas[j]) + ")";
      }
      os << "| " << a.model << " | " << ret4(res.alpha) << " | " << t2(res.t_alpha) << " | " << coefs << " | "
         << ret4(res.r2) << " | " << res.n_obs << " |\n";
    }
    os << "\n";
  }

  os << "## " << kSizeHeading << "\n\n";
  if (r.size_cells.empty()) {
    os << kInsufficient << " (" << r.size_error << ")\n\n";
  } else {
    os << "| Model | Size bin | Alpha | t(Alpha) | Months |\n";
    os << "|---|---|---:|---:|---:|\n";
    for (const auto& c : r.size_cells) {
      os << "| " << c.model << " | " << bin_label(r, c.size_bin) << " | ";
      if (c.result) {
        os << ret4(c.result->alpha) << " | " << t2(c.result->t_alpha) << " | " << c.result->n_obs << " |\n";
      } else {
        os << kInsufficient << " | | |\n";
      }
    }
    os << "\n";
  }

  os << "## Annotations\n\n";
  if (r.annotations.empty()) os << "none\n";
  for (const auto& a : r.annotations) os << "- " << a << "\n";
  os << "\n## Narrative\n\n" << r.narrative << "\n";
  return os.str();
}

namespace {

json number(double v) {
  if (is_missing(v)) return nullptr;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  const double rounded = std::strtod(buf, nullptr);
  return rounded == 0.0 ? 0.0 : rounded;
}

json regression_json(const RegressionResult& res) {
  json j;
  j["alpha"] = number(res.alpha);
  j["se_alpha"] = number(res.se_alpha);
  j["t_alpha"] = number(res.t_alpha);
  j["r2"] = number(res.r2);
  j["n_obs"] = res.n_obs;
  j["se_method"] = res.se_method.label();
  j["coefficients"] = json::array();
  for (std::size_t k = 0; k < res.betas.size(); ++k) {
    j["coefficients"].push_back(
        {{"factor", res.factor_names[k]}, {"beta", number(res.betas[k])}, {"se", number(res.se_betas[k])},
         {"t", number(res.t_betas[k])}});
  }
  return j;
}

json section(const std::string& heading, const std::string& error) {
  json j;
  j["heading"] = heading;
  j["status"] = error.empty() ? "ok" : kInsufficient;
  if (!error.empty()) j["reason"] = error;
  return j;
}

}  // namespace

json to_json(const DiagnosticsReport& r) {
  json j;
  json meta;
  meta["factor_name"] = r.factor_name;
  meta["recipe"] = r.recipe;
  meta["sample_start"] = r.first ? json(r.first->str()) : json(nullptr);
  meta["sample_end"] = r.last ? json(r.last->str()) : json(nullptr);
  meta["n_months"] = r.n_months;
  meta["panel_ids"] = r.panel_ids;
  meta["se_method"] = r.se_method;
  j["metadata"] = meta;

  json cov = section(kCoverageHeading, r.coverage.empty() ? r.coverage_error : "");
  cov["rows"] = json::array();
  for (const auto& row : r.coverage) {
    cov["rows"].push_back({{"period", row.period.label},
                           {"start", row.period.first.str()},
                           {"end", row.period.last.str()},
                           {"n_months", row.n_months},
                           {"security_fraction", number(row.security_fraction)},
                           {"cap_share", number(row.cap_share)}});
  }
  j["coverage"] = cov;

  json sum = section(kSummaryHeading, r.summary ? "" : r.summary_error);
  if (r.summary) {
    const auto& s = *r.summary;
    sum["stats"] = {{"mean", number(s.mean)},         {"sd", number(s.sd)},
                    {"sharpe_annualized", number(s.sharpe_annualized)},
                    {"skewness", number(s.skewness)}, {"min", number(s.min)},
                    {"max", number(s.max)},           {"n_obs", s.n_obs},
                    {"turnover_mean", number(r.turnover_mean)}};
  }
  j["summary"] = sum;

  json alphas = section(kAlphaHeading, r.alphas.empty() ? "no models" : "");
  alphas["models"] = json::array();
  for (const auto& a : r.alphas) {
    json m;
    m["model"] = a.model;
    if (a.result) {
      m["result"] = regression_json(*a.result);
    } else {
      m["result"] = nullptr;
      m["status"] = kInsufficient;
      m["reason"] = a.error;
    }
    alphas["models"].push_back(std::move(m));
  }
  j["alphas"] = alphas;

  json size = section(kSizeHeading, r.size_cells.empty() ? r.size_error : "");
  size["bins"] = r.size_bins;
  size["cells"] = json::array();
  for (const auto& c : r.size_cells) {
    json cell;
    cell["model"] = c.model;
    cell["size_bin"] = c.size_bin;
    if (c.result) {
      cell["result"] = regression_json(*c.result);
    } else {
      cell["result"] = nullptr;
      cell["status"] = kInsufficient;
      cell["reason"] = c.error;
    }
    size["cells"].push_back(std::move(cell));
  }
  j["size"] = size;

  j["annotations"] = r.annotations;
  j["narrative"] = r.narrative;
  return j;
}

std::string render_json(const DiagnosticsReport& r) { return to_json(r).dump(2) + "\n"; }

}  // namespace factorlab::report
