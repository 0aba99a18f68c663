#include "factorlab/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "factorlab/ingest.hpp"
#include "factorlab/panel_io.hpp"
#include "factorlab/portfolio.hpp"

namespace factorlab::pipeline {

using nlohmann::json;

namespace {

std::string locate(std::optional<std::size_t> step, const std::string& field) {
  std::string where;
  if (step) where = "step " + std::to_string(*step + 1);
  if (!field.empty()) where += (where.empty() ? "" : ": ") + field;
  return where;
}

}  // namespace

SpecError::SpecError(std::optional<std::size_t> step, std::string field, const std::string& message)
    : ValidationError(locate(step, field).empty() ? message : locate(step, field) + ": " + message),
      step_(step),
      field_(std::move(field)) {}

std::string SpecError::param() const {
  const auto dot = field_.rfind('.');
  return dot == std::string::npos ? field_ : field_.substr(dot + 1);
}

std::string_view type_name(ParamType type) {
  switch (type) {
    case ParamType::integer: return "integer";
    case ParamType::number: return "number";
    case ParamType::boolean: return "boolean";
    case ParamType::string: return "string";
    case ParamType::number_list: return "array";
    case ParamType::object: return "object";
  }
  return "?";
}

std::size_t OpDef::min_inputs() const {
  return static_cast<std::size_t>(
      std::count_if(inputs.begin(), inputs.end(), [](const InputSpec& s) { return !s.optional; }));
}

std::optional<std::size_t> OpDef::max_inputs() const {
  if (variadic) return std::nullopt;
  return inputs.size();
}

json OpDef::input_schema() const {
  json props = json::object();
  json required = json::array({"inputs"});

  json items;
  items["type"] = "string";
  json in_schema;
  in_schema["type"] = "array";
  in_schema["items"] = items;
  in_schema["minItems"] = min_inputs();
  if (auto mx = max_inputs()) in_schema["maxItems"] = *mx;
  std::string doc = "Registered panel ids:";
  for (const auto& s : inputs) {
    doc += " " + s.name + (s.kind == ValueKind::series ? " (series)" : "") + (s.optional ? " [optional]" : "");
  }
  if (variadic) doc += " " + variadic->name + "...";
  in_schema["description"] = doc;
  props["inputs"] = in_schema;

  for (const auto& p : params) {
    json s;
    s["type"] = std::string(type_name(p.type));
    if (p.type == ParamType::number_list) s["items"] = json{{"type", "number"}};
    if (p.min) s[p.min_exclusive ? "exclusiveMinimum" : "minimum"] = *p.min;
    if (p.max) s[p.max_exclusive ? "exclusiveMaximum" : "maximum"] = *p.max;
    if (!p.choices.empty()) s["enum"] = p.choices;
    if (!p.default_value.is_null()) s["default"] = p.default_value;
    s["description"] = p.doc;
    props[p.name] = s;
    if (p.required) required.push_back(p.name);
  }
  json out_schema;
  out_schema["type"] = "string";
  out_schema["description"] = "Id to register the result under (generated when omitted).";
  props["output"] = out_schema;

  json schema;
  schema["type"] = "object";
  schema["properties"] = props;
  schema["required"] = required;
  schema["additionalProperties"] = false;
  return schema;
}

void OpRegistry::add(OpDef def) {
  const std::string name = def.name;
  if (!ops_.emplace(name, std::move(def)).second) throw ValidationError("operator '" + name + "' already registered");
}

const OpDef* OpRegistry::find(std::string_view name) const {
  auto it = ops_.find(name);
  return it == ops_.end() ? nullptr : &it->second;
}

const OpDef& OpRegistry::get(std::string_view name) const {
  if (const OpDef* def = find(name)) return *def;
  throw ValidationError("unknown operator '" + std::string(name) + "'");
}

std::vector<std::string> OpRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, def] : ops_) out.push_back(name);
  return out;
}

namespace {

bool is_integral(const json& v) {
  if (v.is_number_integer()) return true;
  if (!v.is_number_float()) return false;
  const double d = v.get<double>();
  return std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9e15;
}

void check_range(const ParamSpec& p, double v, std::optional<std::size_t> step, const std::string& field) {
  const auto show = [](double x) { return format_shortest(x); };
  if (!std::isfinite(v)) throw SpecError(step, field, "must be finite");
  if (p.min && (p.min_exclusive ? !(v > *p.min) : !(v >= *p.min))) {
    throw SpecError(step, field, show(v) + " is out of range (must be " + (p.min_exclusive ? "> " : ">= ") + show(*p.min) + ")");
  }
  if (p.max && (p.max_exclusive ? !(v < *p.max) : !(v <= *p.max))) {
    throw SpecError(step, field, show(v) + " is out of range (must be " + (p.max_exclusive ? "< " : "<= ") + show(*p.max) + ")");
  }
}

}  // namespace

json validate_args(const OpDef& def, const json& args, std::optional<std::size_t> step) {
  if (!args.is_object()) throw SpecError(step, "args", "must be an object");
  for (const auto& [key, value] : args.items()) {
    const bool known = std::any_of(def.params.begin(), def.params.end(), [&](const ParamSpec& p) { return p.name == key; });
    if (!known) throw SpecError(step, "args." + key, "unknown parameter for '" + def.name + "'");
  }
  json out = json::object();
  for (const auto& p : def.params) {
    const std::string field = "args." + p.name;
    auto it = args.find(p.name);
    if (it == args.end() || it->is_null()) {
      if (p.required) throw SpecError(step, field, "required parameter is missing");
      if (!p.default_value.is_null()) out[p.name] = p.default_value;
      continue;
    }
    const json& v = *it;
    switch (p.type) {
      case ParamType::integer:
        if (!is_integral(v)) throw SpecError(step, field, "expected an integer");
        check_range(p, v.get<double>(), step, field);
        out[p.name] = static_cast<std::int64_t>(v.get<double>());
        break;
      case ParamType::number:
        if (!v.is_number()) throw SpecError(step, field, "expected a number");
        check_range(p, v.get<double>(), step, field);
        out[p.name] = v;
        break;
      case ParamType::boolean:
        if (!v.is_boolean()) throw SpecError(step, field, "expected a boolean");
        out[p.name] = v;
        break;
      case ParamType::string: {
        if (!v.is_string()) throw SpecError(step, field, "expected a string");
        const auto s = v.get<std::string>();
        if (!p.choices.empty() && std::find(p.choices.begin(), p.choices.end(), s) == p.choices.end()) {
          std::string allowed;
          for (const auto& c : p.choices) allowed += (allowed.empty() ? "" : ", ") + c;
          throw SpecError(step, field, "'" + s + "' is not one of {" + allowed + "}");
        }
        out[p.name] = v;
        break;
      }
      case ParamType::number_list:
        if (!v.is_array()) throw SpecError(step, field, "expected an array of numbers");
        for (std::size_t k = 0; k < v.size(); ++k) {
          const std::string item = field + "[" + std::to_string(k) + "]";
          if (!v[k].is_number()) throw SpecError(step, item, "expected a number");
          check_range(p, v[k].get<double>(), step, item);
        }
        out[p.name] = v;
        break;
      case ParamType::object:
        if (!v.is_object()) throw SpecError(step, field, "expected an object");
        for (const auto& [key, inner] : v.items()) {
          if (!(inner.is_number() || inner.is_string() || inner.is_boolean())) {
            throw SpecError(step, field + "." + key, "expected a scalar");
          }
        }
        out[p.name] = v;
        break;
    }
  }
  if (def.check) {
    try {
      def.check(out);
    } catch (const SpecError& e) {
      if (step && !e.step()) {
        const std::string prefix = e.field() + ": ";
        std::string msg = e.what();
        if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
        throw SpecError(step, e.field(), msg);
      }
      throw;
    }
  }
  return out;
}

void validate_arity(const OpDef& def, std::size_t n_inputs, std::optional<std::size_t> step) {
  const std::size_t lo = def.min_inputs();
  const auto hi = def.max_inputs();
  if (n_inputs < lo || (hi && n_inputs > *hi)) {
    std::string expected = std::to_string(lo);
    if (!hi) expected = "at least " + expected;
    else if (*hi != lo) expected += " to " + std::to_string(*hi);
    throw SpecError(step, "inputs",
                    "'" + def.name + "' takes " + expected + " inputs, got " + std::to_string(n_inputs));
  }
}

namespace {

// ---- argument accessors used by the operator table ----

double num(const json& a, const char* key) { return a.at(key).get<double>(); }
int integer(const json& a, const char* key) { return static_cast<int>(a.at(key).get<std::int64_t>()); }
std::string str(const json& a, const char* key) { return a.at(key).get<std::string>(); }
std::optional<double> opt_num(const json& a, const char* key) {
  auto it = a.find(key);
  if (it == a.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

ParamSpec param(std::string name, ParamType type, bool required, std::string doc) {
  ParamSpec p;
  p.name = std::move(name);
  p.type = type;
  p.required = required;
  p.doc = std::move(doc);
  return p;
}

ParamSpec ranged(ParamSpec p, std::optional<double> lo, std::optional<double> hi, bool lo_excl = false,
                 bool hi_excl = false) {
  p.min = lo;
  p.max = hi;
  p.min_exclusive = lo_excl;
  p.max_exclusive = hi_excl;
  return p;
}

ParamSpec choice(std::string name, std::vector<std::string> choices, std::optional<std::string> fallback,
                 std::string doc) {
  ParamSpec p = param(std::move(name), ParamType::string, !fallback, std::move(doc));
  p.choices = std::move(choices);
  if (fallback) p.default_value = *fallback;
  return p;
}

ParamSpec with_default(ParamSpec p, json value) {
  p.default_value = std::move(value);
  p.required = false;
  return p;
}

InputSpec in(std::string name, std::string doc, ValueKind kind = ValueKind::panel, bool optional = false) {
  return InputSpec{std::move(name), kind, optional, std::move(doc)};
}

InputSpec universe_input() {
  return in("universe", "1/0 mask of assets used for breakpoints (all assets when omitted)", ValueKind::panel, true);
}

Panel series_panel(const Series& s) { return to_panel(s); }

transforms::BinaryOp binary_kind(const std::string& s) {
  if (s == "add") return transforms::BinaryOp::add;
  if (s == "sub") return transforms::BinaryOp::sub;
  if (s == "mul") return transforms::BinaryOp::mul;
  return transforms::BinaryOp::div;
}

transforms::UnaryOp unary_kind(const std::string& s) {
  if (s == "neg") return transforms::UnaryOp::neg;
  if (s == "abs") return transforms::UnaryOp::abs;
  if (s == "log") return transforms::UnaryOp::log;
  if (s == "sqrt") return transforms::UnaryOp::sqrt;
  return transforms::UnaryOp::rank_sign_flip;
}

transforms::RollingStat stat_kind(const std::string& s) {
  if (s == "mean") return transforms::RollingStat::mean;
  if (s == "std") return transforms::RollingStat::std;
  if (s == "sum") return transforms::RollingStat::sum;
  if (s == "min") return transforms::RollingStat::min;
  return transforms::RollingStat::max;
}

OpRegistry make_builtin() {
  using PT = ParamType;
  OpRegistry r;

  r.add({"binary_op", "Elementwise a (op) b on aligned panels; division by zero gives missing.",
         {in("a", "left operand"), in("b", "right operand")}, std::nullopt,
         {choice("op", {"add", "sub", "mul", "div"}, std::nullopt, "arithmetic operation")}, ValueKind::panel, {},
         [](const OpCall& c) {
           return transforms::binary_op(c.input(0), c.input(1), binary_kind(str(c.args, "op")));
         }});

  r.add({"unary_op", "Elementwise transform; log of non-positive and sqrt of negative values give missing.",
         {in("a", "operand")}, std::nullopt,
         {choice("op", {"neg", "abs", "log", "sqrt", "rank_sign_flip"}, std::nullopt, "transform")},
         ValueKind::panel, {},
         [](const OpCall& c) { return transforms::unary_op(c.input(0), unary_kind(str(c.args, "op"))); }});

  r.add({"coalesce", "First non-missing value per cell across the inputs, in order.",
         {in("first", "highest-priority panel")}, in("rest", "fallback panels"), {}, ValueKind::panel, {},
         [](const OpCall& c) {
           std::vector<const Panel*> ps;
           for (const auto& p : c.inputs) ps.push_back(p.get());
           return transforms::coalesce(ps);
         }});

  r.add({"winsorize", "Clips each date's values to universe percentile bounds.",
         {in("a", "panel to clip"), universe_input()}, std::nullopt,
         {ranged(param("lo_pct", PT::number, false, "lower percentile bound in [0, 100]"), 0.0, 100.0),
          ranged(param("hi_pct", PT::number, false, "upper percentile bound in [0, 100]"), 0.0, 100.0)},
         ValueKind::panel,
         [](const json& a) {
           const auto lo = opt_num(a, "lo_pct");
           const auto hi = opt_num(a, "hi_pct");
           if (!lo && !hi) throw SpecError(std::nullopt, "args.lo_pct", "at least one of lo_pct, hi_pct is required");
           if (lo && hi && !(*lo < *hi)) throw SpecError(std::nullopt, "args.hi_pct", "hi_pct must exceed lo_pct");
         },
         [](const OpCall& c) {
           return transforms::winsorize(c.input(0), opt_num(c.args, "lo_pct"), opt_num(c.args, "hi_pct"),
                                        c.optional_input(1), c.flags);
         }});

  r.add({"standardize", "Per-date z-score against the universe mean and sample standard deviation.",
         {in("a", "panel"), universe_input()}, std::nullopt, {}, ValueKind::panel, {},
         [](const OpCall& c) { return transforms::standardize(c.input(0), c.optional_input(1), c.flags); }});

  r.add({"quantile_bins", "Integer bins 1..k+1 against per-date universe percentile breakpoints.",
         {in("a", "panel to bin"), universe_input()}, std::nullopt,
         {ranged(param("breakpoints", PT::number_list, true, "strictly increasing percentiles in (0, 100)"), 0.0,
                 100.0, true, true)},
         ValueKind::panel,
         [](const json& a) {
           transforms::BreakpointSpec spec{a.at("breakpoints").get<std::vector<double>>()};
           try {
             spec.validate();
           } catch (const ValidationError& e) {
             throw SpecError(std::nullopt, "args.breakpoints", e.what());
           }
         },
         [](const OpCall& c) {
           transforms::BreakpointSpec spec{c.args.at("breakpoints").get<std::vector<double>>()};
           return transforms::quantile_bins(c.input(0), spec, c.optional_input(1), c.flags);
         }});

  r.add({"mask", "Keeps cells where the condition is nonzero (or zero); others become missing.",
         {in("a", "panel"), in("condition", "condition panel")}, std::nullopt,
         {choice("keep_if", {"nonzero", "zero"}, "nonzero", "which condition cells keep the value")},
         ValueKind::panel, {},
         [](const OpCall& c) {
           const auto keep = str(c.args, "keep_if") == "zero" ? transforms::KeepIf::zero : transforms::KeepIf::nonzero;
           return transforms::mask(c.input(0), c.input(1), keep);
         }});

  r.add({"compare", "1/0 panel comparing each cell with the per-date threshold.",
         {in("a", "panel"), in("threshold", "per-date threshold", ValueKind::series)}, std::nullopt,
         {choice("op", {"lt", "ge"}, std::nullopt, "comparison")}, ValueKind::panel, {},
         [](const OpCall& c) {
           const auto op = str(c.args, "op") == "lt" ? transforms::CompareOp::lt : transforms::CompareOp::ge;
           return transforms::compare(c.input(0), to_series(c.input(1)), op);
         }});

  r.add({"xs_percentile_row", "Per-date percentile of the universe's values.",
         {in("a", "panel"), universe_input()}, std::nullopt,
         {ranged(param("pct", PT::number, true, "percentile in [0, 100]"), 0.0, 100.0)}, ValueKind::series, {},
         [](const OpCall& c) {
           return series_panel(transforms::xs_percentile_row(c.input(0), num(c.args, "pct"), c.optional_input(1)));
         }});

  r.add({"lag", "Value from k calendar months earlier.", {in("a", "panel")}, std::nullopt,
         {ranged(param("k", PT::integer, true, "lag in months"), 1.0, std::nullopt)}, ValueKind::panel, {},
         [](const OpCall& c) { return transforms::lag(c.input(0), integer(c.args, "k")); }});

  r.add({"rolling_compound_return", "Compounded return over months t-window .. t-skip-1.",
         {in("r", "simple returns")}, std::nullopt,
         {ranged(param("window", PT::integer, true, "lookback in months"), 1.0, std::nullopt),
          with_default(ranged(param("skip", PT::integer, false, "most recent months left out"), 0.0, std::nullopt), 0),
          ranged(param("min_obs", PT::integer, true, "returns required in the window"), 1.0, std::nullopt)},
         ValueKind::panel,
         [](const json& a) {
           const int window = integer(a, "window");
           const int skip = integer(a, "skip");
           if (skip >= window) throw SpecError(std::nullopt, "args.skip", "skip must be smaller than window");
           if (integer(a, "min_obs") > window - skip) {
             throw SpecError(std::nullopt, "args.min_obs", "min_obs exceeds the window - skip months available");
           }
         },
         [](const OpCall& c) {
           return transforms::rolling_compound_return(c.input(0), integer(c.args, "window"), integer(c.args, "skip"),
                                                      integer(c.args, "min_obs"));
         }});

  r.add({"rolling_stat", "Trailing statistic over months t-window+1 .. t.", {in("a", "panel")}, std::nullopt,
         {ranged(param("window", PT::integer, true, "window in months"), 1.0, std::nullopt),
          choice("stat", {"mean", "std", "sum", "min", "max"}, std::nullopt, "statistic"),
          ranged(param("min_obs", PT::integer, true, "observations required"), 1.0, std::nullopt)},
         ValueKind::panel,
         [](const json& a) {
           if (integer(a, "min_obs") > integer(a, "window")) {
             throw SpecError(std::nullopt, "args.min_obs", "min_obs exceeds window");
           }
         },
         [](const OpCall& c) {
           return transforms::rolling_stat(c.input(0), integer(c.args, "window"), stat_kind(str(c.args, "stat")),
                                           integer(c.args, "min_obs"));
         }});

  r.add({"ewma", "Recursive exponentially weighted mean per asset.", {in("a", "panel")}, std::nullopt,
         {ranged(param("alpha", PT::number, true, "smoothing weight in (0, 1]"), 0.0, 1.0, true, false),
          with_default(ranged(param("min_periods", PT::integer, false, "observations before output starts"), 1.0,
                              std::nullopt),
                       1)},
         ValueKind::panel, {},
         [](const OpCall& c) {
           return transforms::ewma(c.input(0), num(c.args, "alpha"), integer(c.args, "min_periods"));
         }});

  r.add({"trend", "Applies a registered per-asset series transform.", {in("a", "panel")}, std::nullopt,
         {param("transform", PT::string, true, "name in the transform registry (identity, cumsum, ewma)"),
          with_default(param("params", PT::object, false, "transform parameters"), json::object())},
         ValueKind::panel,
         [](const json& a) {
           if (!transforms::TransformRegistry::builtin().contains(str(a, "transform"))) {
             throw SpecError(std::nullopt, "args.transform", "unknown series transform '" + str(a, "transform") + "'");
           }
         },
         [](const OpCall& c) {
           const auto& reg = c.transforms ? *c.transforms : transforms::TransformRegistry::builtin();
           return transforms::trend(c.input(0), reg, str(c.args, "transform"), params_from_json(c.args.at("params")));
         }});

  r.add({"annual_to_monthly", "Carries values observed in the placement month over a validity window.",
         {in("a", "panel with annual placement")}, std::nullopt,
         {ranged(param("placement_month", PT::integer, true, "calendar month of placement (1-12)"), 1.0, 12.0),
          with_default(ranged(param("offset", PT::integer, false, "months until the value becomes usable"), 0.0,
                              std::nullopt),
                       0),
          ranged(param("valid_months", PT::integer, true, "months the value stays live"), 1.0, std::nullopt)},
         ValueKind::panel, {},
         [](const OpCall& c) {
           return transforms::annual_to_monthly(c.input(0), integer(c.args, "placement_month"),
                                                integer(c.args, "offset"), integer(c.args, "valid_months"));
         }});

  r.add({"select_bin", "1 where the bin code equals `bin`, 0 for other codes, missing otherwise.",
         {in("bins", "integer bin codes")}, std::nullopt,
         {ranged(param("bin", PT::integer, true, "bin code to select"), 1.0, std::nullopt)}, ValueKind::panel, {},
         [](const OpCall& c) { return transforms::select_bin(c.input(0), integer(c.args, "bin")); }});

  r.add({"weights_from_membership", "Long-only weights over members, proportional to weight_by.",
         {in("member", "1/0 membership"), in("weight_by", "weighting panel (equal weights when omitted)",
                                             ValueKind::panel, true)},
         std::nullopt, {}, ValueKind::panel, {},
         [](const OpCall& c) {
           return portfolio::weights_from_membership(c.input(0), c.optional_input(1), c.flags);
         }});

  r.add({"portfolio_return", "Weights at t earn returns at t+1; stamped at t+1.",
         {in("weights", "portfolio weights"), in("returns", "simple returns")}, std::nullopt, {}, ValueKind::series,
         {}, [](const OpCall& c) { return series_panel(portfolio::portfolio_return(c.input(0), c.input(1))); }});

  r.add({"independent_sort_2x3", "Membership of one cell of the independent 2x3 size/value sort.",
         {in("size_bins", "size bins 1..2"), in("value_bins", "value bins 1..3")}, std::nullopt,
         {choice("leg", {"SG", "SN", "SV", "BG", "BN", "BV"}, std::nullopt, "sort cell")}, ValueKind::panel, {},
         [](const OpCall& c) {
           return portfolio::independent_sort_2x3(c.input(0), c.input(1), portfolio::parse_leg(str(c.args, "leg")));
         }});

  r.add({"spread_2x3", "0.5 (SV + BV) - 0.5 (SG + BG).",
         {in("SG", "small growth", ValueKind::series), in("SN", "small neutral", ValueKind::series),
          in("SV", "small value", ValueKind::series), in("BG", "big growth", ValueKind::series),
          in("BN", "big neutral", ValueKind::series), in("BV", "big value", ValueKind::series)},
         std::nullopt, {}, ValueKind::series, {},
         [](const OpCall& c) {
           std::array<Series, 6> legs;
           std::array<const Series*, 6> ptrs{};
           for (std::size_t k = 0; k < 6; ++k) {
             legs[k] = to_series(c.input(k));
             ptrs[k] = &legs[k];
           }
           return series_panel(portfolio::spread_2x3(ptrs));
         }});

  r.add({"spread_topbottom", "Top-leg return minus bottom-leg return.",
         {in("top", "long leg", ValueKind::series), in("bottom", "short leg", ValueKind::series)}, std::nullopt, {},
         ValueKind::series, {},
         [](const OpCall& c) {
           return series_panel(portfolio::spread_topbottom(to_series(c.input(0)), to_series(c.input(1))));
         }});

  r.add({"turnover", "Half the sum of absolute weight changes between consecutive dates.",
         {in("weights", "portfolio weights")}, std::nullopt, {}, ValueKind::series, {},
         [](const OpCall& c) { return series_panel(portfolio::turnover(c.input(0))); }});

  r.add({"book_equity", "seq - coalesce(pstkrv, pstkl, pstk, 0); non-positive results are missing.",
         {in("seq", "stockholders' equity"), in("pstkrv", "preferred, redemption value"),
          in("pstkl", "preferred, liquidating value"), in("pstk", "preferred, par value")},
         std::nullopt, {}, ValueKind::panel, {},
         [](const OpCall& c) { return ingest::book_equity(c.input(0), c.input(1), c.input(2), c.input(3)); }});

  r.add({"book_to_market", "December book equity over December CAPCO, live from June for 12 months.",
         {in("be", "book equity at fiscal-end months"), in("capco", "company market equity")}, std::nullopt, {},
         ValueKind::panel, {},
         [](const OpCall& c) { return ingest::book_to_market(c.input(0), c.input(1)); }});

  return r;
}

json substitute(const json& value, const json& params, std::size_t step, const std::string& field) {
  if (value.is_string()) {
    const auto s = value.get<std::string>();
    if (s.size() > 1 && s[0] == '$') {
      const auto key = s.substr(1);
      auto it = params.find(key);
      if (it == params.end()) throw SpecError(step, field, "unknown recipe parameter '" + key + "'");
      return *it;
    }
    return value;
  }
  if (value.is_array()) {
    json out = json::array();
    for (std::size_t k = 0; k < value.size(); ++k) {
      out.push_back(substitute(value[k], params, step, field + "[" + std::to_string(k) + "]"));
    }
    return out;
  }
  return value;
}

}  // namespace

const OpRegistry& OpRegistry::builtin() {
  static const OpRegistry registry = make_builtin();
  return registry;
}

std::vector<std::string> PipelineSpec::source_names() const {
  std::set<std::string> produced;
  std::vector<std::string> out;
  for (const auto& step : steps) {
    for (const auto& name : step.inputs) {
      if (!produced.count(name) && std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
    produced.insert(step.output);
  }
  return out;
}

std::string PipelineSpec::describe() const {
  std::ostringstream os;
  os << "recipe " << name << " (" << steps.size() << " steps)\n";
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const auto& s = steps[k];
    os << "  " << (k + 1) << ". " << s.output << " = " << s.op << "(";
    for (std::size_t j = 0; j < s.inputs.size(); ++j) os << (j ? ", " : "") << s.inputs[j];
    os << ")";
    if (!s.args.empty()) os << " " << s.args.dump();
    os << '\n';
  }
  return os.str();
}

PipelineSpec parse_and_validate(const json& recipe, const OpRegistry& ops,
                                const std::optional<std::set<std::string>>& sources, const json& overrides) {
  if (!recipe.is_object()) throw SpecError(std::nullopt, "", "recipe must be a JSON object");
  for (const auto& [key, value] : recipe.items()) {
    if (key != "name" && key != "params" && key != "steps" && key != "description") {
      throw SpecError(std::nullopt, key, "unknown recipe field");
    }
  }
  PipelineSpec spec;
  if (auto it = recipe.find("name"); it != recipe.end()) {
    if (!it->is_string()) throw SpecError(std::nullopt, "name", "expected a string");
    spec.name = it->get<std::string>();
  }
  if (auto it = recipe.find("params"); it != recipe.end()) {
    if (!it->is_object()) throw SpecError(std::nullopt, "params", "expected an object");
    spec.params = *it;
  }
  if (!overrides.is_object()) throw SpecError(std::nullopt, "params", "overrides must be an object");
  for (const auto& [key, value] : overrides.items()) spec.params[key] = value;

  auto steps_it = recipe.find("steps");
  if (steps_it == recipe.end()) throw SpecError(std::nullopt, "steps", "required field is missing");
  if (!steps_it->is_array()) throw SpecError(std::nullopt, "steps", "expected an array");

  std::map<std::string, ValueKind> produced;
  for (std::size_t k = 0; k < steps_it->size(); ++k) {
    const json& s = (*steps_it)[k];
    if (!s.is_object()) throw SpecError(k, "", "step must be an object");
    for (const auto& [key, value] : s.items()) {
      if (key != "op" && key != "args" && key != "inputs" && key != "output") {
        throw SpecError(k, key, "unknown step field");
      }
    }
    Step step;
    auto op_it = s.find("op");
    if (op_it == s.end() || !op_it->is_string()) throw SpecError(k, "op", "expected an operator name");
    step.op = op_it->get<std::string>();
    const OpDef* def = ops.find(step.op);
    if (!def) throw SpecError(k, "op", "unknown operator '" + step.op + "'");

    auto out_it = s.find("output");
    if (out_it == s.end() || !out_it->is_string() || out_it->get<std::string>().empty()) {
      throw SpecError(k, "output", "expected a non-empty output name");
    }
    step.output = out_it->get<std::string>();
    if (produced.count(step.output) || (sources && sources->count(step.output))) {
      throw SpecError(k, "output", "duplicate output name '" + step.output + "'");
    }

    json inputs = json::array();
    if (auto in_it = s.find("inputs"); in_it != s.end()) {
      if (!in_it->is_array()) throw SpecError(k, "inputs", "expected an array of panel names");
      inputs = substitute(*in_it, spec.params, k, "inputs");
    }
    validate_arity(*def, inputs.size(), k);
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      const std::string field = "inputs[" + std::to_string(j) + "]";
      if (!inputs[j].is_string()) throw SpecError(k, field, "expected a panel name");
      const auto name = inputs[j].get<std::string>();
      auto prior = produced.find(name);
      if (prior == produced.end()) {
        if (sources && !sources->count(name)) {
          throw SpecError(k, field, "'" + name + "' is neither a prior step output nor a source panel");
        }
      } else {
        const ValueKind wanted = j < def->inputs.size() ? def->inputs[j].kind : def->variadic->kind;
        if (wanted == ValueKind::series && prior->second != ValueKind::series) {
          throw SpecError(k, field, "'" + name + "' is a panel but '" + step.op + "' expects a series here");
        }
      }
      step.inputs.push_back(name);
    }

    json args = json::object();
    if (auto a_it = s.find("args"); a_it != s.end()) {
      if (!a_it->is_object()) throw SpecError(k, "args", "expected an object");
      for (const auto& [key, value] : a_it->items()) args[key] = substitute(value, spec.params, k, "args." + key);
    }
    step.args = validate_args(*def, args, k);

    produced.emplace(step.output, def->returns);
    spec.steps.push_back(std::move(step));
  }
  return spec;
}

PipelineSpec parse_recipe(std::string_view recipe_text, const OpRegistry& ops,
                                const std::optional<std::set<std::string>>& sources) {
  json doc;
  try {
    doc = json::parse(recipe_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("recipe is not valid JSON: ") + e.what());
  }
  return parse_and_validate(doc, ops, sources);
}

PipelineSpec load_recipe(const std::filesystem::path& path, const OpRegistry& ops,
                         const std::optional<std::set<std::string>>& sources) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recipe " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_recipe(buf.str(), ops, sources);
  } catch (const ValidationError& e) {
    throw ValidationError(path.filename().string() + ": " + e.what());
  }
}

ParamMap provenance_params(const json& args) {
  ParamMap out;
  for (const auto& [key, v] : args.items()) {
    if (v.is_boolean()) out[key] = v.get<bool>();
    else if (v.is_number_integer()) out[key] = v.get<std::int64_t>();
    else if (v.is_number()) out[key] = v.get<double>();
    else if (v.is_string()) out[key] = v.get<std::string>();
    else out[key] = v.dump();
  }
  return out;
}

std::string call_op(PanelRegistry& registry, const OpDef& def, const std::vector<std::string>& input_ids,
                    const json& validated_args, std::optional<std::string> output, Flags* flags,
                    const transforms::TransformRegistry* transforms) {
  validate_arity(def, input_ids.size());
  OpCall call;
  call.args = validated_args;
  call.flags = flags;
  call.transforms = transforms;
  for (std::size_t j = 0; j < input_ids.size(); ++j) {
    PanelPtr p = registry.get(input_ids[j]);
    const ValueKind wanted = j < def.inputs.size() ? def.inputs[j].kind : def.variadic->kind;
    if (wanted == ValueKind::series && !p->is_series()) {
      throw SpecError(std::nullopt, "inputs[" + std::to_string(j) + "]",
                      "'" + input_ids[j] + "' is not a series (one-column panel)");
    }
    if (p->count_nonmissing() == 0) throw ComputeError("input '" + input_ids[j] + "' has no non-missing values");
    call.inputs.push_back(std::move(p));
  }
  Panel result = def.run(call);
  Provenance prov;
  prov.op_name = def.name;
  prov.params = provenance_params(validated_args);
  prov.input_ids = input_ids;
  return registry.add(std::move(result).with_identity({}, std::move(prov)), std::move(output));
}

json RunResult::log_json(bool timings) const {
  json j;
  j["steps"] = json::array();
  for (const auto& s : log) {
    json e;
    e["step"] = s.index;
    e["op"] = s.op;
    e["output"] = s.output;
    e["panel_id"] = s.panel_id;
    e["nonnull_rows"] = s.nonnull_rows;
    e["nonnull_months"] = s.nonnull_months;
    if (timings) e["elapsed_ms"] = std::round(s.elapsed_ms * 1000.0) / 1000.0;
    e["warnings"] = s.warnings;
    j["steps"].push_back(std::move(e));
  }
  j["outputs"] = outputs;
  j["status"] = failure ? "failed" : "ok";
  if (failure) {
    j["failure"] = {{"step", failure->index}, {"op", failure->op}, {"output", failure->output},
                    {"message", failure->message}};
  }
  return j;
}

RunResult execute(const PipelineSpec& spec, PanelRegistry& registry, const OpRegistry& ops,
                  const ExecuteOptions& options) {
  RunResult result;
  for (std::size_t k = 0; k < spec.steps.size(); ++k) {
    const Step& step = spec.steps[k];
    const auto start = std::chrono::steady_clock::now();
    try {
      const OpDef& def = ops.get(step.op);
      std::vector<std::string> ids;
      for (const auto& name : step.inputs) {
        auto it = result.outputs.find(name);
        ids.push_back(it != result.outputs.end() ? it->second : name);
      }
      OpCall call;
      call.args = step.args;
      Flags flags;
      call.flags = &flags;
      call.transforms = options.transforms;
      for (std::size_t j = 0; j < ids.size(); ++j) {
        if (!registry.contains(ids[j])) {
          throw ValidationError("input '" + step.inputs[j] + "' is not registered");
        }
        PanelPtr p = registry.get(ids[j]);
        const ValueKind wanted = j < def.inputs.size() ? def.inputs[j].kind : def.variadic->kind;
        if (wanted == ValueKind::series && !p->is_series()) {
          throw ValidationError("input '" + step.inputs[j] + "' is not a series");
        }
        if (p->count_nonmissing() == 0) {
          throw ComputeError("input '" + step.inputs[j] + "' has no non-missing values");
        }
        call.inputs.push_back(std::move(p));
      }
      Panel out = def.run(call);
      if (options.post_step) out = options.post_step(step, std::move(out));
      Provenance prov;
      prov.op_name = def.name;
      prov.params = provenance_params(step.args);
      prov.input_ids = ids;
      std::optional<std::string> name;
      if (options.name_outputs) name = step.output;
      const std::string id = registry.add(std::move(out).with_identity({}, std::move(prov)), name);
      result.outputs[step.output] = id;

      const PanelPtr stored = registry.get(id);
      StepLog log;
      log.index = k + 1;
      log.op = step.op;
      log.output = step.output;
      log.panel_id = id;
      log.nonnull_rows = stored->count_nonmissing();
      log.nonnull_months = stored->count_nonmissing_dates();
      log.elapsed_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      log.warnings = std::move(flags.warnings);
      result.log.push_back(std::move(log));
    } catch (const Error& e) {
      result.failure = StepFailure{k + 1, step.op, step.output, e.what()};
      break;
    }
  }
  return result;
}

std::vector<CatalogEntry> parse_catalog(const json& doc) {
  const json& items = doc.is_object() && doc.contains("items") ? doc.at("items") : doc;
  if (!items.is_array()) throw ValidationError("catalog must be an array of entries");
  std::vector<CatalogEntry> out;
  std::set<std::string> seen;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const json& e = items[k];
    try {
      CatalogEntry entry{e.at("item_id").get<std::string>(), e.at("description").get<std::string>(),
                         e.at("source_table").get<std::string>()};
      if (entry.source_table != "monthly" && entry.source_table != "annual") {
        throw ValidationError("source_table must be 'monthly' or 'annual'");
      }
      if (!seen.insert(entry.item_id).second) throw ValidationError("duplicate item_id '" + entry.item_id + "'");
      out.push_back(std::move(entry));
    } catch (const json::exception& ex) {
      throw ValidationError("catalog entry " + std::to_string(k) + ": " + ex.what());
    } catch (const ValidationError& ex) {
      throw ValidationError("catalog entry " + std::to_string(k) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<CatalogEntry> load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog " + path.string());
  try {
    return parse_catalog(json::parse(in));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

namespace {

std::set<std::string> tokens(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

}  // namespace

std::vector<CatalogMatch> catalog_lookup(std::string_view query, const std::vector<CatalogEntry>& catalog) {
  const auto q = tokens(query);
  std::vector<CatalogMatch> out;
  for (const auto& entry : catalog) {
    auto words = tokens(entry.description);
    for (const auto& t : tokens(entry.item_id)) words.insert(t);
    int score = 0;
    for (const auto& t : q) score += words.count(t) ? 1 : 0;
    if (score > 0) out.push_back({entry, score});
  }
  std::sort(out.begin(), out.end(), [](const CatalogMatch& a, const CatalogMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entry.item_id < b.entry.item_id;
  });
  return out;
}

}  // namespace factorlab::pipeline
