#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "factorlab/error.hpp"
#include "factorlab/panel.hpp"
#include "factorlab/registry.hpp"
#include "factorlab/transforms.hpp"

namespace factorlab::pipeline {

/// Validation failure located at a step (when known) and a field path such
/// as `args.hi_pct` or `inputs[1]`.
class SpecError : public ValidationError {
 public:
  SpecError(std::optional<std::size_t> step, std::string field, const std::string& message);

  std::optional<std::size_t> step() const { return step_; }
  const std::string& field() const { return field_; }
  /// Last component of the field path (`hi_pct` for `args.hi_pct`).
  std::string param() const;

 private:
  std::optional<std::size_t> step_;
  std::string field_;
};

enum class ParamType { integer, number, boolean, string, number_list, object };

std::string_view type_name(ParamType type);

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::number;
  bool required = false;
  std::optional<double> min;
  std::optional<double> max;
  bool min_exclusive = false;
  bool max_exclusive = false;
  std::vector<std::string> choices;
  nlohmann::json default_value;
  std::string doc;
};

enum class ValueKind { panel, series };

struct InputSpec {
  std::string name;
  ValueKind kind = ValueKind::panel;
  bool optional = false;
  std::string doc;
};

/// What an operator implementation receives.
struct OpCall {
  std::vector<PanelPtr> inputs;  // null for absent optional inputs
  nlohmann::json args;           // validated, defaults filled in
  Flags* flags = nullptr;
  const transforms::TransformRegistry* transforms = nullptr;

  const Panel& input(std::size_t k) const { return *inputs.at(k); }
  const Panel* optional_input(std::size_t k) const { return k < inputs.size() ? inputs[k].get() : nullptr; }
};

struct OpDef {
  std::string name;
  std::string description;
  std::vector<InputSpec> inputs;
  /// Extra inputs of this kind are accepted after the declared ones.
  std::optional<InputSpec> variadic;
  std::vector<ParamSpec> params;
  ValueKind returns = ValueKind::panel;
  /// Cross-field checks on validated args; throws SpecError with an args.* field.
  std::function<void(const nlohmann::json& args)> check;
  std::function<Panel(const OpCall& call)> run;

  std::size_t min_inputs() const;
  std::optional<std::size_t> max_inputs() const;
  /// JSON-schema style description of the arguments object.
  nlohmann::json input_schema() const;
};

class OpRegistry {
 public:
  void add(OpDef def);
  const OpDef* find(std::string_view name) const;
  const OpDef& get(std::string_view name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return ops_.size(); }

  /// Every panel, portfolio and ingest operator.
  static const OpRegistry& builtin();

 private:
  std::map<std::string, OpDef, std::less<>> ops_;
};

/// Checks types, ranges, choices and unknown keys, fills defaults and runs the
/// operator's cross-field check. Throws SpecError with `args.<name>` fields.
nlohmann::json validate_args(const OpDef& def, const nlohmann::json& args, std::optional<std::size_t> step = {});

/// Checks the number of inputs. Throws SpecError on `inputs`.
void validate_arity(const OpDef& def, std::size_t n_inputs, std::optional<std::size_t> step = {});

struct Step {
  std::string op;
  nlohmann::json args = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::string output;
};

struct PipelineSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  std::vector<Step> steps;

  /// Names referenced by some step that no step produces.
  std::vector<std::string> source_names() const;
  /// Dry-run plan, one line per step.
  std::string describe() const;
};

/// Parses `{name, params, steps: [{op, args, inputs, output}]}`. String args
/// of the form `$key` are replaced by `params[key]` (after `overrides`).
/// When `sources` is given, every input must be a prior output or one of
/// those names.
PipelineSpec parse_and_validate(const nlohmann::json& recipe, const OpRegistry& ops = OpRegistry::builtin(),
                                const std::optional<std::set<std::string>>& sources = std::nullopt,
                                const nlohmann::json& overrides = nlohmann::json::object());
/// Same as parse_and_validate on the parsed text.
PipelineSpec parse_recipe(std::string_view recipe_text, const OpRegistry& ops = OpRegistry::builtin(),
                                const std::optional<std::set<std::string>>& sources = std::nullopt);
PipelineSpec load_recipe(const std::filesystem::path& path, const OpRegistry& ops = OpRegistry::builtin(),
                         const std::optional<std::set<std::string>>& sources = std::nullopt);

/// Flattens validated args into provenance params: scalars as-is, lists and
/// objects as compact JSON text.
ParamMap provenance_params(const nlohmann::json& args);

/// Runs one operator on registered panels and registers the result under
/// `output` (or a generated id). Throws ComputeError when an input has no
/// non-missing value.
std::string call_op(PanelRegistry& registry, const OpDef& def, const std::vector<std::string>& input_ids,
                    const nlohmann::json& validated_args, std::optional<std::string> output, Flags* flags = nullptr,
                    const transforms::TransformRegistry* transforms = nullptr);

struct StepLog {
  std::size_t index = 0;  // 1-based
  std::string op;
  std::string output;
  std::string panel_id;
  std::size_t nonnull_rows = 0;
  std::size_t nonnull_months = 0;
  double elapsed_ms = 0.0;
  std::vector<std::string> warnings;
};

struct StepFailure {
  std::size_t index = 0;  // 1-based
  std::string op;
  std::string output;
  std::string message;
};

struct RunResult {
  std::map<std::string, std::string> outputs;  // output name -> panel id
  std::vector<StepLog> log;
  std::optional<StepFailure> failure;

  bool ok() const { return !failure; }
  /// With `timings` false the elapsed times are omitted, so the document is
  /// reproducible.
  nlohmann::json log_json(bool timings = true) const;
};

struct ExecuteOptions {
  /// Register outputs under their step names; otherwise ids are generated.
  bool name_outputs = true;
  const transforms::TransformRegistry* transforms = nullptr;
  /// Applied to a step's result before registration.
  std::function<Panel(const Step& step, Panel result)> post_step;
};

/// Runs the steps in order. A failing step stops the run; earlier outputs
/// stay registered and are listed in the result.
RunResult execute(const PipelineSpec& spec, PanelRegistry& registry, const OpRegistry& ops = OpRegistry::builtin(),
                  const ExecuteOptions& options = {});

struct CatalogEntry {
  std::string item_id;
  std::string description;
  std::string source_table;  // "monthly" or "annual"
};

struct CatalogMatch {
  CatalogEntry entry;
  int score = 0;
};

std::vector<CatalogEntry> parse_catalog(const nlohmann::json& doc);
std::vector<CatalogEntry> load_catalog(const std::filesystem::path& path);

/// Ranks entries by the number of distinct query tokens found among the
/// entry's id and description tokens (case-insensitive); ties by item_id.
/// Entries scoring zero are left out.
std::vector<CatalogMatch> catalog_lookup(std::string_view query, const std::vector<CatalogEntry>& catalog);

}  // namespace factorlab::pipeline
