#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "design.hpp"
#include "estimator.hpp"
#include "mlp.hpp"

namespace dipce {

// The five benchmark method names accepted by a grid config.
extern const std::vector<std::string> kKnownMethods;

// Full experiment description: the design template plus the sparsity grid,
// replication count, method list and every estimator / trainer knob. The
// per-cell seeds are a pure function of (seed, sparsity pair, replication).
struct GridConfig {
  DesignSpec design;  // sparsity and seed fields are overwritten per cell
  std::vector<double> sparsity_main_options;
  std::vector<double> sparsity_interaction_options;
  int n_replications = 0;
  std::vector<std::string> methods;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.2;  // respondents reserved for evaluation
  double alpha = 0.05;            // regression test level
  BootstrapConfig bootstrap;      // seed overwritten per cell
  MlpConfig mlp;                  // input_dim and seed overwritten per cell
  std::string output_dir;
  int jobs = 1;

  void validate() const;  // throws Error(ConfigInvalid)
  // Hash of the canonical serialized form; changes iff any field changes.
  std::string fingerprint() const;
};

// Parses the JSON config file; unknown keys are errors so typos cannot
// silently fall back to defaults.
GridConfig load_grid_config(const std::string& path);
GridConfig grid_config_from_json_text(const std::string& text);

// Standalone simulation spec: the design-object keys plus sparsity_main,
// sparsity_interaction and seed.
DesignSpec design_spec_from_json_text(const std::string& text);

struct GridPlan {
  std::vector<std::pair<double, double>> sparsity_pairs;
  long n_cells = 0;                 // pairs x replications
  long tasks_per_cell = 0;
  long profile_observations = 0;    // grand total, two profiles per task
};

GridPlan plan_grid(const GridConfig& config);

struct CellId {
  double sparsity_main = 0.0;
  double sparsity_interaction = 0.0;
  int replication = 0;

  std::string dir_name() const;
  std::uint64_t cell_seed(std::uint64_t master) const;
};

// One scored metric of one method within a cell; empty value = undefined
// (zero-denominator rate), written as NA.
struct MetricRow {
  std::string method;
  std::string effect_kind;  // "main" / "interaction" / "all"
  std::string metric;
  std::optional<double> value;
};

// Everything below the grid level: seed, evaluation split and the estimator /
// trainer knobs for running one method on one dataset.
struct MethodOptions {
  std::uint64_t seed = 0;
  double holdout_fraction = 0.2;
  double alpha = 0.05;
  BootstrapConfig bootstrap;  // seed overwritten from `seed`
  MlpConfig mlp;              // input_dim and seed overwritten

  void validate() const;
};

// All keys optional; defaults above.
MethodOptions method_options_from_json_text(const std::string& text);

struct MethodRun {
  std::vector<EffectEstimate> estimates;
  std::vector<MetricRow> metrics;     // the nine rows a cell records
  std::string report_json;            // accuracies, confusion, fit diagnostics
  std::optional<MlpModel> model;      // engaged for the two encoding methods
};

// Splits respondents, trains or fits the method's model, estimates effects on
// the held-out encoding and scores against the dataset's truth. With
// options.seed equal to a cell seed this reproduces that cell's artifacts for
// the method exactly.
MethodRun run_method(const Dataset& ds, const std::string& method,
                     const MethodOptions& options);

// Simulates one cell, runs every configured method on it and persists
// dataset, truth, checkpoints, estimate tables, per-method reports,
// metrics.csv and a done.json marker under cell_dir. Returns the metric rows
// in deterministic order.
std::vector<MetricRow> run_cell(const GridConfig& config, const CellId& id,
                                const std::string& cell_dir);

struct CellFailure {
  CellId id;
  std::string message;
};

struct RunSummary {
  std::string fingerprint;
  long cells_total = 0;
  long cells_run = 0;
  long cells_cached = 0;
  std::vector<CellFailure> failures;
  std::string aggregate_path;  // aggregated metrics.csv ("" if nothing ran)
};

// Executes every cell on a bounded worker pool (config.jobs threads; within a
// cell everything is single-threaded), then aggregates across replications
// into <output_dir>/metrics.csv. With resume, cells whose done.json carries
// the current fingerprint are loaded instead of recomputed. Per-cell failures
// are recorded and skipped; aggregation covers the cells that succeeded.
RunSummary run_grid(const GridConfig& config, bool resume);

// Reads <output_dir>/metrics.csv and writes fig1.json (FPR/FNR by effect kind
// x method x sparsity pair), fig3.json (held-out accuracy by method x pair)
// and fig4.json (train/test accuracy of the two encodings, with the response
// accuracy ceiling annotated).
void emit_figures(const GridConfig& config);

}  // namespace dipce
