#include "dipce.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "design.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "experiment.hpp"
#include "metrics.hpp"

using nlohmann::json;

struct dipce_dataset {
  dipce::Dataset impl;
};

struct dipce_estimates {
  std::vector<dipce::EffectEstimate> impl;
};

namespace {

thread_local std::string g_last_error;

dipce_status status_of(dipce::ErrorCode code) {
  using dipce::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return DIPCE_ERR_INVALID_ARGUMENT;
    case ErrorCode::InvalidSpec: return DIPCE_ERR_INVALID_SPEC;
    case ErrorCode::ConfigInvalid: return DIPCE_ERR_CONFIG_INVALID;
    case ErrorCode::Parse: return DIPCE_ERR_PARSE;
    case ErrorCode::Io: return DIPCE_ERR_IO;
    case ErrorCode::SchemaMismatch: return DIPCE_ERR_SCHEMA_MISMATCH;
    case ErrorCode::ShapeMismatch: return DIPCE_ERR_SHAPE_MISMATCH;
    case ErrorCode::DegenerateData: return DIPCE_ERR_DEGENERATE_DATA;
    case ErrorCode::EmptySubset: return DIPCE_ERR_EMPTY_SUBSET;
    case ErrorCode::InsufficientBootstrap: return DIPCE_ERR_INSUFFICIENT_BOOTSTRAP;
    case ErrorCode::MissingInteraction: return DIPCE_ERR_MISSING_INTERACTION;
    case ErrorCode::RankDeficient: return DIPCE_ERR_RANK_DEFICIENT;
    case ErrorCode::CoverageMismatch: return DIPCE_ERR_COVERAGE_MISMATCH;
    case ErrorCode::LengthMismatch: return DIPCE_ERR_LENGTH_MISMATCH;
    case ErrorCode::EmptyInput: return DIPCE_ERR_EMPTY_INPUT;
    case ErrorCode::InsufficientReplications:
      return DIPCE_ERR_INSUFFICIENT_REPLICATIONS;
    case ErrorCode::MissingAggregate: return DIPCE_ERR_MISSING_AGGREGATE;
    case ErrorCode::Numeric: return DIPCE_ERR_NUMERIC;
  }
  return DIPCE_ERR_UNKNOWN;
}

// Runs the body, translating every exception into a status + message.
template <typename Fn>
dipce_status guarded(Fn&& fn) {
  try {
    fn();
    return DIPCE_OK;
  } catch (const dipce::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DIPCE_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown failure";
    return DIPCE_ERR_UNKNOWN;
  }
}

dipce_status null_pointer(const char* what) {
  g_last_error = std::string(what) + " must not be NULL";
  return DIPCE_ERR_NULL_POINTER;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* dipce_version(void) {
#ifdef DIPCE_VERSION_STRING
  return DIPCE_VERSION_STRING;
#else
  return "0.0.0";
#endif
}

const char* dipce_last_error(void) { return g_last_error.c_str(); }

void dipce_string_free(char* s) { std::free(s); }

dipce_status dipce_simulate(const char* spec_json, dipce_dataset** out) {
  if (!spec_json) return null_pointer("spec_json");
  if (!out) return null_pointer("out");
  return guarded([&] {
    const dipce::DesignSpec spec = dipce::design_spec_from_json_text(spec_json);
    auto handle = std::make_unique<dipce_dataset>();
    handle->impl = dipce::generate_dataset(spec);
    *out = handle.release();
  });
}

dipce_status dipce_dataset_load(const char* tasks_csv_path,
                                const char* truth_json_path,
                                dipce_dataset** out) {
  if (!tasks_csv_path) return null_pointer("tasks_csv_path");
  if (!truth_json_path) return null_pointer("truth_json_path");
  if (!out) return null_pointer("out");
  return guarded([&] {
    auto handle = std::make_unique<dipce_dataset>();
    handle->impl = dipce::load_dataset(tasks_csv_path, truth_json_path);
    *out = handle.release();
  });
}

dipce_status dipce_truth_load(const char* truth_json_path, dipce_dataset** out) {
  if (!truth_json_path) return null_pointer("truth_json_path");
  if (!out) return null_pointer("out");
  return guarded([&] {
    auto handle = std::make_unique<dipce_dataset>();
    handle->impl = dipce::load_truth(truth_json_path);
    *out = handle.release();
  });
}

dipce_status dipce_dataset_save(const dipce_dataset* ds,
                                const char* tasks_csv_path,
                                const char* truth_json_path) {
  if (!ds) return null_pointer("ds");
  if (!tasks_csv_path) return null_pointer("tasks_csv_path");
  if (!truth_json_path) return null_pointer("truth_json_path");
  return guarded([&] {
    dipce::save_tasks_csv(ds->impl, tasks_csv_path);
    dipce::save_truth_json(ds->impl, truth_json_path);
  });
}

dipce_status dipce_dataset_task_count(const dipce_dataset* ds, long* out) {
  if (!ds) return null_pointer("ds");
  if (!out) return null_pointer("out");
  *out = long(ds->impl.tasks.size());
  return DIPCE_OK;
}

void dipce_dataset_free(dipce_dataset* ds) { delete ds; }

dipce_status dipce_run_method(const dipce_dataset* ds, const char* method,
                              const char* options_json,
                              dipce_estimates** out_estimates,
                              char** out_report_json) {
  if (!ds) return null_pointer("ds");
  if (!method) return null_pointer("method");
  if (!out_estimates) return null_pointer("out_estimates");
  return guarded([&] {
    const dipce::MethodOptions options =
        options_json ? dipce::method_options_from_json_text(options_json)
                     : dipce::MethodOptions{};
    dipce::MethodRun run = dipce::run_method(ds->impl, method, options);
    auto handle = std::make_unique<dipce_estimates>();
    handle->impl = std::move(run.estimates);
    if (out_report_json) *out_report_json = copy_string(run.report_json);
    *out_estimates = handle.release();
  });
}

dipce_status dipce_estimates_count(const dipce_estimates* est, long* out) {
  if (!est) return null_pointer("est");
  if (!out) return null_pointer("out");
  *out = long(est->impl.size());
  return DIPCE_OK;
}

dipce_status dipce_estimates_get(const dipce_estimates* est, long index,
                                 dipce_effect* out) {
  if (!est) return null_pointer("est");
  if (!out) return null_pointer("out");
  if (index < 0 || index >= long(est->impl.size())) {
    g_last_error = "estimate index out of range";
    return DIPCE_ERR_INVALID_ARGUMENT;
  }
  const dipce::EffectEstimate& e = est->impl[std::size_t(index)];
  out->kind = e.kind == dipce::EffectKind::Main ? 0 : 1;
  out->attribute = e.attribute;
  out->level = e.level;
  out->context_level = e.context_level ? *e.context_level : -1;
  out->point = e.point;
  out->ci_low = e.ci_low;
  out->ci_high = e.ci_high;
  out->classification = int(e.classification);
  return DIPCE_OK;
}

dipce_status dipce_estimates_save(const dipce_estimates* est,
                                  const char* csv_path,
                                  const dipce_dataset* truth) {
  if (!est) return null_pointer("est");
  if (!csv_path) return null_pointer("csv_path");
  return guarded([&] {
    dipce::save_estimates_csv(est->impl, csv_path,
                              truth ? &truth->impl.truth : nullptr);
  });
}

dipce_status dipce_estimates_load(const char* csv_path, dipce_estimates** out) {
  if (!csv_path) return null_pointer("csv_path");
  if (!out) return null_pointer("out");
  return guarded([&] {
    auto handle = std::make_unique<dipce_estimates>();
    handle->impl = dipce::load_estimates_csv(csv_path);
    *out = handle.release();
  });
}

void dipce_estimates_free(dipce_estimates* est) { delete est; }

dipce_status dipce_score(const dipce_estimates* est, const dipce_dataset* truth,
                         dipce_effect_scope scope, dipce_confusion* out) {
  if (!est) return null_pointer("est");
  if (!truth) return null_pointer("truth");
  if (!out) return null_pointer("out");
  return guarded([&] {
    dipce::EffectScope cpp_scope;
    switch (scope) {
      case DIPCE_SCOPE_MAIN: cpp_scope = dipce::EffectScope::Main; break;
      case DIPCE_SCOPE_INTERACTION:
        cpp_scope = dipce::EffectScope::Interaction;
        break;
      case DIPCE_SCOPE_ALL: cpp_scope = dipce::EffectScope::All; break;
      default:
        dipce::fail(dipce::ErrorCode::InvalidArgument, "unknown effect scope");
    }
    const dipce::ConfusionSummary s =
        dipce::score_classifications(est->impl, truth->impl.truth, cpp_scope);
    out->tp = s.true_positives;
    out->fp = s.false_positives;
    out->fn = s.false_negatives;
    out->tn = s.true_negatives;
    const auto fpr = s.false_positive_rate();
    const auto fnr = s.false_negative_rate();
    out->fpr = fpr ? *fpr : 0.0;
    out->fnr = fnr ? *fnr : 0.0;
    out->fpr_defined = fpr ? 1 : 0;
    out->fnr_defined = fnr ? 1 : 0;
    out->sign_accuracy = s.sign_accuracy();
  });
}

dipce_status dipce_run_grid(const char* config_json, const char* output_dir,
                            int jobs, int resume, long* out_cells_failed,
                            char** out_summary_json) {
  if (!config_json) return null_pointer("config_json");
  return guarded([&] {
    dipce::GridConfig config = dipce::grid_config_from_json_text(config_json);
    if (output_dir) config.output_dir = output_dir;
    if (jobs > 0) config.jobs = jobs;
    const dipce::RunSummary summary = dipce::run_grid(config, resume != 0);
    if (out_cells_failed) *out_cells_failed = long(summary.failures.size());
    if (out_summary_json) {
      json failures = json::array();
      for (const auto& f : summary.failures) {
        failures.push_back(
            {{"cell", f.id.dir_name()}, {"error", f.message}});
      }
      const json j{{"fingerprint", summary.fingerprint},
                   {"cells_total", summary.cells_total},
                   {"cells_run", summary.cells_run},
                   {"cells_cached", summary.cells_cached},
                   {"failures", failures},
                   {"aggregate_path", summary.aggregate_path}};
      *out_summary_json = copy_string(j.dump(2));
    }
  });
}

dipce_status dipce_emit_figures(const char* config_json, const char* output_dir) {
  if (!config_json) return null_pointer("config_json");
  return guarded([&] {
    dipce::GridConfig config = dipce::grid_config_from_json_text(config_json);
    if (output_dir) config.output_dir = output_dir;
    dipce::emit_figures(config);
  });
}

}  // extern "C"
