#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

#include "csv.hpp"
#include "encoding.hpp"
#include "errors.hpp"
#include "linear_model.hpp"
#include "metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dipce {

const std::vector<std::string> kKnownMethods = {
    "dipce", "dipce-per-profile-ablation", "lm", "lm-bon", "lm-bh"};

namespace {

constexpr const char* kMethodDipce = "dipce";
constexpr const char* kMethodAblation = "dipce-per-profile-ablation";

bool is_lm_method(const std::string& m) {
  return m == "lm" || m == "lm-bon" || m == "lm-bh";
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      fail(ErrorCode::ConfigInvalid,
           "unknown key \"" + item.key() + "\" in " + where);
    }
  }
}

json design_to_json(const DesignSpec& d) {
  return json{{"attribute_levels", d.attribute_levels},
              {"context_levels", d.context_levels},
              {"n_respondents", d.n_respondents},
              {"tasks_per_respondent", d.tasks_per_respondent},
              {"measurement_error_threshold", d.measurement_error_threshold},
              {"coef_low", d.coef_low},
              {"coef_high", d.coef_high},
              {"coef_exclusion_halfwidth", d.coef_exclusion_halfwidth}};
}

DesignSpec design_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"attribute_levels", "context_levels", "n_respondents",
                       "tasks_per_respondent", "measurement_error_threshold",
                       "coef_low", "coef_high", "coef_exclusion_halfwidth"},
                      "design");
  DesignSpec d;
  d.attribute_levels = j.at("attribute_levels").get<std::vector<int>>();
  d.context_levels = j.at("context_levels").get<int>();
  d.n_respondents = j.at("n_respondents").get<int>();
  d.tasks_per_respondent = j.at("tasks_per_respondent").get<int>();
  d.measurement_error_threshold =
      j.value("measurement_error_threshold", d.measurement_error_threshold);
  d.coef_low = j.value("coef_low", d.coef_low);
  d.coef_high = j.value("coef_high", d.coef_high);
  d.coef_exclusion_halfwidth =
      j.value("coef_exclusion_halfwidth", d.coef_exclusion_halfwidth);
  return d;
}

json bootstrap_to_json(const BootstrapConfig& b) {
  return json{{"n_bootstrap", b.n_bootstrap},
              {"ci_level", b.ci_level},
              {"variant", b.variant == Variant::P ? "P" : "N"},
              {"center_offset", b.center_offset}};
}

BootstrapConfig bootstrap_from_json(const json& j) {
  reject_unknown_keys(j, {"n_bootstrap", "ci_level", "variant", "center_offset"},
                      "bootstrap");
  BootstrapConfig b;
  b.n_bootstrap = j.value("n_bootstrap", b.n_bootstrap);
  b.ci_level = j.value("ci_level", b.ci_level);
  b.center_offset = j.value("center_offset", b.center_offset);
  const std::string variant = j.value("variant", std::string("N"));
  if (variant == "P") {
    b.variant = Variant::P;
  } else if (variant == "N") {
    b.variant = Variant::N;
  } else {
    fail(ErrorCode::ConfigInvalid, "bootstrap variant must be \"P\" or \"N\"");
  }
  return b;
}

json mlp_to_json(const MlpConfig& m) {
  return json{{"hidden_dims", m.hidden_dims},
              {"dropout_rates", m.dropout_rates},
              {"learning_rate", m.learning_rate},
              {"batch_size", m.batch_size},
              {"max_epochs", m.max_epochs},
              {"patience", m.early_stop_patience},
              {"validation_fraction", m.validation_fraction},
              {"bn_momentum", m.bn_momentum},
              {"bn_epsilon", m.bn_epsilon}};
}

MlpConfig mlp_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"hidden_dims", "dropout_rates", "learning_rate",
                       "batch_size", "max_epochs", "patience",
                       "validation_fraction", "bn_momentum", "bn_epsilon"},
                      "mlp");
  MlpConfig m;
  m.hidden_dims = j.value("hidden_dims", m.hidden_dims);
  m.dropout_rates = j.value("dropout_rates", m.dropout_rates);
  m.learning_rate = j.value("learning_rate", m.learning_rate);
  m.batch_size = j.value("batch_size", m.batch_size);
  m.max_epochs = j.value("max_epochs", m.max_epochs);
  m.early_stop_patience = j.value("patience", m.early_stop_patience);
  m.validation_fraction = j.value("validation_fraction", m.validation_fraction);
  m.bn_momentum = j.value("bn_momentum", m.bn_momentum);
  m.bn_epsilon = j.value("bn_epsilon", m.bn_epsilon);
  return m;
}

// Result-affecting fields only: where output lands and how many workers run
// must not invalidate caches or change values.
json fingerprint_payload(const GridConfig& c) {
  return json{{"design", design_to_json(c.design)},
              {"sparsity_main_options", c.sparsity_main_options},
              {"sparsity_interaction_options", c.sparsity_interaction_options},
              {"n_replications", c.n_replications},
              {"methods", c.methods},
              {"seed", c.seed},
              {"holdout_fraction", c.holdout_fraction},
              {"alpha", c.alpha},
              {"bootstrap", bootstrap_to_json(c.bootstrap)},
              {"mlp", mlp_to_json(c.mlp)}};
}

}  // namespace

void GridConfig::validate() const {
  try {
    const auto pairs = sparsity_grid(sparsity_main_options, sparsity_interaction_options);
    for (const auto& [sp_main, sp_inter] : pairs) {
      DesignSpec d = design;
      d.sparsity_main = sp_main;
      d.sparsity_interaction = sp_inter;
      d.validate();
    }
    MlpConfig m = mlp;
    m.input_dim = 1;
    m.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigInvalid, e.what());
  }
  if (n_replications < 1) {
    fail(ErrorCode::ConfigInvalid, "n_replications must be at least 1");
  }
  if (methods.empty()) fail(ErrorCode::ConfigInvalid, "methods must be non-empty");
  std::set<std::string> seen;
  for (const std::string& m : methods) {
    if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) ==
        kKnownMethods.end()) {
      fail(ErrorCode::ConfigInvalid, "unknown method \"" + m + "\"");
    }
    if (!seen.insert(m).second) {
      fail(ErrorCode::ConfigInvalid, "duplicate method \"" + m + "\"");
    }
  }
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    fail(ErrorCode::ConfigInvalid, "holdout_fraction must lie in (0, 1)");
  }
  if (design.n_respondents < 2) {
    fail(ErrorCode::ConfigInvalid, "need at least 2 respondents to hold some out");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(ErrorCode::ConfigInvalid, "alpha must lie in (0, 1)");
  }
  if (bootstrap.n_bootstrap < 1) {
    fail(ErrorCode::ConfigInvalid, "n_bootstrap must be at least 1");
  }
  if (!(bootstrap.ci_level > 0.0 && bootstrap.ci_level < 1.0)) {
    fail(ErrorCode::ConfigInvalid, "ci_level must lie in (0, 1)");
  }
  if (output_dir.empty()) {
    fail(ErrorCode::ConfigInvalid, "output_dir must be set");
  }
  if (jobs < 1) fail(ErrorCode::ConfigInvalid, "jobs must be at least 1");
}

std::string GridConfig::fingerprint() const {
  const std::string dump = fingerprint_payload(*this).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = hex[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

GridConfig grid_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, std::string("config is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown_keys(
        j,
        {"design", "sparsity_main_options", "sparsity_interaction_options",
         "n_replications", "methods", "seed", "holdout_fraction", "alpha",
         "bootstrap", "mlp", "output_dir", "jobs"},
        "config");
    GridConfig c;
    c.design = design_from_json(j.at("design"));
    c.sparsity_main_options =
        j.at("sparsity_main_options").get<std::vector<double>>();
    c.sparsity_interaction_options =
        j.at("sparsity_interaction_options").get<std::vector<double>>();
    c.n_replications = j.at("n_replications").get<int>();
    c.methods = j.value("methods", kKnownMethods);
    c.seed = j.at("seed").get<std::uint64_t>();
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.alpha = j.value("alpha", c.alpha);
    if (j.count("bootstrap")) c.bootstrap = bootstrap_from_json(j.at("bootstrap"));
    if (j.count("mlp")) c.mlp = mlp_from_json(j.at("mlp"));
    c.output_dir = j.value("output_dir", std::string());
    c.jobs = j.value("jobs", 1);
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigInvalid, std::string("malformed config: ") + e.what());
  }
}

GridConfig load_grid_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return grid_config_from_json_text(text);
}

DesignSpec design_spec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, std::string("spec is not valid JSON: ") + e.what());
  }
  try {
    json base = j;
    for (const char* key : {"sparsity_main", "sparsity_interaction", "seed"}) {
      base.erase(key);
    }
    DesignSpec d = design_from_json(base);
    d.sparsity_main = j.value("sparsity_main", d.sparsity_main);
    d.sparsity_interaction = j.value("sparsity_interaction", d.sparsity_interaction);
    d.seed = j.value("seed", d.seed);
    return d;
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigInvalid, std::string("malformed spec: ") + e.what());
  }
}

void MethodOptions::validate() const {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    fail(ErrorCode::ConfigInvalid, "holdout_fraction must lie in (0, 1)");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(ErrorCode::ConfigInvalid, "alpha must lie in (0, 1)");
  }
  if (bootstrap.n_bootstrap < 1) {
    fail(ErrorCode::ConfigInvalid, "n_bootstrap must be at least 1");
  }
  if (!(bootstrap.ci_level > 0.0 && bootstrap.ci_level < 1.0)) {
    fail(ErrorCode::ConfigInvalid, "ci_level must lie in (0, 1)");
  }
  try {
    MlpConfig m = mlp;
    m.input_dim = 1;
    m.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigInvalid, e.what());
  }
}

MethodOptions method_options_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, std::string("options are not valid JSON: ") + e.what());
  }
  try {
    reject_unknown_keys(
        j, {"seed", "holdout_fraction", "alpha", "bootstrap", "mlp"}, "options");
    MethodOptions o;
    o.seed = j.value("seed", o.seed);
    o.holdout_fraction = j.value("holdout_fraction", o.holdout_fraction);
    o.alpha = j.value("alpha", o.alpha);
    if (j.count("bootstrap")) o.bootstrap = bootstrap_from_json(j.at("bootstrap"));
    if (j.count("mlp")) o.mlp = mlp_from_json(j.at("mlp"));
    return o;
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigInvalid, std::string("malformed options: ") + e.what());
  }
}

GridPlan plan_grid(const GridConfig& config) {
  GridPlan plan;
  plan.sparsity_pairs =
      sparsity_grid(config.sparsity_main_options, config.sparsity_interaction_options);
  plan.n_cells = long(plan.sparsity_pairs.size()) * config.n_replications;
  plan.tasks_per_cell =
      long(config.design.n_respondents) * config.design.tasks_per_respondent;
  plan.profile_observations = plan.n_cells * plan.tasks_per_cell * 2;
  return plan;
}

std::string CellId::dir_name() const {
  return "cell_m" + format_double(sparsity_main) + "_i" +
         format_double(sparsity_interaction) + "_r" + std::to_string(replication);
}

std::uint64_t CellId::cell_seed(std::uint64_t master) const {
  std::uint64_t s = derive_seed(master, double_key(sparsity_main));
  s = derive_seed(s, double_key(sparsity_interaction));
  return derive_seed(s, std::uint64_t(replication));
}

namespace {

// Fixed derivation slots under the cell seed; every stage gets its own stream
// so adding or dropping a method never shifts another method's randomness.
enum CellStream : std::uint64_t {
  kStreamDataset = 0,
  kStreamSplit = 1,
  kStreamMlpDifference = 2,
  kStreamMlpPerProfile = 3,
  kStreamBootstrapDifference = 4,
  kStreamBootstrapPerProfile = 5,
};

Eigen::VectorXd latent_labels_difference(const std::vector<ChoiceTask>& tasks) {
  Eigen::VectorXd y(long(tasks.size()));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    y[long(i)] = tasks[i].latent_chose_left ? 1.0 : 0.0;
  }
  return y;
}

Eigen::VectorXd latent_labels_per_profile(const std::vector<ChoiceTask>& tasks) {
  Eigen::VectorXd y(2 * long(tasks.size()));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    y[2 * long(i)] = tasks[i].latent_chose_left ? 1.0 : 0.0;
    y[2 * long(i) + 1] = tasks[i].latent_chose_left ? 0.0 : 1.0;
  }
  return y;
}

struct AccuracyTriple {
  double train = 0.0;
  double test = 0.0;
  double latent = 0.0;  // held-out predictions against noise-free answers
};

void append_method_rows(std::vector<MetricRow>& rows, const std::string& method,
                        const ConfusionSummary& mains,
                        const ConfusionSummary& interactions,
                        const AccuracyTriple& acc) {
  const auto push_kind = [&](const std::string& kind, const ConfusionSummary& s) {
    rows.push_back({method, kind, "fpr", s.false_positive_rate()});
    rows.push_back({method, kind, "fnr", s.false_negative_rate()});
    rows.push_back({method, kind, "sign_accuracy", s.sign_accuracy()});
  };
  push_kind("main", mains);
  push_kind("interaction", interactions);
  rows.push_back({method, "all", "accuracy_train", acc.train});
  rows.push_back({method, "all", "accuracy_test", acc.test});
  rows.push_back({method, "all", "accuracy_latent", acc.latent});
}

json confusion_to_json(const ConfusionSummary& s) {
  return json{{"tp", s.true_positives},
              {"fp", s.false_positives},
              {"fn", s.false_negatives},
              {"tn", s.true_negatives},
              {"fpr", s.false_positive_rate() ? json(*s.false_positive_rate())
                                              : json(nullptr)},
              {"fnr", s.false_negative_rate() ? json(*s.false_negative_rate())
                                              : json(nullptr)},
              {"sign_accuracy", s.sign_accuracy()}};
}

void save_metric_rows(const std::vector<MetricRow>& rows, const std::string& path) {
  CsvTable t;
  t.header = {"method", "effect_kind", "metric", "value"};
  for (const MetricRow& r : rows) {
    t.rows.push_back({r.method, r.effect_kind, r.metric,
                      format_double(r.value ? *r.value
                                            : std::numeric_limits<double>::quiet_NaN())});
  }
  write_csv(path, t);
}

std::vector<MetricRow> load_metric_rows(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_method = t.column("method");
  const int c_kind = t.column("effect_kind");
  const int c_metric = t.column("metric");
  const int c_value = t.column("value");
  std::vector<MetricRow> rows;
  rows.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    MetricRow row{r[std::size_t(c_method)], r[std::size_t(c_kind)],
                  r[std::size_t(c_metric)], std::nullopt};
    if (r[std::size_t(c_value)] != "NA") {
      row.value = std::stod(r[std::size_t(c_value)]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "short write to " + path);
}

}  // namespace

MethodRun run_method(const Dataset& ds, const std::string& method,
                     const MethodOptions& options) {
  options.validate();
  if (std::find(kKnownMethods.begin(), kKnownMethods.end(), method) ==
      kKnownMethods.end()) {
    fail(ErrorCode::InvalidArgument, "unknown method \"" + method + "\"");
  }
  const DesignSpec& spec = ds.spec;
  if (spec.n_respondents < 2) {
    fail(ErrorCode::DegenerateData, "need at least 2 respondents to hold some out");
  }

  // Respondent-level holdout: the estimators and accuracy metrics only ever
  // see predictions on people the models never trained on. Same seed, same
  // split, for every method run on this dataset.
  std::vector<int> respondents(std::size_t(spec.n_respondents));
  std::iota(respondents.begin(), respondents.end(), 0);
  RngStream split_rng(derive_seed(options.seed, kStreamSplit));
  split_rng.shuffle(respondents);
  long n_test = round_half_up(options.holdout_fraction * spec.n_respondents);
  n_test = std::clamp(n_test, 1L, long(spec.n_respondents) - 1);
  std::vector<std::uint8_t> in_test(std::size_t(spec.n_respondents), 0);
  for (long i = 0; i < n_test; ++i) {
    in_test[std::size_t(respondents[std::size_t(i)])] = 1;
  }

  std::vector<ChoiceTask> train_tasks, test_tasks;
  for (const ChoiceTask& t : ds.tasks) {
    (in_test[std::size_t(t.respondent_id)] ? test_tasks : train_tasks).push_back(t);
  }

  MethodRun run;
  AccuracyTriple acc;
  json report{{"method", method}};

  if (method == kMethodDipce || method == kMethodAblation) {
    const bool difference = method == kMethodDipce;
    const EncodedDataset enc_train = difference
                                         ? encode_difference(train_tasks, spec)
                                         : encode_per_profile(train_tasks, spec);
    const EncodedDataset enc_test = difference
                                        ? encode_difference(test_tasks, spec)
                                        : encode_per_profile(test_tasks, spec);

    MlpConfig mlp_config = options.mlp;
    mlp_config.input_dim = enc_train.schema.width();
    mlp_config.seed = derive_seed(
        options.seed, difference ? kStreamMlpDifference : kStreamMlpPerProfile);
    auto [model, train_report] = fit(mlp_config, enc_train);

    acc.train =
        predictive_accuracy(model.predict_proba(enc_train.matrix), enc_train.labels);
    acc.test =
        predictive_accuracy(model.predict_proba(enc_test.matrix), enc_test.labels);
    acc.latent = predictive_accuracy(model.predict_proba(enc_test.matrix),
                                     difference
                                         ? latent_labels_difference(test_tasks)
                                         : latent_labels_per_profile(test_tasks));

    BootstrapConfig bc = options.bootstrap;
    bc.seed = derive_seed(options.seed, difference ? kStreamBootstrapDifference
                                                   : kStreamBootstrapPerProfile);
    run.estimates = estimate_effects(model, enc_test, spec, bc);
    report["training"] = json{
        {"epochs", train_report.stopping_epoch},
        {"best_epoch", train_report.best_epoch},
        {"train_loss", train_report.train_loss.empty()
                           ? json(nullptr)
                           : json(train_report.train_loss.back())},
        {"val_loss", train_report.val_loss.empty() ||
                             std::isnan(train_report.val_loss.back())
                         ? json(nullptr)
                         : json(train_report.val_loss.back())}};
    run.model = std::move(model);
  } else {
    const EncodedDataset enc_train = encode_ols_interactions(train_tasks, spec);
    const EncodedDataset enc_test = encode_ols_interactions(test_tasks, spec);
    const OlsFit ols = fit_ols(enc_train);
    acc.train = predictive_accuracy(predict_lm(ols, enc_train.matrix),
                                    enc_train.labels);
    acc.test =
        predictive_accuracy(predict_lm(ols, enc_test.matrix), enc_test.labels);
    acc.latent = predictive_accuracy(predict_lm(ols, enc_test.matrix),
                                     latent_labels_per_profile(test_tasks));
    const Correction correction = method == "lm"     ? Correction::None
                                  : method == "lm-bon" ? Correction::Bonferroni
                                                       : Correction::BenjaminiHochberg;
    run.estimates = classify_lm(ols, correction, options.alpha);
    report["residual_df"] = ols.residual_df;
  }

  const ConfusionSummary mains =
      score_classifications(run.estimates, ds.truth, EffectScope::Main);
  const ConfusionSummary interactions =
      score_classifications(run.estimates, ds.truth, EffectScope::Interaction);
  append_method_rows(run.metrics, method, mains, interactions, acc);
  report["accuracy"] =
      json{{"train", acc.train}, {"test", acc.test}, {"latent", acc.latent}};
  report["confusion"] = json{{"main", confusion_to_json(mains)},
                             {"interaction", confusion_to_json(interactions)}};
  report["held_out_respondents"] = n_test;
  run.report_json = report.dump(2);
  return run;
}

std::vector<MetricRow> run_cell(const GridConfig& config, const CellId& id,
                                const std::string& cell_dir) {
  DesignSpec spec = config.design;
  spec.sparsity_main = id.sparsity_main;
  spec.sparsity_interaction = id.sparsity_interaction;
  const std::uint64_t cell = id.cell_seed(config.seed);
  spec.seed = derive_seed(cell, kStreamDataset);
  spec.validate();

  fs::create_directories(cell_dir);
  const Dataset ds = generate_dataset(spec);
  save_tasks_csv(ds, cell_dir + "/dataset.csv");
  save_truth_json(ds, cell_dir + "/truth.json");

  MethodOptions options;
  options.seed = cell;
  options.holdout_fraction = config.holdout_fraction;
  options.alpha = config.alpha;
  options.bootstrap = config.bootstrap;
  options.mlp = config.mlp;

  std::vector<MetricRow> rows;
  for (const std::string& method : config.methods) {
    MethodRun run = run_method(ds, method, options);
    save_estimates_csv(run.estimates, cell_dir + "/estimates-" + method + ".csv",
                       &ds.truth);
    const std::string report_path = cell_dir + "/report-" + method + ".json";
    std::ofstream report(report_path, std::ios::binary | std::ios::trunc);
    report << run.report_json << '\n';
    if (!report) fail(ErrorCode::Io, "short write to " + report_path);
    if (run.model) {
      save_checkpoint(*run.model,
                      cell_dir + (method == kMethodDipce
                                      ? "/checkpoint-difference.json"
                                      : "/checkpoint-per-profile.json"));
    }
    rows.insert(rows.end(), run.metrics.begin(), run.metrics.end());
  }

  save_metric_rows(rows, cell_dir + "/metrics.csv");
  write_json_file(json{{"cell", id.dir_name()},
                       {"fingerprint", config.fingerprint()},
                       {"methods", config.methods}},
                  cell_dir + "/done.json");
  return rows;
}

namespace {

bool cell_is_cached(const std::string& cell_dir, const std::string& fingerprint) {
  const std::string marker = cell_dir + "/done.json";
  if (!fs::exists(marker) || !fs::exists(cell_dir + "/metrics.csv")) return false;
  std::ifstream in(marker, std::ios::binary);
  if (!in) return false;
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.count("fingerprint")) return false;
  return j["fingerprint"] == fingerprint;
}

struct MetricKey {
  std::string kind;
  std::string metric;
};

const std::vector<MetricKey> kAggregatedMetrics = {
    {"main", "fpr"},          {"main", "fnr"},
    {"main", "sign_accuracy"}, {"interaction", "fpr"},
    {"interaction", "fnr"},   {"interaction", "sign_accuracy"},
    {"all", "accuracy_train"}, {"all", "accuracy_test"},
    {"all", "accuracy_latent"}};

// Aggregated CSV in a fixed enumeration order (methods x pairs x metrics) so
// the bytes never depend on worker scheduling. Groups with one defined value
// get a mean but no interval; empty groups stay NA.
void write_aggregate(const GridConfig& config, const GridPlan& plan,
                     const std::vector<std::vector<MetricRow>>& cell_rows,
                     const std::vector<std::uint8_t>& cell_ok,
                     const std::string& path) {
  CsvTable t;
  t.header = {"method", "sp_main", "sp_interaction", "effect_kind",
              "metric", "mean",    "ci_low",         "ci_high"};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const std::string& method : config.methods) {
    for (std::size_t p = 0; p < plan.sparsity_pairs.size(); ++p) {
      for (const MetricKey& key : kAggregatedMetrics) {
        std::vector<double> values;
        for (int rep = 0; rep < config.n_replications; ++rep) {
          const std::size_t cell = p * std::size_t(config.n_replications) +
                                   std::size_t(rep);
          if (!cell_ok[cell]) continue;
          for (const MetricRow& row : cell_rows[cell]) {
            if (row.method == method && row.effect_kind == key.kind &&
                row.metric == key.metric) {
              if (row.value) values.push_back(*row.value);
              break;
            }
          }
        }
        double mean = nan, lo = nan, hi = nan;
        if (values.size() == 1) {
          mean = values.front();
        } else if (values.size() >= 2) {
          const MeanCi agg = aggregate_replications(values);
          mean = agg.mean;
          lo = agg.ci_low;
          hi = agg.ci_high;
        }
        t.rows.push_back({method, format_double(plan.sparsity_pairs[p].first),
                          format_double(plan.sparsity_pairs[p].second), key.kind,
                          key.metric, format_double(mean), format_double(lo),
                          format_double(hi)});
      }
    }
  }
  write_csv(path, t);
}

}  // namespace

RunSummary run_grid(const GridConfig& config, bool resume) {
  config.validate();
  const GridPlan plan = plan_grid(config);
  const std::string fingerprint = config.fingerprint();

  std::vector<CellId> cells;
  for (const auto& [sp_main, sp_inter] : plan.sparsity_pairs) {
    for (int rep = 0; rep < config.n_replications; ++rep) {
      cells.push_back(CellId{sp_main, sp_inter, rep});
    }
  }

  fs::create_directories(fs::path(config.output_dir) / "cells");
  std::mutex log_mutex;
  const std::string log_path = config.output_dir + "/run.log";
  const auto log_line = [&](const std::string& line) {
    std::lock_guard<std::mutex> lock(log_mutex);
    std::ofstream out(log_path, std::ios::app);
    out << line << '\n';
  };

  std::vector<std::vector<MetricRow>> results(cells.size());
  std::vector<std::uint8_t> ok(cells.size(), 0);
  std::vector<std::uint8_t> cached(cells.size(), 0);
  std::vector<std::string> errors(cells.size());

  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const CellId& id = cells[i];
      const std::string dir =
          (fs::path(config.output_dir) / "cells" / id.dir_name()).string();
      try {
        if (resume && cell_is_cached(dir, fingerprint)) {
          results[i] = load_metric_rows(dir + "/metrics.csv");
          ok[i] = 1;
          cached[i] = 1;
          log_line(id.dir_name() + " cached");
          continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        results[i] = run_cell(config, id, dir);
        ok[i] = 1;
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        log_line(id.dir_name() + " done in " + format_double(seconds) + "s");
      } catch (const std::exception& e) {
        errors[i] = e.what();
        log_line(id.dir_name() + " FAILED: " + errors[i]);
      }
    }
  };

  const std::size_t n_threads =
      std::min<std::size_t>(std::size_t(std::max(config.jobs, 1)), cells.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  RunSummary summary;
  summary.fingerprint = fingerprint;
  summary.cells_total = long(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (ok[i]) {
      cached[i] ? ++summary.cells_cached : ++summary.cells_run;
    } else {
      summary.failures.push_back({cells[i], errors[i]});
    }
  }

  summary.aggregate_path = config.output_dir + "/metrics.csv";
  write_aggregate(config, plan, results, ok, summary.aggregate_path);
  log_line("aggregated " + std::to_string(summary.cells_run + summary.cells_cached) +
           "/" + std::to_string(summary.cells_total) + " cells");
  return summary;
}

namespace {

struct AggregateTable {
  // (method, sp_main, sp_interaction, kind, metric) -> row index
  const CsvTable table;
  int c_method, c_sp_main, c_sp_inter, c_kind, c_metric, c_mean, c_lo, c_hi;

  explicit AggregateTable(CsvTable t)
      : table(std::move(t)),
        c_method(table.column("method")),
        c_sp_main(table.column("sp_main")),
        c_sp_inter(table.column("sp_interaction")),
        c_kind(table.column("effect_kind")),
        c_metric(table.column("metric")),
        c_mean(table.column("mean")),
        c_lo(table.column("ci_low")),
        c_hi(table.column("ci_high")) {}

  const std::vector<std::string>* find(const std::string& method, double sp_main,
                                       double sp_inter, const std::string& kind,
                                       const std::string& metric) const {
    const std::string sm = format_double(sp_main);
    const std::string si = format_double(sp_inter);
    for (const auto& row : table.rows) {
      if (row[std::size_t(c_method)] == method && row[std::size_t(c_sp_main)] == sm &&
          row[std::size_t(c_sp_inter)] == si && row[std::size_t(c_kind)] == kind &&
          row[std::size_t(c_metric)] == metric) {
        return &row;
      }
    }
    return nullptr;
  }
};

json value_or_null(const std::string& s) {
  if (s == "NA") return nullptr;
  return std::stod(s);
}

json stat_triplet(const AggregateTable& agg, const std::vector<std::string>& row) {
  return json{{"mean", value_or_null(row[std::size_t(agg.c_mean)])},
              {"ci_low", value_or_null(row[std::size_t(agg.c_lo)])},
              {"ci_high", value_or_null(row[std::size_t(agg.c_hi)])}};
}

}  // namespace

void emit_figures(const GridConfig& config) {
  const std::string path = config.output_dir + "/metrics.csv";
  if (config.methods.empty()) {
    fail(ErrorCode::MissingAggregate, "no methods configured");
  }
  if (!fs::exists(path)) {
    fail(ErrorCode::MissingAggregate, "no aggregated metrics at " + path);
  }
  const AggregateTable agg(read_csv(path));
  const auto pairs =
      sparsity_grid(config.sparsity_main_options, config.sparsity_interaction_options);

  const auto require = [&](const std::string& method, double sm, double si,
                           const std::string& kind, const std::string& metric) {
    const auto* row = agg.find(method, sm, si, kind, metric);
    if (!row) {
      fail(ErrorCode::MissingAggregate,
           "aggregate missing " + method + "/" + kind + "/" + metric);
    }
    return row;
  };

  json fig1_cells = json::array();
  for (const std::string& method : config.methods) {
    for (const auto& [sm, si] : pairs) {
      for (const char* kind : {"main", "interaction"}) {
        for (const char* metric : {"fpr", "fnr"}) {
          const auto* row = require(method, sm, si, kind, metric);
          json cell = stat_triplet(agg, *row);
          cell["method"] = method;
          cell["sp_main"] = sm;
          cell["sp_interaction"] = si;
          cell["effect_kind"] = kind;
          cell["metric"] = metric;
          fig1_cells.push_back(std::move(cell));
        }
      }
    }
  }
  write_json_file(json{{"figure", "classification-error-rates"},
                       {"cells", fig1_cells}},
                  config.output_dir + "/fig1.json");

  json fig3_cells = json::array();
  for (const std::string& method : config.methods) {
    for (const auto& [sm, si] : pairs) {
      const auto* row = require(method, sm, si, "all", "accuracy_test");
      json cell = stat_triplet(agg, *row);
      cell["method"] = method;
      cell["sp_main"] = sm;
      cell["sp_interaction"] = si;
      fig3_cells.push_back(std::move(cell));
    }
  }
  write_json_file(json{{"figure", "held-out-accuracy"}, {"cells", fig3_cells}},
                  config.output_dir + "/fig3.json");

  json fig4_cells = json::array();
  bool any_encoding_method = false;
  for (const std::string& method : config.methods) {
    if (method != kMethodDipce && method != kMethodAblation) continue;
    any_encoding_method = true;
    const std::string encoding =
        method == kMethodDipce ? "difference" : "per-profile";
    for (const auto& [sm, si] : pairs) {
      for (const char* split : {"train", "test"}) {
        const auto* row = require(method, sm, si, "all",
                                  std::string("accuracy_") + split);
        json cell = stat_triplet(agg, *row);
        cell["method"] = method;
        cell["encoding"] = encoding;
        cell["sp_main"] = sm;
        cell["sp_interaction"] = si;
        cell["split"] = split;
        fig4_cells.push_back(std::move(cell));
      }
    }
  }
  if (!any_encoding_method) {
    fail(ErrorCode::MissingAggregate,
         "figure 4 needs dipce or dipce-per-profile-ablation in methods");
  }
  write_json_file(json{{"figure", "encoding-accuracy-ceiling"},
                       {"accuracy_ceiling", config.design.measurement_error_threshold},
                       {"cells", fig4_cells}},
                  config.output_dir + "/fig4.json");
}

}  // namespace dipce
