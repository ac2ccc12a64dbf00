// Command-line front end. Everything flows through the shared library's C
// interface; this file owns only argument handling, file plumbing and output
// formatting.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dipce.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitPartialFailure = 2;

const std::vector<std::string> kAllMethods = {
    "dipce", "dipce-per-profile-ablation", "lm", "lm-bon", "lm-bh"};

[[nodiscard]] bool ok(dipce_status status) {
  if (status == DIPCE_OK) return true;
  std::cerr << "error: " << dipce_last_error() << "\n";
  return false;
}

bool read_file(const std::string& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read " << path << "\n";
    return false;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  out = buf.str();
  return true;
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) {
    std::cerr << "error: cannot write " << path << "\n";
    return false;
  }
  return true;
}

// Relative output paths land under DIPCE_OUTPUT_ROOT when it is set.
std::string resolve_out(const std::string& dir) {
  const char* root = std::getenv("DIPCE_OUTPUT_ROOT");
  if (!root || *root == '\0' || dir.empty() || fs::path(dir).is_absolute()) {
    return dir;
  }
  return (fs::path(root) / dir).string();
}

// Overrides the "seed" key of a JSON document ("" means an empty object).
bool override_seed(std::string& text, std::uint64_t seed) {
  json j = json::parse(text.empty() ? "{}" : text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    std::cerr << "error: config is not a JSON object\n";
    return false;
  }
  j["seed"] = seed;
  text = j.dump();
  return true;
}

struct EstimatesGuard {
  dipce_estimates* handle = nullptr;
  ~EstimatesGuard() { dipce_estimates_free(handle); }
};

struct DatasetGuard {
  dipce_dataset* handle = nullptr;
  ~DatasetGuard() { dipce_dataset_free(handle); }
};

struct StringGuard {
  char* str = nullptr;
  ~StringGuard() { dipce_string_free(str); }
};

int cmd_simulate(const std::string& config_path, bool seed_set,
                 std::uint64_t seed, const std::string& out_dir) {
  std::string spec_text;
  if (!read_file(config_path, spec_text)) return kExitError;
  if (seed_set && !override_seed(spec_text, seed)) return kExitError;

  DatasetGuard ds;
  if (!ok(dipce_simulate(spec_text.c_str(), &ds.handle))) return kExitError;

  const std::string dir = resolve_out(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!ok(dipce_dataset_save(ds.handle, (dir + "/dataset.csv").c_str(),
                             (dir + "/truth.json").c_str()))) {
    return kExitError;
  }
  long tasks = 0;
  dipce_dataset_task_count(ds.handle, &tasks);
  std::cout << "simulated " << tasks << " tasks -> " << dir << "\n";
  return kExitOk;
}

int cmd_estimate(const std::string& config_path, bool seed_set,
                 std::uint64_t seed, const std::string& out_dir,
                 const std::vector<std::string>& methods) {
  std::string options_text = "{}";
  if (!config_path.empty() && !read_file(config_path, options_text)) {
    return kExitError;
  }
  if (seed_set && !override_seed(options_text, seed)) return kExitError;

  const std::string dir = resolve_out(out_dir);
  DatasetGuard ds;
  if (!ok(dipce_dataset_load((dir + "/dataset.csv").c_str(),
                             (dir + "/truth.json").c_str(), &ds.handle))) {
    return kExitError;
  }

  for (const std::string& method : methods) {
    EstimatesGuard est;
    StringGuard report;
    if (!ok(dipce_run_method(ds.handle, method.c_str(), options_text.c_str(),
                             &est.handle, &report.str))) {
      return kExitError;
    }
    const std::string csv = dir + "/estimates-" + method + ".csv";
    if (!ok(dipce_estimates_save(est.handle, csv.c_str(), ds.handle))) {
      return kExitError;
    }
    if (!write_file(dir + "/report-" + method + ".json",
                    std::string(report.str) + "\n")) {
      return kExitError;
    }
    long count = 0;
    dipce_estimates_count(est.handle, &count);
    std::cout << method << ": " << count << " effects -> " << csv << "\n";
  }
  return kExitOk;
}

json confusion_json(const dipce_confusion& c) {
  return json{{"tp", c.tp},
              {"fp", c.fp},
              {"fn", c.fn},
              {"tn", c.tn},
              {"fpr", c.fpr_defined ? json(c.fpr) : json(nullptr)},
              {"fnr", c.fnr_defined ? json(c.fnr) : json(nullptr)},
              {"sign_accuracy", c.sign_accuracy}};
}

int cmd_score(const std::string& out_dir, const std::vector<std::string>& methods) {
  const std::string dir = resolve_out(out_dir);
  DatasetGuard truth;
  if (!ok(dipce_truth_load((dir + "/truth.json").c_str(), &truth.handle))) {
    return kExitError;
  }
  json result;
  for (const std::string& method : methods) {
    EstimatesGuard est;
    if (!ok(dipce_estimates_load((dir + "/estimates-" + method + ".csv").c_str(),
                                 &est.handle))) {
      return kExitError;
    }
    dipce_confusion mains{}, interactions{};
    if (!ok(dipce_score(est.handle, truth.handle, DIPCE_SCOPE_MAIN, &mains)) ||
        !ok(dipce_score(est.handle, truth.handle, DIPCE_SCOPE_INTERACTION,
                        &interactions))) {
      return kExitError;
    }
    result[method] = json{{"main", confusion_json(mains)},
                          {"interaction", confusion_json(interactions)}};
  }
  std::cout << result.dump(2) << "\n";
  return kExitOk;
}

int cmd_grid(const std::string& config_path, const std::string& out_dir,
             int jobs, bool resume) {
  std::string config_text;
  if (!read_file(config_path, config_text)) return kExitError;
  const std::string dir = resolve_out(out_dir);

  long failed = 0;
  StringGuard summary;
  if (!ok(dipce_run_grid(config_text.c_str(), dir.empty() ? nullptr : dir.c_str(),
                         jobs, resume ? 1 : 0, &failed, &summary.str))) {
    return kExitError;
  }
  std::cout << summary.str << "\n";
  if (failed > 0) {
    std::cerr << failed << " cell(s) failed; see run.log\n";
    return kExitPartialFailure;
  }
  return kExitOk;
}

int cmd_figures(const std::string& config_path, const std::string& out_dir) {
  std::string config_text;
  if (!read_file(config_path, config_text)) return kExitError;
  const std::string dir = resolve_out(out_dir);
  if (!ok(dipce_emit_figures(config_text.c_str(),
                             dir.empty() ? nullptr : dir.c_str()))) {
    return kExitError;
  }
  std::cout << "wrote fig1.json, fig3.json, fig4.json\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("conjoint simulation and effect-estimation toolkit (library ") +
               dipce_version() + ")"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> methods = kAllMethods;
  int jobs = 0;
  bool resume = false;

  auto* simulate = app.add_subcommand(
      "simulate", "Draw ground truth and simulate choice tasks");
  simulate->add_option("--config", config_path, "simulation spec JSON")->required();
  auto* sim_seed = simulate->add_option("--seed", seed, "override the spec seed");
  simulate->add_option("--out", out_dir, "output directory")->required();

  auto* estimate = app.add_subcommand(
      "estimate", "Run methods on a simulated dataset in --out");
  estimate->add_option("--config", config_path, "method options JSON");
  auto* est_seed = estimate->add_option("--seed", seed, "override the options seed");
  estimate->add_option("--out", out_dir, "directory with dataset.csv + truth.json")
      ->required();
  estimate->add_option("--methods", methods, "methods to run")->delimiter(',');

  auto* score = app.add_subcommand(
      "score", "Score persisted estimates against the ground truth in --out");
  score->add_option("--out", out_dir, "directory with estimates and truth.json")
      ->required();
  score->add_option("--methods", methods, "methods to score")->delimiter(',');

  auto* grid = app.add_subcommand("grid", "Run the full experiment grid");
  grid->add_option("--config", config_path, "grid config JSON")->required();
  grid->add_option("--out", out_dir, "override the config output_dir");
  grid->add_option("--jobs", jobs, "worker threads (cells run in parallel)");
  grid->add_flag("--resume", resume, "skip cells already completed");

  auto* figures = app.add_subcommand(
      "figures", "Emit figure-ready JSON from an aggregated grid run");
  figures->add_option("--config", config_path, "grid config JSON")->required();
  figures->add_option("--out", out_dir, "override the config output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  if (simulate->parsed()) {
    return cmd_simulate(config_path, sim_seed->count() > 0, seed, out_dir);
  }
  if (estimate->parsed()) {
    return cmd_estimate(config_path, est_seed->count() > 0, seed, out_dir, methods);
  }
  if (score->parsed()) return cmd_score(out_dir, methods);
  if (grid->parsed()) return cmd_grid(config_path, out_dir, jobs, resume);
  if (figures->parsed()) return cmd_figures(config_path, out_dir);
  return kExitError;
}
