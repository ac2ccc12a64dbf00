#include "design.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "csv.hpp"
#include "errors.hpp"

namespace dipce {

using nlohmann::json;

int DesignSpec::main_dim() const {
  return std::accumulate(attribute_levels.begin(), attribute_levels.end(), 0);
}

int DesignSpec::attribute_offset(int a) const {
  return std::accumulate(attribute_levels.begin(), attribute_levels.begin() + a, 0);
}

int DesignSpec::attribute_of_index(int j) const {
  int offset = 0;
  for (int a = 0; a < n_attributes(); ++a) {
    offset += attribute_levels[std::size_t(a)];
    if (j < offset) return a;
  }
  fail(ErrorCode::InvalidArgument, "one-hot index out of range");
}

bool DesignSpec::is_baseline_main(int j) const {
  return j == attribute_offset(attribute_of_index(j));
}

int DesignSpec::eligible_main_count() const { return main_dim() - n_attributes(); }

int DesignSpec::eligible_interaction_count() const {
  return eligible_main_count() * (context_levels - 1);
}

void DesignSpec::validate() const {
  if (attribute_levels.empty()) {
    fail(ErrorCode::InvalidSpec, "at least one attribute is required");
  }
  for (int levels : attribute_levels) {
    if (levels < 1) fail(ErrorCode::InvalidSpec, "attribute level counts must be positive");
  }
  if (context_levels < 1) fail(ErrorCode::InvalidSpec, "context_levels must be positive");
  auto unit = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      fail(ErrorCode::InvalidSpec, std::string(name) + " must lie in [0, 1]");
    }
  };
  unit(sparsity_main, "sparsity_main");
  unit(sparsity_interaction, "sparsity_interaction");
  if (sparsity_interaction < sparsity_main) {
    fail(ErrorCode::InvalidSpec, "sparsity_interaction must be >= sparsity_main");
  }
  if (n_respondents < 1) fail(ErrorCode::InvalidSpec, "n_respondents must be positive");
  if (tasks_per_respondent < 1) {
    fail(ErrorCode::InvalidSpec, "tasks_per_respondent must be positive");
  }
  unit(measurement_error_threshold, "measurement_error_threshold");
  if (!(coef_low < coef_high)) fail(ErrorCode::InvalidSpec, "coef_low must be < coef_high");
  if (coef_exclusion_halfwidth < 0.0) {
    fail(ErrorCode::InvalidSpec, "coef_exclusion_halfwidth must be non-negative");
  }
  if (coef_exclusion_halfwidth >= std::min(std::abs(coef_low), coef_high)) {
    fail(ErrorCode::InvalidSpec,
         "coef_exclusion_halfwidth must be < min(|coef_low|, coef_high)");
  }
}

int CoefficientSet::attribute_offset(int a) const {
  return std::accumulate(attribute_levels.begin(), attribute_levels.begin() + a, 0);
}

int CoefficientSet::truth_main_class(int j) const {
  double v = beta[j];
  return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
}

int CoefficientSet::truth_interaction_class(int j, int c) const {
  double v = b_interaction(j, c);
  return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
}

long round_half_up(double v) { return long(std::floor(v + 0.5)); }

namespace {

// Draws Unif(low, high) until the value clears the excluded band around zero.
double draw_coefficient(const DesignSpec& spec, RngStream& rng) {
  for (;;) {
    double c = rng.next_range(spec.coef_low, spec.coef_high);
    if (std::abs(c) >= spec.coef_exclusion_halfwidth) return c;
  }
}

// Marks `n_zero` of the eligible slots inactive, chosen uniformly.
std::vector<std::uint8_t> sparsify(const std::vector<int>& eligible, long n_zero,
                                   std::size_t total, RngStream& rng) {
  std::vector<int> order = eligible;
  rng.shuffle(order);
  std::vector<std::uint8_t> active(total, 0);
  for (int slot : eligible) active[std::size_t(slot)] = 1;
  for (long i = 0; i < n_zero; ++i) active[std::size_t(order[std::size_t(i)])] = 0;
  return active;
}

}  // namespace

CoefficientSet sample_coefficients(const DesignSpec& spec, RngStream& rng) {
  spec.validate();
  const int n = spec.main_dim();
  const int m = spec.context_levels;

  CoefficientSet out;
  out.attribute_levels = spec.attribute_levels;
  out.context_levels = m;
  out.beta = Eigen::VectorXd::Zero(n);
  out.b_interaction = Eigen::MatrixXd::Zero(n, m);

  std::vector<int> eligible_main;
  for (int j = 0; j < n; ++j) {
    if (!spec.is_baseline_main(j)) eligible_main.push_back(j);
  }
  long n_zero_main = round_half_up(spec.sparsity_main * double(eligible_main.size()));
  out.main_active = sparsify(eligible_main, n_zero_main, std::size_t(n), rng);
  for (int j : eligible_main) {
    if (out.main_active[std::size_t(j)]) out.beta[j] = draw_coefficient(spec, rng);
  }

  std::vector<int> eligible_inter;  // slot = j * m + c, context 0 is baseline
  for (int j : eligible_main) {
    for (int c = 1; c < m; ++c) eligible_inter.push_back(j * m + c);
  }
  long n_zero_inter =
      round_half_up(spec.sparsity_interaction * double(eligible_inter.size()));
  out.interaction_active =
      sparsify(eligible_inter, n_zero_inter, std::size_t(n) * std::size_t(m), rng);
  for (int slot : eligible_inter) {
    if (out.interaction_active[std::size_t(slot)]) {
      out.b_interaction(slot / m, slot % m) = draw_coefficient(spec, rng);
    }
  }
  return out;
}

double utility_score(const Profile& profile, int context_level,
                     const CoefficientSet& coefs) {
  if (profile.levels.size() != coefs.attribute_levels.size()) {
    fail(ErrorCode::ShapeMismatch, "profile arity differs from design");
  }
  if (context_level < 0 || context_level >= coefs.context_levels) {
    fail(ErrorCode::InvalidArgument, "context level out of range");
  }
  double score = 0.0;
  int offset = 0;
  for (std::size_t a = 0; a < profile.levels.size(); ++a) {
    const int level = profile.levels[a];
    if (level < 0 || level >= coefs.attribute_levels[a]) {
      fail(ErrorCode::InvalidArgument, "profile level out of range");
    }
    const int j = offset + level;
    score += coefs.beta[j] + coefs.b_interaction(j, context_level);
    offset += coefs.attribute_levels[a];
  }
  return score;
}

ChoiceDraw simulate_choice(const Profile& left, const Profile& right,
                           int context_level, const CoefficientSet& coefs,
                           double measurement_error_threshold, RngStream& rng) {
  ChoiceDraw draw;
  const double score_left = utility_score(left, context_level, coefs);
  const double score_right = utility_score(right, context_level, coefs);
  draw.latent_chose_left = score_left >= score_right;
  const bool flip = rng.next_double() >= measurement_error_threshold;
  draw.chose_left = draw.latent_chose_left != flip;
  return draw;
}

Dataset generate_dataset(const DesignSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;

  RngStream root(spec.seed);
  RngStream coef_rng = root.substream(0);
  ds.truth = sample_coefficients(spec, coef_rng);

  ds.tasks.reserve(std::size_t(spec.n_respondents) * std::size_t(spec.tasks_per_respondent));
  const int n_attr = spec.n_attributes();
  for (int r = 0; r < spec.n_respondents; ++r) {
    RngStream rng = root.substream(std::uint64_t(r) + 1);
    const int context = rng.next_int(spec.context_levels);
    for (int t = 0; t < spec.tasks_per_respondent; ++t) {
      ChoiceTask task;
      task.respondent_id = r;
      task.task_index = t;
      task.context_level = context;
      task.left.levels.resize(std::size_t(n_attr));
      task.right.levels.resize(std::size_t(n_attr));
      for (int a = 0; a < n_attr; ++a) {
        task.left.levels[std::size_t(a)] = rng.next_int(spec.attribute_levels[std::size_t(a)]);
      }
      for (int a = 0; a < n_attr; ++a) {
        task.right.levels[std::size_t(a)] = rng.next_int(spec.attribute_levels[std::size_t(a)]);
      }
      ChoiceDraw draw = simulate_choice(task.left, task.right, context, ds.truth,
                                        spec.measurement_error_threshold, rng);
      task.latent_chose_left = draw.latent_chose_left;
      task.chose_left = draw.chose_left;
      ds.tasks.push_back(std::move(task));
    }
  }
  return ds;
}

std::vector<std::pair<double, double>> sparsity_grid(
    const std::vector<double>& main_options,
    const std::vector<double>& interaction_options) {
  auto ascending = [](const std::vector<double>& v) {
    return std::is_sorted(v.begin(), v.end());
  };
  if (!ascending(main_options) || !ascending(interaction_options)) {
    fail(ErrorCode::InvalidArgument, "sparsity options must be ascending");
  }
  std::vector<std::pair<double, double>> grid;
  for (double sp_main : main_options) {
    for (double sp_inter : interaction_options) {
      if (sp_inter >= sp_main) grid.emplace_back(sp_main, sp_inter);
    }
  }
  return grid;
}

void recompute_latent(std::vector<ChoiceTask>& tasks, const CoefficientSet& coefs) {
  for (ChoiceTask& task : tasks) {
    task.latent_chose_left = utility_score(task.left, task.context_level, coefs) >=
                             utility_score(task.right, task.context_level, coefs);
  }
}

void save_tasks_csv(const Dataset& ds, const std::string& path) {
  CsvTable table;
  table.header = {"respondent_id", "task_index", "side"};
  for (int a = 0; a < ds.spec.n_attributes(); ++a) {
    table.header.push_back("attr" + std::to_string(a));
  }
  table.header.push_back("context_level");
  table.header.push_back("chose_left");
  for (const ChoiceTask& task : ds.tasks) {
    for (int side = 0; side < 2; ++side) {
      std::vector<std::string> row;
      row.push_back(std::to_string(task.respondent_id));
      row.push_back(std::to_string(task.task_index));
      row.push_back(std::to_string(side));
      const Profile& profile = side == 0 ? task.left : task.right;
      for (int level : profile.levels) row.push_back(std::to_string(level));
      row.push_back(std::to_string(task.context_level));
      row.push_back(task.chose_left ? "1" : "0");
      table.rows.push_back(std::move(row));
    }
  }
  write_csv(path, table);
}

namespace {

json spec_to_json(const DesignSpec& spec) {
  return json{{"attribute_levels", spec.attribute_levels},
              {"context_levels", spec.context_levels},
              {"sparsity_main", spec.sparsity_main},
              {"sparsity_interaction", spec.sparsity_interaction},
              {"n_respondents", spec.n_respondents},
              {"tasks_per_respondent", spec.tasks_per_respondent},
              {"measurement_error_threshold", spec.measurement_error_threshold},
              {"coef_low", spec.coef_low},
              {"coef_high", spec.coef_high},
              {"coef_exclusion_halfwidth", spec.coef_exclusion_halfwidth},
              {"seed", spec.seed}};
}

DesignSpec spec_from_json(const json& j) {
  DesignSpec spec;
  spec.attribute_levels = j.at("attribute_levels").get<std::vector<int>>();
  spec.context_levels = j.at("context_levels").get<int>();
  spec.sparsity_main = j.value("sparsity_main", 0.0);
  spec.sparsity_interaction = j.value("sparsity_interaction", 0.0);
  spec.n_respondents = j.value("n_respondents", 1);
  spec.tasks_per_respondent = j.value("tasks_per_respondent", 1);
  spec.measurement_error_threshold = j.value("measurement_error_threshold", 0.85);
  spec.coef_low = j.value("coef_low", -1.0);
  spec.coef_high = j.value("coef_high", 1.0);
  spec.coef_exclusion_halfwidth = j.value("coef_exclusion_halfwidth", 0.1);
  spec.seed = j.value("seed", std::uint64_t(0));
  return spec;
}

}  // namespace

void save_truth_json(const Dataset& ds, const std::string& path) {
  const CoefficientSet& truth = ds.truth;
  const int n = truth.main_dim();
  const int m = truth.context_levels;

  std::vector<double> beta(truth.beta.data(), truth.beta.data() + n);
  std::vector<std::vector<double>> inter(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> inter_mask(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    for (int c = 0; c < m; ++c) {
      inter[std::size_t(j)].push_back(truth.b_interaction(j, c));
      inter_mask[std::size_t(j)].push_back(truth.interaction_is_active(j, c) ? 1 : 0);
    }
  }
  std::vector<int> main_mask;
  for (int j = 0; j < n; ++j) main_mask.push_back(truth.main_is_active(j) ? 1 : 0);

  json out{{"design", spec_to_json(ds.spec)},
           {"beta", beta},
           {"b_interaction", inter},
           {"masks", json{{"main", main_mask}, {"interaction", inter_mask}}}};
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::Io, "cannot open for writing: " + path);
  file << out.dump(2) << '\n';
  if (!file) fail(ErrorCode::Io, "short write: " + path);
}

Dataset load_truth(const std::string& truth_json) {
  std::ifstream file(truth_json);
  if (!file) fail(ErrorCode::Io, "cannot open for reading: " + truth_json);
  json j;
  try {
    file >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad truth json: ") + e.what());
  }

  Dataset ds;
  try {
    ds.spec = spec_from_json(j.at("design"));
    CoefficientSet& truth = ds.truth;
    truth.attribute_levels = ds.spec.attribute_levels;
    truth.context_levels = ds.spec.context_levels;
    auto beta = j.at("beta").get<std::vector<double>>();
    truth.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), long(beta.size()));
    auto inter = j.at("b_interaction").get<std::vector<std::vector<double>>>();
    const int n = int(beta.size());
    const int m = ds.spec.context_levels;
    if (n != ds.spec.main_dim() || int(inter.size()) != n) {
      fail(ErrorCode::ShapeMismatch, "truth json dimensions disagree with design");
    }
    truth.b_interaction.resize(n, m);
    for (int jj = 0; jj < n; ++jj) {
      if (int(inter[std::size_t(jj)].size()) != m) {
        fail(ErrorCode::ShapeMismatch, "truth json interaction row width mismatch");
      }
      for (int c = 0; c < m; ++c) truth.b_interaction(jj, c) = inter[std::size_t(jj)][std::size_t(c)];
    }
    auto main_mask = j.at("masks").at("main").get<std::vector<int>>();
    auto inter_mask = j.at("masks").at("interaction").get<std::vector<std::vector<int>>>();
    if (int(main_mask.size()) != n || int(inter_mask.size()) != n) {
      fail(ErrorCode::ShapeMismatch, "truth json mask dimensions mismatch");
    }
    truth.main_active.assign(std::size_t(n), 0);
    truth.interaction_active.assign(std::size_t(n) * std::size_t(m), 0);
    for (int jj = 0; jj < n; ++jj) {
      truth.main_active[std::size_t(jj)] = main_mask[std::size_t(jj)] ? 1 : 0;
      for (int c = 0; c < m; ++c) {
        truth.interaction_active[std::size_t(jj) * std::size_t(m) + std::size_t(c)] =
            inter_mask[std::size_t(jj)][std::size_t(c)] ? 1 : 0;
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad truth json: ") + e.what());
  }
  return ds;
}

Dataset load_dataset(const std::string& tasks_csv, const std::string& truth_json) {
  Dataset ds = load_truth(truth_json);
  const CsvTable table = read_csv(tasks_csv);
  const int n_attr = ds.spec.n_attributes();
  const int c_resp = table.column("respondent_id");
  const int c_task = table.column("task_index");
  const int c_side = table.column("side");
  const int c_ctx = table.column("context_level");
  const int c_label = table.column("chose_left");
  if (c_resp < 0 || c_task < 0 || c_side < 0 || c_ctx < 0 || c_label < 0) {
    fail(ErrorCode::Parse, "tasks csv is missing required columns");
  }
  std::vector<int> attr_cols;
  for (int a = 0; a < n_attr; ++a) {
    int c = table.column("attr" + std::to_string(a));
    if (c < 0) fail(ErrorCode::Parse, "tasks csv is missing attr" + std::to_string(a));
    attr_cols.push_back(c);
  }
  if (table.rows.size() % 2 != 0) {
    fail(ErrorCode::Parse, "tasks csv must contain two profile rows per task");
  }

  auto parse_row = [&](const std::vector<std::string>& row, ChoiceTask& task, int want_side) {
    if (std::stoi(row[std::size_t(c_side)]) != want_side) {
      fail(ErrorCode::Parse, "tasks csv rows are not paired left/right");
    }
    Profile& profile = want_side == 0 ? task.left : task.right;
    profile.levels.resize(std::size_t(n_attr));
    for (int a = 0; a < n_attr; ++a) {
      profile.levels[std::size_t(a)] = std::stoi(row[std::size_t(attr_cols[std::size_t(a)])]);
    }
    if (want_side == 0) {
      task.respondent_id = std::stoi(row[std::size_t(c_resp)]);
      task.task_index = std::stoi(row[std::size_t(c_task)]);
      task.context_level = std::stoi(row[std::size_t(c_ctx)]);
      task.chose_left = row[std::size_t(c_label)] == "1";
    }
  };

  ds.tasks.resize(table.rows.size() / 2);
  for (std::size_t i = 0; i < ds.tasks.size(); ++i) {
    parse_row(table.rows[2 * i], ds.tasks[i], 0);
    parse_row(table.rows[2 * i + 1], ds.tasks[i], 1);
  }
  recompute_latent(ds.tasks, ds.truth);
  return ds;
}

}  // namespace dipce
