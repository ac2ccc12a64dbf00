#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rng.hpp"

namespace dipce {

// Survey design plus simulation knobs. Level index 0 of every attribute and
// context level 0 are the baselines whose coefficients stay fixed at zero.
struct DesignSpec {
  std::vector<int> attribute_levels;
  int context_levels = 1;
  double sparsity_main = 0.0;
  double sparsity_interaction = 0.0;
  int n_respondents = 0;
  int tasks_per_respondent = 0;
  // Probability that the utility-maximal alternative is kept as the recorded
  // answer; the complement is the response-error rate.
  double measurement_error_threshold = 0.85;
  double coef_low = -1.0;
  double coef_high = 1.0;
  double coef_exclusion_halfwidth = 0.1;
  std::uint64_t seed = 0;

  int n_attributes() const { return int(attribute_levels.size()); }
  int main_dim() const;                  // total one-hot width across attributes
  int attribute_offset(int a) const;     // first one-hot index of attribute a
  int attribute_of_index(int j) const;   // inverse of the offset map
  bool is_baseline_main(int j) const;    // j indexes the one-hot layout
  int eligible_main_count() const;       // non-baseline level slots
  int eligible_interaction_count() const;

  void validate() const;  // throws Error(InvalidSpec)
};

// Ground truth drawn for one simulated population. Self-contained: carries the
// one-hot layout so scoring needs no separate spec.
struct CoefficientSet {
  std::vector<int> attribute_levels;
  int context_levels = 1;
  Eigen::VectorXd beta;                           // main_dim
  Eigen::MatrixXd b_interaction;                  // main_dim x context_levels
  std::vector<std::uint8_t> main_active;          // 1 iff drawn non-zero
  std::vector<std::uint8_t> interaction_active;   // row-major main_dim x context_levels

  int main_dim() const { return int(beta.size()); }
  int attribute_offset(int a) const;
  bool main_is_active(int j) const { return main_active[std::size_t(j)] != 0; }
  bool interaction_is_active(int j, int c) const {
    return interaction_active[std::size_t(j) * std::size_t(context_levels) + std::size_t(c)] != 0;
  }
  // -1 / 0 / +1 by the sign of the true coefficient (0 when masked out).
  int truth_main_class(int j) const;
  int truth_interaction_class(int j, int c) const;
};

// One alternative: the chosen level index per attribute.
struct Profile {
  std::vector<int> levels;
  bool operator==(const Profile&) const = default;
};

struct ChoiceTask {
  int respondent_id = 0;
  int task_index = 0;
  Profile left;
  Profile right;
  int context_level = 0;
  bool chose_left = false;         // recorded (possibly error-flipped) answer
  bool latent_chose_left = false;  // noise-free answer; never shown to estimators
  bool operator==(const ChoiceTask&) const = default;
};

struct Dataset {
  DesignSpec spec;
  CoefficientSet truth;
  std::vector<ChoiceTask> tasks;
};

// Rounds half away from zero; used for sparsity slot counts.
long round_half_up(double v);

CoefficientSet sample_coefficients(const DesignSpec& spec, RngStream& rng);

double utility_score(const Profile& profile, int context_level,
                     const CoefficientSet& coefs);

struct ChoiceDraw {
  bool latent_chose_left = false;
  bool chose_left = false;
};

// Scores both alternatives, takes the argmax (ties go left), then flips the
// recorded answer when the uniform draw lands in the error tail.
ChoiceDraw simulate_choice(const Profile& left, const Profile& right,
                           int context_level, const CoefficientSet& coefs,
                           double measurement_error_threshold, RngStream& rng);

// Whole pipeline: coefficient draw + per-respondent context + task loop.
// Respondent r consumes only substream r+1 of the spec seed, so regeneration is
// order-independent.
Dataset generate_dataset(const DesignSpec& spec);

// All (main, interaction) sparsity pairs with interaction >= main, in option
// order. Inputs must be ascending.
std::vector<std::pair<double, double>> sparsity_grid(
    const std::vector<double>& main_options,
    const std::vector<double>& interaction_options);

// Recomputes latent answers from the truth (used after loading persisted tasks,
// which only store the recorded answer).
void recompute_latent(std::vector<ChoiceTask>& tasks, const CoefficientSet& coefs);

void save_tasks_csv(const Dataset& ds, const std::string& path);
void save_truth_json(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& tasks_csv, const std::string& truth_json);
// Truth-only load: spec + coefficients, no tasks.
Dataset load_truth(const std::string& truth_json);

}  // namespace dipce
