#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "design.hpp"
#include "encoding.hpp"
#include "predictor.hpp"

namespace dipce {

// Which conditioning side of the difference encoding feeds the contrast: P
// averages rows where the focal variable equals +1, N negates the average over
// rows where it equals -1. On per-profile data both collapse to the value-1
// filter.
enum class Variant { P, N };

enum class EffectKind { Main, Interaction };

enum class EffectClass : int { Negative = -1, Null = 0, Positive = 1 };

struct BootstrapConfig {
  int n_bootstrap = 1000;
  double ci_level = 0.95;
  Variant variant = Variant::N;
  double center_offset = 0.5;
  std::uint64_t seed = 0;
};

struct EffectEstimate {
  EffectKind kind = EffectKind::Main;
  int attribute = -1;
  int level = -1;
  std::optional<int> context_level;  // engaged only for interactions
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  EffectClass classification = EffectClass::Null;
};

// Centered model outputs for the rows matching one focal main variable,
// together with the row context and respondent. centered_score is always
// predict_proba - center_offset; variant N applies its sign at consumption.
struct CenteredPredictionTable {
  int main_column = -1;
  std::vector<double> centered_score;
  std::vector<int> context_level;
  std::vector<int> respondent_id;

  std::size_t size() const { return centered_score.size(); }
};

using RowFilter = std::function<bool(const EncodedDataset&, long row)>;

// Mean centered prediction over the rows the filter keeps.
double conditional_mean(const Predictor& model, const EncodedDataset& data,
                        const RowFilter& filter, double center_offset = 0.5);

// Total effect contrast for one main one-hot column of a difference-encoded
// dataset: mean centered prediction over rows with value +1 (variant P) or the
// negated mean over rows with value -1 (variant N).
double marginal_contrast(const Predictor& model, const EncodedDataset& data,
                         int main_column, Variant variant,
                         double center_offset = 0.5);

CenteredPredictionTable build_centered_table(const Predictor& model,
                                             const EncodedDataset& data,
                                             int main_column, Variant variant,
                                             double center_offset = 0.5);

// Full estimator: per focal variable, bootstrap the filtered table, form the
// leave-one-context-out contrasts scaled by 1/n_contexts for interactions and
// the residual total for mains, then classify by percentile-CI zero inclusion.
// Deterministic given the seed; per-variable substreams make the variable
// order irrelevant.
std::vector<EffectEstimate> estimate_effects(const Predictor& model,
                                             const EncodedDataset& heldout,
                                             const DesignSpec& spec,
                                             const BootstrapConfig& config);

// Subtraction identity: main effect = total contrast minus the
// context-distribution-weighted sum of that level's interaction estimates.
// `interactions` must contain every non-baseline context exactly once;
// context 0 contributes zero by construction.
double reconstruct_main_from_interactions(double total_contrast,
                                          const std::vector<EffectEstimate>& interactions,
                                          const Eigen::VectorXd& context_distribution);

std::string to_string(EffectClass c);
EffectClass effect_class_from_string(const std::string& s);

// Shared estimate table; truth classes included when the ground truth is given.
void save_estimates_csv(const std::vector<EffectEstimate>& estimates,
                        const std::string& path,
                        const CoefficientSet* truth = nullptr);
std::vector<EffectEstimate> load_estimates_csv(const std::string& path);

}  // namespace dipce
