#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "design.hpp"
#include "estimator.hpp"

namespace dipce {

enum class EffectScope { Main, Interaction, All };

std::string to_string(EffectScope scope);

// Sign-classification confusion collapsed to detection counts: a hit must
// match the true sign exactly; any non-null call on a null effect, or a
// wrong-signed call on an active one, is a false positive.
struct ConfusionSummary {
  long true_positives = 0;
  long false_positives = 0;
  long false_negatives = 0;
  long true_negatives = 0;

  long total() const {
    return true_positives + false_positives + false_negatives + true_negatives;
  }
  // FP / (FP + TN); empty when no true nulls were scored.
  std::optional<double> false_positive_rate() const;
  // FN / (FN + TP); empty when no true actives were scored.
  std::optional<double> false_negative_rate() const;
  // Exact sign matches over everything scored.
  double sign_accuracy() const;
};

// Scores predicted classifications against the drawn truth. Estimates outside
// the scope are ignored; within it the list must cover every effect slot
// (baselines excluded) exactly once, else CoverageMismatch.
ConfusionSummary score_classifications(const std::vector<EffectEstimate>& estimates,
                                       const CoefficientSet& truth,
                                       EffectScope scope);

// Fraction of exact agreements between hard 0/1 predictions and labels.
double predictive_accuracy(const std::vector<int>& predicted,
                           const Eigen::VectorXd& labels);
// Probabilities are thresholded strictly above 0.5.
double predictive_accuracy(const Eigen::VectorXd& probabilities,
                           const Eigen::VectorXd& labels);

struct MeanCi {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  long n = 0;
};

// Normal-approximation interval around the replication mean, 1.96 standard
// errors wide with the population (1/n) standard deviation. Undefined
// replications are dropped; fewer than two defined values is an error.
MeanCi aggregate_replications(const std::vector<std::optional<double>>& values);
MeanCi aggregate_replications(const std::vector<double>& values);

}  // namespace dipce
