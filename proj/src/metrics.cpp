#include "metrics.hpp"

#include <cmath>
#include <cstddef>

#include "errors.hpp"

namespace dipce {

std::string to_string(EffectScope scope) {
  switch (scope) {
    case EffectScope::Main: return "main";
    case EffectScope::Interaction: return "interaction";
    case EffectScope::All: return "all";
  }
  fail(ErrorCode::InvalidArgument, "unknown effect scope");
}

std::optional<double> ConfusionSummary::false_positive_rate() const {
  const long nulls = false_positives + true_negatives;
  if (nulls == 0) return std::nullopt;
  return double(false_positives) / double(nulls);
}

std::optional<double> ConfusionSummary::false_negative_rate() const {
  const long actives = false_negatives + true_positives;
  if (actives == 0) return std::nullopt;
  return double(false_negatives) / double(actives);
}

double ConfusionSummary::sign_accuracy() const {
  const long n = total();
  if (n == 0) fail(ErrorCode::EmptyInput, "no classifications scored");
  return double(true_positives + true_negatives) / double(n);
}

namespace {

void tally(ConfusionSummary& s, int predicted, int truth) {
  if (predicted == 0) {
    truth == 0 ? ++s.true_negatives : ++s.false_negatives;
  } else {
    predicted == truth ? ++s.true_positives : ++s.false_positives;
  }
}

}  // namespace

ConfusionSummary score_classifications(const std::vector<EffectEstimate>& estimates,
                                       const CoefficientSet& truth,
                                       EffectScope scope) {
  const int n_attr = int(truth.attribute_levels.size());
  const bool want_main = scope != EffectScope::Interaction;
  const bool want_inter = scope != EffectScope::Main;

  // seen[slot] for mains, seen[slot * contexts + c] for interactions.
  std::vector<std::uint8_t> seen_main(std::size_t(truth.main_dim()), 0);
  std::vector<std::uint8_t> seen_inter(
      std::size_t(truth.main_dim()) * std::size_t(truth.context_levels), 0);

  ConfusionSummary summary;
  for (const EffectEstimate& est : estimates) {
    const bool is_main = est.kind == EffectKind::Main;
    if (is_main ? !want_main : !want_inter) continue;
    if (est.attribute < 0 || est.attribute >= n_attr ||
        est.level < 1 ||
        est.level >= truth.attribute_levels[std::size_t(est.attribute)]) {
      fail(ErrorCode::CoverageMismatch, "estimate for an unknown effect slot");
    }
    const int j = truth.attribute_offset(est.attribute) + est.level;
    if (is_main) {
      if (seen_main[std::size_t(j)]++) {
        fail(ErrorCode::CoverageMismatch, "duplicate main-effect estimate");
      }
      tally(summary, int(est.classification), truth.truth_main_class(j));
    } else {
      if (!est.context_level || *est.context_level < 1 ||
          *est.context_level >= truth.context_levels) {
        fail(ErrorCode::CoverageMismatch,
             "interaction estimate outside the context range");
      }
      const std::size_t slot = std::size_t(j) * std::size_t(truth.context_levels) +
                               std::size_t(*est.context_level);
      if (seen_inter[slot]++) {
        fail(ErrorCode::CoverageMismatch, "duplicate interaction estimate");
      }
      tally(summary, int(est.classification),
            truth.truth_interaction_class(j, *est.context_level));
    }
  }

  for (int a = 0; a < n_attr; ++a) {
    for (int l = 1; l < truth.attribute_levels[std::size_t(a)]; ++l) {
      const int j = truth.attribute_offset(a) + l;
      if (want_main && !seen_main[std::size_t(j)]) {
        fail(ErrorCode::CoverageMismatch, "missing main-effect estimate");
      }
      if (!want_inter) continue;
      for (int c = 1; c < truth.context_levels; ++c) {
        const std::size_t slot =
            std::size_t(j) * std::size_t(truth.context_levels) + std::size_t(c);
        if (!seen_inter[slot]) {
          fail(ErrorCode::CoverageMismatch, "missing interaction estimate");
        }
      }
    }
  }
  return summary;
}

double predictive_accuracy(const std::vector<int>& predicted,
                           const Eigen::VectorXd& labels) {
  if (long(predicted.size()) != labels.size()) {
    fail(ErrorCode::LengthMismatch, "predictions and labels differ in length");
  }
  if (predicted.empty()) fail(ErrorCode::EmptyInput, "nothing to score");
  long hits = 0;
  for (long i = 0; i < labels.size(); ++i) {
    hits += predicted[std::size_t(i)] == (labels[i] > 0.5 ? 1 : 0);
  }
  return double(hits) / double(labels.size());
}

double predictive_accuracy(const Eigen::VectorXd& probabilities,
                           const Eigen::VectorXd& labels) {
  std::vector<int> predicted(std::size_t(probabilities.size()));
  for (long i = 0; i < probabilities.size(); ++i) {
    predicted[std::size_t(i)] = probabilities[i] > 0.5 ? 1 : 0;
  }
  return predictive_accuracy(predicted, labels);
}

MeanCi aggregate_replications(const std::vector<std::optional<double>>& values) {
  std::vector<double> defined;
  defined.reserve(values.size());
  for (const auto& v : values) {
    if (v) defined.push_back(*v);
  }
  return aggregate_replications(defined);
}

MeanCi aggregate_replications(const std::vector<double>& values) {
  if (values.size() < 2) {
    fail(ErrorCode::InsufficientReplications,
         "need at least two defined replications to aggregate");
  }
  const double n = double(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  const double half = 1.96 * std::sqrt(var / n);
  return MeanCi{mean, mean - half, mean + half, long(values.size())};
}

}  // namespace dipce
