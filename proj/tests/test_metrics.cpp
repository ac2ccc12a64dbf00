#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "design.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "metrics.hpp"
#include "support.hpp"

using dipce::CoefficientSet;
using dipce::ConfusionSummary;
using dipce::EffectClass;
using dipce::EffectEstimate;
using dipce::EffectKind;
using dipce::EffectScope;
using dipce::Error;
using dipce::ErrorCode;
using dipce::MeanCi;
using dipce::testing::make_truth;

namespace {

EffectEstimate call(EffectKind kind, int attribute, int level, int context,
                    EffectClass cls) {
  EffectEstimate est;
  est.kind = kind;
  est.attribute = attribute;
  est.level = level;
  if (kind == EffectKind::Interaction) est.context_level = context;
  est.classification = cls;
  return est;
}

EffectEstimate main_call(int attribute, int level, EffectClass cls) {
  return call(EffectKind::Main, attribute, level, -1, cls);
}

// Single four-level attribute, one context: three scoreable main slots and no
// interaction slots. beta = (+, +, 0) across levels 1..3.
CoefficientSet worked_truth() {
  Eigen::VectorXd beta(4);
  beta << 0.0, 0.5, 0.3, 0.0;
  return make_truth({4}, 1, beta, Eigen::MatrixXd::Zero(4, 1));
}

// Two binary attributes, two contexts: mains (+, 0), interactions (-, 0).
CoefficientSet mixed_truth() {
  Eigen::VectorXd beta(4);
  beta << 0.0, 0.4, 0.0, 0.0;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(4, 2);
  b(1, 1) = -0.25;
  return make_truth({2, 2}, 2, beta, b);
}

std::vector<EffectEstimate> mixed_calls(EffectClass main0, EffectClass main1,
                                        EffectClass inter0, EffectClass inter1) {
  return {main_call(0, 1, main0), main_call(1, 1, main1),
          call(EffectKind::Interaction, 0, 1, 1, inter0),
          call(EffectKind::Interaction, 1, 1, 1, inter1)};
}

}  // namespace

TEST_CASE("confusion counts follow the sign-match rule") {
  const CoefficientSet truth = worked_truth();
  // Truth is (+, +, 0); calls are (+, 0, -): one hit, one miss, one false alarm.
  const std::vector<EffectEstimate> calls = {
      main_call(0, 1, EffectClass::Positive), main_call(0, 2, EffectClass::Null),
      main_call(0, 3, EffectClass::Negative)};
  const ConfusionSummary summary =
      dipce::score_classifications(calls, truth, EffectScope::Main);
  CHECK(summary.true_positives == 1);
  CHECK(summary.false_positives == 1);
  CHECK(summary.false_negatives == 1);
  CHECK(summary.true_negatives == 0);
  REQUIRE(summary.false_positive_rate().has_value());
  CHECK(*summary.false_positive_rate() == 1.0);
  REQUIRE(summary.false_negative_rate().has_value());
  CHECK(*summary.false_negative_rate() == 0.5);
  CHECK(summary.sign_accuracy() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("perfect calls leave no errors") {
  const CoefficientSet truth = worked_truth();
  const std::vector<EffectEstimate> calls = {
      main_call(0, 1, EffectClass::Positive),
      main_call(0, 2, EffectClass::Positive), main_call(0, 3, EffectClass::Null)};
  const ConfusionSummary summary =
      dipce::score_classifications(calls, truth, EffectScope::Main);
  CHECK(summary.true_positives == 2);
  CHECK(summary.true_negatives == 1);
  CHECK(summary.false_positives == 0);
  CHECK(summary.false_negatives == 0);
  CHECK(*summary.false_negative_rate() == 0.0);
  CHECK(summary.sign_accuracy() == 1.0);
}

TEST_CASE("rates are undefined without their denominator class") {
  Eigen::VectorXd active(2);
  active << 0.0, 0.5;
  const CoefficientSet truth =
      make_truth({2}, 1, active, Eigen::MatrixXd::Zero(2, 1));
  const ConfusionSummary hit = dipce::score_classifications(
      {main_call(0, 1, EffectClass::Positive)}, truth, EffectScope::Main);
  CHECK(!hit.false_positive_rate().has_value());  // no nulls in truth
  CHECK(hit.false_negative_rate().has_value());

  const CoefficientSet null_truth =
      make_truth({2}, 1, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 1));
  const ConfusionSummary quiet = dipce::score_classifications(
      {main_call(0, 1, EffectClass::Null)}, null_truth, EffectScope::Main);
  CHECK(quiet.false_positive_rate().has_value());
  CHECK(!quiet.false_negative_rate().has_value());
}

TEST_CASE("a wrong sign is a false positive, not a miss") {
  const CoefficientSet truth = worked_truth();
  const ConfusionSummary summary = dipce::score_classifications(
      {main_call(0, 1, EffectClass::Negative), main_call(0, 2, EffectClass::Positive),
       main_call(0, 3, EffectClass::Null)},
      truth, EffectScope::Main);
  CHECK(summary.false_positives == 1);
  CHECK(summary.false_negatives == 0);
  CHECK(summary.true_positives == 1);
  CHECK(summary.true_negatives == 1);
}

TEST_CASE("counts partition the scored slots and ignore estimate order") {
  const CoefficientSet truth = mixed_truth();
  std::vector<EffectEstimate> calls =
      mixed_calls(EffectClass::Positive, EffectClass::Negative, EffectClass::Null,
                  EffectClass::Negative);
  const ConfusionSummary forward =
      dipce::score_classifications(calls, truth, EffectScope::All);
  CHECK(forward.total() == 4);
  CHECK(forward.sign_accuracy() ==
        doctest::Approx(double(forward.true_positives + forward.true_negatives) /
                        4.0));

  std::reverse(calls.begin(), calls.end());
  const ConfusionSummary backward =
      dipce::score_classifications(calls, truth, EffectScope::All);
  CHECK(backward.true_positives == forward.true_positives);
  CHECK(backward.false_positives == forward.false_positives);
  CHECK(backward.false_negatives == forward.false_negatives);
  CHECK(backward.true_negatives == forward.true_negatives);
}

TEST_CASE("scope selects which slots are scored") {
  const CoefficientSet truth = mixed_truth();
  const auto calls = mixed_calls(EffectClass::Positive, EffectClass::Null,
                                 EffectClass::Negative, EffectClass::Null);

  const ConfusionSummary mains =
      dipce::score_classifications(calls, truth, EffectScope::Main);
  CHECK(mains.total() == 2);
  CHECK(mains.true_positives == 1);
  CHECK(mains.true_negatives == 1);

  const ConfusionSummary inters =
      dipce::score_classifications(calls, truth, EffectScope::Interaction);
  CHECK(inters.total() == 2);
  CHECK(inters.true_positives == 1);
  CHECK(inters.true_negatives == 1);

  const ConfusionSummary all =
      dipce::score_classifications(calls, truth, EffectScope::All);
  CHECK(all.total() == 4);
  CHECK(all.true_positives == 2);
  CHECK(all.true_negatives == 2);

  // Interaction-scope scoring still works when only interactions are passed.
  const std::vector<EffectEstimate> only_inters = {
      call(EffectKind::Interaction, 0, 1, 1, EffectClass::Negative),
      call(EffectKind::Interaction, 1, 1, 1, EffectClass::Null)};
  const ConfusionSummary trimmed =
      dipce::score_classifications(only_inters, truth, EffectScope::Interaction);
  CHECK(trimmed.total() == 2);
}

TEST_CASE("slot coverage is enforced") {
  const CoefficientSet truth = mixed_truth();

  auto expect_coverage_error = [&](const std::vector<EffectEstimate>& calls,
                                   EffectScope scope) {
    try {
      (void)dipce::score_classifications(calls, truth, scope);
      FAIL_CHECK("expected coverage-mismatch error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CoverageMismatch);
    }
  };

  // Missing a main slot.
  expect_coverage_error({main_call(0, 1, EffectClass::Null)}, EffectScope::Main);

  // Missing an interaction slot.
  expect_coverage_error({call(EffectKind::Interaction, 0, 1, 1, EffectClass::Null)},
                        EffectScope::Interaction);

  // The same main twice.
  expect_coverage_error({main_call(0, 1, EffectClass::Null),
                         main_call(0, 1, EffectClass::Null)},
                        EffectScope::Main);

  // The same interaction twice.
  auto dup = mixed_calls(EffectClass::Null, EffectClass::Null, EffectClass::Null,
                         EffectClass::Null);
  dup.push_back(call(EffectKind::Interaction, 0, 1, 1, EffectClass::Null));
  expect_coverage_error(dup, EffectScope::All);

  // A slot that does not exist in the design (baseline level).
  auto baseline = mixed_calls(EffectClass::Null, EffectClass::Null,
                              EffectClass::Null, EffectClass::Null);
  baseline.push_back(main_call(0, 0, EffectClass::Null));
  expect_coverage_error(baseline, EffectScope::All);

  // A context outside the design.
  auto bad_context = mixed_calls(EffectClass::Null, EffectClass::Null,
                                 EffectClass::Null, EffectClass::Null);
  bad_context.push_back(call(EffectKind::Interaction, 0, 1, 5, EffectClass::Null));
  expect_coverage_error(bad_context, EffectScope::All);

  // Baseline context (0) never carries an interaction slot.
  auto ctx0 = mixed_calls(EffectClass::Null, EffectClass::Null, EffectClass::Null,
                          EffectClass::Null);
  ctx0.push_back(call(EffectKind::Interaction, 0, 1, 0, EffectClass::Null));
  expect_coverage_error(ctx0, EffectScope::All);
}

TEST_CASE("predictive accuracy counts exact agreements") {
  Eigen::VectorXd labels(4);
  labels << 1, 0, 1, 1;
  CHECK(dipce::predictive_accuracy(std::vector<int>{1, 0, 1, 1}, labels) == 1.0);
  CHECK(dipce::predictive_accuracy(std::vector<int>{0, 1, 0, 0}, labels) == 0.0);
  CHECK(dipce::predictive_accuracy(std::vector<int>{1, 0, 1, 0}, labels) == 0.75);

  // Probabilities threshold strictly above one half: 0.5 decodes to class 0.
  Eigen::VectorXd proba(4);
  proba << 0.9, 0.5, 0.500001, 0.2;
  CHECK(dipce::predictive_accuracy(proba, labels) == 0.75);
  Eigen::VectorXd boundary(1);
  boundary << 0.5;
  Eigen::VectorXd one(1);
  one << 1.0;
  CHECK(dipce::predictive_accuracy(boundary, one) == 0.0);

  try {
    (void)dipce::predictive_accuracy(std::vector<int>{1, 0}, labels);
    FAIL_CHECK("expected length-mismatch error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
  try {
    (void)dipce::predictive_accuracy(std::vector<int>{}, Eigen::VectorXd());
    FAIL_CHECK("expected empty-input error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyInput);
  }
}

TEST_CASE("replication aggregation pins the normal interval") {
  const MeanCi ci = dipce::aggregate_replications(std::vector<double>{0.1, 0.2});
  CHECK(ci.n == 2);
  CHECK(std::abs(ci.mean - 0.15) < 1e-15);
  // 1.96 * sd_pop / sqrt(2) with sd_pop = 0.05.
  CHECK(std::abs((ci.ci_high - ci.mean) - 0.06929646455628166) < 1e-12);
  CHECK(std::abs((ci.mean - ci.ci_low) - 0.06929646455628166) < 1e-12);

  const MeanCi flat =
      dipce::aggregate_replications(std::vector<double>{0.25, 0.25, 0.25});
  CHECK(flat.mean == 0.25);
  CHECK(flat.ci_low == flat.ci_high);

  const std::vector<std::optional<double>> holey = {0.1, std::nullopt, 0.2,
                                                    std::nullopt};
  const MeanCi pruned = dipce::aggregate_replications(holey);
  CHECK(pruned.n == 2);
  CHECK(std::abs(pruned.mean - 0.15) < 1e-15);
  CHECK(std::abs((pruned.ci_high - pruned.mean) - 0.06929646455628166) < 1e-12);

  try {
    (void)dipce::aggregate_replications(
        std::vector<std::optional<double>>{0.3, std::nullopt});
    FAIL_CHECK("expected insufficient-replications error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientReplications);
  }
  CHECK_THROWS_AS((void)dipce::aggregate_replications(std::vector<double>{0.3}),
                  Error);
  CHECK_THROWS_AS((void)dipce::aggregate_replications(std::vector<double>{}),
                  Error);
}

TEST_CASE("scope names serialize for reports") {
  CHECK(dipce::to_string(EffectScope::Main) == "main");
  CHECK(dipce::to_string(EffectScope::Interaction) == "interaction");
  CHECK(dipce::to_string(EffectScope::All) == "all");
}
