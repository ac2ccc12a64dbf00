#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "design.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "support.hpp"

using dipce::ChoiceDraw;
using dipce::ChoiceTask;
using dipce::CoefficientSet;
using dipce::Dataset;
using dipce::DesignSpec;
using dipce::Error;
using dipce::ErrorCode;
using dipce::Profile;
using dipce::RngStream;

namespace {

// The paper-scale survey: nine attributes, five contexts.
DesignSpec reference_design() {
  DesignSpec spec;
  spec.attribute_levels = {7, 2, 10, 4, 3, 11, 4, 4, 5};
  spec.context_levels = 5;
  spec.n_respondents = 2000;
  spec.tasks_per_respondent = 8;
  return spec;
}

DesignSpec tiny_design() {
  DesignSpec spec;
  spec.attribute_levels = {3, 2};
  spec.context_levels = 2;
  spec.n_respondents = 20;
  spec.tasks_per_respondent = 4;
  spec.seed = 77;
  return spec;
}

}  // namespace

TEST_CASE("reference design slot counts") {
  const DesignSpec spec = reference_design();
  CHECK(spec.n_attributes() == 9);
  CHECK(spec.main_dim() == 50);
  CHECK(spec.eligible_main_count() == 41);
  CHECK(spec.eligible_interaction_count() == 164);
}

TEST_CASE("one-hot layout maps indices and baselines") {
  const DesignSpec spec = reference_design();
  CHECK(spec.attribute_offset(0) == 0);
  CHECK(spec.attribute_offset(1) == 7);
  CHECK(spec.attribute_offset(2) == 9);
  CHECK(spec.attribute_offset(8) == 45);
  CHECK(spec.attribute_of_index(0) == 0);
  CHECK(spec.attribute_of_index(6) == 0);
  CHECK(spec.attribute_of_index(7) == 1);
  CHECK(spec.attribute_of_index(49) == 8);
  CHECK(spec.is_baseline_main(0));
  CHECK(spec.is_baseline_main(7));
  CHECK(spec.is_baseline_main(9));
  CHECK_FALSE(spec.is_baseline_main(1));
  CHECK_FALSE(spec.is_baseline_main(8));
}

TEST_CASE("round_half_up rounds half away from zero") {
  CHECK(dipce::round_half_up(0.5) == 1);
  CHECK(dipce::round_half_up(1.5) == 2);
  CHECK(dipce::round_half_up(2.4) == 2);
  CHECK(dipce::round_half_up(2.5) == 3);
  CHECK(dipce::round_half_up(26.65) == 27);
  CHECK(dipce::round_half_up(0.0) == 0);
}

TEST_CASE("sparsity grid keeps pairs with interaction >= main") {
  const std::vector<double> four{0.5, 0.65, 0.8, 0.95};
  const auto grid = dipce::sparsity_grid(four, four);
  CHECK(grid.size() == 10);
  CHECK(grid.front() == std::pair<double, double>{0.5, 0.5});
  CHECK(grid.back() == std::pair<double, double>{0.95, 0.95});
  for (const auto& [m, i] : grid) CHECK(i >= m);

  CHECK(dipce::sparsity_grid({0.5}, {0.5}).size() == 1);
  CHECK(dipce::sparsity_grid({0.5, 0.8}, {0.5, 0.8}).size() == 3);

  CHECK_THROWS_AS((void)dipce::sparsity_grid({0.8, 0.5}, {0.5}), Error);
}

TEST_CASE("full sparsity zeroes every coefficient") {
  DesignSpec spec = reference_design();
  spec.sparsity_main = 1.0;
  spec.sparsity_interaction = 1.0;
  RngStream rng(1);
  const CoefficientSet truth = dipce::sample_coefficients(spec, rng);
  CHECK(truth.beta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(truth.b_interaction.cwiseAbs().maxCoeff() == 0.0);
  for (auto a : truth.main_active) CHECK(a == 0);
  for (auto a : truth.interaction_active) CHECK(a == 0);
}

TEST_CASE("dense draw activates exactly the eligible slots") {
  DesignSpec spec = reference_design();
  RngStream rng(2);
  const CoefficientSet truth = dipce::sample_coefficients(spec, rng);
  long active_main = 0, active_inter = 0;
  for (int j = 0; j < truth.main_dim(); ++j) {
    if (spec.is_baseline_main(j)) {
      CHECK(truth.beta[j] == 0.0);
      CHECK_FALSE(truth.main_is_active(j));
      continue;
    }
    CHECK(truth.main_is_active(j));
    active_main += 1;
    for (int c = 0; c < spec.context_levels; ++c) {
      if (c == 0) {
        CHECK(truth.b_interaction(j, c) == 0.0);
      } else {
        CHECK(truth.interaction_is_active(j, c));
        active_inter += 1;
      }
    }
  }
  CHECK(active_main == 41);
  CHECK(active_inter == 164);
}

TEST_CASE("sparsity zeroes the rounded share of eligible slots") {
  DesignSpec spec = reference_design();
  spec.sparsity_main = 0.65;
  spec.sparsity_interaction = 0.8;
  RngStream rng(3);
  const CoefficientSet truth = dipce::sample_coefficients(spec, rng);
  long active_main = 0, active_inter = 0;
  for (int j = 0; j < truth.main_dim(); ++j) {
    if (truth.main_is_active(j)) active_main += 1;
    for (int c = 0; c < spec.context_levels; ++c) {
      if (truth.interaction_is_active(j, c)) active_inter += 1;
    }
  }
  // 41 - round(0.65 * 41) = 41 - 27; 164 - round(0.8 * 164) = 164 - 131.
  CHECK(active_main == 14);
  CHECK(active_inter == 33);
  // Masks agree with the stored values.
  for (int j = 0; j < truth.main_dim(); ++j) {
    CHECK((truth.beta[j] != 0.0) == truth.main_is_active(j));
  }
}

TEST_CASE("active coefficients avoid the exclusion band") {
  DesignSpec spec = reference_design();
  long n_checked = 0;
  for (int s = 0; s < 50; ++s) {
    RngStream rng(std::uint64_t(7000 + s));
    const CoefficientSet truth = dipce::sample_coefficients(spec, rng);
    for (int j = 0; j < truth.main_dim(); ++j) {
      if (!truth.main_is_active(j)) continue;
      REQUIRE(std::abs(truth.beta[j]) >= 0.1);
      REQUIRE(std::abs(truth.beta[j]) < 1.0);
      n_checked += 1;
      for (int c = 1; c < spec.context_levels; ++c) {
        REQUIRE(std::abs(truth.b_interaction(j, c)) >= 0.1);
        REQUIRE(std::abs(truth.b_interaction(j, c)) < 1.0);
        n_checked += 1;
      }
    }
  }
  CHECK(n_checked >= 10000);
}

TEST_CASE("utility score matches a hand-rolled sum") {
  Eigen::VectorXd beta(5);
  beta << 0.0, 0.4, -0.3, 0.0, 0.2;
  Eigen::MatrixXd b(5, 2);
  b.setZero();
  b(1, 1) = 0.5;
  b(2, 1) = -0.1;
  b(4, 1) = 0.25;
  const CoefficientSet truth = dipce::testing::make_truth({3, 2}, 2, beta, b);

  const Profile profile{{2, 1}};
  // One-hot slots: attr0 level 2 -> j=2, attr1 level 1 -> j=4.
  CHECK(dipce::utility_score(profile, 0, truth) ==
        doctest::Approx(-0.3 + 0.2).epsilon(1e-12));
  CHECK(dipce::utility_score(profile, 1, truth) ==
        doctest::Approx((-0.3 - 0.1) + (0.2 + 0.25)).epsilon(1e-12));

  const Profile baseline{{0, 0}};
  CHECK(dipce::utility_score(baseline, 1, truth) == 0.0);
}

TEST_CASE("ties go to the left profile") {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(5);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(5, 2);
  const CoefficientSet truth = dipce::testing::make_truth({3, 2}, 2, beta, b);
  RngStream rng(11);
  for (int i = 0; i < 200; ++i) {
    const ChoiceDraw draw = dipce::simulate_choice({{1, 0}}, {{2, 1}}, 1, truth,
                                                   1.0, rng);
    CHECK(draw.latent_chose_left);
    CHECK(draw.chose_left);
  }
}

TEST_CASE("recorded answers flip at the error rate") {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(5);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(5, 2);
  const CoefficientSet truth = dipce::testing::make_truth({3, 2}, 2, beta, b);
  RngStream rng(13);
  long flips = 0;
  const long n = 100000;
  for (long i = 0; i < n; ++i) {
    const ChoiceDraw draw = dipce::simulate_choice({{0, 0}}, {{0, 0}}, 0, truth,
                                                   0.85, rng);
    if (draw.chose_left != draw.latent_chose_left) flips += 1;
  }
  CHECK(std::abs(double(flips) / double(n) - 0.15) < 0.005);
}

TEST_CASE("threshold one removes response error entirely") {
  DesignSpec spec = tiny_design();
  spec.measurement_error_threshold = 1.0;
  const Dataset ds = dipce::generate_dataset(spec);
  for (const ChoiceTask& t : ds.tasks) CHECK(t.chose_left == t.latent_chose_left);
}

TEST_CASE("dataset generation is deterministic and sized by the design") {
  DesignSpec spec = reference_design();
  spec.sparsity_main = 0.5;
  spec.sparsity_interaction = 0.65;
  spec.seed = 404;
  const Dataset a = dipce::generate_dataset(spec);
  const Dataset b = dipce::generate_dataset(spec);
  CHECK(a.tasks.size() == 16000);
  CHECK(a.tasks == b.tasks);
  CHECK(a.truth.beta == b.truth.beta);
  CHECK(a.truth.b_interaction == b.truth.b_interaction);

  DesignSpec other = spec;
  other.seed = 405;
  const Dataset c = dipce::generate_dataset(other);
  CHECK(a.tasks != c.tasks);
}

TEST_CASE("single respondent, single task") {
  DesignSpec spec = tiny_design();
  spec.n_respondents = 1;
  spec.tasks_per_respondent = 1;
  const Dataset ds = dipce::generate_dataset(spec);
  CHECK(ds.tasks.size() == 1);
  CHECK(ds.tasks[0].respondent_id == 0);
  CHECK(ds.tasks[0].task_index == 0);
}

TEST_CASE("context is constant within a respondent and levels stay in range") {
  DesignSpec spec = tiny_design();
  const Dataset ds = dipce::generate_dataset(spec);
  std::vector<int> context(std::size_t(spec.n_respondents), -1);
  for (const ChoiceTask& t : ds.tasks) {
    REQUIRE(t.context_level >= 0);
    REQUIRE(t.context_level < spec.context_levels);
    int& seen = context[std::size_t(t.respondent_id)];
    if (seen < 0) seen = t.context_level;
    CHECK(seen == t.context_level);
    for (int a = 0; a < spec.n_attributes(); ++a) {
      REQUIRE(t.left.levels[std::size_t(a)] >= 0);
      REQUIRE(t.left.levels[std::size_t(a)] < spec.attribute_levels[std::size_t(a)]);
      REQUIRE(t.right.levels[std::size_t(a)] >= 0);
      REQUIRE(t.right.levels[std::size_t(a)] < spec.attribute_levels[std::size_t(a)]);
    }
  }
}

TEST_CASE("dataset persists through csv and json") {
  DesignSpec spec = tiny_design();
  spec.sparsity_main = 0.5;
  spec.sparsity_interaction = 0.5;
  const Dataset ds = dipce::generate_dataset(spec);

  const auto dir = std::filesystem::temp_directory_path();
  const std::string tasks_path = (dir / "dipce_tasks_roundtrip.csv").string();
  const std::string truth_path = (dir / "dipce_truth_roundtrip.json").string();
  dipce::save_tasks_csv(ds, tasks_path);
  dipce::save_truth_json(ds, truth_path);

  const Dataset back = dipce::load_dataset(tasks_path, truth_path);
  CHECK(back.spec.attribute_levels == spec.attribute_levels);
  CHECK(back.spec.context_levels == spec.context_levels);
  CHECK(back.spec.n_respondents == spec.n_respondents);
  CHECK(back.spec.tasks_per_respondent == spec.tasks_per_respondent);
  CHECK(back.spec.seed == spec.seed);
  CHECK(back.truth.beta == ds.truth.beta);
  CHECK(back.truth.b_interaction == ds.truth.b_interaction);
  CHECK(back.truth.main_active == ds.truth.main_active);
  CHECK(back.truth.interaction_active == ds.truth.interaction_active);
  REQUIRE(back.tasks.size() == ds.tasks.size());
  CHECK(back.tasks == ds.tasks);  // latent answers recomputed from the truth

  const Dataset truth_only = dipce::load_truth(truth_path);
  CHECK(truth_only.tasks.empty());
  CHECK(truth_only.truth.beta == ds.truth.beta);

  std::filesystem::remove(tasks_path);
  std::filesystem::remove(truth_path);
}

TEST_CASE("invalid designs are rejected") {
  auto expect_invalid = [](DesignSpec spec) {
    try {
      spec.validate();
      FAIL_CHECK("expected invalid-spec error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidSpec);
    }
  };

  DesignSpec base = tiny_design();
  base.validate();  // sanity: the fixture itself is fine

  DesignSpec spec = base;
  spec.attribute_levels.clear();
  expect_invalid(spec);

  spec = base;
  spec.attribute_levels = {3, 0};
  expect_invalid(spec);

  spec = base;
  spec.context_levels = 0;
  expect_invalid(spec);

  spec = base;
  spec.sparsity_main = -0.1;
  expect_invalid(spec);

  spec = base;
  spec.sparsity_main = 0.8;
  spec.sparsity_interaction = 0.5;
  expect_invalid(spec);

  spec = base;
  spec.n_respondents = 0;
  expect_invalid(spec);

  spec = base;
  spec.tasks_per_respondent = 0;
  expect_invalid(spec);

  spec = base;
  spec.measurement_error_threshold = 1.5;
  expect_invalid(spec);

  spec = base;
  spec.coef_low = 1.0;
  spec.coef_high = -1.0;
  expect_invalid(spec);

  spec = base;
  spec.coef_exclusion_halfwidth = 2.0;
  expect_invalid(spec);
}
