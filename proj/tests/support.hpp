#pragma once

// Shared fixtures: hand-built ground truths, task generators driven by an
// injected truth (generate_dataset draws its own), and oracle predictors that
// stand in for a trained network so estimator algebra can be checked exactly.

#include <vector>

#include <Eigen/Core>

#include "design.hpp"
#include "encoding.hpp"
#include "predictor.hpp"
#include "rng.hpp"

namespace dipce::testing {

// CoefficientSet with every mask slot set from the coefficient's value.
inline CoefficientSet make_truth(const std::vector<int>& attribute_levels,
                                 int context_levels,
                                 const Eigen::VectorXd& beta,
                                 const Eigen::MatrixXd& b_interaction) {
  CoefficientSet truth;
  truth.attribute_levels = attribute_levels;
  truth.context_levels = context_levels;
  truth.beta = beta;
  truth.b_interaction = b_interaction;
  const int n = int(beta.size());
  truth.main_active.assign(std::size_t(n), 0);
  truth.interaction_active.assign(std::size_t(n) * std::size_t(context_levels), 0);
  for (int j = 0; j < n; ++j) {
    truth.main_active[std::size_t(j)] = beta[j] != 0.0 ? 1 : 0;
    for (int c = 0; c < context_levels; ++c) {
      truth.interaction_active[std::size_t(j) * std::size_t(context_levels) +
                               std::size_t(c)] = b_interaction(j, c) != 0.0 ? 1 : 0;
    }
  }
  return truth;
}

// Random tasks simulated against an injected truth: per-respondent context,
// uniform profiles, recorded answers through the usual error channel.
inline std::vector<ChoiceTask> make_tasks(const DesignSpec& spec,
                                          const CoefficientSet& truth,
                                          RngStream& rng) {
  std::vector<ChoiceTask> tasks;
  tasks.reserve(std::size_t(spec.n_respondents) *
                std::size_t(spec.tasks_per_respondent));
  for (int r = 0; r < spec.n_respondents; ++r) {
    const int context = rng.next_int(spec.context_levels);
    for (int t = 0; t < spec.tasks_per_respondent; ++t) {
      ChoiceTask task;
      task.respondent_id = r;
      task.task_index = t;
      task.context_level = context;
      for (int levels : spec.attribute_levels) {
        task.left.levels.push_back(rng.next_int(levels));
        task.right.levels.push_back(rng.next_int(levels));
      }
      const ChoiceDraw draw =
          simulate_choice(task.left, task.right, context, truth,
                          spec.measurement_error_threshold, rng);
      task.latent_chose_left = draw.latent_chose_left;
      task.chose_left = draw.chose_left;
      tasks.push_back(std::move(task));
    }
  }
  return tasks;
}

// Every (left profile, right profile, context) combination exactly once, so
// sample means over the encoded rows equal population expectations.
inline std::vector<ChoiceTask> enumerate_tasks(const DesignSpec& spec) {
  std::vector<Profile> profiles{{{}}};
  for (int levels : spec.attribute_levels) {
    std::vector<Profile> next;
    for (const Profile& p : profiles) {
      for (int l = 0; l < levels; ++l) {
        Profile q = p;
        q.levels.push_back(l);
        next.push_back(std::move(q));
      }
    }
    profiles = std::move(next);
  }
  std::vector<ChoiceTask> tasks;
  int id = 0;
  for (const Profile& left : profiles) {
    for (const Profile& right : profiles) {
      for (int c = 0; c < spec.context_levels; ++c) {
        ChoiceTask task;
        task.respondent_id = id;
        task.task_index = 0;
        task.left = left;
        task.right = right;
        task.context_level = c;
        task.chose_left = true;
        task.latent_chose_left = true;
        tasks.push_back(std::move(task));
        ++id;
      }
    }
  }
  return tasks;
}

// True-score oracle: probability = 0.5 + scale * (latent score of the row).
// On difference rows the score is the left-minus-right utility gap; on
// per-profile rows it is that profile's utility. Keep scale * max|score|
// below 0.5 so outputs stay inside (0, 1).
class PlugInPredictor : public Predictor {
 public:
  PlugInPredictor(const CoefficientSet& truth, double scale)
      : truth_(truth), scale_(scale) {}

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& rows) const override {
    const int main_dim = truth_.main_dim();
    Eigen::VectorXd out(rows.rows());
    for (long r = 0; r < rows.rows(); ++r) {
      int context = 0;
      for (int c = 0; c < truth_.context_levels; ++c) {
        if (rows(r, main_dim + c) == 1.0) context = c;
      }
      double score = 0.0;
      for (int j = 0; j < main_dim; ++j) {
        score += rows(r, j) * (truth_.beta[j] + truth_.b_interaction(j, context));
      }
      out[r] = 0.5 + scale_ * score;
    }
    return out;
  }

 private:
  CoefficientSet truth_;
  double scale_;
};

class ConstantPredictor : public Predictor {
 public:
  explicit ConstantPredictor(double p) : p_(p) {}
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& rows) const override {
    return Eigen::VectorXd::Constant(rows.rows(), p_);
  }

 private:
  double p_;
};

// Wraps any predictor into an exactly profile-swap-antisymmetric one:
// g(x) - 0.5 = (f(x) - f(mirror x)) / 2 where mirror negates the attribute
// block and keeps the context.
class SymmetrizedPredictor : public Predictor {
 public:
  SymmetrizedPredictor(const Predictor& inner, int main_dim)
      : inner_(inner), main_dim_(main_dim) {}

  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& rows) const override {
    Eigen::MatrixXd mirrored = rows;
    mirrored.leftCols(main_dim_) *= -1.0;
    const Eigen::VectorXd direct = inner_.predict_proba(rows);
    const Eigen::VectorXd swapped = inner_.predict_proba(mirrored);
    return Eigen::VectorXd::Constant(rows.rows(), 0.5) + (direct - swapped) / 2.0;
  }

 private:
  const Predictor& inner_;
  int main_dim_;
};

}  // namespace dipce::testing
