#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "encoding.hpp"
#include "estimator.hpp"

namespace dipce {

struct OlsFit {
  FeatureSchema schema;            // feature columns; intercept is implicit
  Eigen::VectorXd coefficients;    // [intercept, features...]
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd t_values;
  Eigen::VectorXd p_values;        // two-sided, Student-t with residual df
  long residual_df = 0;
};

// Least squares via column-pivoted QR with an explicit intercept column.
// Rank deficiency (|R_ii| <= 1e-10 * max |R_jj|) is an error naming the
// offending columns.
OlsFit fit_ols(const EncodedDataset& data);

// Rejection masks at family level alpha.
std::vector<bool> bonferroni(const std::vector<double>& p_values, double alpha);
std::vector<bool> benjamini_hochberg(const std::vector<double>& p_values, double alpha);

enum class Correction { None, Bonferroni, BenjaminiHochberg };

// Sign / Null classification of every attribute-level main and interaction
// coefficient (pure-context columns and the intercept are fit but not tested).
// CI bounds are Wald +-t*SE at the correction's per-comparison level.
std::vector<EffectEstimate> classify_lm(const OlsFit& fit, Correction correction,
                                        double alpha);

Eigen::VectorXd predict_lm_values(const OlsFit& fit, const Eigen::MatrixXd& rows);
// Thresholded at 0.5, strictly: fitted 0.5 maps to class 0.
std::vector<int> predict_lm(const OlsFit& fit, const Eigen::MatrixXd& rows);

}  // namespace dipce
