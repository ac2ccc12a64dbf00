#pragma once

#include <Eigen/Core>

namespace dipce {

// Anything that maps encoded rows to choice probabilities. The contrast
// estimator only consumes this surface, so oracles can stand in for a trained
// network.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Eigen::VectorXd predict_proba(const Eigen::MatrixXd& rows) const = 0;
};

}  // namespace dipce
