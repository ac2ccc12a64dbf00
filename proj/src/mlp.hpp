#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "encoding.hpp"
#include "predictor.hpp"
#include "rng.hpp"

namespace dipce {

struct MlpConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims{128, 64};       // empty => plain logistic layer
  std::vector<double> dropout_rates{0.3, 0.2}; // one per hidden layer
  double learning_rate = 1e-3;
  int batch_size = 256;
  int max_epochs = 50;
  int early_stop_patience = 5;
  double validation_fraction = 0.1;  // split by respondent
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LinearLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct BatchNormLayer {
  Eigen::VectorXd scale;   // gamma
  Eigen::VectorXd shift;   // delta
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

// Linear -> BatchNorm -> ReLU -> Dropout per hidden layer, then Linear to one
// logit. All math in double precision; eval mode is fully deterministic.
class MlpModel : public Predictor {
 public:
  MlpConfig config;
  std::vector<LinearLayer> linear;      // hidden layers + output layer
  std::vector<BatchNormLayer> batchnorm;  // one per hidden layer

  static MlpModel initialize(const MlpConfig& config, RngStream& rng);

  Eigen::VectorXd forward(const Eigen::MatrixXd& rows) const;  // eval-mode logits
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& rows) const override;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> val_loss;      // NaN entries when no validation split
  std::vector<double> val_accuracy;
  int stopping_epoch = 0;  // epochs actually run
  int best_epoch = 0;      // epoch whose snapshot is returned
};

std::pair<MlpModel, TrainReport> fit(const MlpConfig& config,
                                     const EncodedDataset& data);

// Mean of the stable binary-cross-entropy-with-logits loss.
double bce_with_logits(const Eigen::VectorXd& logits, const Eigen::VectorXd& labels);

// Flat gradient of the batch loss at the model's parameters, eval mode
// (batchnorm frozen on running stats, no dropout). Parameter order: per hidden
// layer weight, bias, scale, shift; then output weight, bias.
Eigen::VectorXd analytic_gradient(const MlpModel& model, const Eigen::MatrixXd& rows,
                                  const Eigen::VectorXd& labels);
Eigen::VectorXd numeric_gradient(const MlpModel& model, const Eigen::MatrixXd& rows,
                                 const Eigen::VectorXd& labels, double step = 1e-5);
// Max over parameter tensors of |analytic - numeric|_inf relative to tensor
// scale; < 1e-4 is the agreement bar.
double gradient_check(const MlpModel& model, const Eigen::MatrixXd& rows,
                      const Eigen::VectorXd& labels, double step = 1e-5);

// Largest pre-activation magnitude distance to a ReLU kink in eval mode; test
// harnesses resample inputs whose gap is within reach of the difference step.
double min_relu_preactivation_gap(const MlpModel& model, const Eigen::MatrixXd& rows);

void save_checkpoint(const MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace dipce
