#include "mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "errors.hpp"

namespace dipce {

using nlohmann::json;

void MlpConfig::validate() const {
  if (input_dim < 1) fail(ErrorCode::InvalidArgument, "input_dim must be positive");
  if (dropout_rates.size() != hidden_dims.size()) {
    fail(ErrorCode::InvalidArgument, "dropout_rates must match hidden_dims");
  }
  for (int h : hidden_dims) {
    if (h < 1) fail(ErrorCode::InvalidArgument, "hidden dims must be positive");
  }
  for (double rate : dropout_rates) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      fail(ErrorCode::InvalidArgument, "dropout rates must lie in [0, 1)");
    }
  }
  if (learning_rate <= 0.0) fail(ErrorCode::InvalidArgument, "learning_rate must be positive");
  // Batchnorm needs at least two rows to normalize, so singleton train batches
  // are rejected outright.
  if (batch_size < 2) fail(ErrorCode::InvalidArgument, "batch_size must be >= 2");
  if (max_epochs < 1) fail(ErrorCode::InvalidArgument, "max_epochs must be positive");
  if (early_stop_patience < 1) fail(ErrorCode::InvalidArgument, "patience must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail(ErrorCode::InvalidArgument, "validation_fraction must lie in [0, 1)");
  }
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "bn_momentum must lie in (0, 1]");
  }
  if (bn_epsilon <= 0.0) fail(ErrorCode::InvalidArgument, "bn_epsilon must be positive");
}

MlpModel MlpModel::initialize(const MlpConfig& config, RngStream& rng) {
  config.validate();
  MlpModel model;
  model.config = config;
  int fan_in = config.input_dim;
  auto make_linear = [&](int out) {
    LinearLayer layer;
    layer.weight.resize(out, fan_in);
    const double bound = 1.0 / std::sqrt(double(fan_in));
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        layer.weight(r, c) = rng.next_range(-bound, bound);
      }
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    fan_in = out;
    return layer;
  };
  for (int width : config.hidden_dims) {
    model.linear.push_back(make_linear(width));
    BatchNormLayer bn;
    bn.scale = Eigen::VectorXd::Ones(width);
    bn.shift = Eigen::VectorXd::Zero(width);
    bn.running_mean = Eigen::VectorXd::Zero(width);
    bn.running_var = Eigen::VectorXd::Ones(width);
    model.batchnorm.push_back(std::move(bn));
  }
  model.linear.push_back(make_linear(1));
  return model;
}

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

enum class Mode { Train, Eval };

struct LayerCache {
  Eigen::MatrixXd input;    // batch x in
  Eigen::MatrixXd z;        // linear output
  Eigen::VectorXd mean;     // normalization stats actually applied
  Eigen::VectorXd inv_std;  // 1 / sqrt(var + eps)
  Eigen::MatrixXd xhat;
  Eigen::MatrixXd bn_out;
  Eigen::MatrixXd mask;     // inverted-dropout mask; empty in eval mode
  Eigen::MatrixXd output;   // fed to the next layer
};

struct Workspace {
  std::vector<LayerCache> layers;
  Eigen::MatrixXd head_input;  // input of the output linear layer
  Eigen::VectorXd logits;
};

// Shared by training and evaluation; training updates the running statistics
// in place and applies dropout.
Eigen::VectorXd forward_pass(MlpModel& model, const Eigen::MatrixXd& batch,
                             Mode mode, RngStream* dropout_rng, Workspace& ws) {
  const std::size_t n_hidden = model.batchnorm.size();
  ws.layers.assign(n_hidden, LayerCache{});
  Eigen::MatrixXd current = batch;
  const double eps = model.config.bn_epsilon;
  const double momentum = model.config.bn_momentum;
  const long rows = batch.rows();

  for (std::size_t i = 0; i < n_hidden; ++i) {
    LayerCache& cache = ws.layers[i];
    const LinearLayer& lin = model.linear[i];
    BatchNormLayer& bn = model.batchnorm[i];

    cache.input = std::move(current);
    cache.z = (cache.input * lin.weight.transpose()).rowwise() + lin.bias.transpose();

    if (mode == Mode::Train) {
      cache.mean = cache.z.colwise().mean().transpose();
      Eigen::MatrixXd centered = cache.z.rowwise() - cache.mean.transpose();
      Eigen::VectorXd var =
          (centered.array().square().colwise().sum() / double(rows)).transpose().matrix();
      cache.inv_std = (var.array() + eps).rsqrt().matrix();
      cache.xhat =
          (centered.array().rowwise() * cache.inv_std.transpose().array()).matrix();
      bn.running_mean = (1.0 - momentum) * bn.running_mean + momentum * cache.mean;
      bn.running_var = (1.0 - momentum) * bn.running_var + momentum * var;
    } else {
      cache.mean = bn.running_mean;
      cache.inv_std = (bn.running_var.array() + eps).rsqrt().matrix();
      cache.xhat = ((cache.z.rowwise() - cache.mean.transpose()).array().rowwise() *
                    cache.inv_std.transpose().array())
                       .matrix();
    }
    cache.bn_out = ((cache.xhat.array().rowwise() * bn.scale.transpose().array())
                        .rowwise() +
                    bn.shift.transpose().array())
                       .matrix();

    Eigen::MatrixXd activated = cache.bn_out.cwiseMax(0.0);
    const double rate = model.config.dropout_rates[i];
    if (mode == Mode::Train && rate > 0.0) {
      cache.mask.resize(activated.rows(), activated.cols());
      const double keep_scale = 1.0 / (1.0 - rate);
      for (long r = 0; r < activated.rows(); ++r) {
        for (long c = 0; c < activated.cols(); ++c) {
          cache.mask(r, c) = dropout_rng->next_double() >= rate ? keep_scale : 0.0;
        }
      }
      cache.output = activated.cwiseProduct(cache.mask);
    } else {
      cache.mask.resize(0, 0);
      cache.output = std::move(activated);
    }
    current = cache.output;
  }

  ws.head_input = std::move(current);
  const LinearLayer& head = model.linear[n_hidden];
  ws.logits = (ws.head_input * head.weight.transpose()).col(0) +
              Eigen::VectorXd::Constant(rows, head.bias[0]);
  return ws.logits;
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  std::vector<Eigen::VectorXd> scale;
  std::vector<Eigen::VectorXd> shift;
};

Gradients backward_pass(const MlpModel& model, const Workspace& ws,
                        const Eigen::VectorXd& labels, Mode mode) {
  const std::size_t n_hidden = model.batchnorm.size();
  Gradients grads;
  grads.weight.resize(n_hidden + 1);
  grads.bias.resize(n_hidden + 1);
  grads.scale.resize(n_hidden);
  grads.shift.resize(n_hidden);

  const long rows = ws.logits.size();
  // d(mean BCE)/d logits
  Eigen::VectorXd dlogits = (sigmoid(ws.logits) - labels) / double(rows);

  const LinearLayer& head = model.linear[n_hidden];
  grads.weight[n_hidden] = dlogits.transpose() * ws.head_input;
  grads.bias[n_hidden] = Eigen::VectorXd::Constant(1, dlogits.sum());
  Eigen::MatrixXd dcurrent = dlogits * head.weight;  // batch x last_hidden

  for (std::size_t idx = n_hidden; idx-- > 0;) {
    const LayerCache& cache = ws.layers[idx];
    const BatchNormLayer& bn = model.batchnorm[idx];

    Eigen::MatrixXd dact;
    if (cache.mask.size() > 0) {
      dact = dcurrent.cwiseProduct(cache.mask);
    } else {
      dact = std::move(dcurrent);
    }
    // ReLU subgradient: zero at and below the kink.
    Eigen::MatrixXd dbn =
        (cache.bn_out.array() > 0.0).select(dact, Eigen::MatrixXd::Zero(dact.rows(), dact.cols()));

    grads.shift[idx] = dbn.colwise().sum().transpose();
    grads.scale[idx] = dbn.cwiseProduct(cache.xhat).colwise().sum().transpose();

    Eigen::MatrixXd dxhat =
        (dbn.array().rowwise() * bn.scale.transpose().array()).matrix();
    Eigen::MatrixXd dz;
    if (mode == Mode::Train) {
      // Batch statistics depend on every row; the usual three-term formula.
      const double n = double(dbn.rows());
      Eigen::MatrixXd centered = cache.z.rowwise() - cache.mean.transpose();
      Eigen::VectorXd dvar =
          (dxhat.cwiseProduct(centered).colwise().sum().transpose().array() * -0.5 *
           cache.inv_std.array().cube())
              .matrix();
      Eigen::VectorXd dmean =
          (dxhat.colwise().sum().transpose().array() * -cache.inv_std.array()).matrix();
      dz = (dxhat.array().rowwise() * cache.inv_std.transpose().array()).matrix();
      dz += (centered.array().rowwise() * (dvar.transpose().array() * 2.0 / n)).matrix();
      dz.rowwise() += dmean.transpose() / n;
    } else {
      dz = (dxhat.array().rowwise() * cache.inv_std.transpose().array()).matrix();
    }

    const LinearLayer& lin = model.linear[idx];
    grads.weight[idx] = dz.transpose() * cache.input;
    grads.bias[idx] = dz.colwise().sum().transpose();
    if (idx > 0) dcurrent = dz * lin.weight;
  }
  return grads;
}

// Fixed parameter enumeration shared by the optimizer, the flat-gradient
// helpers, and the checkpoint format.
template <typename Model, typename Fn>
void for_each_tensor(Model& model, Fn&& fn) {
  const std::size_t n_hidden = model.batchnorm.size();
  for (std::size_t i = 0; i < n_hidden; ++i) {
    fn(model.linear[i].weight);
    fn(model.linear[i].bias);
    fn(model.batchnorm[i].scale);
    fn(model.batchnorm[i].shift);
  }
  fn(model.linear[n_hidden].weight);
  fn(model.linear[n_hidden].bias);
}

template <typename Fn>
void for_each_gradient(const Gradients& grads, Fn&& fn) {
  const std::size_t n_hidden = grads.scale.size();
  for (std::size_t i = 0; i < n_hidden; ++i) {
    fn(grads.weight[i]);
    fn(grads.bias[i]);
    fn(grads.scale[i]);
    fn(grads.shift[i]);
  }
  fn(grads.weight[n_hidden]);
  fn(grads.bias[n_hidden]);
}

long parameter_count(const MlpModel& model) {
  long count = 0;
  for_each_tensor(const_cast<MlpModel&>(model), [&](const auto& t) { count += t.size(); });
  return count;
}

struct AdamState {
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;
  long t = 0;
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  explicit AdamState(const MlpModel& model) {
    for_each_tensor(const_cast<MlpModel&>(model), [&](const auto& tensor) {
      m.push_back(Eigen::VectorXd::Zero(tensor.size()));
      v.push_back(Eigen::VectorXd::Zero(tensor.size()));
    });
  }

  void step(MlpModel& model, const Gradients& grads, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    std::size_t k = 0;
    std::vector<Eigen::Map<const Eigen::VectorXd>> flat_grads;
    for_each_gradient(grads, [&](const auto& g) {
      flat_grads.emplace_back(g.data(), g.size());
    });
    for_each_tensor(model, [&](auto& tensor) {
      Eigen::Map<Eigen::VectorXd> theta(tensor.data(), tensor.size());
      const auto& g = flat_grads[k];
      m[k] = beta1 * m[k] + (1.0 - beta1) * g;
      v[k] = (beta2 * v[k].array() + (1.0 - beta2) * g.array().square()).matrix();
      theta.array() -=
          lr * (m[k].array() / bc1) / ((v[k].array() / bc2).sqrt() + eps);
      ++k;
    });
  }
};

double batch_accuracy(const Eigen::VectorXd& logits, const Eigen::VectorXd& labels) {
  long hits = 0;
  for (long i = 0; i < logits.size(); ++i) {
    const double pred = logits[i] > 0.0 ? 1.0 : 0.0;
    if (pred == labels[i]) ++hits;
  }
  return double(hits) / double(logits.size());
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& source, const std::vector<long>& rows) {
  Eigen::MatrixXd out(long(rows.size()), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(long(i)) = source.row(rows[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& source, const std::vector<long>& rows) {
  Eigen::VectorXd out(long(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[long(i)] = source[rows[i]];
  return out;
}

void check_both_classes(const Eigen::VectorXd& labels, const char* split) {
  bool any_pos = false;
  bool any_neg = false;
  for (long i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1.0) {
      any_pos = true;
    } else if (labels[i] == 0.0) {
      any_neg = true;
    } else {
      fail(ErrorCode::InvalidArgument, "labels must be exactly 0 or 1");
    }
  }
  if (!any_pos || !any_neg) {
    fail(ErrorCode::DegenerateData, std::string(split) + " split contains a single class");
  }
}

}  // namespace

Eigen::VectorXd MlpModel::forward(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != config.input_dim) {
    fail(ErrorCode::ShapeMismatch, "input width differs from model input_dim");
  }
  Workspace ws;
  return forward_pass(const_cast<MlpModel&>(*this), rows, Mode::Eval, nullptr, ws);
}

Eigen::VectorXd MlpModel::predict_proba(const Eigen::MatrixXd& rows) const {
  return sigmoid(forward(rows));
}

double bce_with_logits(const Eigen::VectorXd& logits, const Eigen::VectorXd& labels) {
  if (logits.size() != labels.size()) {
    fail(ErrorCode::LengthMismatch, "logits and labels differ in length");
  }
  if (logits.size() == 0) fail(ErrorCode::EmptyInput, "no rows to score");
  // max(z,0) - z*y + log(1 + exp(-|z|)): overflow-safe for any logit.
  auto z = logits.array();
  auto y = labels.array();
  return (z.cwiseMax(0.0) - z * y + (1.0 + (-z.abs()).exp()).log()).mean();
}

std::pair<MlpModel, TrainReport> fit(const MlpConfig& config, const EncodedDataset& data) {
  config.validate();
  if (data.matrix.cols() != config.input_dim) {
    fail(ErrorCode::ShapeMismatch, "dataset width differs from config input_dim");
  }
  if (data.rows() < 2) fail(ErrorCode::DegenerateData, "need at least two rows to fit");
  if (long(data.respondent_ids.size()) != data.rows()) {
    fail(ErrorCode::ShapeMismatch, "respondent ids must cover every row");
  }

  RngStream root(config.seed);

  // Group rows by respondent (first-appearance order), then split whole
  // respondents into train/validation so no person straddles the boundary.
  std::vector<int> respondents;
  std::vector<std::vector<long>> resp_rows;
  {
    for (long r = 0; r < data.rows(); ++r) {
      const int id = data.respondent_ids[std::size_t(r)];
      std::size_t k = 0;
      for (; k < respondents.size(); ++k) {
        if (respondents[k] == id) break;
      }
      if (k == respondents.size()) {
        respondents.push_back(id);
        resp_rows.emplace_back();
      }
      resp_rows[k].push_back(r);
    }
  }

  RngStream split_rng = root.substream(0);
  std::vector<std::size_t> order(respondents.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  split_rng.shuffle(order);
  long n_val_resp = round_half_up(config.validation_fraction * double(respondents.size()));
  if (config.validation_fraction > 0.0 && respondents.size() >= 2 && n_val_resp == 0) {
    n_val_resp = 1;
  }
  if (n_val_resp >= long(respondents.size())) n_val_resp = long(respondents.size()) - 1;

  std::vector<long> train_rows;
  std::vector<long> val_rows;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dest = long(i) < n_val_resp ? val_rows : train_rows;
    dest.insert(dest.end(), resp_rows[order[i]].begin(), resp_rows[order[i]].end());
  }

  Eigen::MatrixXd train_x = gather_rows(data.matrix, train_rows);
  Eigen::VectorXd train_y = gather(data.labels, train_rows);
  check_both_classes(train_y, "training");
  Eigen::MatrixXd val_x;
  Eigen::VectorXd val_y;
  const bool has_val = !val_rows.empty();
  if (has_val) {
    val_x = gather_rows(data.matrix, val_rows);
    val_y = gather(data.labels, val_rows);
    check_both_classes(val_y, "validation");
  }

  RngStream init_rng = root.substream(1);
  MlpModel model = MlpModel::initialize(config, init_rng);
  AdamState adam(model);
  RngStream train_rng = root.substream(2);

  TrainReport report;
  MlpModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<long> index(train_rows.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = long(i);

  const long n_train = long(train_rows.size());
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    train_rng.shuffle(index);
    double loss_sum = 0.0;
    double acc_sum = 0.0;
    long seen = 0;
    for (long start = 0; start < n_train; start += config.batch_size) {
      const long bs = std::min<long>(config.batch_size, n_train - start);
      if (bs < 2) break;  // batchnorm cannot take a singleton trailing batch
      std::vector<long> batch_rows(index.begin() + start, index.begin() + start + bs);
      Eigen::MatrixXd bx = gather_rows(train_x, batch_rows);
      Eigen::VectorXd by = gather(train_y, batch_rows);

      Workspace ws;
      Eigen::VectorXd logits = forward_pass(model, bx, Mode::Train, &train_rng, ws);
      loss_sum += bce_with_logits(logits, by) * double(bs);
      acc_sum += batch_accuracy(logits, by) * double(bs);
      seen += bs;

      Gradients grads = backward_pass(model, ws, by, Mode::Train);
      adam.step(model, grads, config.learning_rate);
    }
    report.train_loss.push_back(loss_sum / double(seen));
    report.train_accuracy.push_back(acc_sum / double(seen));

    if (has_val) {
      Eigen::VectorXd val_logits = model.forward(val_x);
      const double vloss = bce_with_logits(val_logits, val_y);
      report.val_loss.push_back(vloss);
      report.val_accuracy.push_back(batch_accuracy(val_logits, val_y));
      if (vloss < best_val) {
        best_val = vloss;
        best = model;
        report.best_epoch = epoch;
        since_best = 0;
      } else {
        ++since_best;
      }
      report.stopping_epoch = epoch + 1;
      if (since_best >= config.early_stop_patience) break;
    } else {
      report.val_loss.push_back(std::numeric_limits<double>::quiet_NaN());
      report.val_accuracy.push_back(std::numeric_limits<double>::quiet_NaN());
      best = model;
      report.best_epoch = epoch;
      report.stopping_epoch = epoch + 1;
    }
  }
  return {std::move(best), std::move(report)};
}

Eigen::VectorXd analytic_gradient(const MlpModel& model, const Eigen::MatrixXd& rows,
                                  const Eigen::VectorXd& labels) {
  Workspace ws;
  forward_pass(const_cast<MlpModel&>(model), rows, Mode::Eval, nullptr, ws);
  Gradients grads = backward_pass(model, ws, labels, Mode::Eval);
  Eigen::VectorXd flat(parameter_count(model));
  long at = 0;
  for_each_gradient(grads, [&](const auto& g) {
    flat.segment(at, g.size()) = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
    at += g.size();
  });
  return flat;
}

Eigen::VectorXd numeric_gradient(const MlpModel& model, const Eigen::MatrixXd& rows,
                                 const Eigen::VectorXd& labels, double step) {
  MlpModel probe = model;
  std::vector<double*> slots;
  for_each_tensor(probe, [&](auto& tensor) {
    for (long i = 0; i < tensor.size(); ++i) slots.push_back(tensor.data() + i);
  });
  Eigen::VectorXd flat(long(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double saved = *slots[i];
    *slots[i] = saved + step;
    const double up = bce_with_logits(probe.forward(rows), labels);
    *slots[i] = saved - step;
    const double down = bce_with_logits(probe.forward(rows), labels);
    *slots[i] = saved;
    flat[long(i)] = (up - down) / (2.0 * step);
  }
  return flat;
}

double gradient_check(const MlpModel& model, const Eigen::MatrixXd& rows,
                      const Eigen::VectorXd& labels, double step) {
  const Eigen::VectorXd analytic = analytic_gradient(model, rows, labels);
  const Eigen::VectorXd numeric = numeric_gradient(model, rows, labels, step);

  double worst = 0.0;
  long at = 0;
  for_each_tensor(const_cast<MlpModel&>(model), [&](const auto& tensor) {
    const long n = tensor.size();
    const auto a = analytic.segment(at, n);
    const auto b = numeric.segment(at, n);
    at += n;
    const double denom =
        std::max({a.template lpNorm<Eigen::Infinity>(), b.template lpNorm<Eigen::Infinity>(), 1e-6});
    worst = std::max(worst, (a - b).template lpNorm<Eigen::Infinity>() / denom);
  });
  return worst;
}

double min_relu_preactivation_gap(const MlpModel& model, const Eigen::MatrixXd& rows) {
  if (model.batchnorm.empty()) return std::numeric_limits<double>::infinity();
  Workspace ws;
  forward_pass(const_cast<MlpModel&>(model), rows, Mode::Eval, nullptr, ws);
  double gap = std::numeric_limits<double>::infinity();
  for (const LayerCache& cache : ws.layers) {
    gap = std::min(gap, cache.bn_out.array().abs().minCoeff());
  }
  return gap;
}

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(std::size_t(m.rows()));
  for (long r = 0; r < m.rows(); ++r) {
    rows[std::size_t(r)].assign(m.row(r).begin(), m.row(r).end());
  }
  return json(rows);
}

Eigen::VectorXd vector_from_json(const json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), long(v.size()));
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) fail(ErrorCode::ShapeMismatch, "empty weight matrix in checkpoint");
  Eigen::MatrixXd m(long(rows.size()), long(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) {
      fail(ErrorCode::ShapeMismatch, "ragged weight matrix in checkpoint");
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(long(r), long(c)) = rows[r][c];
  }
  return m;
}

}  // namespace

void save_checkpoint(const MlpModel& model, const std::string& path) {
  json layers = json::array();
  for (const LinearLayer& lin : model.linear) {
    layers.push_back(json{{"weight", matrix_to_json(lin.weight)},
                          {"bias", vector_to_json(lin.bias)}});
  }
  json norms = json::array();
  for (const BatchNormLayer& bn : model.batchnorm) {
    norms.push_back(json{{"scale", vector_to_json(bn.scale)},
                         {"shift", vector_to_json(bn.shift)},
                         {"running_mean", vector_to_json(bn.running_mean)},
                         {"running_var", vector_to_json(bn.running_var)}});
  }
  json out{{"config",
            json{{"input_dim", model.config.input_dim},
                 {"hidden_dims", model.config.hidden_dims},
                 {"dropout_rates", model.config.dropout_rates},
                 {"learning_rate", model.config.learning_rate},
                 {"batch_size", model.config.batch_size},
                 {"max_epochs", model.config.max_epochs},
                 {"early_stop_patience", model.config.early_stop_patience},
                 {"validation_fraction", model.config.validation_fraction},
                 {"bn_momentum", model.config.bn_momentum},
                 {"bn_epsilon", model.config.bn_epsilon},
                 {"seed", model.config.seed}}},
           {"linear", layers},
           {"batchnorm", norms}};
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::Io, "cannot open for writing: " + path);
  file << out.dump() << '\n';
  if (!file) fail(ErrorCode::Io, "short write: " + path);
}

MlpModel load_checkpoint(const std::string& path) {
  std::ifstream file(path);
  if (!file) fail(ErrorCode::Io, "cannot open for reading: " + path);
  json j;
  try {
    file >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad checkpoint json: ") + e.what());
  }

  MlpModel model;
  try {
    const json& cfg = j.at("config");
    model.config.input_dim = cfg.at("input_dim").get<int>();
    model.config.hidden_dims = cfg.at("hidden_dims").get<std::vector<int>>();
    model.config.dropout_rates = cfg.at("dropout_rates").get<std::vector<double>>();
    model.config.learning_rate = cfg.at("learning_rate").get<double>();
    model.config.batch_size = cfg.at("batch_size").get<int>();
    model.config.max_epochs = cfg.at("max_epochs").get<int>();
    model.config.early_stop_patience = cfg.at("early_stop_patience").get<int>();
    model.config.validation_fraction = cfg.at("validation_fraction").get<double>();
    model.config.bn_momentum = cfg.at("bn_momentum").get<double>();
    model.config.bn_epsilon = cfg.at("bn_epsilon").get<double>();
    model.config.seed = cfg.at("seed").get<std::uint64_t>();
    for (const json& layer : j.at("linear")) {
      model.linear.push_back(
          {matrix_from_json(layer.at("weight")), vector_from_json(layer.at("bias"))});
    }
    for (const json& bn : j.at("batchnorm")) {
      model.batchnorm.push_back({vector_from_json(bn.at("scale")),
                                 vector_from_json(bn.at("shift")),
                                 vector_from_json(bn.at("running_mean")),
                                 vector_from_json(bn.at("running_var"))});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad checkpoint json: ") + e.what());
  }

  if (model.linear.size() != model.batchnorm.size() + 1 ||
      model.batchnorm.size() != model.config.hidden_dims.size()) {
    fail(ErrorCode::ShapeMismatch, "checkpoint layer counts disagree with config");
  }
  int fan_in = model.config.input_dim;
  for (std::size_t i = 0; i < model.linear.size(); ++i) {
    const bool is_head = i == model.batchnorm.size();
    const int out = is_head ? 1 : model.config.hidden_dims[i];
    if (model.linear[i].weight.rows() != out || model.linear[i].weight.cols() != fan_in ||
        model.linear[i].bias.size() != out) {
      fail(ErrorCode::ShapeMismatch, "checkpoint tensor shapes disagree with config");
    }
    fan_in = out;
  }
  return model;
}

}  // namespace dipce
