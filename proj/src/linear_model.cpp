#include "linear_model.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <boost/math/distributions/students_t.hpp>

#include "errors.hpp"

namespace dipce {

OlsFit fit_ols(const EncodedDataset& data) {
  const long n = data.rows();
  const long k = data.schema.width();
  const long p = k + 1;  // intercept
  if (n <= p) {
    fail(ErrorCode::DegenerateData, "need more rows than coefficients");
  }
  if (data.labels.size() != n) {
    fail(ErrorCode::ShapeMismatch, "labels must cover every row");
  }

  Eigen::MatrixXd x(n, p);
  x.col(0).setOnes();
  x.rightCols(k) = data.matrix;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  const long rank = qr.rank();
  if (rank < p) {
    // Pivoting pushes dependent columns past the rank boundary; name them.
    std::string names;
    const auto& perm = qr.colsPermutation().indices();
    for (long i = rank; i < p; ++i) {
      const long col = perm[i];
      if (!names.empty()) names += ", ";
      names += col == 0 ? std::string("intercept")
                        : data.schema.columns[std::size_t(col - 1)].name();
    }
    fail(ErrorCode::RankDeficient, "design matrix is rank deficient: " + names);
  }

  OlsFit fit;
  fit.schema = data.schema;
  fit.coefficients = qr.solve(data.labels);
  fit.residual_df = n - p;

  const Eigen::VectorXd residuals = data.labels - x * fit.coefficients;
  const double sigma2 = residuals.squaredNorm() / double(fit.residual_df);

  // (X'X)^-1 = P R^-1 R^-T P' from the pivoted factorization.
  Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd diag_permuted = (r_inv.array().square().rowwise().sum()).matrix();
  Eigen::VectorXd diag(p);
  const auto& perm = qr.colsPermutation().indices();
  for (long i = 0; i < p; ++i) diag[perm[i]] = diag_permuted[i];

  fit.standard_errors = (sigma2 * diag.array()).sqrt().matrix();
  fit.t_values =
      (fit.coefficients.array() / fit.standard_errors.array()).matrix();
  fit.p_values.resize(p);
  boost::math::students_t dist(double(fit.residual_df));
  for (long i = 0; i < p; ++i) {
    fit.p_values[i] = 2.0 * boost::math::cdf(boost::math::complement(
                                dist, std::abs(fit.t_values[i])));
  }
  return fit;
}

namespace {

void check_p_values(const std::vector<double>& p_values, double alpha) {
  if (p_values.empty()) fail(ErrorCode::EmptyInput, "no p-values to correct");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  }
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) {
      fail(ErrorCode::InvalidArgument, "p-values must lie in [0, 1]");
    }
  }
}

}  // namespace

std::vector<bool> bonferroni(const std::vector<double>& p_values, double alpha) {
  check_p_values(p_values, alpha);
  const double threshold = alpha / double(p_values.size());
  std::vector<bool> reject(p_values.size());
  for (std::size_t i = 0; i < p_values.size(); ++i) {
    reject[i] = p_values[i] <= threshold;
  }
  return reject;
}

std::vector<bool> benjamini_hochberg(const std::vector<double>& p_values, double alpha) {
  check_p_values(p_values, alpha);
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

  // Largest k with p_(k) <= (k/m) * alpha; reject everything at or below it.
  double cutoff = -1.0;
  for (std::size_t k = m; k > 0; --k) {
    if (p_values[order[k - 1]] <= double(k) / double(m) * alpha) {
      cutoff = p_values[order[k - 1]];
      break;
    }
  }
  std::vector<bool> reject(m, false);
  if (cutoff >= 0.0) {
    for (std::size_t i = 0; i < m; ++i) reject[i] = p_values[i] <= cutoff;
  }
  return reject;
}

std::vector<EffectEstimate> classify_lm(const OlsFit& fit, Correction correction,
                                        double alpha) {
  // Tested family: attribute-level mains and products. Intercept (slot 0) and
  // pure-context columns are nuisance terms.
  std::vector<long> tested;
  for (long i = 0; i < long(fit.schema.columns.size()); ++i) {
    const ColumnKind kind = fit.schema.columns[std::size_t(i)].kind;
    if (kind == ColumnKind::Main || kind == ColumnKind::Interaction) {
      tested.push_back(i + 1);  // +1 for the intercept slot
    }
  }
  if (tested.empty()) fail(ErrorCode::EmptyInput, "fit has no tested effects");

  std::vector<double> p_values;
  p_values.reserve(tested.size());
  for (long slot : tested) p_values.push_back(fit.p_values[slot]);

  const std::size_t m = tested.size();
  std::vector<bool> reject;
  double per_comparison = alpha;
  switch (correction) {
    case Correction::None: {
      reject.resize(m);
      for (std::size_t i = 0; i < m; ++i) reject[i] = p_values[i] <= alpha;
      break;
    }
    case Correction::Bonferroni: {
      reject = bonferroni(p_values, alpha);
      per_comparison = alpha / double(m);
      break;
    }
    case Correction::BenjaminiHochberg: {
      reject = benjamini_hochberg(p_values, alpha);
      std::size_t k = 0;
      for (bool r : reject) k += r ? 1 : 0;
      per_comparison = alpha * double(std::max<std::size_t>(k, 1)) / double(m);
      break;
    }
  }

  boost::math::students_t dist(double(fit.residual_df));
  const double t_crit = boost::math::quantile(dist, 1.0 - per_comparison / 2.0);

  std::vector<EffectEstimate> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const long slot = tested[i];
    const ColumnDesc& col = fit.schema.columns[std::size_t(slot - 1)];
    EffectEstimate est;
    est.kind = col.kind == ColumnKind::Main ? EffectKind::Main : EffectKind::Interaction;
    est.attribute = col.attribute;
    est.level = col.level;
    if (est.kind == EffectKind::Interaction) est.context_level = col.context;
    est.point = fit.coefficients[slot];
    est.ci_low = est.point - t_crit * fit.standard_errors[slot];
    est.ci_high = est.point + t_crit * fit.standard_errors[slot];
    if (reject[i]) {
      est.classification =
          est.point > 0.0 ? EffectClass::Positive : EffectClass::Negative;
    } else {
      est.classification = EffectClass::Null;
    }
    out.push_back(est);
  }
  return out;
}

Eigen::VectorXd predict_lm_values(const OlsFit& fit, const Eigen::MatrixXd& rows) {
  if (rows.cols() + 1 != fit.coefficients.size()) {
    fail(ErrorCode::ShapeMismatch, "row width differs from fitted coefficients");
  }
  return ((rows * fit.coefficients.tail(rows.cols())).array() +
          fit.coefficients[0])
      .matrix();
}

std::vector<int> predict_lm(const OlsFit& fit, const Eigen::MatrixXd& rows) {
  const Eigen::VectorXd fitted = predict_lm_values(fit, rows);
  std::vector<int> out(std::size_t(fitted.size()));
  for (long i = 0; i < fitted.size(); ++i) {
    out[std::size_t(i)] = fitted[i] > 0.5 ? 1 : 0;
  }
  return out;
}

}  // namespace dipce
