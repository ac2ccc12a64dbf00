#include "estimator.hpp"

#include <algorithm>
#include <cmath>

#include "csv.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace dipce {

namespace {

// Linear-interpolation empirical quantile over a sorted copy.
double percentile(std::vector<double> draws, double q) {
  if (draws.empty()) fail(ErrorCode::EmptyInput, "no bootstrap draws");
  std::sort(draws.begin(), draws.end());
  if (draws.size() == 1) return draws[0];
  const double h = q * double(draws.size() - 1);
  const std::size_t lo = std::size_t(std::floor(h));
  const std::size_t hi = std::min(lo + 1, draws.size() - 1);
  const double frac = h - double(lo);
  return draws[lo] + frac * (draws[hi] - draws[lo]);
}

EffectClass classify_interval(double lo, double hi) {
  if (lo > 0.0) return EffectClass::Positive;
  if (hi < 0.0) return EffectClass::Negative;
  return EffectClass::Null;
}

double filter_value(const EncodedDataset& data, Variant variant) {
  if (data.schema.mode == EncodingMode::Difference) {
    return variant == Variant::P ? 1.0 : -1.0;
  }
  // Per-profile indicators only take values {0, 1}; both variants read the
  // value-1 rows and no negation applies.
  return 1.0;
}

double variant_sign(const EncodedDataset& data, Variant variant) {
  return (data.schema.mode == EncodingMode::Difference && variant == Variant::N) ? -1.0
                                                                                 : 1.0;
}

}  // namespace

double conditional_mean(const Predictor& model, const EncodedDataset& data,
                        const RowFilter& filter, double center_offset) {
  if (data.rows() == 0) fail(ErrorCode::EmptyInput, "dataset has no rows");
  const Eigen::VectorXd proba = model.predict_proba(data.matrix);
  double sum = 0.0;
  long kept = 0;
  for (long r = 0; r < data.rows(); ++r) {
    if (!filter(data, r)) continue;
    sum += proba[r] - center_offset;
    ++kept;
  }
  if (kept == 0) fail(ErrorCode::EmptySubset, "filter kept no rows");
  return sum / double(kept);
}

CenteredPredictionTable build_centered_table(const Predictor& model,
                                             const EncodedDataset& data,
                                             int main_column, Variant variant,
                                             double center_offset) {
  if (main_column < 0 || main_column >= data.schema.width() ||
      data.schema.columns[std::size_t(main_column)].kind != ColumnKind::Main) {
    fail(ErrorCode::InvalidArgument, "main_column does not name a main-effect column");
  }
  const double wanted = filter_value(data, variant);
  const Eigen::VectorXd proba = model.predict_proba(data.matrix);

  CenteredPredictionTable table;
  table.main_column = main_column;
  for (long r = 0; r < data.rows(); ++r) {
    if (data.matrix(r, main_column) != wanted) continue;
    table.centered_score.push_back(proba[r] - center_offset);
    table.context_level.push_back(data.row_context(r));
    table.respondent_id.push_back(data.respondent_ids[std::size_t(r)]);
  }
  if (table.size() == 0) {
    fail(ErrorCode::EmptySubset,
         "no rows condition on column " +
             data.schema.columns[std::size_t(main_column)].name());
  }
  return table;
}

double marginal_contrast(const Predictor& model, const EncodedDataset& data,
                         int main_column, Variant variant, double center_offset) {
  if (data.schema.mode != EncodingMode::Difference) {
    fail(ErrorCode::InvalidArgument, "marginal contrast needs a difference encoding");
  }
  CenteredPredictionTable table =
      build_centered_table(model, data, main_column, variant, center_offset);
  double sum = 0.0;
  for (double s : table.centered_score) sum += s;
  return variant_sign(data, variant) * sum / double(table.size());
}

namespace {

struct VariableDraws {
  double main_point = 0.0;
  std::vector<double> main_draws;
  // one slot per non-baseline context, index c-1
  std::vector<double> interaction_points;
  std::vector<std::vector<double>> interaction_draws;
};

// Bootstrap core for one focal variable. `sign` folds variant N's negation
// into every emitted statistic.
VariableDraws bootstrap_variable(const CenteredPredictionTable& table,
                                 int n_contexts, const BootstrapConfig& config,
                                 double sign, RngStream rng) {
  const std::size_t n = table.size();
  const double p_context = 1.0 / double(n_contexts);

  std::vector<long> full_count(std::size_t(n_contexts), 0);
  std::vector<double> full_sum(std::size_t(n_contexts), 0.0);
  double full_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    full_count[std::size_t(table.context_level[i])] += 1;
    full_sum[std::size_t(table.context_level[i])] += table.centered_score[i];
    full_total += table.centered_score[i];
  }
  for (int c = 0; c < n_contexts; ++c) {
    const long outside = long(n) - full_count[std::size_t(c)];
    if (outside == 0) {
      fail(ErrorCode::EmptySubset,
           "every conditioned row sits in context " + std::to_string(c));
    }
    if (outside < 2) {
      fail(ErrorCode::InsufficientBootstrap,
           "fewer than two rows outside context " + std::to_string(c));
    }
  }

  VariableDraws out;
  // Full-sample plug-in values: the point estimates the intervals dress up.
  {
    const double y_a = full_total / double(n);
    double sum_y_b = 0.0;
    out.interaction_points.assign(std::size_t(n_contexts - 1), 0.0);
    for (int c = 0; c < n_contexts; ++c) {
      const double y_b = (full_total - full_sum[std::size_t(c)]) /
                         double(long(n) - full_count[std::size_t(c)]);
      sum_y_b += y_b;
      if (c > 0) {
        out.interaction_points[std::size_t(c - 1)] = sign * (y_a - y_b) / p_context;
      }
    }
    const double z_star = double(n_contexts) * y_a - sum_y_b;
    out.main_point = sign * (y_a - z_star);
  }

  out.main_draws.reserve(std::size_t(config.n_bootstrap));
  out.interaction_draws.assign(std::size_t(n_contexts - 1), {});
  for (auto& draws : out.interaction_draws) draws.reserve(std::size_t(config.n_bootstrap));

  std::vector<long> count(static_cast<std::size_t>(n_contexts));
  std::vector<double> sum(static_cast<std::size_t>(n_contexts));
  for (int b = 0; b < config.n_bootstrap; ++b) {
    std::fill(count.begin(), count.end(), 0);
    std::fill(sum.begin(), sum.end(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pick = std::size_t(rng.next_below(n));
      const double s = table.centered_score[pick];
      const int c = table.context_level[pick];
      count[std::size_t(c)] += 1;
      sum[std::size_t(c)] += s;
      total += s;
    }
    const double y_a = total / double(n);
    double sum_y_b = 0.0;
    bool all_defined = true;
    for (int c = 0; c < n_contexts; ++c) {
      const long outside = long(n) - count[std::size_t(c)];
      if (outside == 0) {
        // Resample emptied the complement; this context's draw is skipped and
        // the main draw (which needs every complement) is skipped with it.
        all_defined = false;
        continue;
      }
      const double y_b = (total - sum[std::size_t(c)]) / double(outside);
      sum_y_b += y_b;
      if (c > 0) {
        out.interaction_draws[std::size_t(c - 1)].push_back(sign * (y_a - y_b) /
                                                            p_context);
      }
    }
    if (all_defined) {
      const double z_star = double(n_contexts) * y_a - sum_y_b;
      out.main_draws.push_back(sign * (y_a - z_star));
    }
  }
  return out;
}

EffectEstimate finish_estimate(EffectKind kind, int attribute, int level,
                               std::optional<int> context, double point,
                               const std::vector<double>& draws, double ci_level) {
  EffectEstimate est;
  est.kind = kind;
  est.attribute = attribute;
  est.level = level;
  est.context_level = context;
  est.point = point;
  const double tail = (1.0 - ci_level) / 2.0;
  est.ci_low = percentile(draws, tail);
  est.ci_high = percentile(draws, 1.0 - tail);
  est.classification = classify_interval(est.ci_low, est.ci_high);
  return est;
}

}  // namespace

std::vector<EffectEstimate> estimate_effects(const Predictor& model,
                                             const EncodedDataset& heldout,
                                             const DesignSpec& spec,
                                             const BootstrapConfig& config) {
  spec.validate();
  if (config.n_bootstrap < 1) {
    fail(ErrorCode::InvalidArgument, "n_bootstrap must be positive");
  }
  if (!(config.ci_level > 0.0 && config.ci_level < 1.0)) {
    fail(ErrorCode::InvalidArgument, "ci_level must lie in (0, 1)");
  }
  if (heldout.schema.mode == EncodingMode::OlsInteraction) {
    fail(ErrorCode::InvalidArgument,
         "estimation expects a per-profile or difference encoding");
  }
  if (heldout.rows() == 0) fail(ErrorCode::EmptyInput, "held-out set has no rows");

  const double sign = variant_sign(heldout, config.variant);
  const std::vector<int> columns = heldout.schema.main_effect_columns();
  RngStream root(config.seed);

  std::vector<EffectEstimate> estimates;
  for (int col : columns) {
    const ColumnDesc& desc = heldout.schema.columns[std::size_t(col)];
    CenteredPredictionTable table = build_centered_table(
        model, heldout, col, config.variant, config.center_offset);
    VariableDraws draws = bootstrap_variable(table, spec.context_levels, config, sign,
                                             root.substream(std::uint64_t(col)));
    estimates.push_back(finish_estimate(EffectKind::Main, desc.attribute, desc.level,
                                        std::nullopt, draws.main_point,
                                        draws.main_draws, config.ci_level));
    for (int c = 1; c < spec.context_levels; ++c) {
      estimates.push_back(finish_estimate(
          EffectKind::Interaction, desc.attribute, desc.level, c,
          draws.interaction_points[std::size_t(c - 1)],
          draws.interaction_draws[std::size_t(c - 1)], config.ci_level));
    }
  }
  return estimates;
}

double reconstruct_main_from_interactions(double total_contrast,
                                          const std::vector<EffectEstimate>& interactions,
                                          const Eigen::VectorXd& context_distribution) {
  const int n_contexts = int(context_distribution.size());
  if (n_contexts < 1) fail(ErrorCode::InvalidArgument, "context distribution is empty");
  double mass = 0.0;
  for (int c = 0; c < n_contexts; ++c) {
    if (context_distribution[c] < 0.0) {
      fail(ErrorCode::InvalidArgument, "context probabilities must be non-negative");
    }
    mass += context_distribution[c];
  }
  if (std::abs(mass - 1.0) > 1e-9) {
    fail(ErrorCode::InvalidArgument, "context probabilities must sum to one");
  }

  double adjusted = total_contrast;
  std::vector<bool> seen(std::size_t(n_contexts), false);
  seen[0] = true;  // baseline interaction is structurally zero
  for (const EffectEstimate& est : interactions) {
    if (est.kind != EffectKind::Interaction || !est.context_level.has_value()) {
      fail(ErrorCode::InvalidArgument, "reconstruction takes interaction estimates");
    }
    const int c = *est.context_level;
    if (c < 1 || c >= n_contexts) {
      fail(ErrorCode::InvalidArgument, "interaction context out of range");
    }
    if (seen[std::size_t(c)]) {
      fail(ErrorCode::InvalidArgument, "duplicate interaction context");
    }
    seen[std::size_t(c)] = true;
    adjusted -= est.point * context_distribution[c];
  }
  for (int c = 1; c < n_contexts; ++c) {
    if (!seen[std::size_t(c)]) {
      fail(ErrorCode::MissingInteraction,
           "no interaction estimate for context " + std::to_string(c));
    }
  }
  return adjusted;
}

std::string to_string(EffectClass c) {
  switch (c) {
    case EffectClass::Positive:
      return "+";
    case EffectClass::Negative:
      return "-";
    case EffectClass::Null:
      return "0";
  }
  fail(ErrorCode::InvalidArgument, "unknown effect class");
}

EffectClass effect_class_from_string(const std::string& s) {
  if (s == "+") return EffectClass::Positive;
  if (s == "-") return EffectClass::Negative;
  if (s == "0") return EffectClass::Null;
  fail(ErrorCode::Parse, "unknown effect class: " + s);
}

void save_estimates_csv(const std::vector<EffectEstimate>& estimates,
                        const std::string& path, const CoefficientSet* truth) {
  CsvTable table;
  table.header = {"kind",   "attribute", "level",          "context_level",
                  "point",  "ci_low",    "ci_high",        "classification"};
  if (truth != nullptr) table.header.push_back("truth_class");
  for (const EffectEstimate& est : estimates) {
    std::vector<std::string> row;
    row.push_back(est.kind == EffectKind::Main ? "main" : "interaction");
    row.push_back(std::to_string(est.attribute));
    row.push_back(std::to_string(est.level));
    row.push_back(est.context_level ? std::to_string(*est.context_level) : "");
    row.push_back(format_double(est.point));
    row.push_back(format_double(est.ci_low));
    row.push_back(format_double(est.ci_high));
    row.push_back(to_string(est.classification));
    if (truth != nullptr) {
      const int j = truth->attribute_offset(est.attribute) + est.level;
      const int cls = est.kind == EffectKind::Main
                          ? truth->truth_main_class(j)
                          : truth->truth_interaction_class(j, *est.context_level);
      row.push_back(to_string(EffectClass(cls)));
    }
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

std::vector<EffectEstimate> load_estimates_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int c_kind = table.column("kind");
  const int c_attr = table.column("attribute");
  const int c_level = table.column("level");
  const int c_ctx = table.column("context_level");
  const int c_point = table.column("point");
  const int c_lo = table.column("ci_low");
  const int c_hi = table.column("ci_high");
  const int c_class = table.column("classification");
  if (c_kind < 0 || c_attr < 0 || c_level < 0 || c_ctx < 0 || c_point < 0 ||
      c_lo < 0 || c_hi < 0 || c_class < 0) {
    fail(ErrorCode::Parse, "estimates csv is missing required columns");
  }
  std::vector<EffectEstimate> out;
  for (const auto& row : table.rows) {
    EffectEstimate est;
    const std::string& kind = row[std::size_t(c_kind)];
    if (kind == "main") {
      est.kind = EffectKind::Main;
    } else if (kind == "interaction") {
      est.kind = EffectKind::Interaction;
    } else {
      fail(ErrorCode::Parse, "unknown effect kind: " + kind);
    }
    est.attribute = std::stoi(row[std::size_t(c_attr)]);
    est.level = std::stoi(row[std::size_t(c_level)]);
    if (!row[std::size_t(c_ctx)].empty()) {
      est.context_level = std::stoi(row[std::size_t(c_ctx)]);
    }
    est.point = std::stod(row[std::size_t(c_point)]);
    est.ci_low = std::stod(row[std::size_t(c_lo)]);
    est.ci_high = std::stod(row[std::size_t(c_hi)]);
    est.classification = effect_class_from_string(row[std::size_t(c_class)]);
    out.push_back(est);
  }
  return out;
}

}  // namespace dipce
