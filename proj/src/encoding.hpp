#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "design.hpp"

namespace dipce {

enum class EncodingMode { PerProfile, Difference, OlsInteraction };

enum class ColumnKind { Main, Context, Interaction };

struct ColumnDesc {
  ColumnKind kind = ColumnKind::Main;
  int attribute = -1;  // Main / Interaction
  int level = -1;      // attribute level (Main / Interaction)
  int context = -1;    // Context / Interaction
  std::string name() const;
  bool operator==(const ColumnDesc&) const = default;
};

struct FeatureSchema {
  EncodingMode mode = EncodingMode::PerProfile;
  std::vector<ColumnDesc> columns;

  int width() const { return int(columns.size()); }
  // One-hot width retained (baselines included) in PerProfile / Difference.
  static FeatureSchema per_profile(const DesignSpec& spec);
  static FeatureSchema difference(const DesignSpec& spec);
  // Baselines dropped everywhere; intercept handled by the regression itself.
  static FeatureSchema ols_interaction(const DesignSpec& spec);

  // Index of the context one-hot block (PerProfile / Difference only).
  int context_block_start() const;
  // Non-baseline main columns in schema order.
  std::vector<int> main_effect_columns() const;
};

struct EncodedDataset {
  FeatureSchema schema;
  Eigen::MatrixXd matrix;        // rows x schema.width()
  Eigen::VectorXd labels;        // 0/1
  std::vector<int> respondent_ids;

  long rows() const { return matrix.rows(); }
  // Context level of a row, read off the one-hot context block.
  int row_context(long r) const;
};

// Two rows per task (left then right); label 1 iff that profile was chosen.
EncodedDataset encode_per_profile(const std::vector<ChoiceTask>& tasks,
                                  const DesignSpec& spec);
// One row per task; attribute block is onehot(left) - onehot(right), context
// stays one-hot, label = chose_left.
EncodedDataset encode_difference(const std::vector<ChoiceTask>& tasks,
                                 const DesignSpec& spec);
// Per-profile rows with explicit (attribute level x context level) product
// columns, baselines dropped; the regression design matrix.
EncodedDataset encode_ols_interactions(const std::vector<ChoiceTask>& tasks,
                                       const DesignSpec& spec);

void save_encoded_csv(const EncodedDataset& data, const std::string& path);

}  // namespace dipce
