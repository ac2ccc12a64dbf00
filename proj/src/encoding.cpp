#include "encoding.hpp"

#include "csv.hpp"
#include "errors.hpp"

namespace dipce {

std::string ColumnDesc::name() const {
  switch (kind) {
    case ColumnKind::Main:
      return "attr" + std::to_string(attribute) + "_lvl" + std::to_string(level);
    case ColumnKind::Context:
      return "ctx_" + std::to_string(context);
    case ColumnKind::Interaction:
      return "attr" + std::to_string(attribute) + "_lvl" + std::to_string(level) +
             ":ctx_" + std::to_string(context);
  }
  fail(ErrorCode::InvalidArgument, "unknown column kind");
}

namespace {

FeatureSchema onehot_schema(const DesignSpec& spec, EncodingMode mode) {
  FeatureSchema schema;
  schema.mode = mode;
  for (int a = 0; a < spec.n_attributes(); ++a) {
    for (int l = 0; l < spec.attribute_levels[std::size_t(a)]; ++l) {
      schema.columns.push_back({ColumnKind::Main, a, l, -1});
    }
  }
  for (int c = 0; c < spec.context_levels; ++c) {
    schema.columns.push_back({ColumnKind::Context, -1, -1, c});
  }
  return schema;
}

void check_task(const ChoiceTask& task, const DesignSpec& spec) {
  auto check_profile = [&](const Profile& p) {
    if (int(p.levels.size()) != spec.n_attributes()) {
      fail(ErrorCode::SchemaMismatch, "task profile arity differs from design");
    }
    for (int a = 0; a < spec.n_attributes(); ++a) {
      int level = p.levels[std::size_t(a)];
      if (level < 0 || level >= spec.attribute_levels[std::size_t(a)]) {
        fail(ErrorCode::SchemaMismatch, "task level index out of design range");
      }
    }
  };
  check_profile(task.left);
  check_profile(task.right);
  if (task.context_level < 0 || task.context_level >= spec.context_levels) {
    fail(ErrorCode::SchemaMismatch, "task context level out of design range");
  }
}

}  // namespace

FeatureSchema FeatureSchema::per_profile(const DesignSpec& spec) {
  return onehot_schema(spec, EncodingMode::PerProfile);
}

FeatureSchema FeatureSchema::difference(const DesignSpec& spec) {
  return onehot_schema(spec, EncodingMode::Difference);
}

FeatureSchema FeatureSchema::ols_interaction(const DesignSpec& spec) {
  FeatureSchema schema;
  schema.mode = EncodingMode::OlsInteraction;
  for (int a = 0; a < spec.n_attributes(); ++a) {
    for (int l = 1; l < spec.attribute_levels[std::size_t(a)]; ++l) {
      schema.columns.push_back({ColumnKind::Main, a, l, -1});
    }
  }
  for (int c = 1; c < spec.context_levels; ++c) {
    schema.columns.push_back({ColumnKind::Context, -1, -1, c});
  }
  for (int a = 0; a < spec.n_attributes(); ++a) {
    for (int l = 1; l < spec.attribute_levels[std::size_t(a)]; ++l) {
      for (int c = 1; c < spec.context_levels; ++c) {
        schema.columns.push_back({ColumnKind::Interaction, a, l, c});
      }
    }
  }
  return schema;
}

int FeatureSchema::context_block_start() const {
  for (int i = 0; i < width(); ++i) {
    if (columns[std::size_t(i)].kind == ColumnKind::Context) return i;
  }
  fail(ErrorCode::SchemaMismatch, "schema has no context block");
}

std::vector<int> FeatureSchema::main_effect_columns() const {
  std::vector<int> out;
  for (int i = 0; i < width(); ++i) {
    const ColumnDesc& col = columns[std::size_t(i)];
    if (col.kind == ColumnKind::Main && col.level != 0) out.push_back(i);
  }
  return out;
}

int EncodedDataset::row_context(long r) const {
  int start = -1;
  int count = 0;
  for (int i = 0; i < schema.width(); ++i) {
    if (schema.columns[std::size_t(i)].kind == ColumnKind::Context) {
      if (start < 0) start = i;
      ++count;
    }
  }
  if (start < 0) return 0;  // single-context OlsInteraction schema: all baseline
  for (int i = start; i < start + count; ++i) {
    if (matrix(r, i) == 1.0) return schema.columns[std::size_t(i)].context;
  }
  // OlsInteraction drops the baseline context column, so an all-zero block
  // means baseline there; the retained-baseline schemas always hit a 1.
  if (schema.mode == EncodingMode::OlsInteraction) return 0;
  fail(ErrorCode::SchemaMismatch, "row has no context indicator set");
}

EncodedDataset encode_per_profile(const std::vector<ChoiceTask>& tasks,
                                  const DesignSpec& spec) {
  spec.validate();
  EncodedDataset out;
  out.schema = FeatureSchema::per_profile(spec);
  out.matrix = Eigen::MatrixXd::Zero(long(tasks.size()) * 2, out.schema.width());
  out.labels.resize(long(tasks.size()) * 2);
  out.respondent_ids.resize(tasks.size() * 2);

  const int ctx_start = out.schema.context_block_start();
  long r = 0;
  for (const ChoiceTask& task : tasks) {
    check_task(task, spec);
    for (int side = 0; side < 2; ++side, ++r) {
      const Profile& profile = side == 0 ? task.left : task.right;
      for (int a = 0; a < spec.n_attributes(); ++a) {
        out.matrix(r, spec.attribute_offset(a) + profile.levels[std::size_t(a)]) = 1.0;
      }
      out.matrix(r, ctx_start + task.context_level) = 1.0;
      const bool chosen = (side == 0) == task.chose_left;
      out.labels[r] = chosen ? 1.0 : 0.0;
      out.respondent_ids[std::size_t(r)] = task.respondent_id;
    }
  }
  return out;
}

EncodedDataset encode_difference(const std::vector<ChoiceTask>& tasks,
                                 const DesignSpec& spec) {
  spec.validate();
  EncodedDataset out;
  out.schema = FeatureSchema::difference(spec);
  out.matrix = Eigen::MatrixXd::Zero(long(tasks.size()), out.schema.width());
  out.labels.resize(long(tasks.size()));
  out.respondent_ids.resize(tasks.size());

  const int ctx_start = out.schema.context_block_start();
  long r = 0;
  for (const ChoiceTask& task : tasks) {
    check_task(task, spec);
    for (int a = 0; a < spec.n_attributes(); ++a) {
      const int offset = spec.attribute_offset(a);
      out.matrix(r, offset + task.left.levels[std::size_t(a)]) += 1.0;
      out.matrix(r, offset + task.right.levels[std::size_t(a)]) -= 1.0;
    }
    out.matrix(r, ctx_start + task.context_level) = 1.0;
    out.labels[r] = task.chose_left ? 1.0 : 0.0;
    out.respondent_ids[std::size_t(r)] = task.respondent_id;
    ++r;
  }
  return out;
}

EncodedDataset encode_ols_interactions(const std::vector<ChoiceTask>& tasks,
                                       const DesignSpec& spec) {
  spec.validate();
  EncodedDataset out;
  out.schema = FeatureSchema::ols_interaction(spec);
  out.matrix = Eigen::MatrixXd::Zero(long(tasks.size()) * 2, out.schema.width());
  out.labels.resize(long(tasks.size()) * 2);
  out.respondent_ids.resize(tasks.size() * 2);

  // Column lookup: mains by (attribute, level), contexts by level, products in
  // (attribute, level, context) order right after their parents.
  const int n_main = spec.eligible_main_count();
  const int n_ctx = spec.context_levels - 1;
  auto main_col = [&](int a, int l) {
    return spec.attribute_offset(a) - a + (l - 1);  // baselines dropped before a
  };
  auto inter_col = [&](int a, int l, int c) {
    return n_main + n_ctx + main_col(a, l) * n_ctx + (c - 1);
  };

  long r = 0;
  for (const ChoiceTask& task : tasks) {
    check_task(task, spec);
    for (int side = 0; side < 2; ++side, ++r) {
      const Profile& profile = side == 0 ? task.left : task.right;
      const int ctx = task.context_level;
      for (int a = 0; a < spec.n_attributes(); ++a) {
        const int level = profile.levels[std::size_t(a)];
        if (level == 0) continue;
        out.matrix(r, main_col(a, level)) = 1.0;
        if (ctx != 0) out.matrix(r, inter_col(a, level, ctx)) = 1.0;
      }
      if (ctx != 0) out.matrix(r, n_main + (ctx - 1)) = 1.0;
      const bool chosen = (side == 0) == task.chose_left;
      out.labels[r] = chosen ? 1.0 : 0.0;
      out.respondent_ids[std::size_t(r)] = task.respondent_id;
    }
  }
  return out;
}

void save_encoded_csv(const EncodedDataset& data, const std::string& path) {
  CsvTable table;
  table.header.push_back("respondent_id");
  for (const ColumnDesc& col : data.schema.columns) table.header.push_back(col.name());
  table.header.push_back("label");
  table.rows.reserve(std::size_t(data.rows()));
  for (long r = 0; r < data.rows(); ++r) {
    std::vector<std::string> row;
    row.reserve(table.header.size());
    row.push_back(std::to_string(data.respondent_ids[std::size_t(r)]));
    for (int c = 0; c < data.schema.width(); ++c) {
      row.push_back(format_double(data.matrix(r, c)));
    }
    row.push_back(format_double(data.labels[r]));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

}  // namespace dipce
