#include "mixcor/model.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "mixcor/errors.hpp"

namespace mixcor {

VariableSpec VariableSpec::continuous(std::string name) {
  return {std::move(name), VariableKind::Continuous, 0};
}

VariableSpec VariableSpec::ordinal(std::string name, int categories) {
  if (categories < 2) {
    throw InvalidArgument("ordinal variable '" + name + "' needs at least 2 categories");
  }
  return {std::move(name), VariableKind::Ordinal, categories};
}

// ---------------------------------------------------------------------------
// ThresholdSet

ThresholdSet::ThresholdSet(std::vector<std::vector<double>> cuts) : cuts_(std::move(cuts)) {
  offsets_.reserve(cuts_.size());
  for (std::size_t i = 0; i < cuts_.size(); ++i) {
    const auto& v = cuts_[i];
    if (v.empty()) {
      throw InvalidArgument("ordinal variable " + std::to_string(i) + " has no thresholds");
    }
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!std::isfinite(v[k])) {
        throw InvalidArgument("threshold " + std::to_string(k + 1) + " of variable " +
                              std::to_string(i) + " is not finite");
      }
      if (k > 0 && !(v[k - 1] < v[k])) {
        throw InvalidArgument("thresholds of variable " + std::to_string(i) +
                              " are not strictly increasing");
      }
    }
    offsets_.push_back(total_);
    total_ += v.size();
  }
}

double ThresholdSet::cut(std::size_t variable, int k) const {
  const auto& v = cuts_[variable];
  if (k <= 0) return -std::numeric_limits<double>::infinity();
  if (k > static_cast<int>(v.size())) return std::numeric_limits<double>::infinity();
  return v[k - 1];
}

Eigen::VectorXd ThresholdSet::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(total_));
  for (std::size_t i = 0; i < cuts_.size(); ++i) {
    for (std::size_t k = 0; k < cuts_[i].size(); ++k) {
      flat[static_cast<Eigen::Index>(offsets_[i] + k)] = cuts_[i][k];
    }
  }
  return flat;
}

ThresholdSet ThresholdSet::with_values(const Eigen::Ref<const Eigen::VectorXd>& flat) const {
  if (static_cast<std::size_t>(flat.size()) != total_) {
    throw InvalidArgument("threshold vector has the wrong length");
  }
  std::vector<std::vector<double>> cuts = cuts_;
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    for (std::size_t k = 0; k < cuts[i].size(); ++k) {
      cuts[i][k] = flat[static_cast<Eigen::Index>(offsets_[i] + k)];
    }
  }
  return ThresholdSet(std::move(cuts));
}

// ---------------------------------------------------------------------------
// CorrelationLayout / CorrelationParams

const char* to_string(CoefficientKind kind) {
  switch (kind) {
    case CoefficientKind::Pearson:
      return "pearson";
    case CoefficientKind::Polyserial:
      return "polyserial";
    case CoefficientKind::Polychoric:
      return "polychoric";
  }
  return "?";
}

CorrelationLayout::CorrelationLayout(int continuous, int ordinal) : c_(continuous), d_(ordinal) {
  if (c_ < 0 || d_ < 0 || c_ + d_ < 2) {
    throw InvalidArgument("a correlation matrix needs at least two variables");
  }
  for (int j = 0; j < c_; ++j) {
    for (int i = j + 1; i < c_; ++i) entries_.push_back({CoefficientKind::Pearson, i, j});
  }
  for (int j = 0; j < c_; ++j) {
    for (int i = 0; i < d_; ++i) entries_.push_back({CoefficientKind::Polyserial, c_ + i, j});
  }
  for (int j = 0; j < d_; ++j) {
    for (int i = j + 1; i < d_; ++i) {
      entries_.push_back({CoefficientKind::Polychoric, c_ + i, c_ + j});
    }
  }
  const int dim = c_ + d_;
  lookup_.assign(static_cast<std::size_t>(dim * dim), -1);
  for (int idx = 0; idx < size(); ++idx) {
    const auto& e = entries_[idx];
    lookup_[static_cast<std::size_t>(e.row * dim + e.col)] = idx;
    lookup_[static_cast<std::size_t>(e.col * dim + e.row)] = idx;
  }
}

int CorrelationLayout::index_of(int row, int col) const {
  const int dim = dimension();
  if (row < 0 || col < 0 || row >= dim || col >= dim || row == col) {
    throw UnknownPair("no coefficient at (" + std::to_string(row) + ", " + std::to_string(col) +
                      ")");
  }
  return lookup_[static_cast<std::size_t>(row * dim + col)];
}

CorrelationParams::CorrelationParams(CorrelationLayout layout, Eigen::VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.size()) {
    throw InvalidArgument("coefficient vector length does not match the layout");
  }
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (!std::isnan(values_[i]) && !(std::fabs(values_[i]) < 1.0)) {
      throw InvalidArgument("correlation " + std::to_string(values_[i]) + " outside (-1, 1)");
    }
  }
}

CorrelationParams CorrelationParams::zeros(int continuous, int ordinal) {
  CorrelationLayout layout(continuous, ordinal);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(layout.size());
  return {std::move(layout), std::move(values)};
}

CorrelationParams CorrelationParams::from_matrix(const Eigen::MatrixXd& matrix, int continuous) {
  if (matrix.rows() != matrix.cols()) throw InvalidArgument("correlation matrix is not square");
  const int dim = static_cast<int>(matrix.rows());
  CorrelationLayout layout(continuous, dim - continuous);
  Eigen::VectorXd values(layout.size());
  for (int idx = 0; idx < layout.size(); ++idx) values[idx] = matrix(layout[idx].row, layout[idx].col);
  return {std::move(layout), std::move(values)};
}

std::span<const double> CorrelationParams::rho_yy() const {
  return {values_.data(), static_cast<std::size_t>(layout_.pearson_count())};
}

std::span<const double> CorrelationParams::rho_yx() const {
  return {values_.data() + layout_.pearson_count(),
          static_cast<std::size_t>(layout_.polyserial_count())};
}

std::span<const double> CorrelationParams::rho_xx() const {
  return {values_.data() + layout_.pearson_count() + layout_.polyserial_count(),
          static_cast<std::size_t>(layout_.polychoric_count())};
}

Eigen::MatrixXd CorrelationParams::to_matrix() const {
  const int dim = layout_.dimension();
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(dim, dim);
  for (int idx = 0; idx < layout_.size(); ++idx) {
    const auto& e = layout_[idx];
    m(e.row, e.col) = values_[idx];
    m(e.col, e.row) = values_[idx];
  }
  return m;
}

Eigen::VectorXd ParamVector::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(size()));
  const auto t = static_cast<Eigen::Index>(thresholds.total());
  flat.head(t) = thresholds.flatten();
  flat.tail(correlations.size()) = correlations.values();
  return flat;
}

ParamVector ParamVector::with_values(const Eigen::Ref<const Eigen::VectorXd>& flat) const {
  if (static_cast<std::size_t>(flat.size()) != size()) {
    throw InvalidArgument("parameter vector has the wrong length");
  }
  const auto t = static_cast<Eigen::Index>(thresholds.total());
  return {thresholds.with_values(flat.head(t)),
          CorrelationParams(correlations.layout(), flat.tail(correlations.size()))};
}

ParamCount param_count(int continuous, int ordinal, std::span<const int> categories) {
  if (continuous + ordinal < 2) throw InvalidArgument("need at least two variables");
  if (static_cast<int>(categories.size()) != ordinal) {
    throw InvalidArgument("one category count per ordinal variable is required");
  }
  ParamCount count;
  const auto total = static_cast<std::size_t>(continuous + ordinal);
  count.interest = total * (total - 1) / 2;
  for (int s : categories) count.nuisance += static_cast<std::size_t>(s - 1);
  return count;
}

// ---------------------------------------------------------------------------
// MixedDataset

std::vector<int> MixedDataset::categories() const {
  std::vector<int> s;
  for (const auto& spec : specs_) {
    if (spec.is_ordinal()) s.push_back(spec.categories);
  }
  return s;
}

MixedDataset MixedDataset::from_columns(std::vector<VariableSpec> specs, Eigen::MatrixXd continuous,
                                        Eigen::MatrixXi ordinal, IngestOptions options) {
  const auto c = continuous.cols();
  const auto d = ordinal.cols();
  if (static_cast<std::size_t>(c + d) != specs.size()) {
    throw InvalidArgument("column count does not match the variable specs");
  }
  if (c + d < 2) throw InvalidArgument("need at least two variables");
  if (c > 0 && d > 0 && continuous.rows() != ordinal.rows()) {
    throw InvalidArgument("continuous and ordinal blocks have different row counts");
  }
  std::set<std::string> names;
  for (Eigen::Index j = 0; j < c + d; ++j) {
    const auto& spec = specs[static_cast<std::size_t>(j)];
    if (!names.insert(spec.name).second) {
      throw InvalidArgument("duplicate variable name '" + spec.name + "'");
    }
    if (spec.is_ordinal() != (j >= c)) {
      throw InvalidArgument("specs must list continuous variables before ordinal ones");
    }
    if (spec.is_ordinal() && spec.categories < 2) {
      throw InvalidArgument("ordinal variable '" + spec.name + "' needs at least 2 categories");
    }
  }

  const Eigen::Index n = c > 0 ? continuous.rows() : ordinal.rows();
  if (n < 2) throw TooFewRows("at least 2 complete rows are required, got " + std::to_string(n));
  if (c == 0) continuous.resize(n, 0);
  if (d == 0) ordinal.resize(n, 0);

  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index r = 0; r < n; ++r) {
      if (!std::isfinite(continuous(r, j))) {
        throw NonFiniteCell("non-finite value in column '" +
                            specs[static_cast<std::size_t>(j)].name + "', row " +
                            std::to_string(r + 1));
      }
    }
    if (options.standardize) {
      auto col = continuous.col(j);
      const double mean = col.mean();
      col.array() -= mean;
      const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n - 1));
      if (!(sd > 0.0)) {
        throw InvalidArgument("continuous column '" + specs[static_cast<std::size_t>(j)].name +
                              "' is constant");
      }
      col /= sd;
    }
  }

  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& spec = specs[static_cast<std::size_t>(c + i)];
    std::vector<int> counts(static_cast<std::size_t>(spec.categories), 0);
    for (Eigen::Index r = 0; r < n; ++r) {
      const int code = ordinal(r, i);
      if (code < 1 || code > spec.categories) {
        throw CodeOutOfRange("code " + std::to_string(code) + " in ordinal column '" + spec.name +
                             "' (row " + std::to_string(r + 1) + ") is outside 1.." +
                             std::to_string(spec.categories));
      }
      ++counts[static_cast<std::size_t>(code - 1)];
    }
    for (int k = 0; k < spec.categories; ++k) {
      if (counts[static_cast<std::size_t>(k)] == 0) throw EmptyCategory(spec.name, k + 1);
    }
  }

  MixedDataset data;
  data.specs_ = std::move(specs);
  data.continuous_ = std::move(continuous);
  data.ordinal_ = std::move(ordinal);
  return data;
}

MixedDataset ingest(const std::vector<std::vector<double>>& table,
                    const std::vector<VariableSpec>& specs, IngestOptions options) {
  std::vector<std::size_t> cont_cols;
  std::vector<std::size_t> ord_cols;
  for (std::size_t j = 0; j < specs.size(); ++j) {
    (specs[j].is_ordinal() ? ord_cols : cont_cols).push_back(j);
  }

  std::vector<const std::vector<double>*> complete;
  complete.reserve(table.size());
  int dropped = 0;
  for (std::size_t r = 0; r < table.size(); ++r) {
    const auto& row = table[r];
    if (row.size() != specs.size()) {
      throw InvalidArgument("row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                            " cells, expected " + std::to_string(specs.size()));
    }
    bool missing = false;
    for (double v : row) missing = missing || std::isnan(v);
    if (missing) {
      ++dropped;
    } else {
      complete.push_back(&row);
    }
  }

  const auto n = static_cast<Eigen::Index>(complete.size());
  Eigen::MatrixXd cont(n, static_cast<Eigen::Index>(cont_cols.size()));
  Eigen::MatrixXi ord(n, static_cast<Eigen::Index>(ord_cols.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = *complete[static_cast<std::size_t>(r)];
    for (std::size_t j = 0; j < cont_cols.size(); ++j) {
      cont(r, static_cast<Eigen::Index>(j)) = row[cont_cols[j]];
    }
    for (std::size_t i = 0; i < ord_cols.size(); ++i) {
      const double v = row[ord_cols[i]];
      const auto& name = specs[ord_cols[i]].name;
      if (!std::isfinite(v)) throw NonFiniteCell("non-finite code in ordinal column '" + name + "'");
      if (v != std::round(v)) {
        throw CodeOutOfRange("non-integer code " + std::to_string(v) + " in ordinal column '" +
                             name + "'");
      }
      if (std::fabs(v) > 1e9) throw CodeOutOfRange("code out of range in column '" + name + "'");
      ord(r, static_cast<Eigen::Index>(i)) = static_cast<int>(v);
    }
  }

  std::vector<VariableSpec> ordered;
  for (auto j : cont_cols) ordered.push_back(specs[j]);
  for (auto j : ord_cols) ordered.push_back(specs[j]);
  auto data = MixedDataset::from_columns(std::move(ordered), std::move(cont), std::move(ord), options);
  data.dropped_rows_ = dropped;
  return data;
}

}  // namespace mixcor
