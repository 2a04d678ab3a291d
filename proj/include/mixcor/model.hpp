#pragma once

// Data model: variable typing, the mixed sample table, ordinal thresholds
// and the flattened vector of correlation coefficients.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mixcor {

enum class VariableKind { Continuous, Ordinal };

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::Continuous;
  int categories = 0;  // number of ordinal categories, 0 for continuous

  static VariableSpec continuous(std::string name);
  static VariableSpec ordinal(std::string name, int categories);

  bool is_ordinal() const { return kind == VariableKind::Ordinal; }
};

// Interior cut points of every ordinal variable. Variable i with s_i
// categories stores a_{i,1} < ... < a_{i,s_i-1}; the outer points a_{i,0}
// and a_{i,s_i} are -inf and +inf and are never stored.
class ThresholdSet {
 public:
  ThresholdSet() = default;
  // Throws InvalidArgument unless every vector is nonempty, finite and
  // strictly increasing.
  explicit ThresholdSet(std::vector<std::vector<double>> cuts);

  std::size_t variables() const { return cuts_.size(); }
  int categories(std::size_t variable) const {
    return static_cast<int>(cuts_[variable].size()) + 1;
  }
  // a_{variable,k} for k in [0, categories]; the ends are infinite.
  double cut(std::size_t variable, int k) const;
  std::span<const double> interior(std::size_t variable) const { return cuts_[variable]; }

  // Position of a_{variable,1} in the flattened threshold vector.
  std::size_t offset(std::size_t variable) const { return offsets_[variable]; }
  std::size_t total() const { return total_; }

  Eigen::VectorXd flatten() const;
  // Same shape as *this, values taken from `flat`. Throws InvalidArgument
  // if the ordering invariant is violated.
  ThresholdSet with_values(const Eigen::Ref<const Eigen::VectorXd>& flat) const;

 private:
  std::vector<std::vector<double>> cuts_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

enum class CoefficientKind { Pearson, Polyserial, Polychoric };

const char* to_string(CoefficientKind kind);

// One strict-lower-triangle entry of the (c+d) x (c+d) matrix. Variables are
// numbered with the c continuous ones first, so for a polyserial entry `col`
// is the continuous variable and `row - c` the ordinal one; for a polychoric
// entry `col - c` is the lower-numbered ordinal variable.
struct Coefficient {
  CoefficientKind kind;
  int row;
  int col;
};

// Index map between the flattened coefficient vector and matrix positions.
// Order: Pearson lower triangle by columns, then the d x c polyserial block
// by columns, then the polychoric lower triangle by columns.
class CorrelationLayout {
 public:
  CorrelationLayout() = default;
  CorrelationLayout(int continuous, int ordinal);

  int continuous() const { return c_; }
  int ordinal() const { return d_; }
  int dimension() const { return c_ + d_; }
  int size() const { return static_cast<int>(entries_.size()); }

  const Coefficient& operator[](int index) const { return entries_[index]; }
  const std::vector<Coefficient>& entries() const { return entries_; }

  // Accepts either orientation; throws UnknownPair for the diagonal or out
  // of range positions.
  int index_of(int row, int col) const;

  int pearson_count() const { return c_ * (c_ - 1) / 2; }
  int polyserial_count() const { return c_ * d_; }
  int polychoric_count() const { return d_ * (d_ - 1) / 2; }

  friend bool operator==(const CorrelationLayout& a, const CorrelationLayout& b) {
    return a.c_ == b.c_ && a.d_ == b.d_;
  }

 private:
  int c_ = 0;
  int d_ = 0;
  std::vector<Coefficient> entries_;
  std::vector<int> lookup_;  // row-major over the full matrix, -1 off-triangle
};

class CorrelationParams {
 public:
  CorrelationParams() = default;
  // Values must lie in (-1, 1) or be NaN for "not estimated"; the estimator
  // keeps them in the kRhoBound box.
  CorrelationParams(CorrelationLayout layout, Eigen::VectorXd values);
  static CorrelationParams zeros(int continuous, int ordinal);
  static CorrelationParams from_matrix(const Eigen::MatrixXd& matrix, int continuous);

  const CorrelationLayout& layout() const { return layout_; }
  const Eigen::VectorXd& values() const { return values_; }
  double operator[](int index) const { return values_[index]; }
  int size() const { return layout_.size(); }

  std::span<const double> rho_yy() const;
  std::span<const double> rho_yx() const;
  std::span<const double> rho_xx() const;

  // Symmetric matrix with unit diagonal.
  Eigen::MatrixXd to_matrix() const;

 private:
  CorrelationLayout layout_;
  Eigen::VectorXd values_;
};

// theta = (all thresholds, then R).
struct ParamVector {
  ThresholdSet thresholds;
  CorrelationParams correlations;

  std::size_t size() const { return thresholds.total() + correlations.size(); }
  Eigen::VectorXd flatten() const;
  ParamVector with_values(const Eigen::Ref<const Eigen::VectorXd>& flat) const;
};

struct ParamCount {
  std::size_t interest = 0;
  std::size_t nuisance = 0;
};

ParamCount param_count(int continuous, int ordinal, std::span<const int> categories);

struct IngestOptions {
  // Rescale continuous columns to sample mean 0 and sd 1 (divisor n - 1).
  bool standardize = true;
};

// The n x (c + d) sample. Continuous columns come first, then the ordinal
// columns holding category codes 1..s_i. Immutable after construction.
class MixedDataset {
 public:
  // Validates codes and category coverage. Throws CodeOutOfRange,
  // EmptyCategory, NonFiniteCell, TooFewRows or InvalidArgument.
  static MixedDataset from_columns(std::vector<VariableSpec> specs, Eigen::MatrixXd continuous,
                                   Eigen::MatrixXi ordinal, IngestOptions options = {});

  const std::vector<VariableSpec>& specs() const { return specs_; }
  int rows() const { return static_cast<int>(continuous_.rows()); }
  int continuous_count() const { return static_cast<int>(continuous_.cols()); }
  int ordinal_count() const { return static_cast<int>(ordinal_.cols()); }
  std::vector<int> categories() const;

  const Eigen::MatrixXd& continuous() const { return continuous_; }
  const Eigen::MatrixXi& ordinal() const { return ordinal_; }

  // Rows removed during ingestion because a cell was missing.
  int dropped_rows() const { return dropped_rows_; }

  const VariableSpec& ordinal_spec(int i) const { return specs_[continuous_count() + i]; }

 private:
  friend MixedDataset ingest(const std::vector<std::vector<double>>&,
                             const std::vector<VariableSpec>&, IngestOptions);
  MixedDataset() = default;

  std::vector<VariableSpec> specs_;
  Eigen::MatrixXd continuous_;
  Eigen::MatrixXi ordinal_;
  int dropped_rows_ = 0;
};

// Builds a dataset from raw rows whose cells follow `specs`. NaN marks a
// missing cell and drops the row; specs may interleave continuous and
// ordinal columns, the result is reordered continuous-first.
MixedDataset ingest(const std::vector<std::vector<double>>& table,
                    const std::vector<VariableSpec>& specs, IngestOptions options = {});

}  // namespace mixcor
