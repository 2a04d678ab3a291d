#pragma once

// The blocked GMM moment system.
//
// Every moment condition has the separable form u(X; theta) = s(X) - mu(theta):
// a data term that depends only on the observation and a model term that
// depends only on the parameters.
//
//   threshold  (X_i, k)           s = I_k(X_i)         mu = Phi(a_{i,k}) - Phi(a_{i,k-1})
//   pearson    (Y_i, Y_j)         s = Y_i Y_j          mu = rho
//   polyserial (Y_j, X_i, k)      s = Y_j I_k(X_i)     mu = rho (phi(a_{i,k-1}) - phi(a_{i,k}))
//   polychoric (X_i, X_j, k, l)   s = I_kl(X_i X_j)    mu = P(cell k,l | rho)
//
// Sample moments, their gradient and their second moment matrix therefore
// only need the sample mean and uncentered second moment of s(X), which are
// collected once per dataset (MomentStatistics).

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mixcor/model.hpp"
#include "mixcor/normal.hpp"

namespace mixcor {

enum class SystemMode { MaxSet, MinSet, Custom };
enum class BlockKind { Threshold, Pearson, Polyserial, Polychoric };

const char* to_string(SystemMode mode);
const char* to_string(BlockKind kind);

struct Equation {
  BlockKind kind = BlockKind::Threshold;
  int coefficient = -1;  // layout index; -1 for threshold equations
  int variable = -1;     // ordinal index of a threshold equation
  // Threshold and polyserial: category of the ordinal variable.
  // Polychoric: category k of the lower-numbered and l of the higher-numbered
  // ordinal variable.
  int k = 0;
  int l = 0;
  bool retained = true;
};

struct EquationBlock {
  BlockKind kind = BlockKind::Threshold;
  int coefficient = -1;  // -1 for threshold blocks
  int variable = -1;     // ordinal index for threshold blocks
  std::vector<Equation> equations;

  int retained_count() const;
};

class EquationSystem {
 public:
  // Validates block references and that every parameter touched by the
  // system keeps at least one retained equation (UncoveredParameter).
  static EquationSystem from_blocks(std::vector<VariableSpec> specs, SystemMode mode,
                                    std::vector<EquationBlock> blocks);

  const std::vector<VariableSpec>& specs() const { return specs_; }
  const CorrelationLayout& layout() const { return layout_; }
  const std::vector<int>& categories() const { return categories_; }
  SystemMode mode() const { return mode_; }
  const std::vector<EquationBlock>& blocks() const { return blocks_; }

  // Retained equations in row order: all threshold rows first.
  const std::vector<Equation>& equations() const { return rows_; }
  int size() const { return static_cast<int>(rows_.size()); }
  int threshold_rows() const { return threshold_rows_; }

  // Coefficients with a block, ascending layout index.
  const std::vector<int>& coefficients() const { return coefficients_; }
  // Ordinal variables with a threshold block, ascending.
  const std::vector<int>& ordinals() const { return ordinals_; }

  // Length of the full parameter vector (every threshold, every coefficient).
  int parameter_count() const { return threshold_count_ + layout_.size(); }
  int threshold_count() const { return threshold_count_; }
  int threshold_offset(int ordinal) const { return threshold_offsets_[ordinal]; }
  // Positions in theta of the thresholds of ordinals() and of coefficients().
  std::vector<int> active_thresholds() const;
  std::vector<int> active_coefficients() const;

  // The same blocks with every equation retained.
  EquationSystem unpruned() const;

 private:
  std::vector<VariableSpec> specs_;
  CorrelationLayout layout_;
  std::vector<int> categories_;
  std::vector<int> threshold_offsets_;
  int threshold_count_ = 0;
  SystemMode mode_ = SystemMode::MaxSet;
  std::vector<EquationBlock> blocks_;
  std::vector<Equation> rows_;
  int threshold_rows_ = 0;
  std::vector<int> coefficients_;
  std::vector<int> ordinals_;
};

// MaxSet keeps every block over-determined minus the redundant equation
// (the last category or cell), except that for each continuous variable the
// polyserial block with the lowest-numbered ordinal partner keeps all of its
// equations. MinSet keeps one equation per coefficient. Custom builds MaxSet
// blocks for the requested coefficient indices only, plus threshold blocks
// for every ordinal variable they involve. Throws UnknownPair for an invalid
// index.
EquationSystem build_system(const std::vector<VariableSpec>& specs, SystemMode mode,
                            const std::optional<std::vector<int>>& pairs = std::nullopt);

// One observation: continuous values then ordinal codes.
struct Observation {
  std::span<const double> continuous;
  std::span<const int> ordinal;
};

Observation observation(const MixedDataset& data, int row, std::vector<double>& y_buffer,
                        std::vector<int>& x_buffer);

Eigen::VectorXd data_terms(const Observation& obs, const EquationSystem& system);
Eigen::VectorXd model_terms(const ParamVector& theta, const EquationSystem& system,
                            const BivariateCdf& cdf);
// d mu / d theta, q x parameter_count().
Eigen::MatrixXd model_jacobian(const ParamVector& theta, const EquationSystem& system,
                               const BivariateCdf& cdf);

// u(X; theta) for the retained equations.
Eigen::VectorXd eval_u(const Observation& obs, const ParamVector& theta,
                       const EquationSystem& system, const BivariateCdf& cdf);

// Sample mean and uncentered second moment of the data terms, summed in
// row order.
struct MomentStatistics {
  int n = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd second;
};

MomentStatistics collect_statistics(const MixedDataset& data, const EquationSystem& system);

struct MomentEvaluation {
  Eigen::VectorXd m;            // E_n[u]
  Eigen::MatrixXd G;            // dm/dtheta, q x parameter_count()
  Eigen::MatrixXd omega_hat;    // E_n[u u']
};

MomentEvaluation eval_moments(const MixedDataset& data, const ParamVector& theta,
                              const EquationSystem& system, const BivariateCdf& cdf);
MomentEvaluation eval_moments(const MomentStatistics& stats, const ParamVector& theta,
                              const EquationSystem& system, const BivariateCdf& cdf);

// E_n[u u'] from the statistics and the model terms.
Eigen::MatrixXd second_moment(const MomentStatistics& stats, const Eigen::VectorXd& mu);

// G = dm/dtheta = -d mu/d theta; independent of the data.
Eigen::MatrixXd assemble_gradient(const ParamVector& theta, const EquationSystem& system,
                                  const BivariateCdf& cdf);

struct WeightMatrix {
  Eigen::MatrixXd W;
  double condition = 1.0;
  int rank = 0;
  bool pseudo_inverse = false;
};

// Inverse of a symmetric PSD moment covariance. Falls back to an
// eigenvalue-thresholded pseudo-inverse (cutoff 1e-10 * lambda_max) when the
// condition number exceeds 1e12. Throws DegenerateWeight if the numerical
// rank is below half the dimension.
WeightMatrix weight_matrix(const Eigen::MatrixXd& omega_hat);

}  // namespace mixcor
