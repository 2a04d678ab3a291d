#pragma once

// Monte Carlo replication of the latent-normal design: draw N(0, R), cut the
// ordinal columns at their thresholds, fit, and aggregate.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mixcor/estimator.hpp"
#include "mixcor/model.hpp"

namespace mixcor {

struct SimDesign {
  std::string name;
  Eigen::MatrixXd R;                           // (c+d) x (c+d), continuous first
  std::vector<std::vector<double>> thresholds;  // one entry per ordinal variable
  int n = 1000;
  int replications = 1000;
  std::uint64_t seed = 1;
  FitConfig fit;
  bool standardize = false;  // rescale continuous columns of each sample
  int threads = 0;           // 0: all available cores

  int continuous() const { return static_cast<int>(R.rows()) - ordinal(); }
  int ordinal() const { return static_cast<int>(thresholds.size()); }
  std::vector<VariableSpec> specs() const;

  // Throws InvalidArgument or NotPositiveDefinite.
  void validate() const;
};

// Sample `replication` of the design; identical for identical arguments.
MixedDataset generate(const SimDesign& design, std::uint64_t replication);

struct SimReport {
  std::vector<int> coefficients;  // layout indices
  std::vector<std::string> labels;
  Eigen::VectorXd truth;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covr;  // sample covariance of the estimates, divisor N_ok - 1
  Eigen::MatrixXd mcov;  // mean of the estimated Var(R)
  Eigen::MatrixXd estimates;             // N_ok x P, in replication order
  std::vector<std::uint64_t> succeeded;  // replication indices behind `estimates`
  int failures = 0;
  int nonconverged = 0;
  double wall_seconds = 0.0;
};

// Throws AllReplicationsFailed when no replication produced an estimate.
SimReport run_study(const SimDesign& design);

// Fixed-width table in the units of the published tables: MEAN x 1e-4, the
// lower triangles of COVR and MCOV x 1e-5 for n < 500 and x 1e-6 otherwise.
std::string format_table(const SimDesign& design, const SimReport& report);

// Label such as "Y1-Y2", "Y1-X2" or "X1-X2" for a layout index.
std::string coefficient_label(const std::vector<VariableSpec>& specs, int index);

// One-dimensional maximum likelihood estimate of a single polychoric or
// polyserial coefficient with the thresholds held at their marginal
// estimates.
double ml_pair_oracle(const MixedDataset& data, int coefficient);

}  // namespace mixcor
