#pragma once

// Iterative GMM estimation of the mixed correlation matrix.
//
// One-step: thresholds and correlations are estimated jointly from the full
// moment system with weight matrix refreshed between inner solves.
// Two-step: thresholds come from the marginal proportions in closed form and
// stay fixed; only the correlation moments enter the loss, and the
// covariance of R is corrected for the threshold estimation.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mixcor/model.hpp"
#include "mixcor/moments.hpp"
#include "mixcor/normal.hpp"

namespace mixcor {

enum class Method { OneStep, TwoStep };

// How the threshold-uncertainty term of the two-step covariance is built.
//   PlugInSigma:    Lambda + Lambda Gamma Sigma Gamma' Lambda
//   CorrectedAvar: Lambda + Lambda Gamma Avar(a) Gamma' Lambda,
//                  Avar(a) = G11^-1 Sigma G11^-T
enum class CovarianceVariant { PlugInSigma, CorrectedAvar };

const char* to_string(Method method);
const char* to_string(CovarianceVariant variant);

struct FitConfig {
  Method method = Method::TwoStep;
  int max_outer_iter = 100;
  double outer_tol = 1e-8;
  double inner_grad_tol = 1e-10;
  int inner_max_iter = 500;
  LegendreOrder legendre = LegendreOrder::Third;
  SystemMode system_mode = SystemMode::MaxSet;
  std::optional<std::vector<int>> pairs;  // coefficient indices, Custom mode only
  CovarianceVariant covariance = CovarianceVariant::CorrectedAvar;

  // Throws InvalidArgument on non-positive tolerances or iteration caps.
  void validate() const;
};

struct Diagnostics {
  int outer_iterations = 0;
  double final_diff = 0.0;
  double final_loss = 0.0;
  int inner_iterations = 0;        // summed over outer iterations
  double inner_grad_norm = 0.0;    // of the last inner solve
  std::vector<double> weight_conditions;  // one per weight refresh
  bool pseudo_inverse_used = false;
  bool converged = false;
  bool correlation_psd = true;     // assembled R_hat positive semidefinite
};

struct EstimationResult {
  Method method = Method::TwoStep;
  int n = 0;
  CorrelationParams R_hat;          // entries outside `coefficients` are NaN
  ThresholdSet a_hat;
  std::vector<int> coefficients;    // estimated layout indices, ascending
  Eigen::MatrixXd var_R;            // over `coefficients`, already divided by n
  std::optional<Eigen::MatrixXd> var_theta;  // one-step: active thresholds then coefficients
  Diagnostics diagnostics;

  Eigen::VectorXd estimates() const;
  Eigen::VectorXd standard_errors() const;
};

// Closed-form thresholds from cumulative category proportions.
ThresholdSet estimate_thresholds(const MixedDataset& data);

struct InnerResult {
  ParamVector theta;
  int iterations = 0;
  double initial_loss = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;  // infinity norm over the free parameters
  bool converged = false;
};

// Minimizes 0.5 m' W m over the parameters listed in `free` (positions in
// the flattened theta) with a BFGS quasi-Newton iteration and backtracking
// line search. The rows of m follow W: a W over all q rows uses the whole
// system, a W over the q - threshold_rows() correlation rows uses only the
// correlation moments. Correlations are clamped to [-kRhoBound, kRhoBound]
// and threshold steps that break the ordering are shortened.
// Throws LineSearchFailure or NonFiniteLoss.
InnerResult minimize_loss(const MomentStatistics& stats, const EquationSystem& system,
                          const Eigen::MatrixXd& W, const ParamVector& theta0,
                          const std::vector<int>& free, const FitConfig& cfg);
InnerResult minimize_loss(const MixedDataset& data, const EquationSystem& system,
                          const Eigen::MatrixXd& W, const ParamVector& theta0,
                          const std::vector<int>& free, const FitConfig& cfg);

EstimationResult fit_one_step(const MixedDataset& data, const EquationSystem& system,
                              const FitConfig& cfg);
EstimationResult fit_two_step(const MixedDataset& data, const EquationSystem& system,
                              const FitConfig& cfg);

// Builds the system described by cfg and dispatches on cfg.method.
EstimationResult fit(const MixedDataset& data, const FitConfig& cfg);

// Covariance of the retained threshold moments h under theta:
// multinomial within a variable, P(X_i = k, X_j = l) - p_ik p_jl across.
Eigen::MatrixXd compute_sigma(const ParamVector& theta, const EquationSystem& system,
                              const BivariateCdf& cdf);

}  // namespace mixcor
