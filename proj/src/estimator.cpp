#include "mixcor/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mixcor/errors.hpp"

namespace mixcor {

const char* to_string(Method method) {
  return method == Method::OneStep ? "one-step" : "two-step";
}

const char* to_string(CovarianceVariant variant) {
  return variant == CovarianceVariant::PlugInSigma ? "plugin" : "corrected";
}

void FitConfig::validate() const {
  if (!(outer_tol > 0.0) || !(inner_grad_tol > 0.0)) {
    throw InvalidArgument("tolerances must be positive");
  }
  if (max_outer_iter < 1 || inner_max_iter < 1) {
    throw InvalidArgument("iteration caps must be at least 1");
  }
  if (pairs && system_mode != SystemMode::Custom) {
    throw InvalidArgument("a coefficient subset requires the custom system mode");
  }
}

Eigen::VectorXd EstimationResult::estimates() const {
  Eigen::VectorXd est(static_cast<Eigen::Index>(coefficients.size()));
  for (std::size_t i = 0; i < coefficients.size(); ++i) {
    est[static_cast<Eigen::Index>(i)] = R_hat[coefficients[i]];
  }
  return est;
}

Eigen::VectorXd EstimationResult::standard_errors() const {
  return var_R.diagonal().cwiseMax(0.0).cwiseSqrt();
}

ThresholdSet estimate_thresholds(const MixedDataset& data) {
  const int n = data.rows();
  std::vector<std::vector<double>> cuts;
  for (int i = 0; i < data.ordinal_count(); ++i) {
    const int s = data.ordinal_spec(i).categories;
    std::vector<int> counts(static_cast<std::size_t>(s), 0);
    for (int r = 0; r < n; ++r) ++counts[static_cast<std::size_t>(data.ordinal()(r, i) - 1)];
    std::vector<double> a;
    int cumulative = 0;
    for (int k = 0; k < s - 1; ++k) {
      if (counts[static_cast<std::size_t>(k)] == 0) throw EmptyCategory(data.ordinal_spec(i).name, k + 1);
      cumulative += counts[static_cast<std::size_t>(k)];
      if (cumulative == n) throw EmptyCategory(data.ordinal_spec(i).name, k + 2);
      a.push_back(norm_quantile(static_cast<double>(cumulative) / n));
    }
    cuts.push_back(std::move(a));
  }
  return ThresholdSet(std::move(cuts));
}

namespace {

double clamp_rho(double rho) { return std::clamp(rho, -kRhoBound, kRhoBound); }

// Pearson correlations of the columns as stored, ordinal codes included.
CorrelationParams initial_correlations(const MixedDataset& data, const EquationSystem& system) {
  const int c = data.continuous_count();
  const int n = data.rows();
  auto column = [&](int var) -> Eigen::VectorXd {
    if (var < c) return data.continuous().col(var);
    return data.ordinal().col(var - c).cast<double>();
  };
  const auto& layout = system.layout();
  Eigen::VectorXd values = Eigen::VectorXd::Zero(layout.size());
  for (int idx : system.coefficients()) {
    Eigen::VectorXd u = column(layout[idx].row);
    Eigen::VectorXd v = column(layout[idx].col);
    u.array() -= u.mean();
    v.array() -= v.mean();
    const double denom = std::sqrt(u.squaredNorm() * v.squaredNorm());
    values[idx] = denom > 0.0 ? clamp_rho(u.dot(v) / denom) : 0.0;
  }
  (void)n;
  return {layout, std::move(values)};
}

// Threshold ordering for a flattened theta.
bool ordered(const EquationSystem& system, const Eigen::VectorXd& flat) {
  for (std::size_t i = 0; i < system.categories().size(); ++i) {
    const int off = system.threshold_offset(static_cast<int>(i));
    for (int k = 1; k < system.categories()[i] - 1; ++k) {
      if (!(flat[off + k - 1] < flat[off + k])) return false;
    }
  }
  return true;
}

Eigen::MatrixXd select(const Eigen::MatrixXd& m, int row0, int rows, const std::vector<int>& cols) {
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]).segment(row0, rows);
  }
  return out;
}

Eigen::MatrixXd symmetric_inverse(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sym);
  Eigen::MatrixXd inv;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    inv = ldlt.solve(Eigen::MatrixXd::Identity(sym.rows(), sym.cols()));
  } else {
    inv = sym.completeOrthogonalDecomposition().pseudoInverse();
  }
  return 0.5 * (inv + inv.transpose());
}

struct LossModel {
  const MomentStatistics& stats;
  const EquationSystem& system;
  const Eigen::MatrixXd& W;
  const std::vector<int>& free;
  BivariateCdf cdf;
  int row0 = 0;
  int rows = 0;

  struct Value {
    double loss = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd G;  // rows x free
  };

  Value operator()(const ParamVector& theta, bool with_gradient) const {
    const Eigen::VectorXd mu = model_terms(theta, system, cdf);
    const Eigen::VectorXd m = (stats.mean - mu).segment(row0, rows);
    Value v;
    const Eigen::VectorXd Wm = W * m;
    v.loss = 0.5 * m.dot(Wm);
    if (!std::isfinite(v.loss)) throw NonFiniteLoss("GMM loss is not finite");
    if (with_gradient) {
      v.G = -select(model_jacobian(theta, system, cdf), row0, rows, free);
      v.grad = v.G.transpose() * Wm;
    }
    return v;
  }
};

}  // namespace

InnerResult minimize_loss(const MomentStatistics& stats, const EquationSystem& system,
                          const Eigen::MatrixXd& W, const ParamVector& theta0,
                          const std::vector<int>& free, const FitConfig& cfg) {
  cfg.validate();
  const int q = system.size();
  int row0 = 0;
  if (W.rows() == q && W.cols() == q) {
    row0 = 0;
  } else if (W.rows() == q - system.threshold_rows() && W.cols() == W.rows()) {
    row0 = system.threshold_rows();
  } else {
    throw InvalidArgument("weight matrix does not match the equation system");
  }
  if (free.empty()) throw InvalidArgument("no free parameters");
  const int t = system.threshold_count();
  for (int f : free) {
    if (f < 0 || f >= system.parameter_count()) throw InvalidArgument("free index out of range");
  }

  const LossModel model{stats, system, W, free, BivariateCdf(cfg.legendre), row0, q - row0};
  const auto p = static_cast<Eigen::Index>(free.size());

  Eigen::VectorXd flat = theta0.flatten();
  for (int f : free) {
    if (f >= t) flat[f] = clamp_rho(flat[f]);
  }
  auto project = [&](Eigen::VectorXd& candidate) {
    for (int f : free) {
      if (f >= t) candidate[f] = clamp_rho(candidate[f]);
    }
  };
  auto scatter = [&](const Eigen::VectorXd& x, Eigen::VectorXd& full) {
    for (Eigen::Index i = 0; i < p; ++i) full[free[static_cast<std::size_t>(i)]] = x[i];
  };
  auto gather = [&](const Eigen::VectorXd& full) {
    Eigen::VectorXd x(p);
    for (Eigen::Index i = 0; i < p; ++i) x[i] = full[free[static_cast<std::size_t>(i)]];
    return x;
  };

  InnerResult result;
  result.theta = theta0.with_values(flat);
  auto current = model(result.theta, true);
  result.initial_loss = current.loss;

  // Start from the Gauss-Newton metric (G'WG)^-1.
  auto gauss_newton = [&](const LossModel::Value& v) {
    return symmetric_inverse(v.G.transpose() * W * v.G);
  };
  Eigen::MatrixXd H = gauss_newton(current);
  if (!H.allFinite()) H = Eigen::MatrixXd::Identity(p, p);

  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 60;
  const double eps = std::numeric_limits<double>::epsilon();
  int stalled = 0;

  for (result.iterations = 0; result.iterations < cfg.inner_max_iter; ++result.iterations) {
    result.grad_norm = current.grad.lpNorm<Eigen::Infinity>();
    if (result.grad_norm <= cfg.inner_grad_tol) {
      result.converged = true;
      break;
    }

    const Eigen::VectorXd x = gather(flat);
    bool accepted = false;
    Eigen::VectorXd next_flat;
    LossModel::Value next;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Eigen::VectorXd dir = -(H * current.grad);
      if (attempt == 1 || !(current.grad.dot(dir) < 0.0)) {
        H = Eigen::MatrixXd::Identity(p, p);
        dir = -current.grad;
      }
      // Values below this slack are indistinguishable from rounding in the loss.
      const double slack = 16.0 * eps * std::max(current.loss, std::numeric_limits<double>::min());
      double step = 1.0;
      for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
        Eigen::VectorXd trial = flat;
        scatter(x + step * dir, trial);
        project(trial);
        if (!ordered(system, trial)) continue;
        LossModel::Value v;
        try {
          v = model(theta0.with_values(trial), false);
        } catch (const NonFiniteLoss&) {
          continue;
        }
        const double decrease = current.grad.dot(gather(trial) - x);
        if (v.loss <= current.loss + kArmijo * decrease + slack) {
          next_flat = std::move(trial);
          accepted = true;
          break;
        }
      }
      if (!accepted && attempt == 1) {
        throw LineSearchFailure("no acceptable step after " + std::to_string(kMaxHalvings) +
                                " halvings");
      }
    }

    ParamVector next_theta = theta0.with_values(next_flat);
    next = model(next_theta, true);
    const Eigen::VectorXd s = gather(next_flat) - x;
    const Eigen::VectorXd y = next.grad - current.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
          rho * s * s.transpose();
    }

    const double step_size = s.lpNorm<Eigen::Infinity>();
    stalled = step_size <= 4.0 * eps * (1.0 + x.lpNorm<Eigen::Infinity>()) ? stalled + 1 : 0;
    flat = std::move(next_flat);
    result.theta = std::move(next_theta);
    current = std::move(next);
    if (stalled >= 3) {
      ++result.iterations;
      break;
    }
  }
  result.loss = current.loss;
  result.grad_norm = current.grad.lpNorm<Eigen::Infinity>();
  result.converged = result.grad_norm <= cfg.inner_grad_tol;
  return result;
}

InnerResult minimize_loss(const MixedDataset& data, const EquationSystem& system,
                          const Eigen::MatrixXd& W, const ParamVector& theta0,
                          const std::vector<int>& free, const FitConfig& cfg) {
  return minimize_loss(collect_statistics(data, system), system, W, theta0, free, cfg);
}

Eigen::MatrixXd compute_sigma(const ParamVector& theta, const EquationSystem& system,
                              const BivariateCdf& cdf) {
  const int h = system.threshold_rows();
  const auto& rows = system.equations();
  const auto& a = theta.thresholds;
  const auto& layout = system.layout();
  const int c = layout.continuous();
  auto prob = [&](int i, int k) {
    const auto iu = static_cast<std::size_t>(i);
    return norm_cdf(a.cut(iu, k)) - norm_cdf(a.cut(iu, k - 1));
  };
  Eigen::MatrixXd sigma(h, h);
  for (int r = 0; r < h; ++r) {
    for (int s = 0; s <= r; ++s) {
      const auto& e1 = rows[static_cast<std::size_t>(r)];
      const auto& e2 = rows[static_cast<std::size_t>(s)];
      const double p1 = prob(e1.variable, e1.k);
      const double p2 = prob(e2.variable, e2.k);
      double value;
      if (e1.variable == e2.variable) {
        value = (e1.k == e2.k ? p1 : 0.0) - p1 * p2;
      } else {
        // Orient so that x belongs to the lower-numbered variable.
        const bool first_low = e1.variable < e2.variable;
        const int lo = first_low ? e1.variable : e2.variable;
        const int hi = first_low ? e2.variable : e1.variable;
        const int k = first_low ? e1.k : e2.k;
        const int l = first_low ? e2.k : e1.k;
        const double rho = theta.correlations[layout.index_of(c + hi, c + lo)];
        const auto lu = static_cast<std::size_t>(lo);
        const auto hu = static_cast<std::size_t>(hi);
        const double cell = cdf(a.cut(lu, k), a.cut(hu, l), rho) - cdf(a.cut(lu, k), a.cut(hu, l - 1), rho) -
                            cdf(a.cut(lu, k - 1), a.cut(hu, l), rho) +
                            cdf(a.cut(lu, k - 1), a.cut(hu, l - 1), rho);
        value = cell - p1 * p2;
      }
      sigma(r, s) = value;
      sigma(s, r) = value;
    }
  }
  return sigma;
}

namespace {

struct OuterState {
  ParamVector theta;
  WeightMatrix weight;
  Diagnostics diagnostics;
};

// Runs the iterate-then-reweight loop shared by both algorithms.
OuterState iterate(const MomentStatistics& stats, const EquationSystem& system,
                   ParamVector theta, const std::vector<int>& free, int row0,
                   const FitConfig& cfg) {
  const int rows = system.size() - row0;
  const BivariateCdf cdf(cfg.legendre);
  OuterState state;
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(rows, rows);
  double diff = 1.0;
  int t = 0;
  while (t < cfg.max_outer_iter && diff > cfg.outer_tol) {
    InnerResult inner = minimize_loss(stats, system, W, theta, free, cfg);
    const Eigen::VectorXd before = theta.flatten();
    const Eigen::VectorXd after = inner.theta.flatten();
    diff = 0.0;
    for (int f : free) diff += (after[f] - before[f]) * (after[f] - before[f]);
    diff = std::sqrt(diff);
    theta = std::move(inner.theta);

    const Eigen::VectorXd mu = model_terms(theta, system, cdf);
    const Eigen::MatrixXd omega = second_moment(stats, mu).block(row0, row0, rows, rows);
    state.weight = weight_matrix(omega);
    W = state.weight.W;

    ++t;
    auto& diag = state.diagnostics;
    diag.inner_iterations += inner.iterations;
    diag.inner_grad_norm = inner.grad_norm;
    diag.final_loss = inner.loss;
    diag.weight_conditions.push_back(state.weight.condition);
    diag.pseudo_inverse_used = diag.pseudo_inverse_used || state.weight.pseudo_inverse;
  }
  state.diagnostics.outer_iterations = t;
  state.diagnostics.final_diff = diff;
  state.diagnostics.converged = diff <= cfg.outer_tol;
  state.theta = std::move(theta);
  return state;
}

EstimationResult package(const MixedDataset& data, const EquationSystem& system,
                         const OuterState& state, Method method) {
  EstimationResult result;
  result.method = method;
  result.n = data.rows();
  result.coefficients = system.coefficients();
  result.a_hat = state.theta.thresholds;
  result.diagnostics = state.diagnostics;

  const auto& layout = system.layout();
  Eigen::VectorXd values =
      Eigen::VectorXd::Constant(layout.size(), std::numeric_limits<double>::quiet_NaN());
  for (int idx : result.coefficients) values[idx] = state.theta.correlations[idx];
  result.R_hat = CorrelationParams(layout, values);

  if (static_cast<int>(result.coefficients.size()) == layout.size()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(result.R_hat.to_matrix(),
                                                       Eigen::EigenvaluesOnly);
    result.diagnostics.correlation_psd = eig.eigenvalues().minCoeff() >= -1e-12;
  }
  return result;
}

void require_same_specs(const MixedDataset& data, const EquationSystem& system) {
  const auto& a = data.specs();
  const auto& b = system.specs();
  bool same = a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i) {
    same = a[i].name == b[i].name && a[i].kind == b[i].kind && a[i].categories == b[i].categories;
  }
  if (!same) throw InvalidArgument("dataset and equation system describe different variables");
}

}  // namespace

EstimationResult fit_one_step(const MixedDataset& data, const EquationSystem& system,
                              const FitConfig& cfg) {
  cfg.validate();
  require_same_specs(data, system);
  const BivariateCdf cdf(cfg.legendre);
  const MomentStatistics stats = collect_statistics(data, system);

  ParamVector theta{estimate_thresholds(data), initial_correlations(data, system)};
  std::vector<int> free = system.active_thresholds();
  const auto coefs = system.active_coefficients();
  free.insert(free.end(), coefs.begin(), coefs.end());

  OuterState state = iterate(stats, system, theta, free, 0, cfg);
  EstimationResult result = package(data, system, state, Method::OneStep);

  const Eigen::MatrixXd G = select(assemble_gradient(state.theta, system, cdf), 0, system.size(), free);
  const Eigen::MatrixXd var = symmetric_inverse(G.transpose() * state.weight.W * G) / data.rows();
  const auto nt = static_cast<Eigen::Index>(free.size() - coefs.size());
  const auto nr = static_cast<Eigen::Index>(coefs.size());
  result.var_R = var.bottomRightCorner(nr, nr);
  result.var_theta = var;
  (void)nt;
  return result;
}

EstimationResult fit_two_step(const MixedDataset& data, const EquationSystem& system,
                              const FitConfig& cfg) {
  cfg.validate();
  require_same_specs(data, system);
  const BivariateCdf cdf(cfg.legendre);
  const MomentStatistics stats = collect_statistics(data, system);

  ParamVector theta{estimate_thresholds(data), initial_correlations(data, system)};
  const std::vector<int> free = system.active_coefficients();
  const int h = system.threshold_rows();
  const int g = system.size() - h;

  OuterState state = iterate(stats, system, theta, free, h, cfg);
  EstimationResult result = package(data, system, state, Method::TwoStep);

  const Eigen::MatrixXd G = assemble_gradient(state.theta, system, cdf);
  const std::vector<int> thresholds = system.active_thresholds();
  const Eigen::MatrixXd& W = state.weight.W;
  const Eigen::MatrixXd G22 = select(G, h, g, free);
  const Eigen::MatrixXd lambda = symmetric_inverse(G22.transpose() * W * G22);
  Eigen::MatrixXd var = lambda;
  if (!thresholds.empty()) {
    const Eigen::MatrixXd G21 = select(G, h, g, thresholds);
    const Eigen::MatrixXd G11 = select(G, 0, h, thresholds);
    const Eigen::MatrixXd gamma = G22.transpose() * W * G21;

    // Sigma needs every cross-variable cell probability; pairs without a
    // polychoric block fall back to the sample covariance of h.
    bool analytic = true;
    const auto& layout = system.layout();
    const auto& ords = system.ordinals();
    const auto& coefs = system.coefficients();
    for (std::size_t i = 0; i < ords.size() && analytic; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const int idx = layout.index_of(layout.continuous() + ords[i], layout.continuous() + ords[j]);
        if (!std::binary_search(coefs.begin(), coefs.end(), idx)) analytic = false;
      }
    }
    const Eigen::MatrixXd sigma =
        analytic ? compute_sigma(state.theta, system, cdf)
                 : Eigen::MatrixXd(second_moment(stats, model_terms(state.theta, system, cdf))
                                       .topLeftCorner(h, h));

    Eigen::MatrixXd middle;
    if (cfg.covariance == CovarianceVariant::PlugInSigma) {
      middle = sigma;
    } else {
      const Eigen::MatrixXd g11_inv = G11.inverse();
      middle = g11_inv * sigma * g11_inv.transpose();
    }
    var += lambda * gamma * middle * gamma.transpose() * lambda;
  }
  var /= data.rows();
  result.var_R = 0.5 * (var + var.transpose());
  return result;
}

EstimationResult fit(const MixedDataset& data, const FitConfig& cfg) {
  cfg.validate();
  const EquationSystem system = build_system(data.specs(), cfg.system_mode, cfg.pairs);
  return cfg.method == Method::OneStep ? fit_one_step(data, system, cfg)
                                       : fit_two_step(data, system, cfg);
}

}  // namespace mixcor
