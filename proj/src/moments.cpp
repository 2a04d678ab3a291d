#include "mixcor/moments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mixcor/errors.hpp"

namespace mixcor {

const char* to_string(SystemMode mode) {
  switch (mode) {
    case SystemMode::MaxSet:
      return "max";
    case SystemMode::MinSet:
      return "min";
    case SystemMode::Custom:
      return "custom";
  }
  return "?";
}

const char* to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::Threshold:
      return "threshold";
    case BlockKind::Pearson:
      return "pearson";
    case BlockKind::Polyserial:
      return "polyserial";
    case BlockKind::Polychoric:
      return "polychoric";
  }
  return "?";
}

int EquationBlock::retained_count() const {
  return static_cast<int>(
      std::count_if(equations.begin(), equations.end(), [](const Equation& e) { return e.retained; }));
}

// ---------------------------------------------------------------------------
// EquationSystem

EquationSystem EquationSystem::from_blocks(std::vector<VariableSpec> specs, SystemMode mode,
                                           std::vector<EquationBlock> blocks) {
  EquationSystem sys;
  int c = 0;
  for (const auto& spec : specs) {
    if (spec.is_ordinal()) {
      sys.threshold_offsets_.push_back(sys.threshold_count_);
      sys.threshold_count_ += spec.categories - 1;
      sys.categories_.push_back(spec.categories);
    } else {
      if (!sys.categories_.empty()) {
        throw InvalidArgument("specs must list continuous variables before ordinal ones");
      }
      ++c;
    }
  }
  const int d = static_cast<int>(sys.categories_.size());
  sys.specs_ = std::move(specs);
  sys.layout_ = CorrelationLayout(c, d);
  sys.mode_ = mode;

  // Threshold blocks go first regardless of the order given.
  std::stable_partition(blocks.begin(), blocks.end(),
                        [](const EquationBlock& b) { return b.kind == BlockKind::Threshold; });

  std::set<int> coefficient_set;
  std::set<int> ordinal_set;
  for (const auto& block : blocks) {
    if (block.kind == BlockKind::Threshold) {
      if (block.variable < 0 || block.variable >= d) {
        throw UnknownPair("threshold block for unknown ordinal variable " +
                          std::to_string(block.variable));
      }
      if (!ordinal_set.insert(block.variable).second) {
        throw InvalidArgument("duplicate threshold block");
      }
    } else {
      if (block.coefficient < 0 || block.coefficient >= sys.layout_.size()) {
        throw UnknownPair("unknown coefficient index " + std::to_string(block.coefficient));
      }
      const auto& coef = sys.layout_[block.coefficient];
      const bool kind_ok =
          (block.kind == BlockKind::Pearson && coef.kind == CoefficientKind::Pearson) ||
          (block.kind == BlockKind::Polyserial && coef.kind == CoefficientKind::Polyserial) ||
          (block.kind == BlockKind::Polychoric && coef.kind == CoefficientKind::Polychoric);
      if (!kind_ok) throw InvalidArgument("block kind does not match its coefficient");
      if (!coefficient_set.insert(block.coefficient).second) {
        throw InvalidArgument("duplicate block for coefficient " +
                              std::to_string(block.coefficient));
      }
    }
    for (const auto& eq : block.equations) {
      if (eq.kind != block.kind || eq.coefficient != block.coefficient) {
        throw InvalidArgument("equation does not belong to its block");
      }
    }
  }

  // Every ordinal involved in a coefficient block needs its thresholds.
  for (int idx : coefficient_set) {
    const auto& coef = sys.layout_[idx];
    for (int var : {coef.row, coef.col}) {
      if (var >= c && !ordinal_set.count(var - c)) {
        throw UncoveredParameter("coefficient " + std::to_string(idx) +
                                 " needs the threshold block of ordinal variable " +
                                 std::to_string(var - c));
      }
    }
  }

  for (const auto& block : blocks) {
    if (block.kind == BlockKind::Threshold) {
      const int s = sys.categories_[block.variable];
      std::vector<bool> touched(static_cast<std::size_t>(s + 1), false);
      for (const auto& eq : block.equations) {
        if (eq.k < 1 || eq.k > s) throw InvalidArgument("threshold category out of range");
        if (!eq.retained) continue;
        touched[static_cast<std::size_t>(eq.k)] = true;
        touched[static_cast<std::size_t>(eq.k - 1)] = true;
      }
      for (int k = 1; k < s; ++k) {
        if (!touched[static_cast<std::size_t>(k)]) {
          throw UncoveredParameter("threshold " + std::to_string(k) + " of ordinal variable " +
                                   std::to_string(block.variable) + " has no retained equation");
        }
      }
    } else if (block.retained_count() == 0) {
      throw UncoveredParameter("coefficient " + std::to_string(block.coefficient) +
                               " has no retained equation");
    }
  }

  sys.blocks_ = std::move(blocks);
  for (const auto& block : sys.blocks_) {
    for (const auto& eq : block.equations) {
      if (!eq.retained) continue;
      sys.rows_.push_back(eq);
      if (eq.kind == BlockKind::Threshold) ++sys.threshold_rows_;
    }
  }
  sys.coefficients_.assign(coefficient_set.begin(), coefficient_set.end());
  sys.ordinals_.assign(ordinal_set.begin(), ordinal_set.end());
  return sys;
}

std::vector<int> EquationSystem::active_thresholds() const {
  std::vector<int> idx;
  for (int i : ordinals_) {
    for (int k = 0; k < categories_[i] - 1; ++k) idx.push_back(threshold_offsets_[i] + k);
  }
  return idx;
}

std::vector<int> EquationSystem::active_coefficients() const {
  std::vector<int> idx;
  for (int r : coefficients_) idx.push_back(threshold_count_ + r);
  return idx;
}

EquationSystem EquationSystem::unpruned() const {
  auto blocks = blocks_;
  for (auto& block : blocks) {
    for (auto& eq : block.equations) eq.retained = true;
  }
  return from_blocks(specs_, mode_, std::move(blocks));
}

EquationSystem build_system(const std::vector<VariableSpec>& specs, SystemMode mode,
                            const std::optional<std::vector<int>>& pairs) {
  int c = 0;
  std::vector<int> s;
  for (const auto& spec : specs) {
    if (spec.is_ordinal()) {
      s.push_back(spec.categories);
    } else {
      ++c;
    }
  }
  const int d = static_cast<int>(s.size());
  const CorrelationLayout layout(c, d);

  std::vector<int> wanted;
  if (mode == SystemMode::Custom) {
    if (!pairs || pairs->empty()) {
      throw UncoveredParameter("a custom system needs at least one coefficient");
    }
    std::set<int> unique;
    for (int idx : *pairs) {
      if (idx < 0 || idx >= layout.size()) {
        throw UnknownPair("coefficient index " + std::to_string(idx) + " is out of range");
      }
      unique.insert(idx);
    }
    wanted.assign(unique.begin(), unique.end());
  } else {
    if (pairs) throw InvalidArgument("coefficient subsets require the custom system mode");
    for (int idx = 0; idx < layout.size(); ++idx) wanted.push_back(idx);
  }
  const bool minimal = mode == SystemMode::MinSet;

  std::set<int> ordinals;
  // Lowest-numbered ordinal partner of each continuous variable.
  std::vector<int> full_partner(static_cast<std::size_t>(c), -1);
  for (int idx : wanted) {
    const auto& coef = layout[idx];
    if (coef.kind == CoefficientKind::Polyserial) {
      ordinals.insert(coef.row - c);
      auto& partner = full_partner[static_cast<std::size_t>(coef.col)];
      if (partner < 0 || coef.row - c < partner) partner = coef.row - c;
    } else if (coef.kind == CoefficientKind::Polychoric) {
      ordinals.insert(coef.row - c);
      ordinals.insert(coef.col - c);
    }
  }

  std::vector<EquationBlock> blocks;
  for (int i : ordinals) {
    EquationBlock block{BlockKind::Threshold, -1, i, {}};
    const int si = s[static_cast<std::size_t>(i)];
    for (int k = 1; k <= si; ++k) {
      block.equations.push_back({BlockKind::Threshold, -1, i, k, 0, k < si});
    }
    blocks.push_back(std::move(block));
  }
  for (int idx : wanted) {
    const auto& coef = layout[idx];
    switch (coef.kind) {
      case CoefficientKind::Pearson: {
        blocks.push_back({BlockKind::Pearson, idx, -1, {{BlockKind::Pearson, idx, -1, 0, 0, true}}});
        break;
      }
      case CoefficientKind::Polyserial: {
        const int i = coef.row - c;
        const int si = s[static_cast<std::size_t>(i)];
        const bool full = full_partner[static_cast<std::size_t>(coef.col)] == i;
        EquationBlock block{BlockKind::Polyserial, idx, -1, {}};
        for (int k = 1; k <= si; ++k) {
          const bool keep = minimal ? k == 1 : (k < si || full);
          block.equations.push_back({BlockKind::Polyserial, idx, -1, k, 0, keep});
        }
        blocks.push_back(std::move(block));
        break;
      }
      case CoefficientKind::Polychoric: {
        const int lo = coef.col - c;
        const int hi = coef.row - c;
        const int s_lo = s[static_cast<std::size_t>(lo)];
        const int s_hi = s[static_cast<std::size_t>(hi)];
        EquationBlock block{BlockKind::Polychoric, idx, -1, {}};
        for (int k = 1; k <= s_lo; ++k) {
          for (int l = 1; l <= s_hi; ++l) {
            const bool keep = minimal ? (k == 1 && l == 1) : !(k == s_lo && l == s_hi);
            block.equations.push_back({BlockKind::Polychoric, idx, -1, k, l, keep});
          }
        }
        blocks.push_back(std::move(block));
        break;
      }
    }
  }
  return EquationSystem::from_blocks(specs, mode, std::move(blocks));
}

// ---------------------------------------------------------------------------
// Evaluation

Observation observation(const MixedDataset& data, int row, std::vector<double>& y_buffer,
                        std::vector<int>& x_buffer) {
  const int c = data.continuous_count();
  const int d = data.ordinal_count();
  y_buffer.resize(static_cast<std::size_t>(c));
  x_buffer.resize(static_cast<std::size_t>(d));
  for (int j = 0; j < c; ++j) y_buffer[static_cast<std::size_t>(j)] = data.continuous()(row, j);
  for (int i = 0; i < d; ++i) x_buffer[static_cast<std::size_t>(i)] = data.ordinal()(row, i);
  return {y_buffer, x_buffer};
}

Eigen::VectorXd data_terms(const Observation& obs, const EquationSystem& system) {
  const auto& layout = system.layout();
  const int c = layout.continuous();
  Eigen::VectorXd s(system.size());
  int row = 0;
  for (const auto& eq : system.equations()) {
    double value = 0.0;
    switch (eq.kind) {
      case BlockKind::Threshold:
        value = obs.ordinal[static_cast<std::size_t>(eq.variable)] == eq.k ? 1.0 : 0.0;
        break;
      case BlockKind::Pearson: {
        const auto& coef = layout[eq.coefficient];
        value = obs.continuous[static_cast<std::size_t>(coef.row)] *
                obs.continuous[static_cast<std::size_t>(coef.col)];
        break;
      }
      case BlockKind::Polyserial: {
        const auto& coef = layout[eq.coefficient];
        value = obs.ordinal[static_cast<std::size_t>(coef.row - c)] == eq.k
                    ? obs.continuous[static_cast<std::size_t>(coef.col)]
                    : 0.0;
        break;
      }
      case BlockKind::Polychoric: {
        const auto& coef = layout[eq.coefficient];
        const bool hit = obs.ordinal[static_cast<std::size_t>(coef.col - c)] == eq.k &&
                         obs.ordinal[static_cast<std::size_t>(coef.row - c)] == eq.l;
        value = hit ? 1.0 : 0.0;
        break;
      }
    }
    s[row++] = value;
  }
  return s;
}

namespace {

// Corner grid of the bivariate CDF for one polychoric coefficient:
// corners[k][l] = Phi2(a_{lo,k}, a_{hi,l}; rho) with partials.
struct CornerGrid {
  int s_lo = 0;
  int s_hi = 0;
  std::vector<CdfPartials> corners;

  const CdfPartials& at(int k, int l) const {
    return corners[static_cast<std::size_t>(k * (s_hi + 1) + l)];
  }
};

CornerGrid corner_grid(const ThresholdSet& a, int lo, int hi, double rho, const BivariateCdf& cdf) {
  CornerGrid grid;
  grid.s_lo = a.categories(static_cast<std::size_t>(lo));
  grid.s_hi = a.categories(static_cast<std::size_t>(hi));
  grid.corners.reserve(static_cast<std::size_t>((grid.s_lo + 1) * (grid.s_hi + 1)));
  for (int k = 0; k <= grid.s_lo; ++k) {
    for (int l = 0; l <= grid.s_hi; ++l) {
      grid.corners.push_back(cdf.partials(a.cut(static_cast<std::size_t>(lo), k),
                                          a.cut(static_cast<std::size_t>(hi), l), rho));
    }
  }
  return grid;
}

// Walks the retained equations block by block, sharing the corner grid of
// each polychoric block. `visit(row, eq, grid)` receives nullptr for the
// grid outside polychoric blocks.
template <class Visit>
void for_each_row(const ParamVector& theta, const EquationSystem& system, const BivariateCdf& cdf,
                  Visit&& visit) {
  const auto& layout = system.layout();
  const int c = layout.continuous();
  int row = 0;
  for (const auto& block : system.blocks()) {
    if (block.retained_count() == 0) continue;
    std::optional<CornerGrid> grid;
    if (block.kind == BlockKind::Polychoric) {
      const auto& coef = layout[block.coefficient];
      grid = corner_grid(theta.thresholds, coef.col - c, coef.row - c,
                         theta.correlations[block.coefficient], cdf);
    }
    for (const auto& eq : block.equations) {
      if (!eq.retained) continue;
      visit(row++, eq, grid ? &*grid : nullptr);
    }
  }
}

}  // namespace

Eigen::VectorXd model_terms(const ParamVector& theta, const EquationSystem& system,
                            const BivariateCdf& cdf) {
  const auto& a = theta.thresholds;
  const int c = system.layout().continuous();
  Eigen::VectorXd mu(system.size());
  for_each_row(theta, system, cdf, [&](int row, const Equation& eq, const CornerGrid* grid) {
    switch (eq.kind) {
      case BlockKind::Threshold: {
        const auto i = static_cast<std::size_t>(eq.variable);
        mu[row] = norm_cdf(a.cut(i, eq.k)) - norm_cdf(a.cut(i, eq.k - 1));
        break;
      }
      case BlockKind::Pearson:
        mu[row] = theta.correlations[eq.coefficient];
        break;
      case BlockKind::Polyserial: {
        const auto i = static_cast<std::size_t>(system.layout()[eq.coefficient].row - c);
        const double xi = norm_pdf(a.cut(i, eq.k - 1)) - norm_pdf(a.cut(i, eq.k));
        mu[row] = theta.correlations[eq.coefficient] * xi;
        break;
      }
      case BlockKind::Polychoric:
        mu[row] = grid->at(eq.k, eq.l).value - grid->at(eq.k, eq.l - 1).value -
                  grid->at(eq.k - 1, eq.l).value + grid->at(eq.k - 1, eq.l - 1).value;
        break;
    }
  });
  return mu;
}

Eigen::MatrixXd model_jacobian(const ParamVector& theta, const EquationSystem& system,
                               const BivariateCdf& cdf) {
  const auto& a = theta.thresholds;
  const auto& layout = system.layout();
  const int c = layout.continuous();
  const int t = system.threshold_count();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(system.size(), system.parameter_count());

  // Column of threshold a_{i,k}, or -1 for the infinite ends.
  auto column = [&](int i, int k) {
    if (k <= 0 || k >= system.categories()[static_cast<std::size_t>(i)]) return -1;
    return system.threshold_offset(i) + k - 1;
  };

  for_each_row(theta, system, cdf, [&](int row, const Equation& eq, const CornerGrid* grid) {
    switch (eq.kind) {
      case BlockKind::Threshold: {
        const auto i = static_cast<std::size_t>(eq.variable);
        if (int col = column(eq.variable, eq.k); col >= 0) J(row, col) += norm_pdf(a.cut(i, eq.k));
        if (int col = column(eq.variable, eq.k - 1); col >= 0) {
          J(row, col) -= norm_pdf(a.cut(i, eq.k - 1));
        }
        break;
      }
      case BlockKind::Pearson:
        J(row, t + eq.coefficient) = 1.0;
        break;
      case BlockKind::Polyserial: {
        const int i = layout[eq.coefficient].row - c;
        const auto iu = static_cast<std::size_t>(i);
        const double rho = theta.correlations[eq.coefficient];
        const double upper = a.cut(iu, eq.k);
        const double lower = a.cut(iu, eq.k - 1);
        J(row, t + eq.coefficient) = norm_pdf(lower) - norm_pdf(upper);
        // d/da [-phi(a)] = a phi(a)
        if (int col = column(i, eq.k); col >= 0) J(row, col) += rho * upper * norm_pdf(upper);
        if (int col = column(i, eq.k - 1); col >= 0) J(row, col) -= rho * lower * norm_pdf(lower);
        break;
      }
      case BlockKind::Polychoric: {
        const auto& coef = layout[eq.coefficient];
        const int lo = coef.col - c;
        const int hi = coef.row - c;
        auto add_corner = [&](int k, int l, double sign) {
          const CdfPartials& p = grid->at(k, l);
          J(row, t + eq.coefficient) += sign * p.d_rho;
          if (int col = column(lo, k); col >= 0) J(row, col) += sign * p.d_x;
          if (int col = column(hi, l); col >= 0) J(row, col) += sign * p.d_y;
        };
        add_corner(eq.k, eq.l, 1.0);
        add_corner(eq.k, eq.l - 1, -1.0);
        add_corner(eq.k - 1, eq.l, -1.0);
        add_corner(eq.k - 1, eq.l - 1, 1.0);
        break;
      }
    }
  });
  return J;
}

Eigen::VectorXd eval_u(const Observation& obs, const ParamVector& theta,
                       const EquationSystem& system, const BivariateCdf& cdf) {
  return data_terms(obs, system) - model_terms(theta, system, cdf);
}

MomentStatistics collect_statistics(const MixedDataset& data, const EquationSystem& system) {
  const int q = system.size();
  MomentStatistics stats;
  stats.n = data.rows();
  stats.mean = Eigen::VectorXd::Zero(q);
  stats.second = Eigen::MatrixXd::Zero(q, q);
  std::vector<double> y;
  std::vector<int> x;
  for (int r = 0; r < data.rows(); ++r) {
    const Eigen::VectorXd s = data_terms(observation(data, r, y, x), system);
    stats.mean += s;
    stats.second.selfadjointView<Eigen::Lower>().rankUpdate(s);
  }
  const double inv_n = 1.0 / static_cast<double>(stats.n);
  stats.mean *= inv_n;
  stats.second = stats.second.selfadjointView<Eigen::Lower>();
  stats.second *= inv_n;
  return stats;
}

Eigen::MatrixXd second_moment(const MomentStatistics& stats, const Eigen::VectorXd& mu) {
  Eigen::MatrixXd omega = stats.second - stats.mean * mu.transpose() - mu * stats.mean.transpose() +
                          mu * mu.transpose();
  return 0.5 * (omega + omega.transpose());
}

MomentEvaluation eval_moments(const MomentStatistics& stats, const ParamVector& theta,
                              const EquationSystem& system, const BivariateCdf& cdf) {
  const Eigen::VectorXd mu = model_terms(theta, system, cdf);
  MomentEvaluation out;
  out.m = stats.mean - mu;
  out.G = -model_jacobian(theta, system, cdf);
  out.omega_hat = second_moment(stats, mu);
  return out;
}

MomentEvaluation eval_moments(const MixedDataset& data, const ParamVector& theta,
                              const EquationSystem& system, const BivariateCdf& cdf) {
  return eval_moments(collect_statistics(data, system), theta, system, cdf);
}

Eigen::MatrixXd assemble_gradient(const ParamVector& theta, const EquationSystem& system,
                                  const BivariateCdf& cdf) {
  return -model_jacobian(theta, system, cdf);
}

WeightMatrix weight_matrix(const Eigen::MatrixXd& omega_hat) {
  if (omega_hat.rows() != omega_hat.cols() || omega_hat.rows() == 0) {
    throw InvalidArgument("weight_matrix needs a nonempty square matrix");
  }
  if (!omega_hat.allFinite()) throw NonFiniteLoss("moment covariance is not finite");
  const Eigen::MatrixXd sym = 0.5 * (omega_hat + omega_hat.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double lmax = lambda.maxCoeff();
  const double lmin = lambda.minCoeff();
  const auto q = static_cast<int>(sym.rows());

  WeightMatrix out;
  if (!(lmax > 0.0)) throw DegenerateWeight("moment covariance has no positive eigenvalue");
  out.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (out.condition <= 1e12) {
    out.rank = q;
    out.W = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  } else {
    out.pseudo_inverse = true;
    const double cutoff = 1e-10 * lmax;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(q);
    for (int i = 0; i < q; ++i) {
      if (lambda[i] > cutoff) {
        inv[i] = 1.0 / lambda[i];
        ++out.rank;
      }
    }
    out.W = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  }
  if (2 * out.rank < q) {
    throw DegenerateWeight("moment covariance has rank " + std::to_string(out.rank) + " of " +
                           std::to_string(q));
  }
  out.W = 0.5 * (out.W + out.W.transpose());
  return out;
}

}  // namespace mixcor
