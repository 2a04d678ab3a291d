#include "mixcor/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <boost/math/tools/minima.hpp>

#include "mixcor/errors.hpp"
#include "mixcor/normal.hpp"

namespace mixcor {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& R) {
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("true correlation matrix is not positive definite");
  }
  return llt.matrixL();
}

}  // namespace

std::vector<VariableSpec> SimDesign::specs() const {
  std::vector<VariableSpec> out;
  for (int j = 0; j < continuous(); ++j) out.push_back(VariableSpec::continuous("Y" + std::to_string(j + 1)));
  for (int i = 0; i < ordinal(); ++i) {
    out.push_back(VariableSpec::ordinal("X" + std::to_string(i + 1),
                                        static_cast<int>(thresholds[static_cast<std::size_t>(i)].size()) + 1));
  }
  return out;
}

void SimDesign::validate() const {
  if (R.rows() != R.cols() || R.rows() < 2) throw InvalidArgument("R must be square of order >= 2");
  if (continuous() < 0) throw InvalidArgument("more threshold vectors than variables");
  if (!R.allFinite()) throw InvalidArgument("R has non-finite entries");
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    if (std::abs(R(i, i) - 1.0) > 1e-12) throw InvalidArgument("R must have a unit diagonal");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(R(i, j) - R(j, i)) > 1e-12) throw InvalidArgument("R must be symmetric");
    }
  }
  ThresholdSet check(thresholds);
  (void)check;
  if (n < 2) throw InvalidArgument("n must be at least 2");
  if (replications < 2) throw InvalidArgument("at least 2 replications are required");
  if (threads < 0) throw InvalidArgument("thread count must be non-negative");
  fit.validate();
  cholesky_factor(R);
}

MixedDataset generate(const SimDesign& design, std::uint64_t replication) {
  const Eigen::MatrixXd L = cholesky_factor(design.R);
  const int c = design.continuous();
  const int d = design.ordinal();
  const int p = c + d;

  std::mt19937_64 rng(splitmix64(design.seed ^ splitmix64(replication)));
  std::normal_distribution<double> normal;
  Eigen::MatrixXd Z(design.n, p);
  for (int r = 0; r < design.n; ++r) {
    for (int j = 0; j < p; ++j) Z(r, j) = normal(rng);
  }
  Z = Z * L.transpose();

  Eigen::MatrixXi X(design.n, d);
  for (int i = 0; i < d; ++i) {
    const auto& a = design.thresholds[static_cast<std::size_t>(i)];
    for (int r = 0; r < design.n; ++r) {
      const double z = Z(r, c + i);
      X(r, i) = 1 + static_cast<int>(std::count_if(a.begin(), a.end(), [z](double t) { return z > t; }));
    }
  }
  return MixedDataset::from_columns(design.specs(), Z.leftCols(c), std::move(X),
                                    IngestOptions{design.standardize});
}

std::string coefficient_label(const std::vector<VariableSpec>& specs, int index) {
  int c = 0;
  for (const auto& s : specs) c += s.is_ordinal() ? 0 : 1;
  const CorrelationLayout layout(c, static_cast<int>(specs.size()) - c);
  const auto& coef = layout[index];
  return specs[static_cast<std::size_t>(coef.col)].name + "-" +
         specs[static_cast<std::size_t>(coef.row)].name;
}

SimReport run_study(const SimDesign& design) {
  design.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto specs = design.specs();
  const EquationSystem system = build_system(specs, design.fit.system_mode, design.fit.pairs);

  SimReport report;
  report.coefficients = system.coefficients();
  const auto P = static_cast<Eigen::Index>(report.coefficients.size());
  const CorrelationParams truth = CorrelationParams::from_matrix(design.R, design.continuous());
  report.truth.resize(P);
  for (Eigen::Index k = 0; k < P; ++k) {
    report.truth[k] = truth[report.coefficients[static_cast<std::size_t>(k)]];
    report.labels.push_back(coefficient_label(specs, report.coefficients[static_cast<std::size_t>(k)]));
  }

  struct Outcome {
    bool ok = false;
    bool converged = false;
    Eigen::VectorXd estimate;
    Eigen::MatrixXd variance;
  };
  const auto N = static_cast<std::size_t>(design.replications);
  std::vector<Outcome> outcomes(N);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < N; r = next++) {
      Outcome& out = outcomes[r];
      try {
        const MixedDataset data = generate(design, r);
        EstimationResult fit = design.fit.method == Method::OneStep
                                   ? fit_one_step(data, system, design.fit)
                                   : fit_two_step(data, system, design.fit);
        out.converged = fit.diagnostics.converged;
        out.estimate = fit.estimates();
        out.variance = std::move(fit.var_R);
        out.ok = out.converged && out.estimate.allFinite() && out.variance.allFinite();
      } catch (const Error&) {
        out.ok = false;
      }
    }
  };
  unsigned workers = design.threads > 0 ? static_cast<unsigned>(design.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(N));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<std::size_t> good;
  for (std::size_t r = 0; r < N; ++r) {
    if (outcomes[r].ok) {
      good.push_back(r);
    } else {
      ++report.failures;
      if (outcomes[r].estimate.size() > 0 && !outcomes[r].converged) ++report.nonconverged;
    }
  }
  if (good.empty()) throw AllReplicationsFailed("every replication failed");

  const auto M = static_cast<Eigen::Index>(good.size());
  report.estimates.resize(M, P);
  report.mcov = Eigen::MatrixXd::Zero(P, P);
  for (Eigen::Index m = 0; m < M; ++m) {
    const Outcome& out = outcomes[good[static_cast<std::size_t>(m)]];
    report.estimates.row(m) = out.estimate.transpose();
    report.mcov += out.variance;
    report.succeeded.push_back(good[static_cast<std::size_t>(m)]);
  }
  report.mcov /= static_cast<double>(M);
  report.mean = report.estimates.colwise().mean().transpose();
  const Eigen::MatrixXd centered = report.estimates.rowwise() - report.mean.transpose();
  report.covr = M > 1 ? Eigen::MatrixXd(centered.transpose() * centered / static_cast<double>(M - 1))
                      : Eigen::MatrixXd::Zero(P, P);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_table(const SimDesign& design, const SimReport& report) {
  const int exponent = design.n < 500 ? 5 : 6;
  const double scale = std::pow(10.0, exponent);
  const auto P = report.mean.size();
  std::ostringstream out;
  char buf[64];
  out << design.name << "  n=" << design.n << "  N=" << design.replications
      << "  ok=" << report.estimates.rows() << "  failed=" << report.failures << "  method="
      << to_string(design.fit.method) << "\n";
  out << "MEAN x1e-4, COVR MCOV x1e-" << exponent << "\n";
  std::snprintf(buf, sizeof buf, "%-6s", "");
  out << buf;
  for (const auto& label : report.labels) {
    std::snprintf(buf, sizeof buf, "%8s", label.c_str());
    out << buf;
  }
  out << "\n";
  auto row = [&](const char* name, auto&& value, Eigen::Index count) {
    std::snprintf(buf, sizeof buf, "%-6s", name);
    out << buf;
    for (Eigen::Index j = 0; j < count; ++j) {
      std::snprintf(buf, sizeof buf, "%8.0f", value(j));
      out << buf;
    }
    out << "\n";
  };
  row("TRUE", [&](Eigen::Index j) { return report.truth[j] * 1e4; }, P);
  row("MEAN", [&](Eigen::Index j) { return report.mean[j] * 1e4; }, P);
  for (const auto* block : {&report.covr, &report.mcov}) {
    const char* name = block == &report.covr ? "COVR" : "MCOV";
    for (Eigen::Index i = 0; i < P; ++i) {
      row(i == 0 ? name : "", [&](Eigen::Index j) { return (*block)(i, j) * scale; }, i + 1);
    }
  }
  std::snprintf(buf, sizeof buf, "time = %.2fs\n", report.wall_seconds);
  out << buf;
  return out.str();
}

double ml_pair_oracle(const MixedDataset& data, int coefficient) {
  const int c = data.continuous_count();
  const CorrelationLayout layout(c, data.ordinal_count());
  if (coefficient < 0 || coefficient >= layout.size()) throw UnknownPair("coefficient index out of range");
  const Coefficient& coef = layout[coefficient];
  if (coef.kind == CoefficientKind::Pearson) {
    throw InvalidArgument("the pair oracle covers polyserial and polychoric coefficients");
  }
  const ThresholdSet a = estimate_thresholds(data);
  const int n = data.rows();
  const BivariateCdf cdf = BivariateCdf::quadrature();
  constexpr double kFloor = 1e-300;

  std::function<double(double)> negloglik;
  if (coef.kind == CoefficientKind::Polychoric) {
    const auto i = static_cast<std::size_t>(coef.col - c);
    const auto j = static_cast<std::size_t>(coef.row - c);
    const int si = a.categories(i);
    const int sj = a.categories(j);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(si, sj);
    for (int r = 0; r < n; ++r) {
      counts(data.ordinal()(r, static_cast<Eigen::Index>(i)) - 1,
             data.ordinal()(r, static_cast<Eigen::Index>(j)) - 1) += 1.0;
    }
    negloglik = [=, &a](double rho) {
      double ll = 0.0;
      for (int k = 1; k <= si; ++k) {
        for (int l = 1; l <= sj; ++l) {
          if (counts(k - 1, l - 1) == 0.0) continue;
          const double p = cdf(a.cut(i, k), a.cut(j, l), rho) - cdf(a.cut(i, k - 1), a.cut(j, l), rho) -
                           cdf(a.cut(i, k), a.cut(j, l - 1), rho) +
                           cdf(a.cut(i, k - 1), a.cut(j, l - 1), rho);
          ll += counts(k - 1, l - 1) * std::log(std::max(p, kFloor));
        }
      }
      return -ll;
    };
  } else {
    const Eigen::Index y = coef.col;
    const auto i = static_cast<std::size_t>(coef.row - c);
    negloglik = [&, y, i](double rho) {
      const double scale = std::sqrt(1.0 - rho * rho);
      double ll = 0.0;
      for (int r = 0; r < n; ++r) {
        const double yr = data.continuous()(r, y);
        const int k = data.ordinal()(r, static_cast<Eigen::Index>(i));
        const double p = norm_cdf((a.cut(i, k) - rho * yr) / scale) -
                         norm_cdf((a.cut(i, k - 1) - rho * yr) / scale);
        ll += std::log(std::max(p, kFloor));
      }
      return -ll;
    };
  }
  const auto best = boost::math::tools::brent_find_minima(negloglik, -kRhoBound, kRhoBound, 40);
  return best.first;
}

}  // namespace mixcor
