#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "mixcor/errors.hpp"
#include "mixcor/moments.hpp"

using namespace mixcor;

namespace {

std::vector<VariableSpec> four_var_specs() {
  return {VariableSpec::continuous("Y1"), VariableSpec::continuous("Y2"),
          VariableSpec::ordinal("X1", 2), VariableSpec::ordinal("X2", 2)};
}

std::vector<VariableSpec> ternary_specs() {
  return {VariableSpec::continuous("Y1"), VariableSpec::continuous("Y2"),
          VariableSpec::ordinal("X1", 3), VariableSpec::ordinal("X2", 3),
          VariableSpec::ordinal("X3", 3)};
}

MixedDataset random_dataset(const std::vector<VariableSpec>& specs, int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  int c = 0;
  std::vector<int> s;
  for (const auto& v : specs) {
    if (v.is_ordinal()) {
      s.push_back(v.categories);
    } else {
      ++c;
    }
  }
  Eigen::MatrixXd y(n, c);
  for (int r = 0; r < n; ++r) {
    for (int j = 0; j < c; ++j) y(r, j) = normal(rng);
  }
  Eigen::MatrixXi x(n, static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::uniform_int_distribution<int> code(1, s[i]);
    for (int r = 0; r < n; ++r) {
      x(r, static_cast<Eigen::Index>(i)) = r < s[i] ? r + 1 : code(rng);
    }
  }
  return MixedDataset::from_columns(specs, y, x);
}

}  // namespace

TEST_CASE("four-variable binary system layout") {
  const auto sys = build_system(four_var_specs(), SystemMode::MaxSet);
  REQUIRE(sys.size() == 12);
  CHECK(sys.threshold_rows() == 2);
  struct Row {
    BlockKind kind;
    int coefficient, variable, k, l;
  };
  const Row expected[] = {{BlockKind::Threshold, -1, 0, 1, 0},  {BlockKind::Threshold, -1, 1, 1, 0},
                          {BlockKind::Pearson, 0, -1, 0, 0},    {BlockKind::Polyserial, 1, -1, 1, 0},
                          {BlockKind::Polyserial, 1, -1, 2, 0}, {BlockKind::Polyserial, 2, -1, 1, 0},
                          {BlockKind::Polyserial, 3, -1, 1, 0}, {BlockKind::Polyserial, 3, -1, 2, 0},
                          {BlockKind::Polyserial, 4, -1, 1, 0}, {BlockKind::Polychoric, 5, -1, 1, 1},
                          {BlockKind::Polychoric, 5, -1, 1, 2}, {BlockKind::Polychoric, 5, -1, 2, 1}};
  for (int r = 0; r < 12; ++r) {
    const auto& eq = sys.equations()[static_cast<std::size_t>(r)];
    const auto& ex = expected[r];
    CHECK(eq.kind == ex.kind);
    CHECK(eq.coefficient == ex.coefficient);
    if (ex.kind == BlockKind::Threshold) CHECK(eq.variable == ex.variable);
    CHECK(eq.k == ex.k);
    CHECK(eq.l == ex.l);
  }
  CHECK(sys.coefficients() == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(sys.ordinals() == std::vector<int>{0, 1});
  CHECK(sys.parameter_count() == 8);
  CHECK(sys.unpruned().size() == 17);
}

TEST_CASE("system sizes") {
  CHECK(build_system(four_var_specs(), SystemMode::MinSet).size() == 2 + 6);
  const auto ternary = build_system(ternary_specs(), SystemMode::MaxSet);
  CHECK(ternary.threshold_rows() == 6);
  CHECK(ternary.size() == 6 + 39);
  CHECK(build_system(ternary_specs(), SystemMode::MinSet).size() == 6 + 10);

  const auto custom = build_system(ternary_specs(), SystemMode::Custom, std::vector<int>{2, 7});
  CHECK(custom.coefficients() == std::vector<int>{2, 7});
  CHECK(custom.ordinals() == std::vector<int>{0, 1});
  CHECK(custom.threshold_rows() == 4);
  CHECK(custom.size() == 4 + 3 + 8);

  CHECK_THROWS_AS(build_system(ternary_specs(), SystemMode::Custom, std::vector<int>{}), UncoveredParameter);
  CHECK_THROWS_AS(build_system(ternary_specs(), SystemMode::Custom, std::vector<int>{10}), UnknownPair);
  CHECK_THROWS_AS(build_system(ternary_specs(), SystemMode::MaxSet, std::vector<int>{1}), InvalidArgument);
}

TEST_CASE("custom blocks must cover every parameter") {
  const auto specs = four_var_specs();
  EquationBlock empty{BlockKind::Pearson, 0, -1, {{BlockKind::Pearson, 0, -1, 0, 0, false}}};
  CHECK_THROWS_AS(EquationSystem::from_blocks(specs, SystemMode::Custom, {empty}), UncoveredParameter);

  EquationBlock polyserial{BlockKind::Polyserial, 1, -1,
                           {{BlockKind::Polyserial, 1, -1, 1, 0, true}, {BlockKind::Polyserial, 1, -1, 2, 0, true}}};
  CHECK_THROWS_AS(EquationSystem::from_blocks(specs, SystemMode::Custom, {polyserial}), UncoveredParameter);
}

TEST_CASE("model terms at the origin point") {
  const auto sys = build_system(four_var_specs(), SystemMode::MaxSet);
  const double a = -0.3, b = 0.5;
  Eigen::VectorXd r(6);
  r << 0.3, 0.4, 0.5, 0.6, 0.7, 0.8;
  const ParamVector theta{ThresholdSet({{a}, {b}}), CorrelationParams(CorrelationLayout(2, 2), r)};
  const BivariateCdf cdf = BivariateCdf::quadrature();
  const Eigen::VectorXd mu = model_terms(theta, sys, cdf);
  const double p11 = binorm_cdf_oracle(a, b, 0.8);
  const double expected[12] = {norm_cdf(a),         norm_cdf(b),        0.3,
                               -0.4 * norm_pdf(a),  0.4 * norm_pdf(a),  -0.5 * norm_pdf(b),
                               -0.6 * norm_pdf(a),  0.6 * norm_pdf(a),  -0.7 * norm_pdf(b),
                               p11,                 norm_cdf(a) - p11,  norm_cdf(b) - p11};
  for (int k = 0; k < 12; ++k) CHECK(mu[k] == doctest::Approx(expected[k]).epsilon(1e-13));
}

TEST_CASE("gradient matches finite differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (const auto& specs : {four_var_specs(), ternary_specs()}) {
    const auto sys = build_system(specs, SystemMode::MaxSet);
    const auto data = random_dataset(specs, 200, 3);
    const auto stats = collect_statistics(data, sys);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<std::vector<double>> cuts;
      for (int s : sys.categories()) {
        std::vector<double> a;
        for (int k = 1; k < s; ++k) a.push_back(-0.8 + 1.6 * k / s + 0.2 * unit(rng));
        cuts.push_back(a);
      }
      Eigen::VectorXd rho(sys.layout().size());
      for (Eigen::Index k = 0; k < rho.size(); ++k) rho[k] = 0.3 * unit(rng);
      const ParamVector theta{ThresholdSet(cuts), CorrelationParams(sys.layout(), rho)};
      const auto eval = eval_moments(stats, theta, sys, LegendreOrder::Third);
      const Eigen::VectorXd flat = theta.flatten();
      const double h = 1e-5;
      for (Eigen::Index p = 0; p < flat.size(); ++p) {
        Eigen::VectorXd up = flat, down = flat;
        up[p] += h;
        down[p] -= h;
        const Eigen::VectorXd fd = (eval_moments(stats, theta.with_values(up), sys, LegendreOrder::Third).m -
                                    eval_moments(stats, theta.with_values(down), sys, LegendreOrder::Third).m) /
                                   (2 * h);
        const double scale = std::max(1.0, fd.lpNorm<Eigen::Infinity>());
        CHECK((eval.G.col(p) - fd).lpNorm<Eigen::Infinity>() / scale < 1e-7);
      }
    }
  }
}

TEST_CASE("statistics agree with direct evaluation") {
  const auto specs = ternary_specs();
  const auto sys = build_system(specs, SystemMode::MaxSet);
  const auto data = random_dataset(specs, 150, 5);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(sys.layout().size(), 0.1);
  const ParamVector theta{ThresholdSet({{-0.4, 0.4}, {-0.4, 0.4}, {-0.2, 0.6}}),
                          CorrelationParams(sys.layout(), rho)};
  const BivariateCdf cdf;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(sys.size());
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(sys.size(), sys.size());
  std::vector<double> y;
  std::vector<int> x;
  for (int r = 0; r < data.rows(); ++r) {
    const Eigen::VectorXd u = eval_u(observation(data, r, y, x), theta, sys, cdf);
    mean += u;
    outer += u * u.transpose();
  }
  mean /= data.rows();
  outer /= data.rows();
  const auto eval = eval_moments(data, theta, sys, cdf);
  CHECK((eval.m - mean).lpNorm<Eigen::Infinity>() < 1e-13);
  CHECK((eval.omega_hat - outer).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("removed equations are linear combinations of the others") {
  const auto specs = ternary_specs();
  const auto full = build_system(specs, SystemMode::MaxSet).unpruned();
  const auto data = random_dataset(specs, 100, 9);
  std::vector<double> ybuf;
  std::vector<int> xbuf;
  for (int r = 0; r < data.rows(); ++r) {
    const auto obs = observation(data, r, ybuf, xbuf);
    const Eigen::VectorXd s = data_terms(obs, full);
    std::size_t row = 0;
    for (const auto& block : full.blocks()) {
      double sum = 0.0;
      for (std::size_t e = 0; e < block.equations.size(); ++e) sum += s[static_cast<Eigen::Index>(row + e)];
      row += block.equations.size();
      if (block.kind == BlockKind::Threshold || block.kind == BlockKind::Polychoric) {
        CHECK(std::abs(sum - 1.0) < 1e-12);
      } else if (block.kind == BlockKind::Polyserial) {
        const int y = full.layout()[block.coefficient].col;
        CHECK(std::abs(sum - obs.continuous[static_cast<std::size_t>(y)]) < 1e-12);
      }
    }
  }
}

TEST_CASE("weight matrix") {
  Eigen::MatrixXd omega(3, 3);
  omega << 2, 0.5, 0, 0.5, 1, 0.2, 0, 0.2, 1.5;
  const auto w = weight_matrix(omega);
  CHECK_FALSE(w.pseudo_inverse);
  CHECK(w.rank == 3);
  CHECK((w.W * omega - Eigen::MatrixXd::Identity(3, 3)).lpNorm<Eigen::Infinity>() < 1e-12);

  Eigen::MatrixXd v(4, 3);
  v << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1;
  const Eigen::MatrixXd singular = v * v.transpose();
  const auto p = weight_matrix(singular);
  CHECK(p.pseudo_inverse);
  CHECK(p.rank == 3);
  CHECK((singular * p.W * singular - singular).lpNorm<Eigen::Infinity>() < 1e-10);

  Eigen::VectorXd one(4);
  one << 1, 2, 3, 4;
  CHECK_THROWS_AS(weight_matrix(one * one.transpose()), DegenerateWeight);
  CHECK_THROWS_AS(weight_matrix(Eigen::MatrixXd::Zero(2, 2)), DegenerateWeight);
}
