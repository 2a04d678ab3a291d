#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"

#include "mixcor/errors.hpp"
#include "mixcor/model.hpp"

using namespace mixcor;

namespace {

std::vector<VariableSpec> four_var_specs() {
  return {VariableSpec::continuous("Y1"), VariableSpec::continuous("Y2"),
          VariableSpec::ordinal("X1", 2), VariableSpec::ordinal("X2", 2)};
}

}  // namespace

TEST_CASE("variable specs") {
  CHECK(VariableSpec::ordinal("X", 3).is_ordinal());
  CHECK_FALSE(VariableSpec::continuous("Y").is_ordinal());
  CHECK_THROWS_AS(VariableSpec::ordinal("X", 1), InvalidArgument);
}

TEST_CASE("threshold set") {
  const ThresholdSet a({{-0.431, 0.431}, {0.0}});
  CHECK(a.variables() == 2);
  CHECK(a.categories(0) == 3);
  CHECK(a.categories(1) == 2);
  CHECK(a.cut(0, 0) == -std::numeric_limits<double>::infinity());
  CHECK(a.cut(0, 1) == -0.431);
  CHECK(a.cut(0, 3) == std::numeric_limits<double>::infinity());
  CHECK(a.total() == 3);
  CHECK(a.offset(1) == 2);
  const Eigen::VectorXd flat = a.flatten();
  CHECK(flat[1] == 0.431);
  Eigen::VectorXd moved = flat;
  moved[2] = 0.25;
  CHECK(a.with_values(moved).cut(1, 1) == 0.25);
  moved[0] = 1.0;
  CHECK_THROWS_AS(a.with_values(moved), InvalidArgument);
  CHECK_THROWS_AS(ThresholdSet({{0.2, 0.1}}), InvalidArgument);
  CHECK_THROWS_AS(ThresholdSet(std::vector<std::vector<double>>{{}}), InvalidArgument);
  CHECK_THROWS_AS(ThresholdSet(std::vector<std::vector<double>>{{std::nan("")}}), InvalidArgument);
}

TEST_CASE("layout order for the four-variable system") {
  const CorrelationLayout layout(2, 2);
  REQUIRE(layout.size() == 6);
  const int expected[6][2] = {{1, 0}, {2, 0}, {3, 0}, {2, 1}, {3, 1}, {3, 2}};
  const CoefficientKind kinds[6] = {CoefficientKind::Pearson,    CoefficientKind::Polyserial,
                                    CoefficientKind::Polyserial, CoefficientKind::Polyserial,
                                    CoefficientKind::Polyserial, CoefficientKind::Polychoric};
  for (int k = 0; k < 6; ++k) {
    CHECK(layout[k].row == expected[k][0]);
    CHECK(layout[k].col == expected[k][1]);
    CHECK(layout[k].kind == kinds[k]);
    CHECK(layout.index_of(expected[k][0], expected[k][1]) == k);
    CHECK(layout.index_of(expected[k][1], expected[k][0]) == k);
  }
  CHECK_THROWS_AS(layout.index_of(1, 1), UnknownPair);
  CHECK_THROWS_AS(layout.index_of(4, 0), UnknownPair);
  CHECK(layout.pearson_count() == 1);
  CHECK(layout.polyserial_count() == 4);
  CHECK(layout.polychoric_count() == 1);
  CHECK_THROWS_AS(CorrelationLayout(1, 0), InvalidArgument);
}

TEST_CASE("parameter counts") {
  const int s[] = {3, 3, 3};
  const auto count = param_count(2, 3, s);
  CHECK(count.interest == 10);
  CHECK(count.nuisance == 6);
  const int binary[] = {2, 2};
  CHECK(param_count(2, 2, binary).interest == 6);
  CHECK(param_count(2, 2, binary).nuisance == 2);
}

TEST_CASE("correlation params round trip") {
  Eigen::MatrixXd R(4, 4);
  R << 1, .3, .4, .5, .3, 1, .6, .7, .4, .6, 1, .8, .5, .7, .8, 1;
  const auto params = CorrelationParams::from_matrix(R, 2);
  const std::vector<double> expected = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  for (int k = 0; k < 6; ++k) CHECK(params[k] == expected[static_cast<std::size_t>(k)]);
  CHECK(params.rho_yy().size() == 1);
  CHECK(params.rho_yx().size() == 4);
  CHECK(params.rho_xx()[0] == 0.8);
  CHECK(params.to_matrix().isApprox(R, 0.0));

  Eigen::VectorXd bad(6);
  bad << 0.1, 0.2, 1.0, 0.0, 0.0, 0.0;
  CHECK_THROWS_AS(CorrelationParams(CorrelationLayout(2, 2), bad), InvalidArgument);
  bad[2] = std::nan("");
  CHECK_NOTHROW(CorrelationParams(CorrelationLayout(2, 2), bad));
}

TEST_CASE("dataset construction") {
  Eigen::MatrixXd y(4, 2);
  y << 1, 2, 2, 4, 3, 5, 6, 1;
  Eigen::MatrixXi x(4, 2);
  x << 1, 2, 2, 1, 1, 1, 2, 2;
  const auto data = MixedDataset::from_columns(four_var_specs(), y, x);
  CHECK(data.rows() == 4);
  CHECK(data.continuous_count() == 2);
  CHECK(data.ordinal_count() == 2);
  CHECK(data.categories() == std::vector<int>{2, 2});
  for (int j = 0; j < 2; ++j) {
    const auto col = data.continuous().col(j);
    CHECK(std::abs(col.mean()) < 1e-15);
    CHECK(col.squaredNorm() / 3.0 == doctest::Approx(1.0).epsilon(1e-14));
  }
  const auto raw = MixedDataset::from_columns(four_var_specs(), y, x, IngestOptions{false});
  CHECK(raw.continuous()(3, 0) == 6.0);

  Eigen::MatrixXi bad = x;
  bad(0, 0) = 3;
  CHECK_THROWS_AS(MixedDataset::from_columns(four_var_specs(), y, bad), CodeOutOfRange);
  bad = x;
  bad.col(1).setConstant(1);
  try {
    MixedDataset::from_columns(four_var_specs(), y, bad);
    FAIL("expected EmptyCategory");
  } catch (const EmptyCategory& e) {
    CHECK(e.variable() == "X2");
    CHECK(e.category() == 2);
  }
  Eigen::MatrixXd nonfinite = y;
  nonfinite(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(MixedDataset::from_columns(four_var_specs(), nonfinite, x), NonFiniteCell);
  Eigen::MatrixXd constant = y;
  constant.col(0).setConstant(2.0);
  CHECK_THROWS_AS(MixedDataset::from_columns(four_var_specs(), constant, x), InvalidArgument);
  CHECK_THROWS_AS(MixedDataset::from_columns(four_var_specs(), y.topRows(1), x.topRows(1)), TooFewRows);

  auto swapped = four_var_specs();
  std::swap(swapped[1], swapped[2]);
  CHECK_THROWS_AS(MixedDataset::from_columns(swapped, y, x), InvalidArgument);
}

TEST_CASE("ingest drops incomplete rows and reorders columns") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::vector<VariableSpec> specs = {VariableSpec::ordinal("X1", 2), VariableSpec::continuous("Y1"),
                                           VariableSpec::continuous("Y2")};
  const std::vector<std::vector<double>> table = {
      {1, 0.5, 1.0}, {2, nan, 2.0}, {2, 1.5, -1.0}, {1, -0.5, 0.0}, {2, 2.5, 3.0}};
  const auto data = ingest(table, specs, IngestOptions{false});
  CHECK(data.rows() == 4);
  CHECK(data.dropped_rows() == 1);
  CHECK(data.specs()[0].name == "Y1");
  CHECK(data.specs()[2].name == "X1");
  CHECK(data.continuous()(1, 0) == 1.5);
  CHECK(data.ordinal()(3, 0) == 2);

  const std::vector<std::vector<double>> fractional = {{1.5, 0.1, 0.2}, {2, 0.3, 0.1}};
  CHECK_THROWS_AS(ingest(fractional, specs), CodeOutOfRange);
}
