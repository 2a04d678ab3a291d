#include <cmath>
#include <limits>

#include "doctest.h"

#include "mixcor/errors.hpp"
#include "mixcor/normal.hpp"

using namespace mixcor;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("univariate normal values") {
  CHECK(norm_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
  CHECK(norm_pdf(1.0) == doctest::Approx(0.2419707245191433).epsilon(1e-14));
  CHECK(norm_cdf(0.0) == 0.5);
  CHECK(norm_cdf(1.96) == doctest::Approx(0.9750021048517796).epsilon(1e-14));
  CHECK(norm_cdf(-kInf) == 0.0);
  CHECK(norm_cdf(kInf) == 1.0);
  CHECK(norm_pdf(kInf) == 0.0);
  CHECK(norm_pdf(-kInf) == 0.0);
}

TEST_CASE("quantile") {
  CHECK(norm_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(norm_quantile(1.0 / 3.0) == doctest::Approx(-0.4307272992954575).epsilon(1e-13));
  CHECK(norm_quantile(0.75) == doctest::Approx(0.6744897501960817).epsilon(1e-13));
  CHECK(std::abs(norm_quantile(1.0 / 3.0) + 0.431) < 5e-4);

  for (double p = 1e-12; p < 1.0; p = p < 0.01 ? p * 3.7 : p + 0.0137) {
    CHECK(norm_cdf(norm_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK_THROWS_AS(norm_quantile(0.0), OutOfRange);
  CHECK_THROWS_AS(norm_quantile(1.0), OutOfRange);
  CHECK_THROWS_AS(norm_quantile(-0.2), OutOfRange);
  CHECK_THROWS_AS(norm_quantile(std::nan("")), OutOfRange);
}

TEST_CASE("bivariate density") {
  CHECK(binorm_pdf(0.0, 0.0, 0.0) == doctest::Approx(1.0 / (2.0 * M_PI)));
  CHECK(binorm_pdf(0.3, -1.1, 0.0) == doctest::Approx(norm_pdf(0.3) * norm_pdf(-1.1)));
  CHECK(binorm_pdf(kInf, 0.2, 0.5) == 0.0);
  CHECK_THROWS_AS(binorm_pdf(0.0, 0.0, 1.0), SingularCorrelation);

  const double h = 1e-6;
  for (double rho : {-0.7, 0.0, 0.4, 0.9}) {
    const double fd = (binorm_pdf(0.4, -0.8, rho + h) - binorm_pdf(0.4, -0.8, rho - h)) / (2 * h);
    CHECK(binorm_pdf_drho(0.4, -0.8, rho) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("oracle against high precision values") {
  struct Case {
    double x, y, rho, expected;
  };
  const Case cases[] = {{0, 0, 0.8, 0.3975836176504333},  {0, 0, -0.8, 0.1024163823495667},
                        {0, 0, 0.5, 1.0 / 3.0},           {1, -0.5, 0.3, 0.283138420244481},
                        {-1.2, 0.7, -0.6, 0.04101442174869317},
                        {0.431, -0.431, 0.45, 0.2802020540471855},
                        {2, 1.5, 0.9, 0.9307272535126401}};
  for (const auto& c : cases) {
    CHECK(std::abs(binorm_cdf_oracle(c.x, c.y, c.rho) - c.expected) < 1e-12);
  }
}

TEST_CASE("legendre rule") {
  const double third = binorm_cdf_legendre(0.0, 0.0, 0.8);
  CHECK(std::abs(third - 0.3975836176504333) < 2e-4);
  CHECK(binorm_cdf_legendre(0.0, 0.0, 0.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(binorm_cdf_legendre(0.7, -0.2, 0.0) == doctest::Approx(norm_cdf(0.7) * norm_cdf(-0.2)));
  CHECK(std::abs(binorm_cdf_legendre(0.5, 0.1, 0.3, LegendreOrder::Second) -
                 binorm_cdf_oracle(0.5, 0.1, 0.3)) < 1e-3);

  CHECK(binorm_cdf_legendre(-kInf, 0.3, 0.5) == 0.0);
  CHECK(binorm_cdf_legendre(kInf, 0.3, 0.5) == doctest::Approx(norm_cdf(0.3)));
  CHECK(binorm_cdf_legendre(0.3, kInf, 0.5) == doctest::Approx(norm_cdf(0.3)));
  CHECK(binorm_cdf_legendre(kInf, kInf, 0.5) == 1.0);
  CHECK_THROWS_AS(binorm_cdf_legendre(0.0, 0.0, 0.9995), SingularCorrelation);
  CHECK_NOTHROW(binorm_cdf_legendre(0.0, 0.0, kRhoBound));
}

TEST_CASE("legendre partials are derivatives of the approximation") {
  const double h = 1e-5;
  for (LegendreOrder order : {LegendreOrder::Second, LegendreOrder::Third}) {
    const BivariateCdf cdf(order);
    for (double x : {-1.3, 0.0, 0.431}) {
      for (double y : {-0.431, 0.8}) {
        for (double rho : {-0.6, 0.2, 0.85}) {
          const auto p = cdf.partials(x, y, rho);
          CHECK(p.value == doctest::Approx(cdf(x, y, rho)).epsilon(1e-15));
          const double dx = (cdf(x + h, y, rho) - cdf(x - h, y, rho)) / (2 * h);
          const double dy = (cdf(x, y + h, rho) - cdf(x, y - h, rho)) / (2 * h);
          const double dr = (cdf(x, y, rho + h) - cdf(x, y, rho - h)) / (2 * h);
          CHECK(std::abs(p.d_x - dx) < 1e-8);
          CHECK(std::abs(p.d_y - dy) < 1e-8);
          CHECK(std::abs(p.d_rho - dr) < 1e-8);
        }
      }
    }
  }
}

TEST_CASE("quadrature partials use the closed forms") {
  const BivariateCdf cdf = BivariateCdf::quadrature();
  CHECK(cdf.method() == BivariateCdf::Method::Quadrature);
  const double x = 0.3, y = -0.6, rho = 0.55;
  const auto p = cdf.partials(x, y, rho);
  const double s = std::sqrt(1 - rho * rho);
  CHECK(p.value == doctest::Approx(binorm_cdf_oracle(x, y, rho)).epsilon(1e-14));
  CHECK(p.d_x == doctest::Approx(norm_pdf(x) * norm_cdf((y - rho * x) / s)).epsilon(1e-14));
  CHECK(p.d_y == doctest::Approx(norm_pdf(y) * norm_cdf((x - rho * y) / s)).epsilon(1e-14));
  CHECK(p.d_rho == doctest::Approx(binorm_pdf(x, y, rho)).epsilon(1e-14));

  const auto edge = cdf.partials(kInf, y, rho);
  CHECK(edge.value == doctest::Approx(norm_cdf(y)));
  CHECK(edge.d_x == 0.0);
  CHECK(edge.d_y == doctest::Approx(norm_pdf(y)));
  CHECK(edge.d_rho == 0.0);
}
