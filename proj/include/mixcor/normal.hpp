#pragma once

// Univariate and bivariate standard normal primitives.
//
// Infinite arguments are legal everywhere a threshold may appear: the
// implicit outer cut points of an ordinal variable are -inf and +inf, and
// phi(+-inf) = 0, Phi(-inf) = 0, Phi(+inf) = 1 hold exactly.

namespace mixcor {

// Correlations are confined to [-kRhoBound, kRhoBound] everywhere.
inline constexpr double kRhoBound = 0.999;

enum class LegendreOrder { Second = 2, Third = 3 };

double norm_pdf(double z);
double norm_cdf(double z);

// Inverse of norm_cdf. Throws OutOfRange unless 0 < p < 1.
double norm_quantile(double p);

// Bivariate standard normal density. Throws SingularCorrelation if |rho| >= 1.
double binorm_pdf(double x, double y, double rho);

// d/drho of binorm_pdf (equivalently the mixed second derivative in x, y).
double binorm_pdf_drho(double x, double y, double rho);

// Gauss-Legendre approximation of P(X <= x, Y <= y) obtained by integrating
// the density over the correlation from 0 to rho with two or three nodes.
// Throws SingularCorrelation if |rho| > kRhoBound.
double binorm_cdf_legendre(double x, double y, double rho,
                           LegendreOrder order = LegendreOrder::Third);

// Slow reference value: adaptive Gauss-Kronrod quadrature of the same
// integral, absolute error well below 1e-10. Meant for tests and oracles.
double binorm_cdf_oracle(double x, double y, double rho);

struct CdfPartials {
  double value = 0.0;
  double d_x = 0.0;
  double d_y = 0.0;
  double d_rho = 0.0;
};

// A bivariate normal CDF rule together with its partial derivatives.
//
// The Legendre rules return the exact derivatives of the approximation they
// evaluate, so that a gradient assembled from them is the true gradient of
// the moment conditions being minimized. The quadrature rule returns the
// closed-form derivatives of the exact CDF:
//   dPhi2/dx   = phi(x) Phi((y - rho x) / sqrt(1 - rho^2))
//   dPhi2/drho = phi2(x, y; rho)
// Partials with respect to an infinite argument are reported as zero.
class BivariateCdf {
 public:
  enum class Method { Legendre, Quadrature };

  // Implicit so that a LegendreOrder can be passed wherever a rule is taken.
  constexpr BivariateCdf(LegendreOrder order = LegendreOrder::Third)  // NOLINT
      : method_(Method::Legendre), order_(order) {}

  static constexpr BivariateCdf quadrature() {
    BivariateCdf rule;
    rule.method_ = Method::Quadrature;
    return rule;
  }

  Method method() const { return method_; }
  LegendreOrder order() const { return order_; }

  double operator()(double x, double y, double rho) const;
  CdfPartials partials(double x, double y, double rho) const;

 private:
  Method method_;
  LegendreOrder order_;
};

}  // namespace mixcor
