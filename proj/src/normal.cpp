#include "mixcor/normal.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mixcor/errors.hpp"

namespace mixcor {
namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

struct Node {
  double position;  // fraction of rho
  double weight;    // sums to one over a rule
};

// Gauss-Legendre nodes mapped from [-1, 1] onto [0, 1].
constexpr std::array<Node, 2> kSecondOrder{{
    {(3.0 - 1.7320508075688772935) / 6.0, 0.5},
    {(3.0 + 1.7320508075688772935) / 6.0, 0.5},
}};

constexpr std::array<Node, 3> kThirdOrder{{
    {(1.0 - 0.7745966692414833770) / 2.0, 5.0 / 18.0},
    {0.5, 8.0 / 18.0},
    {(1.0 + 0.7745966692414833770) / 2.0, 5.0 / 18.0},
}};

std::span<const Node> nodes_for(LegendreOrder order) {
  if (order == LegendreOrder::Second) return kSecondOrder;
  return kThirdOrder;
}

void check_rho(double rho) {
  if (!(std::fabs(rho) <= kRhoBound)) {
    throw SingularCorrelation("correlation " + std::to_string(rho) + " outside [-" +
                              std::to_string(kRhoBound) + ", " + std::to_string(kRhoBound) + "]");
  }
}

// Handles the cases where at least one argument is infinite. Returns true
// and fills `out` if the value is determined without integration.
bool infinite_corner(double x, double y, CdfPartials& out) {
  if (std::isfinite(x) && std::isfinite(y)) return false;
  out = {};
  if (x == -std::numeric_limits<double>::infinity() ||
      y == -std::numeric_limits<double>::infinity()) {
    return true;
  }
  if (std::isinf(x) && std::isinf(y)) {
    out.value = 1.0;
  } else if (std::isinf(x)) {
    out.value = norm_cdf(y);
    out.d_y = norm_pdf(y);
  } else {
    out.value = norm_cdf(x);
    out.d_x = norm_pdf(x);
  }
  return true;
}

CdfPartials legendre_partials(double x, double y, double rho, LegendreOrder order) {
  CdfPartials out;
  if (infinite_corner(x, y, out)) return out;

  const double px = norm_cdf(x);
  const double py = norm_cdf(y);
  out.value = px * py;
  out.d_x = norm_pdf(x) * py;
  out.d_y = px * norm_pdf(y);
  if (rho == 0.0) {
    out.d_rho = binorm_pdf(x, y, 0.0);
    return out;
  }

  double integral = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double drho = 0.0;
  for (const Node& node : nodes_for(order)) {
    const double r = node.position * rho;
    const double one_minus = 1.0 - r * r;
    const double density = binorm_pdf(x, y, r);
    integral += node.weight * density;
    dx -= node.weight * density * (x - r * y) / one_minus;
    dy -= node.weight * density * (y - r * x) / one_minus;
    drho += node.weight * (density + r * binorm_pdf_drho(x, y, r));
  }
  out.value += rho * integral;
  out.d_x += rho * dx;
  out.d_y += rho * dy;
  out.d_rho = drho;
  return out;
}

// Substituting r = sin(u * asin(rho)) turns phi2(x, y; r) dr into a bounded,
// smooth integrand on [0, 1].
double quadrature_value(double x, double y, double rho) {
  if (rho == 0.0) return norm_cdf(x) * norm_cdf(y);
  const double a = x * x + y * y;
  const double b = 2.0 * x * y;
  const double span = std::asin(rho);
  auto integrand = [a, b, span](double u) {
    const double t = u * span;
    const double c = std::cos(t);
    return std::exp(-(a - b * std::sin(t)) / (2.0 * c * c));
  };
  double error = 0.0;
  const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, 0.0, 1.0, 15, 1e-13, &error);
  return norm_cdf(x) * norm_cdf(y) + span * integral / (2.0 * M_PI);
}

CdfPartials quadrature_partials(double x, double y, double rho) {
  CdfPartials out;
  if (infinite_corner(x, y, out)) return out;
  out.value = quadrature_value(x, y, rho);
  const double s = std::sqrt(1.0 - rho * rho);
  out.d_x = norm_pdf(x) * norm_cdf((y - rho * x) / s);
  out.d_y = norm_pdf(y) * norm_cdf((x - rho * y) / s);
  out.d_rho = binorm_pdf(x, y, rho);
  return out;
}

// Wichura's algorithm AS 241 (PPND16), about 1e-16 relative accuracy.
double wichura_quantile(double p) {
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                  0.24178072517745061177) * r + 1.27045825245236838258) * r +
                3.64784832476320460504) * r + 5.7694972214606914055) * r +
              4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                  0.0151986665636164571966) * r + 0.14810397642748007459) * r +
                0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  0.0012426609473880784386) * r + 0.026532189526576123093) * r +
                0.29656057182850489123) * r + 1.7848265399172913358) * r +
              5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                  1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

}  // namespace

double norm_pdf(double z) {
  if (std::isinf(z)) return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

double norm_cdf(double z) {
  if (z == std::numeric_limits<double>::infinity()) return 1.0;
  if (z == -std::numeric_limits<double>::infinity()) return 0.0;
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw OutOfRange("norm_quantile requires 0 < p < 1, got " + std::to_string(p));
  }
  return wichura_quantile(p);
}

double binorm_pdf(double x, double y, double rho) {
  if (!(std::fabs(rho) < 1.0)) {
    throw SingularCorrelation("binorm_pdf requires |rho| < 1, got " + std::to_string(rho));
  }
  if (std::isinf(x) || std::isinf(y)) return 0.0;
  const double one_minus = 1.0 - rho * rho;
  const double quad = x * x - 2.0 * rho * x * y + y * y;
  return std::exp(-0.5 * quad / one_minus) /
         (2.0 * std::numbers::pi * std::sqrt(one_minus));
}

double binorm_pdf_drho(double x, double y, double rho) {
  if (std::isinf(x) || std::isinf(y)) return 0.0;
  const double one_minus = 1.0 - rho * rho;
  const double quad = x * x - 2.0 * rho * x * y + y * y;
  const double score =
      rho / one_minus + (x * y * one_minus - rho * quad) / (one_minus * one_minus);
  return binorm_pdf(x, y, rho) * score;
}

double binorm_cdf_legendre(double x, double y, double rho, LegendreOrder order) {
  check_rho(rho);
  return legendre_partials(x, y, rho, order).value;
}

double binorm_cdf_oracle(double x, double y, double rho) {
  check_rho(rho);
  CdfPartials corner;
  if (infinite_corner(x, y, corner)) return corner.value;
  return quadrature_value(x, y, rho);
}

double BivariateCdf::operator()(double x, double y, double rho) const {
  return partials(x, y, rho).value;
}

CdfPartials BivariateCdf::partials(double x, double y, double rho) const {
  check_rho(rho);
  if (method_ == Method::Quadrature) return quadrature_partials(x, y, rho);
  return legendre_partials(x, y, rho, order_);
}

}  // namespace mixcor
