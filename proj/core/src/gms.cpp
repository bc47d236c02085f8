#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "perfpred/solvers.hpp"

namespace perfpred {

double gms_fixed_point(const ScalarResponse& response, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("gms_fixed_point: tol must be > 0");
  const auto f = [&response](double y) { return response(y) - y; };
  double lo = 0.0;
  double hi = 1.0;
  const double f_lo = f(lo);
  const double f_hi = f(hi);
  if (f_lo < -tol || f_hi > tol)
    throw std::domain_error(fmt::format(
        "gms_fixed_point: response leaves [0, 1] at an endpoint (R(0) = {}, R(1) = {})",
        response(0.0), response(1.0)));

  const double mid0 = 0.5;
  if (std::abs(f_lo) <= tol && std::abs(f_hi) <= tol && std::abs(f(mid0)) <= tol) return mid0;
  if (std::abs(f_lo) <= tol) return lo;
  if (std::abs(f_hi) <= tol) return hi;

  // Invariant: f(lo) > 0 > f(hi). Stop at half the tolerance so the residual
  // survives re-evaluation by callers with different rounding.
  for (int it = 0; it < 2000; ++it) {
    const double mid = lo + 0.5 * (hi - lo);
    const double fm = f(mid);
    if (std::abs(fm) <= 0.5 * tol) return mid;
    if (mid <= lo || mid >= hi) break;
    if (fm > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double best = std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
  if (std::abs(f(best)) <= tol) return best;
  throw std::runtime_error(fmt::format(
      "gms_fixed_point: bracket collapsed at {} with residual {} > tol", best, std::abs(f(best))));
}

}  // namespace perfpred
