#include "blurflow/zernike.hpp"

#include <cmath>
#include <cstdlib>

#include "blurflow/error.hpp"

namespace blurflow {
namespace {

double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

double radial(int n, int m, double rho) {
  double r = 0.0;
  for (int s = 0; s <= (n - m) / 2; ++s) {
    const double c = ((s % 2 == 0) ? 1.0 : -1.0) * factorial(n - s) /
                     (factorial(s) * factorial((n + m) / 2 - s) * factorial((n - m) / 2 - s));
    r += c * std::pow(rho, n - 2 * s);
  }
  return r;
}

}  // namespace

ZernikeOrder noll_to_order(int j) {
  if (j < 1) throw DomainError("Noll index must be >= 1");
  int n = 0;
  int remainder = j - 1;
  while (remainder > n) {
    ++n;
    remainder -= n;
  }
  // remainder is now the 0-based position within radial order n.
  const int parity = n % 2;
  int m = ((remainder + 1 + parity) / 2) * 2 - parity;
  if (m != 0 && j % 2 == 1) m = -m;
  return {n, m};
}

double zernike(int noll_index, double rho, double phi) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("Zernike radius must lie in [0, 1]");
  const auto [n, m] = noll_to_order(noll_index);
  const int am = std::abs(m);
  const double r = radial(n, am, rho);
  if (m == 0) return std::sqrt(n + 1.0) * r;
  const double norm = std::sqrt(2.0 * (n + 1.0));
  return m > 0 ? norm * r * std::cos(am * phi) : norm * r * std::sin(am * phi);
}

}  // namespace blurflow
