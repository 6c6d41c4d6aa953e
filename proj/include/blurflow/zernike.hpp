#pragma once

namespace blurflow {

struct ZernikeOrder {
  int n;  // radial order
  int m;  // signed azimuthal frequency; negative selects the sine term
};

// Noll's sequential index (j >= 1) to (n, m). Even j carry cos terms, odd j sin terms.
ZernikeOrder noll_to_order(int noll_index);

// Noll-indexed, Noll-normalized Zernike polynomial on the unit disk.
// Throws DomainError for noll_index < 1 or rho outside [0, 1].
double zernike(int noll_index, double rho, double phi);

}  // namespace blurflow
