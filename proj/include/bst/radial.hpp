#pragma once

namespace bst {

// Surface measure of the unit k-sphere S^k in R^(k+1); V_0 = 2.
double sphere_area(int k);

// J_n(u) = V_(n-2) int_0^pi sin^(n-2)(phi) cos(u cos phi) dphi for n >= 2,
// and 2 cos(u) for n = 1 (the two-point sphere S^0).
double radial_J(int n, double u);
double radial_dJ(int n, double u);

// Maclaurin series of the same integral, usable for |u| <= 10.
double radial_J_series(int n, double u);

}  // namespace bst
