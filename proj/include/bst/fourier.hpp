#pragma once
#include <complex>
#include <cstddef>
#include <vector>

#include "bst/forward.hpp"

namespace bst {

using cplx = std::complex<double>;

// Rows of a function sampled on a uniform s grid, transformed with
// fhat(eta) = (2 pi)^(-1/2) int f(s) exp(-i eta s) ds.
struct RowSpectrum {
    std::vector<double> rows;  // E or q values
    std::vector<double> eta;   // ascending angular frequencies
    std::vector<cplx> values;  // row-major (row, eta)
    double s0 = 0.0;
    double ds = 0.0;

    std::size_t nrows() const { return rows.size(); }
    std::size_t neta() const { return eta.size(); }
    cplx& at(std::size_t r, std::size_t j) { return values[r * eta.size() + j]; }
    cplx at(std::size_t r, std::size_t j) const { return values[r * eta.size() + j]; }
};

// eta_j = 2 pi j / (n ds) for j = -floor(n/2) .. ceil(n/2) - 1.
std::vector<double> angular_frequencies(std::size_t n, double ds);

// Throws InvalidArgument when s is not uniform.
RowSpectrum fourier_rows(const std::vector<double>& rows, const std::vector<double>& s,
                         const std::vector<double>& data);
RowSpectrum fourier_in_s(const SinogramTensor& sino);
RowSpectrum fourier_in_x1(const PhantomImage& f);

// Inverse of fourier_rows; returns the real part, row-major (row, s).
std::vector<double> inverse_fourier_rows(const RowSpectrum& spec, double* max_imag = nullptr);

namespace reference {
// Direct O(n^2) summation with the same conventions.
RowSpectrum fourier_rows(const std::vector<double>& rows, const std::vector<double>& s,
                         const std::vector<double>& data);
}  // namespace reference

}  // namespace bst
