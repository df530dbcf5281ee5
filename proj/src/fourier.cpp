#include "bst/fourier.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "bst/errors.hpp"

namespace bst {

namespace {

// FFTW planning is not thread-safe; execution with new arrays is.
std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

double uniform_step(const std::vector<double>& s) {
    if (s.size() < 2) throw InvalidArgument("Fourier transform needs at least 2 samples in s");
    double h = (s.back() - s.front()) / static_cast<double>(s.size() - 1);
    if (!(h > 0.0)) throw InvalidArgument("s grid must be increasing");
    for (std::size_t i = 1; i < s.size(); ++i)
        if (std::abs(s[i] - s[i - 1] - h) > 1e-9 * std::max(h, std::abs(s[i])))
            throw InvalidArgument("s grid is not uniform");
    return h;
}

// Index of frequency j (ascending order) in FFTW's natural order.
std::size_t fft_index(std::size_t j, std::size_t n) {
    long shift = static_cast<long>(n / 2);
    long k = static_cast<long>(j) - shift;
    return static_cast<std::size_t>(k < 0 ? k + static_cast<long>(n) : k);
}

}  // namespace

std::vector<double> angular_frequencies(std::size_t n, double ds) {
    std::vector<double> eta(n);
    long shift = static_cast<long>(n / 2);
    for (std::size_t j = 0; j < n; ++j)
        eta[j] = 2.0 * std::numbers::pi * static_cast<double>(static_cast<long>(j) - shift) / (n * ds);
    return eta;
}

RowSpectrum fourier_rows(const std::vector<double>& rows, const std::vector<double>& s,
                         const std::vector<double>& data) {
    const std::size_t n = s.size(), nr = rows.size();
    if (data.size() != n * nr) throw InvalidArgument("fourier_rows: data size does not match axes");
    RowSpectrum out;
    out.ds = uniform_step(s);
    out.s0 = s.front();
    out.rows = rows;
    out.eta = angular_frequencies(n, out.ds);
    out.values.assign(n * nr, {0.0, 0.0});

    fftw_complex* buf = fftw_alloc_complex(n * nr);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lk(plan_mutex());
        int len = static_cast<int>(n);
        plan = fftw_plan_many_dft(1, &len, static_cast<int>(nr), buf, nullptr, 1, len, buf, nullptr, 1, len,
                                  FFTW_FORWARD, FFTW_ESTIMATE);
    }
    for (std::size_t i = 0; i < n * nr; ++i) {
        buf[i][0] = data[i];
        buf[i][1] = 0.0;
    }
    fftw_execute(plan);
    const double scale = out.ds / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t j = 0; j < n; ++j) {
            const auto& v = buf[r * n + fft_index(j, n)];
            double ph = -out.eta[j] * out.s0;
            out.at(r, j) = scale * cplx(v[0], v[1]) * cplx(std::cos(ph), std::sin(ph));
        }
    {
        std::lock_guard<std::mutex> lk(plan_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(buf);
    return out;
}

std::vector<double> inverse_fourier_rows(const RowSpectrum& spec, double* max_imag) {
    const std::size_t n = spec.neta(), nr = spec.nrows();
    fftw_complex* buf = fftw_alloc_complex(n * nr);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lk(plan_mutex());
        int len = static_cast<int>(n);
        plan = fftw_plan_many_dft(1, &len, static_cast<int>(nr), buf, nullptr, 1, len, buf, nullptr, 1, len,
                                  FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    const double scale = std::sqrt(2.0 * std::numbers::pi) / (spec.ds * static_cast<double>(n));
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t j = 0; j < n; ++j) {
            double ph = spec.eta[j] * spec.s0;
            cplx v = spec.at(r, j) * cplx(std::cos(ph), std::sin(ph)) * scale;
            auto& b = buf[r * n + fft_index(j, n)];
            b[0] = v.real();
            b[1] = v.imag();
        }
    fftw_execute(plan);
    std::vector<double> out(n * nr);
    double mi = 0.0;
    for (std::size_t i = 0; i < n * nr; ++i) {
        out[i] = buf[i][0];
        mi = std::max(mi, std::abs(buf[i][1]));
    }
    if (max_imag) *max_imag = mi;
    {
        std::lock_guard<std::mutex> lk(plan_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(buf);
    return out;
}

RowSpectrum fourier_in_s(const SinogramTensor& sino) {
    if (!sino.d1.empty() && sino.d1.size() != 1)
        throw InvalidArgument("fourier_in_s: expects (E, s1) data; slice the detector axis first");
    return fourier_rows(sino.energies, sino.s1, sino.values);
}

RowSpectrum fourier_in_x1(const PhantomImage& f) { return fourier_rows(f.q_axis, f.x1_axis, f.values); }

namespace reference {

RowSpectrum fourier_rows(const std::vector<double>& rows, const std::vector<double>& s,
                         const std::vector<double>& data) {
    const std::size_t n = s.size(), nr = rows.size();
    RowSpectrum out;
    out.ds = uniform_step(s);
    out.s0 = s.front();
    out.rows = rows;
    out.eta = angular_frequencies(n, out.ds);
    out.values.assign(n * nr, {0.0, 0.0});
    const double scale = out.ds / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t r = 0; r < nr; ++r)
        for (std::size_t j = 0; j < n; ++j) {
            cplx sum{0.0, 0.0};
            for (std::size_t k = 0; k < n; ++k) {
                double ph = -out.eta[j] * s[k];
                sum += data[r * n + k] * cplx(std::cos(ph), std::sin(ph));
            }
            out.at(r, j) = scale * sum;
        }
    return out;
}

}  // namespace reference

}  // namespace bst
