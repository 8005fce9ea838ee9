// 2D spectral transforms backed by FFTW. Convention: unnormalized forward
// DFT, inverse scaled by 1/N, so ifft2(fft2(f)) == f. Frequencies are in
// cycles per pixel; bin k of an N-point axis holds k/N for k <= N/2 and
// (k-N)/N above.
//
// FFTW plan creation is not thread safe; planning is serialized behind a
// mutex while execution runs unlocked on per-call buffers.
#pragma once

#include <fftw3.h>

#include <mutex>

#include "qpi/field.hpp"

namespace qpi {

namespace detail {

inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

inline void dft2_inplace(std::vector<cplx>& data, std::size_t width, std::size_t height, int sign) {
    fftw_complex* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        plan = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), p, p, sign,
                                FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(plan);
    }
}

inline void r2r2_inplace(std::vector<double>& data, std::size_t width, std::size_t height,
                         fftw_r2r_kind kind) {
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        plan = fftw_plan_r2r_2d(static_cast<int>(height), static_cast<int>(width), data.data(),
                                data.data(), kind, kind, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(plan);
    }
}

} // namespace detail

inline ComplexField fft2(const ComplexField& f) {
    f.grid.validate();
    f.require_finite("fft2");
    ComplexField out = f;
    detail::dft2_inplace(out.values, f.grid.width, f.grid.height, FFTW_FORWARD);
    return out;
}

inline ComplexField ifft2(const ComplexField& f) {
    f.grid.validate();
    f.require_finite("ifft2");
    ComplexField out = f;
    detail::dft2_inplace(out.values, f.grid.width, f.grid.height, FFTW_BACKWARD);
    const double scale = 1.0 / static_cast<double>(f.grid.size());
    for (cplx& v : out.values) v *= scale;
    return out;
}

// DCT-II along both axes (unnormalized, FFTW REDFT10).
inline void dct2(std::vector<double>& data, std::size_t width, std::size_t height) {
    detail::r2r2_inplace(data, width, height, FFTW_REDFT10);
}

// Inverse of dct2 including the 4*N normalization.
inline void idct2(std::vector<double>& data, std::size_t width, std::size_t height) {
    detail::r2r2_inplace(data, width, height, FFTW_REDFT01);
    const double scale = 1.0 / (4.0 * static_cast<double>(width) * static_cast<double>(height));
    for (double& v : data) v *= scale;
}

// Signed frequency of DFT bin k on an n-point axis, cycles per pixel.
inline double bin_frequency(std::size_t k, std::size_t n) {
    return (k <= n / 2) ? static_cast<double>(k) / static_cast<double>(n)
                        : (static_cast<double>(k) - static_cast<double>(n)) / static_cast<double>(n);
}

// Minimal cyclic distance between two frequencies in cycles/pixel.
inline double cyclic_freq_distance(double fa, double fb) {
    double d = std::fmod(std::abs(fa - fb), 1.0);
    return std::min(d, 1.0 - d);
}

} // namespace qpi
