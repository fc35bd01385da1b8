#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace prosemble {

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    constexpr double kTau = 6.283185307179586;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -kTau / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Power spectrum of a real signal zero-padded to fft_size; returns
// fft_size/2 + 1 bins.
inline std::vector<double> power_spectrum(const std::vector<double>& frame, std::size_t fft_size) {
    if (frame.size() > fft_size) throw std::invalid_argument("frame longer than fft size");
    std::vector<std::complex<double>> buf(fft_size, {0.0, 0.0});
    for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = {frame[i], 0.0};
    fft_radix2(buf);
    std::vector<double> power(fft_size / 2 + 1);
    for (std::size_t i = 0; i < power.size(); ++i) power[i] = std::norm(buf[i]);
    return power;
}

}  // namespace prosemble
