#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace prosemble {

struct Waveform {
    std::vector<double> samples;  // in [-1, 1]
    int sample_rate = 16000;
    int clipped = 0;  // samples clamped during synthesis or quantization
};

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string& s, std::uint16_t v) {
    s.push_back(static_cast<char>(v & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// 16-bit PCM mono RIFF/WAVE.
inline void write_wav(const Waveform& wav, const std::string& path) {
    const std::uint32_t n = static_cast<std::uint32_t>(wav.samples.size());
    const std::uint32_t data_bytes = n * 2;
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    detail::put_u32(out, 36 + data_bytes);
    out += "WAVE";
    out += "fmt ";
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);  // PCM
    detail::put_u16(out, 1);  // mono
    detail::put_u32(out, static_cast<std::uint32_t>(wav.sample_rate));
    detail::put_u32(out, static_cast<std::uint32_t>(wav.sample_rate * 2));
    detail::put_u16(out, 2);   // block align
    detail::put_u16(out, 16);  // bits per sample
    out += "data";
    detail::put_u32(out, data_bytes);
    for (double s : wav.samples) {
        const double clamped = std::clamp(s, -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
        detail::put_u16(out, static_cast<std::uint16_t>(v));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("wav: cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("wav: write failed for " + path);
}

inline Waveform read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("wav: cannot read " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("wav: " + path + " is not a RIFF/WAVE file");
    Waveform wav;
    std::size_t pos = 12;
    bool got_fmt = false, got_data = false;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t chunk_size = detail::get_u32(bytes.data() + pos + 4);
        if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
            if (chunk_size < 16 || pos + 8 + 16 > bytes.size()) throw std::runtime_error("wav: bad fmt chunk");
            const unsigned char* p = bytes.data() + pos + 8;
            if (detail::get_u16(p) != 1 || detail::get_u16(p + 2) != 1 || detail::get_u16(p + 14) != 16)
                throw std::runtime_error("wav: only 16-bit PCM mono is supported");
            wav.sample_rate = static_cast<int>(detail::get_u32(p + 4));
            got_fmt = true;
        } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
            if (pos + 8 + chunk_size > bytes.size()) throw std::runtime_error("wav: truncated data chunk");
            const unsigned char* p = bytes.data() + pos + 8;
            wav.samples.resize(chunk_size / 2);
            for (std::size_t i = 0; i < wav.samples.size(); ++i) {
                const auto v = static_cast<std::int16_t>(detail::get_u16(p + 2 * i));
                wav.samples[i] = static_cast<double>(v) / 32767.0;
            }
            got_data = true;
        }
        pos += 8 + chunk_size + (chunk_size & 1);
    }
    if (!got_fmt || !got_data) throw std::runtime_error("wav: missing fmt or data chunk in " + path);
    return wav;
}

}  // namespace prosemble
