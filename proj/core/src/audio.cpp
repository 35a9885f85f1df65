#include "spikefuse/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace spikefuse {

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}
std::uint16_t rd_u16(const unsigned char* p) {
    return std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8);
}

void wr_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
}
void wr_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

Waveform load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open WAV file '", path, "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    check(bytes.size() >= 44, "WAV file '", path, "' is too short");
    check(std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          "'", path, "' is not a RIFF/WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = rd_u32(bytes.data() + pos + 4);
        const unsigned char* body = bytes.data() + pos + 8;
        check(pos + 8 + len <= bytes.size(), "truncated chunk in WAV file '", path, "'");
        if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
            check(len >= 16, "malformed fmt chunk in '", path, "'");
            format = rd_u16(body);
            channels = rd_u16(body + 2);
            rate = rd_u32(body + 4);
            bits = rd_u16(body + 14);
        } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
            data = body;
            data_len = len;
        }
        pos += 8 + len + (len & 1);
    }
    check(data != nullptr && rate > 0, "WAV file '", path, "' has no data chunk");
    check(channels == 1 || channels == 2, "WAV file '", path, "' has ", channels,
          " channels; expected mono or stereo");
    const bool pcm16 = format == 1 && bits == 16;
    const bool f32 = format == 3 && bits == 32;
    check(pcm16 || f32, "WAV file '", path, "' must be 16-bit PCM or 32-bit float");

    const std::size_t bytes_per = (pcm16 ? 2u : 4u) * channels;
    const std::size_t n = data_len / bytes_per;
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const unsigned char* p = data + (i * channels + c) * (pcm16 ? 2 : 4);
            if (pcm16) {
                const std::int16_t v = static_cast<std::int16_t>(rd_u16(p));
                acc += static_cast<double>(v) / 32768.0;
            } else {
                float f;
                std::memcpy(&f, p, 4);
                acc += static_cast<double>(f);
            }
        }
        w.samples[i] = acc / channels;
    }
    return w;
}

void save_wav(const std::string& path, const Waveform& w) {
    check(w.sample_rate > 0, "waveform has no sample rate");
    std::ofstream os(path, std::ios::binary);
    check(os.good(), "cannot write WAV file '", path, "'");
    const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * 2);
    os.write("RIFF", 4);
    wr_u32(os, 36 + data_len);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    wr_u32(os, 16);
    wr_u16(os, 1);  // PCM
    wr_u16(os, 1);  // mono
    wr_u32(os, static_cast<std::uint32_t>(w.sample_rate));
    wr_u32(os, static_cast<std::uint32_t>(w.sample_rate * 2));
    wr_u16(os, 2);
    wr_u16(os, 16);
    os.write("data", 4);
    wr_u32(os, data_len);
    for (double s : w.samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::lrint(c * 32767.0));
        wr_u16(os, static_cast<std::uint16_t>(v));
    }
    check(os.good(), "write failed for '", path, "'");
}

std::vector<double> peak_normalize(const std::vector<double>& x) {
    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return x;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / peak;
    return out;
}

std::vector<double> resample_linear(const std::vector<double>& x, std::size_t sr_in,
                                    std::size_t sr_out) {
    check(sr_in > 0 && sr_out > 0, "sample rates must be positive");
    if (sr_in == sr_out || x.empty()) return x;
    const double ratio = static_cast<double>(sr_in) / static_cast<double>(sr_out);
    const std::size_t n =
        static_cast<std::size_t>(std::floor((x.size() - 1) / ratio)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = i * ratio;
        const std::size_t i0 = static_cast<std::size_t>(pos);
        const double frac = pos - i0;
        const std::size_t i1 = std::min(i0 + 1, x.size() - 1);
        out[i] = x[i0] * (1.0 - frac) + x[i1] * frac;
    }
    return out;
}

void fft_radix2(std::vector<double>& a) {
    const std::size_t n = a.size() / 2;
    check(n >= 1 && (n & (n - 1)) == 0, "FFT length must be a power of two, got ", n);
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(a[2 * i], a[2 * j]);
            std::swap(a[2 * i + 1], a[2 * j + 1]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::size_t u = 2 * (i + j), v = 2 * (i + j + len / 2);
                const double xr = a[v] * cr - a[v + 1] * ci;
                const double xi = a[v] * ci + a[v + 1] * cr;
                a[v] = a[u] - xr;
                a[v + 1] = a[u + 1] - xi;
                a[u] += xr;
                a[u + 1] += xi;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

Spectrogram stft_magnitude(const std::vector<double>& x, std::size_t n_fft, std::size_t hop) {
    check(n_fft >= 2 && (n_fft & (n_fft - 1)) == 0, "FFT length must be a power of two");
    check(hop >= 1 && hop <= n_fft, "hop must lie in [1, n_fft]");
    check(x.size() >= n_fft, "signal of ", x.size(), " samples is shorter than one window of ",
          n_fft);

    // centered frames over a reflect-padded signal
    const std::size_t pad = n_fft / 2;
    std::vector<double> padded(x.size() + 2 * pad);
    for (std::size_t i = 0; i < padded.size(); ++i) {
        std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad);
        const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(x.size()) - 1;
        if (idx < 0) idx = -idx;
        if (idx > last) idx = 2 * last - idx;
        padded[i] = x[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, last))];
    }

    std::vector<double> window(n_fft);
    for (std::size_t i = 0; i < n_fft; ++i)
        window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / static_cast<double>(n_fft)));

    Spectrogram spec;
    spec.bins = n_fft / 2 + 1;
    spec.frames = (padded.size() - n_fft) / hop + 1;
    spec.mag.resize(spec.frames * spec.bins);
    std::vector<double> buf(2 * n_fft);
    for (std::size_t f = 0; f < spec.frames; ++f) {
        const double* src = padded.data() + f * hop;
        for (std::size_t i = 0; i < n_fft; ++i) {
            buf[2 * i] = src[i] * window[i];
            buf[2 * i + 1] = 0.0;
        }
        fft_radix2(buf);
        for (std::size_t b = 0; b < spec.bins; ++b)
            spec.mag[f * spec.bins + b] = std::hypot(buf[2 * b], buf[2 * b + 1]);
    }
    return spec;
}

std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t h,
                                    std::size_t w, std::size_t oh, std::size_t ow) {
    check(h >= 1 && w >= 1 && oh >= 1 && ow >= 1, "resize extents must be positive");
    check(src.size() == h * w, "resize source size mismatch");
    std::vector<double> out(oh * ow);
    const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
    for (std::size_t y = 0; y < oh; ++y) {
        const double fy = y * sy;
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double ty = fy - y0;
        for (std::size_t x = 0; x < ow; ++x) {
            const double fx = x * sx;
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double tx = fx - x0;
            const double top = src[y0 * w + x0] * (1 - tx) + src[y0 * w + x1] * tx;
            const double bot = src[y1 * w + x0] * (1 - tx) + src[y1 * w + x1] * tx;
            out[y * ow + x] = top * (1 - ty) + bot * ty;
        }
    }
    return out;
}

std::vector<double> audio_to_logspec(const Waveform& w, const AudioPipelineConfig& cfg) {
    cfg.validate();
    check(!w.samples.empty(), "empty waveform");
    std::vector<double> x = peak_normalize(w.samples);
    x = resample_linear(x, w.sample_rate, cfg.sample_rate);
    check(x.size() >= cfg.n_fft, "waveform too short: ", x.size(),
          " samples after resampling, need at least ", cfg.n_fft);
    Spectrogram spec = stft_magnitude(x, cfg.n_fft, cfg.hop);
    std::vector<double> logmag(spec.mag.size());
    for (std::size_t i = 0; i < spec.mag.size(); ++i)
        logmag[i] = std::log(spec.mag[i] + cfg.log_offset);
    // transpose to [bins, frames] so frequency runs along image height
    std::vector<double> plane(spec.bins * spec.frames);
    for (std::size_t f = 0; f < spec.frames; ++f)
        for (std::size_t b = 0; b < spec.bins; ++b)
            plane[b * spec.frames + f] = logmag[f * spec.bins + b];
    return resize_bilinear(plane, spec.bins, spec.frames, cfg.target_hw, cfg.target_hw);
}

}  // namespace spikefuse
