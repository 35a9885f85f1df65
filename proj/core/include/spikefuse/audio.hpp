#pragma once

#include <string>
#include <vector>

#include "spikefuse/common.hpp"

namespace spikefuse {

struct Waveform {
    std::size_t sample_rate = 0;
    std::vector<double> samples;  // mono, nominally in [-1, 1]
};

struct AudioPipelineConfig {
    std::size_t sample_rate = 22050;
    std::size_t n_fft = 512;
    std::size_t hop = 353;
    double log_offset = 1e-7;
    std::size_t target_hw = 32;

    void validate() const {
        check(hop >= 1 && hop <= n_fft, "hop must lie in [1, n_fft]");
        check(log_offset > 0.0, "log offset must be positive");
        check(n_fft >= 2 && (n_fft & (n_fft - 1)) == 0, "FFT length must be a power of two");
        check(target_hw >= 1, "target extent must be positive");
    }
};

/// PCM WAV reader: 16-bit integer or 32-bit float, mono or stereo (stereo is
/// averaged down to mono).
Waveform load_wav(const std::string& path);

/// Writes mono 16-bit PCM; samples are clamped to [-1, 1].
void save_wav(const std::string& path, const Waveform& w);

/// Peak normalization to [-1, 1]; an all-zero signal is returned unchanged.
std::vector<double> peak_normalize(const std::vector<double>& x);

/// Linear-interpolation resampling.
std::vector<double> resample_linear(const std::vector<double>& x, std::size_t sr_in,
                                    std::size_t sr_out);

/// In-place iterative radix-2 FFT over interleaved complex pairs
/// (re0, im0, re1, im1, ...); n must be a power of two.
void fft_radix2(std::vector<double>& interleaved);

/// Hann-windowed magnitude STFT with centered frames and reflect padding.
/// Returns frames-major data: out[frame * bins + bin], bins = n_fft/2 + 1.
struct Spectrogram {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::vector<double> mag;  // [frames, bins]
};
Spectrogram stft_magnitude(const std::vector<double>& x, std::size_t n_fft, std::size_t hop);

/// Bilinear resize of a [h, w] plane to [oh, ow].
std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t h,
                                    std::size_t w, std::size_t oh, std::size_t ow);

/// Full pipeline: peak normalize -> resample -> magnitude STFT -> log with
/// offset -> bilinear resize to [target, target]. Output is row-major with
/// frequency bins along rows (height) and frames along columns (width).
std::vector<double> audio_to_logspec(const Waveform& w, const AudioPipelineConfig& cfg);

}  // namespace spikefuse
