#include "spikefuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

namespace spikefuse {
namespace {

namespace fs = std::filesystem;

constexpr std::size_t kGlyphCells = 6;
constexpr std::size_t kGlyphScale = 3;  // rendered glyph is 18x18 pixels
constexpr std::size_t kToneSamples = 11025;
constexpr std::size_t kToneRate = 22050;

/// Class-specific 6x6 bitmask. Depends only on the class index (not the
/// dataset seed), so every dataset draw poses the same classification task.
std::uint64_t glyph_bits(std::size_t k) {
    for (std::uint64_t salt = 0;; ++salt) {
        Rng g(0x9e3779b97f4a7c15ULL ^ (k * 0x100000001b3ULL) ^ (salt << 48));
        std::uint64_t bits = 0;
        int pop = 0;
        for (std::size_t i = 0; i < kGlyphCells * kGlyphCells; ++i) {
            if (g.uniform() < 0.5) {
                bits |= 1ULL << i;
                ++pop;
            }
        }
        if (pop >= 12 && pop <= 26) return bits;
    }
}

/// Saturated hue wheel; keeps classes far apart in color space.
void class_color(std::size_t k, std::size_t classes, double rgb[3]) {
    double h = 6.0 * static_cast<double>(k) / static_cast<double>(classes);
    int sector = static_cast<int>(h) % 6;
    double f = h - std::floor(h);
    double q = 1.0 - f;
    switch (sector) {
        case 0: rgb[0] = 1; rgb[1] = f; rgb[2] = 0.15; break;
        case 1: rgb[0] = q; rgb[1] = 1; rgb[2] = 0.15; break;
        case 2: rgb[0] = 0.15; rgb[1] = 1; rgb[2] = f; break;
        case 3: rgb[0] = 0.15; rgb[1] = q; rgb[2] = 1; break;
        case 4: rgb[0] = f; rgb[1] = 0.15; rgb[2] = 1; break;
        default: rgb[0] = 1; rgb[1] = 0.15; rgb[2] = q; break;
    }
}

unsigned char to_u8(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(v * 255.0));
}

/// Mirrors the 16-bit PCM round trip of save_wav/load_wav so the in-memory
/// dataset matches a written-then-loaded tree exactly.
double quantize_pcm16(double v) {
    v = std::clamp(v, -1.0, 1.0);
    return static_cast<double>(std::lround(v * 32767.0)) / 32768.0;
}

std::string class_dir_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class%02zu", k);
    return buf;
}

std::string sample_base_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%04zu", index);
    return buf;
}

}  // namespace

RawSample synth_raw_sample(std::size_t classes, std::size_t k, std::size_t index,
                           std::uint64_t seed, std::size_t hw) {
    check(classes >= 2, "need at least 2 classes, got ", classes);
    check(classes <= 20, "class tone 500*(k+1) Hz must stay below Nyquist; max 20 classes");
    check(k < classes, "class index ", k, " out of range");
    const std::size_t glyph_px = kGlyphCells * kGlyphScale;
    check(hw >= glyph_px + 4, "image extent ", hw, " too small for the glyph");

    Rng rng = Rng(seed).fork(k * 1000003ULL + index);
    RawSample raw;
    raw.class_name = class_dir_name(k);
    raw.id = sample_base_name(index);
    raw.label = k;

    // Visual: noisy dark background, colored glyph at a jittered position.
    raw.img.height = hw;
    raw.img.width = hw;
    raw.img.rgb.assign(hw * hw * 3, 0);
    for (std::size_t i = 0; i < hw * hw; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            raw.img.rgb[i * 3 + c] = to_u8(0.12 + 0.05 * rng.normal());
        }
    }
    const std::uint64_t bits = glyph_bits(k);
    double color[3];
    class_color(k, classes, color);
    const std::size_t lo = 2, hi = hw - glyph_px - 2;
    const std::size_t oy = lo + rng.uniform_int(hi - lo + 1);
    const std::size_t ox = lo + rng.uniform_int(hi - lo + 1);
    for (std::size_t gy = 0; gy < kGlyphCells; ++gy) {
        for (std::size_t gx = 0; gx < kGlyphCells; ++gx) {
            if (!((bits >> (gy * kGlyphCells + gx)) & 1u)) continue;
            for (std::size_t dy = 0; dy < kGlyphScale; ++dy) {
                for (std::size_t dx = 0; dx < kGlyphScale; ++dx) {
                    std::size_t y = oy + gy * kGlyphScale + dy;
                    std::size_t x = ox + gx * kGlyphScale + dx;
                    for (std::size_t c = 0; c < 3; ++c) {
                        double v = 0.92 * color[c] + 0.04 * rng.normal();
                        raw.img.rgb[(y * hw + x) * 3 + c] = to_u8(v);
                    }
                }
            }
        }
    }

    // Audio: class tone with random phase plus Gaussian noise.
    raw.wav.sample_rate = kToneRate;
    raw.wav.samples.resize(kToneSamples);
    const double freq = 500.0 * static_cast<double>(k + 1);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (std::size_t i = 0; i < kToneSamples; ++i) {
        double t = static_cast<double>(i) / static_cast<double>(kToneRate);
        double v = 0.8 * std::sin(2.0 * M_PI * freq * t + phase) + 0.03 * rng.normal();
        raw.wav.samples[i] = quantize_pcm16(v);
    }

    // Events: one spike per glyph pixel, swept left to right over 100 ms,
    // polarity from a pixel checkerboard.
    for (std::size_t gx = 0; gx < kGlyphCells; ++gx) {
        for (std::size_t gy = 0; gy < kGlyphCells; ++gy) {
            if (!((bits >> (gy * kGlyphCells + gx)) & 1u)) continue;
            Event e;
            e.t = static_cast<std::int64_t>(gx * kGlyphCells + gy) * 2777;
            e.x = static_cast<int>(ox + gx * kGlyphScale);
            e.y = static_cast<int>(oy + gy * kGlyphScale);
            e.polarity = static_cast<int>((gx + gy) % 2);
            raw.events.events.push_back(e);
        }
    }
    return raw;
}

Sample preprocess_raw(const RawSample& raw, std::size_t hw) {
    Sample s;
    s.class_name = raw.class_name;
    s.id = raw.id;
    s.label = raw.label;
    AudioPipelineConfig acfg;
    acfg.target_hw = hw;
    s.audio = audio_to_logspec(raw.wav, acfg);
    s.visual = image_to_planes(raw.img, hw);
    return s;
}

Dataset synth_dataset(std::size_t classes, std::size_t per_class, std::uint64_t seed,
                      std::size_t hw) {
    check(per_class >= 1, "need at least one sample per class");
    Dataset d;
    d.hw = hw;
    for (std::size_t k = 0; k < classes; ++k) d.class_names.push_back(class_dir_name(k));
    d.samples.reserve(classes * per_class);
    for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t i = 0; i < per_class; ++i) {
            d.samples.push_back(preprocess_raw(synth_raw_sample(classes, k, i, seed, hw), hw));
        }
    }
    return d;
}

void write_synth_dataset(const std::string& root, std::size_t classes, std::size_t per_class,
                         std::uint64_t seed, std::size_t hw) {
    check(per_class >= 1, "need at least one sample per class");
    for (std::size_t k = 0; k < classes; ++k) {
        fs::path dir = fs::path(root) / class_dir_name(k);
        std::error_code ec;
        fs::create_directories(dir, ec);
        check(!ec, "cannot create ", dir.string(), ": ", ec.message());
        for (std::size_t i = 0; i < per_class; ++i) {
            RawSample raw = synth_raw_sample(classes, k, i, seed, hw);
            fs::path base = dir / raw.id;
            save_wav(base.string() + ".wav", raw.wav);
            save_png(base.string() + ".png", raw.img);
            save_events(base.string() + ".evt", raw.events);
        }
    }
}

Dataset load_dataset(const std::string& root, std::size_t hw) {
    check(fs::is_directory(root), "dataset root ", root, " is not a directory");
    Dataset d;
    d.hw = hw;
    std::vector<std::string> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    check(!class_dirs.empty(), "dataset root ", root, " has no class directories");
    d.class_names = class_dirs;
    for (std::size_t k = 0; k < class_dirs.size(); ++k) {
        fs::path dir = fs::path(root) / class_dirs[k];
        std::set<std::string> bases;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            fs::path p = entry.path();
            if (p.extension() == ".wav") bases.insert(p.stem().string());
        }
        check(!bases.empty(), "class directory ", dir.string(), " has no .wav files");
        for (const std::string& base : bases) {
            fs::path stem = dir / base;
            std::string png = stem.string() + ".png";
            check(fs::exists(png), "sample ", stem.string(), " is missing its .png pair");
            RawSample raw;
            raw.class_name = class_dirs[k];
            raw.id = base;
            raw.label = k;
            raw.wav = load_wav(stem.string() + ".wav");
            raw.img = load_png(png);
            d.samples.push_back(preprocess_raw(raw, hw));
        }
    }
    return d;
}

}  // namespace spikefuse
