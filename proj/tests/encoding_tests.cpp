#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "spikefuse/audio.hpp"
#include "spikefuse/encoding.hpp"
#include "spikefuse/events.hpp"
#include "test_support.hpp"

using namespace spikefuse;
using testsup::all_binary;
using testsup::bit_equal;
using testsup::near;

TEST_CASE("direct coding replicates the input across time") {
    Rng rng(3);
    TensorD x = TensorD::randn(rng, {2, 3});
    TensorD y = direct_code(x, 4);
    REQUIRE(y.shape() == Shape{4, 2, 3});
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(bit_equal(slice0(y, t).values(), x.values()));
    }
    TensorD y1 = direct_code(x, 1);
    REQUIRE(y1.shape() == Shape{1, 2, 3});
    CHECK(y1.values() == x.values());
    CHECK_THROWS_AS(direct_code(x, 0), std::invalid_argument);
}

TEST_CASE("direct coding gradients sum over the time copies") {
    TensorD x = TensorD::from({1.0, 2.0}, {2}).set_requires_grad(true);
    TensorD y = direct_code(x, 3);
    sum_all(y).backward();
    CHECK(x.grad() == std::vector<double>{3.0, 3.0});
}

TEST_CASE("time-averaging a direct code recovers the static input") {
    Rng rng(4);
    TensorD x = TensorD::randn(rng, {2, 5});
    TensorD avg = reduce_mean(direct_code(x, 7), 0);
    CHECK(testsup::max_abs_diff(avg.values(), x.values()) <= 1e-15);
}

TEST_CASE("a single event lands in the first frame only") {
    EventStream s;
    s.events.push_back({0, 2, 1, 1});
    std::vector<double> frames = aggregate_events(s, 3, 4, 4);
    REQUIRE(frames.size() == 3 * 2 * 4 * 4);
    double total = 0.0;
    for (double v : frames) total += v;
    CHECK(total == 1.0);
    // Frame 0, polarity 1, y=1, x=2.
    CHECK(frames[(0 * 2 + 1) * 16 + 1 * 4 + 2] == 1.0);
}

TEST_CASE("duplicate events clip to one but count without clipping") {
    EventStream s;
    s.events.push_back({0, 1, 1, 0});
    s.events.push_back({1, 1, 1, 0});
    std::vector<double> clipped = aggregate_events(s, 1, 2, 2, true);
    std::vector<double> raw = aggregate_events(s, 1, 2, 2, false);
    CHECK(clipped[(0 * 2 + 0) * 4 + 1 * 2 + 1] == 1.0);
    CHECK(raw[(0 * 2 + 0) * 4 + 1 * 2 + 1] == 2.0);
}

TEST_CASE("random events match an explicit binning oracle before clipping") {
    Rng rng(11);
    const std::size_t T = 4, H = 6, W = 5;
    EventStream s;
    std::int64_t t = 0;
    for (int i = 0; i < 300; ++i) {
        t += static_cast<std::int64_t>(rng.uniform_int(8));
        s.events.push_back({t, static_cast<int>(rng.uniform_int(W)),
                            static_cast<int>(rng.uniform_int(H)),
                            static_cast<int>(rng.uniform_int(2))});
    }
    std::vector<double> got = aggregate_events(s, T, H, W, false);

    // Oracle: equal time bins over [t0, t1], the last bin closed.
    const std::int64_t t0 = s.events.front().t, t1 = s.events.back().t;
    std::vector<double> want(T * 2 * H * W, 0.0);
    for (const Event& e : s.events) {
        std::size_t bin;
        if (t1 == t0) {
            bin = 0;
        } else {
            bin = static_cast<std::size_t>((e.t - t0) * static_cast<std::int64_t>(T) /
                                           (t1 - t0 + 1));
        }
        want[((bin * 2 + static_cast<std::size_t>(e.polarity)) * H +
              static_cast<std::size_t>(e.y)) *
                 W +
             static_cast<std::size_t>(e.x)] += 1.0;
    }
    CHECK(got == want);
}

TEST_CASE("event aggregation conserves the pre-clip total count") {
    Rng rng(13);
    EventStream s;
    std::int64_t t = 0;
    for (int i = 0; i < 257; ++i) {
        t += static_cast<std::int64_t>(rng.uniform_int(5));
        s.events.push_back({t, static_cast<int>(rng.uniform_int(8)),
                            static_cast<int>(rng.uniform_int(8)),
                            static_cast<int>(rng.uniform_int(2))});
    }
    std::vector<double> frames = aggregate_events(s, 5, 8, 8, false);
    double total = 0.0;
    for (double v : frames) total += v;
    CHECK(total == 257.0);
}

TEST_CASE("event aggregation rejects empty streams and bad coordinates") {
    EventStream empty;
    CHECK_THROWS_AS(aggregate_events(empty, 2, 4, 4), std::invalid_argument);
    EventStream bad;
    bad.events.push_back({0, 4, 0, 1});  // x == W
    CHECK_THROWS_AS(aggregate_events(bad, 2, 4, 4), std::invalid_argument);
}

TEST_CASE("event text round-trips through parse and save") {
    EventStream s;
    s.events.push_back({0, 1, 2, 0});
    s.events.push_back({10, 3, 0, 1});
    testsup::ScratchDir dir("events");
    save_events(dir.file("a.evt"), s);
    EventStream back = load_events(dir.file("a.evt"));
    REQUIRE(back.events.size() == 2);
    CHECK(back.events[1].t == 10);
    CHECK(back.events[1].x == 3);
    CHECK(back.events[1].polarity == 1);
    CHECK_THROWS_AS(parse_events("0 0 0 2\n"), std::invalid_argument);  // bad polarity
    CHECK_THROWS_AS(parse_events("5 0 0 1\n3 0 0 1\n"), std::invalid_argument);
}

TEST_CASE("peak normalization scales to unit peak and keeps silence") {
    std::vector<double> x = {0.25, -0.5, 0.1};
    std::vector<double> y = peak_normalize(x);
    CHECK(near(y[0], 0.5, 1e-15));
    CHECK(near(y[1], -1.0, 1e-15));
    std::vector<double> z = peak_normalize(std::vector<double>(5, 0.0));
    for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("linear resampling preserves a linear ramp") {
    std::vector<double> x(11);
    for (std::size_t i = 0; i < 11; ++i) x[i] = static_cast<double>(i);
    std::vector<double> y = resample_linear(x, 1000, 500);
    for (std::size_t i = 0; i + 1 < y.size(); ++i) {
        CHECK(near(y[i + 1] - y[i], 2.0, 1e-9));
    }
    std::vector<double> same = resample_linear(x, 22050, 22050);
    CHECK(same == x);
}

TEST_CASE("the radix-2 FFT matches a direct DFT") {
    Rng rng(17);
    const std::size_t n = 64;
    std::vector<double> re(n), im(n);
    for (std::size_t i = 0; i < n; ++i) {
        re[i] = rng.normal();
        im[i] = rng.normal();
    }
    std::vector<double> inter(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        inter[2 * i] = re[i];
        inter[2 * i + 1] = im[i];
    }
    fft_radix2(inter);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = -2.0 * M_PI * static_cast<double>(k * j) / n;
            acc += std::complex<double>(re[j], im[j]) *
                   std::complex<double>(std::cos(ang), std::sin(ang));
        }
        CHECK(near(inter[2 * k], acc.real(), 1e-9));
        CHECK(near(inter[2 * k + 1], acc.imag(), 1e-9));
    }
}

TEST_CASE("a 1 kHz tone peaks at frequency bin 23 in every frame") {
    const std::size_t sr = 22050, n_fft = 512, hop = 353;
    std::vector<double> x(sr);
    for (std::size_t i = 0; i < sr; ++i) {
        x[i] = std::sin(2.0 * M_PI * 1000.0 * static_cast<double>(i) / sr);
    }
    Spectrogram spec = stft_magnitude(x, n_fft, hop);
    REQUIRE(spec.bins == n_fft / 2 + 1);
    REQUIRE(spec.frames >= 1);
    // round(1000 * 512 / 22050) = 23.
    for (std::size_t f = 0; f < spec.frames; ++f) {
        std::size_t best = 0;
        for (std::size_t b = 1; b < spec.bins; ++b) {
            if (spec.mag[f * spec.bins + b] > spec.mag[f * spec.bins + best]) best = b;
        }
        CHECK(best == 23);
    }
}

TEST_CASE("stft magnitudes match a direct windowed DFT oracle") {
    Rng rng(19);
    const std::size_t n_fft = 32, hop = 8;
    std::vector<double> x(200);
    for (auto& v : x) v = rng.normal();
    Spectrogram spec = stft_magnitude(x, n_fft, hop);

    // Oracle: centered frames over reflect-padded input, Hann window, direct
    // DFT magnitude per bin.
    const std::size_t half = n_fft / 2;
    std::vector<double> padded;
    for (std::size_t i = half; i >= 1; --i) padded.push_back(x[i]);
    padded.insert(padded.end(), x.begin(), x.end());
    for (std::size_t i = x.size() - 2; i >= x.size() - half - 1; --i) padded.push_back(x[i]);
    const std::size_t frames = (x.size() / hop) + 1;
    REQUIRE(spec.frames == frames);
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t b = 0; b < spec.bins; ++b) {
            std::complex<double> acc(0.0, 0.0);
            for (std::size_t j = 0; j < n_fft; ++j) {
                const double w =
                    0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(j) / n_fft));
                const double ang = -2.0 * M_PI * static_cast<double>(b * j) / n_fft;
                acc += padded[f * hop + j] * w *
                       std::complex<double>(std::cos(ang), std::sin(ang));
            }
            CHECK(near(spec.mag[f * spec.bins + b], std::abs(acc), 1e-9));
        }
    }
}

TEST_CASE("a zero waveform maps to a uniform log-offset spectrogram") {
    AudioPipelineConfig cfg;
    Waveform w;
    w.sample_rate = 22050;
    w.samples.assign(4000, 0.0);
    std::vector<double> spec = audio_to_logspec(w, cfg);
    REQUIRE(spec.size() == cfg.target_hw * cfg.target_hw);
    const double want = std::log(1e-7);
    for (double v : spec) CHECK(near(v, want, 1e-12));
}

TEST_CASE("the log spectrogram is invariant to amplitude scaling") {
    Rng rng(23);
    Waveform w;
    w.sample_rate = 22050;
    w.samples.resize(4000);
    for (auto& v : w.samples) v = 0.3 * rng.normal();
    Waveform w2 = w;
    for (auto& v : w2.samples) v *= 2.5;
    AudioPipelineConfig cfg;
    CHECK(bit_equal(audio_to_logspec(w, cfg), audio_to_logspec(w2, cfg)));
}

TEST_CASE("the audio pipeline is bit-stable across repeated runs") {
    Rng rng(29);
    Waveform w;
    w.sample_rate = 44100;
    w.samples.resize(8000);
    for (auto& v : w.samples) v = 0.5 * rng.normal();
    AudioPipelineConfig cfg;
    CHECK(bit_equal(audio_to_logspec(w, cfg), audio_to_logspec(w, cfg)));
}

TEST_CASE("the audio pipeline rejects waveforms shorter than a frame") {
    AudioPipelineConfig cfg;
    Waveform w;
    w.sample_rate = 22050;
    w.samples.assign(10, 0.1);
    CHECK_THROWS_AS(audio_to_logspec(w, cfg), std::invalid_argument);
    w.samples.clear();
    CHECK_THROWS_AS(audio_to_logspec(w, cfg), std::invalid_argument);
}

TEST_CASE("wav files round-trip through 16-bit quantization") {
    Rng rng(31);
    Waveform w;
    w.sample_rate = 22050;
    w.samples.resize(500);
    for (auto& v : w.samples) v = std::clamp(0.4 * rng.normal(), -1.0, 1.0);
    testsup::ScratchDir dir("wav");
    save_wav(dir.file("t.wav"), w);
    Waveform back = load_wav(dir.file("t.wav"));
    REQUIRE(back.sample_rate == w.sample_rate);
    REQUIRE(back.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
        CHECK(near(back.samples[i], w.samples[i], 1.0 / 32768.0));
    }
}

TEST_CASE("bilinear resize preserves constants and the identity") {
    std::vector<double> plane(6 * 4, 3.25);
    std::vector<double> out = resize_bilinear(plane, 6, 4, 5, 7);
    REQUIRE(out.size() == 35);
    for (double v : out) CHECK(near(v, 3.25, 1e-12));
    Rng rng(37);
    std::vector<double> src(8 * 8);
    for (auto& v : src) v = rng.normal();
    CHECK(resize_bilinear(src, 8, 8, 8, 8) == src);
}

TEST_CASE("patch splitting emits binary patches of the configured shape") {
    SpsConfig cfg;
    cfg.stages = 2;
    cfg.in_channels = 3;
    cfg.in_hw = 16;
    cfg.embed_dim = 8;
    Rng rng(41);
    Sps<double> sps(rng, cfg);
    const std::size_t T = 3, B = 2;
    TensorD x = TensorD::uniform(rng, {T, B, 3, 16, 16}, 0.0, 1.0);
    TensorD y = sps.forward(x, true);
    REQUIRE(y.shape() == Shape{T, B, cfg.patches(), cfg.embed_dim});
    CHECK(cfg.patches() == 16);  // (16 / 2^2)^2
    CHECK(all_binary(y.values()));
}

TEST_CASE("patch splitting maps zero input to zero spikes") {
    SpsConfig cfg;
    cfg.stages = 2;
    cfg.in_channels = 1;
    cfg.in_hw = 8;
    cfg.embed_dim = 4;
    Rng rng(43);
    Sps<double> sps(rng, cfg);
    TensorD x = TensorD::zeros({2, 2, 1, 8, 8});
    TensorD y = sps.forward(x, true);
    for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("patch splitting derives the four-stage patch count") {
    SpsConfig cfg;
    cfg.stages = 4;
    cfg.in_hw = 128;
    cfg.embed_dim = 64;
    CHECK(cfg.patches() == 64);  // (128 / 16)^2
}

TEST_CASE("patch splitting rejects indivisible extents") {
    SpsConfig cfg;
    cfg.stages = 3;
    cfg.in_hw = 20;  // not divisible by 8
    cfg.embed_dim = 8;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("a zeroed positional embedding is the identity") {
    Rng rng(47);
    PositionalEmbedding<double> pe(rng, 6, 4);
    ParamCollector<double> pc;
    pe.collect("pe", pc);
    std::fill(pc.params[0].second.values_mut().begin(),
              pc.params[0].second.values_mut().end(), 0.0);
    TensorD x = TensorD::uniform(rng, {2, 3, 6, 4}, 0.0, 1.0);
    TensorD y = pe.forward(x);
    CHECK(bit_equal(y.values(), x.values()));
    // The table is added value for value: offsetting one patch entry shifts
    // exactly the matching slots.
    pc.params[0].second.values_mut()[5] = 0.25;
    TensorD y2 = pe.forward(x);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < y2.size(); ++i) {
        if (y2.values()[i] != y.values()[i]) ++changed;
    }
    CHECK(changed == 2 * 3);  // one (patch, dim) slot per (T, B) copy
}

TEST_CASE("positional embedding gradients sum over time and batch") {
    Rng rng(53);
    PositionalEmbedding<double> pe(rng, 2, 2);
    ParamCollector<double> pc;
    pe.collect("pe", pc);
    REQUIRE(pc.params.size() == 1);
    TensorD table = pc.params[0].second;
    TensorD x = TensorD::zeros({3, 4, 2, 2});
    sum_all(pe.forward(x)).backward();
    for (double g : table.grad()) CHECK(near(g, 12.0, 1e-12));  // T * B copies
}

TEST_CASE("one asymmetric gradient step separates patch offsets") {
    Rng rng(59);
    PositionalEmbedding<double> pe(rng, 2, 1);
    ParamCollector<double> pc;
    pe.collect("pe", pc);
    TensorD table = pc.params[0].second;
    TensorD x = TensorD::zeros({1, 2, 2, 1});
    TensorD w = TensorD::from({1.0, -1.0, 1.0, -1.0}, {1, 2, 2, 1});
    sum_all(mul(pe.forward(x), w)).backward();
    // Gradient differs per patch, so a step moves them apart.
    CHECK(table.grad()[0] != table.grad()[1]);
    std::vector<double>& vals = table.values_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] -= 0.1 * table.grad()[i];
    CHECK(vals[0] != vals[1]);
}
