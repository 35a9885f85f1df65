#pragma once

#include <string>

#include "spikefuse/common.hpp"
#include "spikefuse/neuron.hpp"

namespace spikefuse {

enum class Mode { Baseline, Fused, AudioOnly, VisualOnly };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

struct ModelConfig {
    std::size_t T = 4;
    std::size_t embed_dim = 64;
    std::size_t classes = 4;
    std::uint64_t seed = 1;
    std::string mode = "scmrl";
    bool sao = true;
    bool relaxed = false;
    std::size_t sps_stages = 2;
    std::size_t input_hw = 32;
    std::size_t audio_channels = 1;
    std::size_t visual_channels = 3;
    double attn_scale = 0.125;
    std::size_t heads = 1;
    double alpha = 1.5;
    std::size_t depth = 2;
    std::size_t mlp_ratio = 4;
    double sao_temperature = 0.1;
    double tau = 2.0;
    double v_th = 1.0;
    double v_reset = 0.0;
    double surrogate_slope = 4.0;

    Mode mode_enum() const { return mode_from_string(mode); }

    LifConfig lif() const {
        LifConfig c;
        c.tau = tau;
        c.v_th = v_th;
        c.v_reset = v_reset;
        c.surrogate_slope = surrogate_slope;
        c.relaxed = relaxed;
        return c;
    }

    void validate() const;
};

struct TrainConfig {
    double lr = 5e-3;
    std::size_t epochs = 20;
    std::size_t batch = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;

    void validate() const;
};

struct NoiseConfig {
    double snr_db = 10.0;
    std::string target = "both";
    std::uint64_t seed = 1;

    bool applies_to_audio() const { return target == "audio" || target == "both"; }
    bool applies_to_visual() const { return target == "visual" || target == "both"; }
    void validate() const;
};

struct DataConfig {
    std::string root;        // empty: generate the synthetic set in memory
    std::size_t per_class = 48;
    std::uint64_t seed = 7;

    void validate() const;
};

struct Config {
    ModelConfig model;
    TrainConfig train;
    NoiseConfig noise;
    DataConfig data;
};

/// Parses a JSON config file. Sections and keys are optional (defaults
/// apply); unknown keys are an error so typos cannot silently revert a
/// setting to its default.
Config load_config(const std::string& path);
Config config_from_json_text(const std::string& text);
std::string config_to_json_text(const Config& cfg);

}  // namespace spikefuse
