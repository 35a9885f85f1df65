#include "spikefuse/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace spikefuse {

using nlohmann::json;

Mode mode_from_string(const std::string& s) {
    if (s == "baseline") return Mode::Baseline;
    if (s == "scmrl") return Mode::Fused;
    if (s == "audio") return Mode::AudioOnly;
    if (s == "visual") return Mode::VisualOnly;
    fail("unknown mode '", s, "' (expected baseline|scmrl|audio|visual)");
}

std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::Baseline: return "baseline";
        case Mode::Fused: return "scmrl";
        case Mode::AudioOnly: return "audio";
        case Mode::VisualOnly: return "visual";
    }
    fail("corrupt mode value");
}

void ModelConfig::validate() const {
    check(T >= 1, "time steps must be >= 1");
    check(classes >= 2, "need at least two classes");
    check(embed_dim >= 1, "embed dim must be positive");
    check(heads >= 1 && embed_dim % heads == 0, "embed dim ", embed_dim,
          " must divide across ", heads, " heads");
    check(attn_scale > 0.0, "attention scale must be positive");
    check(alpha >= 0.0, "fusion strength must be non-negative");
    check(depth >= 1, "depth must be >= 1");
    check(mlp_ratio >= 1, "mlp ratio must be >= 1");
    check(sao_temperature > 0.0, "alignment temperature must be positive");
    check(audio_channels >= 1 && visual_channels >= 1, "channel counts must be positive");
    mode_from_string(mode);
    lif().validate();
}

void TrainConfig::validate() const {
    check(lr > 0.0, "learning rate must be positive");
    check(epochs >= 1, "epochs must be >= 1");
    check(batch >= 1, "batch size must be >= 1");
    check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "Adam betas must lie in [0,1)");
    check(eps > 0.0, "Adam epsilon must be positive");
}

void NoiseConfig::validate() const {
    check(target == "audio" || target == "visual" || target == "both",
          "noise target must be audio|visual|both, got '", target, "'");
}

void DataConfig::validate() const {
    check(per_class >= 1, "per-class sample count must be positive");
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        check(known.count(it.key()) != 0, "unknown config key '", it.key(), "' in ", where);
}

void parse_model(const json& j, ModelConfig& m) {
    reject_unknown(j,
                   {"T", "embed_dim", "classes", "seed", "mode", "sao", "relaxed",
                    "sps_stages", "input_hw", "audio_channels", "visual_channels",
                    "attn_scale", "heads", "alpha", "depth", "mlp_ratio", "sao_temperature",
                    "tau", "v_th", "v_reset", "surrogate_slope"},
                   "model");
    read_key(j, "T", m.T);
    read_key(j, "embed_dim", m.embed_dim);
    read_key(j, "classes", m.classes);
    read_key(j, "seed", m.seed);
    read_key(j, "mode", m.mode);
    read_key(j, "sao", m.sao);
    read_key(j, "relaxed", m.relaxed);
    read_key(j, "sps_stages", m.sps_stages);
    read_key(j, "input_hw", m.input_hw);
    read_key(j, "audio_channels", m.audio_channels);
    read_key(j, "visual_channels", m.visual_channels);
    read_key(j, "attn_scale", m.attn_scale);
    read_key(j, "heads", m.heads);
    read_key(j, "alpha", m.alpha);
    read_key(j, "depth", m.depth);
    read_key(j, "mlp_ratio", m.mlp_ratio);
    read_key(j, "sao_temperature", m.sao_temperature);
    read_key(j, "tau", m.tau);
    read_key(j, "v_th", m.v_th);
    read_key(j, "v_reset", m.v_reset);
    read_key(j, "surrogate_slope", m.surrogate_slope);
}

void parse_train(const json& j, TrainConfig& t) {
    reject_unknown(j, {"lr", "epochs", "batch", "beta1", "beta2", "eps", "seed"}, "train");
    read_key(j, "lr", t.lr);
    read_key(j, "epochs", t.epochs);
    read_key(j, "batch", t.batch);
    read_key(j, "beta1", t.beta1);
    read_key(j, "beta2", t.beta2);
    read_key(j, "eps", t.eps);
    read_key(j, "seed", t.seed);
}

void parse_noise(const json& j, NoiseConfig& n) {
    reject_unknown(j, {"snr_db", "target", "seed"}, "noise");
    read_key(j, "snr_db", n.snr_db);
    read_key(j, "target", n.target);
    read_key(j, "seed", n.seed);
}

void parse_data(const json& j, DataConfig& d) {
    reject_unknown(j, {"root", "per_class", "seed"}, "data");
    read_key(j, "root", d.root);
    read_key(j, "per_class", d.per_class);
    read_key(j, "seed", d.seed);
}

}  // namespace

Config config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail("config is not valid JSON: ", e.what());
    }
    check(j.is_object(), "config root must be a JSON object");
    reject_unknown(j, {"model", "train", "noise", "data"}, "config root");
    Config cfg;
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("noise")) parse_noise(j.at("noise"), cfg.noise);
    if (j.contains("data")) parse_data(j.at("data"), cfg.data);
    cfg.model.validate();
    cfg.train.validate();
    cfg.noise.validate();
    cfg.data.validate();
    return cfg;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "cannot open config file '", path, "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

std::string config_to_json_text(const Config& cfg) {
    json j;
    j["model"] = {{"T", cfg.model.T},
                  {"embed_dim", cfg.model.embed_dim},
                  {"classes", cfg.model.classes},
                  {"seed", cfg.model.seed},
                  {"mode", cfg.model.mode},
                  {"sao", cfg.model.sao},
                  {"relaxed", cfg.model.relaxed},
                  {"sps_stages", cfg.model.sps_stages},
                  {"input_hw", cfg.model.input_hw},
                  {"audio_channels", cfg.model.audio_channels},
                  {"visual_channels", cfg.model.visual_channels},
                  {"attn_scale", cfg.model.attn_scale},
                  {"heads", cfg.model.heads},
                  {"alpha", cfg.model.alpha},
                  {"depth", cfg.model.depth},
                  {"mlp_ratio", cfg.model.mlp_ratio},
                  {"sao_temperature", cfg.model.sao_temperature},
                  {"tau", cfg.model.tau},
                  {"v_th", cfg.model.v_th},
                  {"v_reset", cfg.model.v_reset},
                  {"surrogate_slope", cfg.model.surrogate_slope}};
    j["train"] = {{"lr", cfg.train.lr},       {"epochs", cfg.train.epochs},
                  {"batch", cfg.train.batch}, {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2}, {"eps", cfg.train.eps},
                  {"seed", cfg.train.seed}};
    j["noise"] = {{"snr_db", cfg.noise.snr_db},
                  {"target", cfg.noise.target},
                  {"seed", cfg.noise.seed}};
    j["data"] = {{"root", cfg.data.root},
                 {"per_class", cfg.data.per_class},
                 {"seed", cfg.data.seed}};
    return j.dump(2);
}

}  // namespace spikefuse
