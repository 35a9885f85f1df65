#include <chrono>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikefuse/gradcheck.hpp"
#include "spikefuse/threads.hpp"
#include "spikefuse/train.hpp"

namespace sf = spikefuse;

namespace {

sf::Dataset build_dataset(const sf::Config& cfg) {
    if (cfg.data.root.empty()) {
        return sf::synth_dataset(cfg.model.classes, cfg.data.per_class, cfg.data.seed,
                                 cfg.model.input_hw);
    }
    sf::Dataset d = sf::load_dataset(cfg.data.root, cfg.model.input_hw);
    sf::check(d.classes() == cfg.model.classes, "dataset at ", cfg.data.root, " has ",
              d.classes(), " classes but the config expects ", cfg.model.classes);
    return d;
}

template <typename S>
struct LoadedModel {
    sf::Config cfg;
    sf::Dataset data;
    sf::Split split;
    std::unique_ptr<sf::FusionModel<S>> model;
};

template <typename S>
LoadedModel<S> load_from_checkpoint(const std::string& path) {
    sf::Checkpoint<S> ck = sf::load_checkpoint<S>(path);
    LoadedModel<S> lm;
    lm.cfg = sf::config_from_json_text(ck.config_json);
    lm.data = build_dataset(lm.cfg);
    lm.split = sf::split_dataset(lm.data.size(), lm.cfg.data.seed);
    lm.model = std::make_unique<sf::FusionModel<S>>(lm.cfg.model);
    sf::restore(*lm.model, ck);
    return lm;
}

void print_eval(const sf::EvalResult& r, const std::vector<std::string>& class_names) {
    std::cout << std::fixed << std::setprecision(4);
    std::cout << "accuracy " << r.accuracy << " (" << r.correct << "/" << r.total << ")\n";
    for (std::size_t k = 0; k < class_names.size(); ++k) {
        const double acc = r.class_total[k]
                               ? static_cast<double>(r.class_correct[k]) /
                                     static_cast<double>(r.class_total[k])
                               : 0.0;
        std::cout << "  " << class_names[k] << " " << acc << " (" << r.class_correct[k]
                  << "/" << r.class_total[k] << ")\n";
    }
    std::cout << std::defaultfloat;
}

std::vector<double> parse_snr_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        sf::check(!item.empty(), "empty entry in SNR list \"", text, "\"");
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &pos);
        } catch (const std::exception&) {
            sf::fail("cannot parse SNR value \"", item, "\"");
        }
        sf::check(pos == item.size(), "cannot parse SNR value \"", item, "\"");
        out.push_back(v);
    }
    sf::check(!out.empty(), "SNR list \"", text, "\" is empty");
    return out;
}

int cmd_train(const std::string& config_path, const std::string& mode, bool no_sao,
              bool have_alpha, double alpha, bool have_seed, std::uint64_t seed) {
    sf::Config cfg = sf::load_config(config_path);
    if (!mode.empty()) cfg.model.mode = mode;
    if (no_sao) cfg.model.sao = false;
    if (have_alpha) cfg.model.alpha = alpha;
    if (have_seed) {
        cfg.model.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.model.validate();
    cfg.train.validate();

    sf::Dataset data = build_dataset(cfg);
    sf::Split split = sf::split_dataset(data.size(), cfg.data.seed);
    std::cout << "dataset: " << data.size() << " samples, " << data.classes()
              << " classes (" << split.train.size() << " train / " << split.test.size()
              << " test)\n";
    std::cout << "mode " << cfg.model.mode << ", alignment "
              << (cfg.model.sao ? "on" : "off") << ", alpha " << cfg.model.alpha
              << ", seed " << cfg.model.seed << "\n";

    sf::FusionModel<float> model(cfg.model);
    sf::Adam<float> opt(model.parameters(), cfg.train);
    const auto t0 = std::chrono::steady_clock::now();
    sf::TrainResult res = sf::train_model(model, opt, data, split, cfg, &std::cout);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << std::fixed << std::setprecision(1) << "trained in " << secs << " s\n"
              << std::defaultfloat;

    sf::write_metrics_csv("train_metrics.csv", res.history);
    sf::write_training_plots("train_loss.svg", "train_accuracy.svg", res.history);
    sf::Checkpoint<float> ck =
        sf::snapshot(model, cfg, &opt, static_cast<std::uint32_t>(cfg.train.epochs));
    sf::save_checkpoint("model.ckpt", ck);
    std::cout << "wrote train_metrics.csv, train_loss.svg, train_accuracy.svg, model.ckpt\n";
    std::cout << std::fixed << std::setprecision(4) << "final test accuracy "
              << res.final_test_acc << " (best " << res.best_test_acc << ")\n";
    return 0;
}

template <typename S>
int cmd_eval(const std::string& ckpt, bool have_snr, double snr,
             const std::string& noise_target) {
    LoadedModel<S> lm = load_from_checkpoint<S>(ckpt);
    std::cout << "evaluating held-out split (" << lm.split.test.size() << " samples)\n";
    sf::NoiseConfig nc = lm.cfg.noise;
    if (have_snr) {
        nc.snr_db = snr;
        if (!noise_target.empty()) nc.target = noise_target;
        nc.validate();
        std::cout << "noise: SNR " << nc.snr_db << " dB on " << nc.target << "\n";
    }
    sf::EvalResult r = sf::evaluate(*lm.model, lm.data, lm.split.test, lm.cfg.train.batch,
                                    have_snr ? &nc : nullptr);
    print_eval(r, lm.data.class_names);
    return 0;
}

template <typename S>
int cmd_sweep(const std::string& ckpt, const std::string& snrs_text) {
    LoadedModel<S> lm = load_from_checkpoint<S>(ckpt);
    const std::vector<double> snrs = parse_snr_list(snrs_text);
    std::cout << "sweeping " << snrs.size() << " SNR points over "
              << lm.split.test.size() << " held-out samples (noise on "
              << lm.cfg.noise.target << ")\n";
    std::vector<sf::SweepRow> rows = sf::snr_sweep(*lm.model, lm.data, lm.split.test,
                                                   lm.cfg.train.batch, lm.cfg.noise, snrs);
    std::cout << "snr,accuracy\n" << std::fixed << std::setprecision(4);
    for (const sf::SweepRow& r : rows) std::cout << r.snr << "," << r.accuracy << "\n";
    std::cout << std::defaultfloat;
    sf::write_sweep_csv("snr_sweep.csv", rows);
    sf::write_sweep_plot("snr_sweep.svg", rows);
    std::cout << "wrote snr_sweep.csv, snr_sweep.svg\n";
    return 0;
}

int cmd_gradcheck(const std::string& config_path) {
    sf::Config cfg = sf::load_config(config_path);
    cfg.model.relaxed = true;  // finite differences need a smooth network
    cfg.model.validate();
    sf::FusionModel<double> model(cfg.model);
    auto params = model.parameters();
    std::size_t n_coords = 0;
    for (auto& [name, p] : params) n_coords += p.size();
    std::cout << "checking " << n_coords << " coordinates across " << params.size()
              << " parameters\n";

    const std::size_t B = 2;
    const std::size_t hw = cfg.model.input_hw;
    sf::Rng rng = sf::Rng(cfg.train.seed).fork(99);
    sf::TensorD audio =
        sf::TensorD::uniform(rng, {B, cfg.model.audio_channels, hw, hw}, 0.0, 1.0);
    sf::TensorD visual =
        sf::TensorD::uniform(rng, {B, cfg.model.visual_channels, hw, hw}, 0.0, 1.0);
    std::vector<std::size_t> labels(B);
    for (std::size_t i = 0; i < B; ++i) labels[i] = i % cfg.model.classes;
    sf::SaoConfig scfg;
    scfg.temperature = cfg.model.sao_temperature;
    const bool sao_on = cfg.model.sao && cfg.model.mode_enum() == sf::Mode::Fused;

    auto loss_fn = [&]() {
        auto out = model.forward(audio, visual, true);
        return sf::total_loss(out.logits, labels, out.res_a, out.res_v, scfg, sao_on)
            .total_t;
    };
    const auto t0 = std::chrono::steady_clock::now();
    sf::GradCheckReport rep = sf::gradcheck(params, loss_fn, 1e-5);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::cout << std::scientific << std::setprecision(3);
    std::cout << "max relative error " << rep.max_rel_err << " at " << rep.worst_param
              << "[" << rep.worst_index << "] (analytic " << rep.worst_analytic
              << ", numeric " << rep.worst_numeric << ")\n";
    std::cout << std::defaultfloat << std::setprecision(1) << std::fixed << "checked "
              << rep.coords_checked << " coordinates in " << secs << " s\n"
              << std::defaultfloat;
    const bool pass = rep.max_rel_err < 1e-4;
    std::cout << (pass ? "PASS" : "FAIL") << " (threshold 1e-4)\n";
    return pass ? 0 : 1;
}

int cmd_synth(const std::string& out, std::size_t classes, std::size_t n,
              std::uint64_t seed) {
    sf::write_synth_dataset(out, classes, n, seed, 32);
    std::cout << "wrote " << classes * n << " samples (" << classes << " classes x " << n
              << ") under " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    spikefuse::keep_freed_memory();
    CLI::App app{"Spiking cross-modal audio-visual classifier"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "Train a model from a JSON config");
    std::string config_path, mode;
    bool no_sao = false;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    train->add_option("--config", config_path, "JSON config file")->required();
    train->add_option("--mode", mode, "baseline or scmrl")
        ->check(CLI::IsMember({"baseline", "scmrl"}));
    train->add_flag("--no-sao", no_sao, "Disable the semantic alignment loss");
    auto* alpha_opt = train->add_option("--alpha", alpha, "Fusion strength");
    auto* seed_opt = train->add_option("--seed", seed, "Model and training seed");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on its held-out split");
    std::string ckpt, noise_target;
    double snr = 0.0;
    eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    auto* snr_opt = eval->add_option("--snr", snr, "Inject noise at this SNR (dB)");
    eval->add_option("--noise-target", noise_target, "audio, visual or both")
        ->check(CLI::IsMember({"audio", "visual", "both"}));

    auto* sweep = app.add_subcommand("sweep", "Accuracy across an SNR range");
    std::string sweep_ckpt, snrs_text = "0,5,10,15,20,30";
    sweep->add_option("--ckpt", sweep_ckpt, "Checkpoint file")->required();
    sweep->add_option("--snrs", snrs_text, "Comma-separated SNR list (dB)");

    auto* gradcheck = app.add_subcommand(
        "gradcheck", "Finite-difference gradient validation (relaxed mode, 64-bit)");
    std::string gc_config;
    gradcheck->add_option("--config", gc_config, "JSON config file")->required();

    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset tree");
    std::string synth_out;
    std::size_t synth_classes = 4, synth_n = 48;
    std::uint64_t synth_seed = 7;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--classes", synth_classes, "Number of classes");
    synth->add_option("--n", synth_n, "Samples per class");
    synth->add_option("--seed", synth_seed, "Generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(train)) {
            return cmd_train(config_path, mode, no_sao, alpha_opt->count() > 0, alpha,
                             seed_opt->count() > 0, seed);
        }
        if (app.got_subcommand(eval)) {
            const auto width = sf::checkpoint_scalar_width(ckpt);
            return width == 8 ? cmd_eval<double>(ckpt, snr_opt->count() > 0, snr, noise_target)
                              : cmd_eval<float>(ckpt, snr_opt->count() > 0, snr, noise_target);
        }
        if (app.got_subcommand(sweep)) {
            const auto width = sf::checkpoint_scalar_width(sweep_ckpt);
            return width == 8 ? cmd_sweep<double>(sweep_ckpt, snrs_text)
                              : cmd_sweep<float>(sweep_ckpt, snrs_text);
        }
        if (app.got_subcommand(gradcheck)) return cmd_gradcheck(gc_config);
        if (app.got_subcommand(synth)) {
            return cmd_synth(synth_out, synth_classes, synth_n, synth_seed);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
