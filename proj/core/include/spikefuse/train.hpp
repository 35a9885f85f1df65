#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <vector>

#include "spikefuse/data.hpp"
#include "spikefuse/model.hpp"
#include "spikefuse/noise.hpp"
#include "spikefuse/svg.hpp"

namespace spikefuse {

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded 9:1 shuffle split. The seed is a property of the dataset, not the
/// run, so runs that differ in model seed still see the same partition.
inline Split split_dataset(std::size_t n, std::uint64_t seed) {
    check(n >= 2, "cannot split a dataset of ", n, " samples");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng(seed).fork(11);
    rng.shuffle(order);
    const std::size_t n_test = std::max<std::size_t>(1, n / 10);
    Split s;
    s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    return s;
}

template <typename S>
struct Batch {
    Tensor<S> audio;   // [B, 1, hw, hw]
    Tensor<S> visual;  // [B, 3, hw, hw]
    std::vector<std::size_t> labels;
};

/// Assembles samples order[b0, b1) into one batch, optionally with additive
/// noise. The noise stream is forked per (dataset index, modality), so a
/// sample's corruption does not depend on its position in the batch.
template <typename S>
Batch<S> make_batch(const Dataset& d, const std::vector<std::size_t>& order, std::size_t b0,
                    std::size_t b1, const NoiseConfig* noise = nullptr) {
    check(b1 > b0 && b1 <= order.size(), "bad batch bounds [", b0, ", ", b1, ")");
    const std::size_t B = b1 - b0;
    const std::size_t hw = d.hw;
    Batch<S> out;
    out.labels.resize(B);
    std::vector<S> av(B * 1 * hw * hw), vv(B * 3 * hw * hw);
    for (std::size_t i = 0; i < B; ++i) {
        const std::size_t si = order[b0 + i];
        check(si < d.samples.size(), "sample index ", si, " out of range");
        const Sample& s = d.samples[si];
        check(s.audio.size() == hw * hw && s.visual.size() == 3 * hw * hw,
              "sample ", s.id, " has unexpected tensor sizes");
        out.labels[i] = s.label;
        const std::vector<double>* audio = &s.audio;
        const std::vector<double>* visual = &s.visual;
        std::vector<double> na, nv;
        if (noise && noise->applies_to_audio()) {
            Rng rng = Rng(noise->seed).fork(2 * si);
            na = inject_noise_values(s.audio, noise->snr_db, rng);
            audio = &na;
        }
        if (noise && noise->applies_to_visual()) {
            Rng rng = Rng(noise->seed).fork(2 * si + 1);
            nv = inject_noise_values(s.visual, noise->snr_db, rng);
            visual = &nv;
        }
        for (std::size_t j = 0; j < hw * hw; ++j) {
            av[i * hw * hw + j] = static_cast<S>((*audio)[j]);
        }
        for (std::size_t j = 0; j < 3 * hw * hw; ++j) {
            vv[i * 3 * hw * hw + j] = static_cast<S>((*visual)[j]);
        }
    }
    out.audio = Tensor<S>::from(std::move(av), {B, 1, hw, hw});
    out.visual = Tensor<S>::from(std::move(vv), {B, 3, hw, hw});
    return out;
}

struct EvalResult {
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t total = 0;
    std::vector<std::size_t> class_correct;
    std::vector<std::size_t> class_total;
};

template <typename S>
EvalResult evaluate(FusionModel<S>& model, const Dataset& data,
                    const std::vector<std::size_t>& indices, std::size_t batch,
                    const NoiseConfig* noise = nullptr) {
    check(!indices.empty(), "cannot evaluate on an empty dataset");
    check(batch >= 1, "batch size must be positive");
    NoGradGuard no_grad;
    EvalResult r;
    r.class_correct.assign(data.classes(), 0);
    r.class_total.assign(data.classes(), 0);
    for (std::size_t b0 = 0; b0 < indices.size(); b0 += batch) {
        const std::size_t b1 = std::min(indices.size(), b0 + batch);
        Batch<S> b = make_batch<S>(data, indices, b0, b1, noise);
        typename FusionModel<S>::Output out = model.forward(b.audio, b.visual, false);
        std::vector<std::size_t> pred = argmax_rows(out.logits);
        for (std::size_t i = 0; i < b.labels.size(); ++i) {
            ++r.class_total[b.labels[i]];
            if (pred[i] == b.labels[i]) {
                ++r.class_correct[b.labels[i]];
                ++r.correct;
            }
        }
    }
    r.total = indices.size();
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

struct EpochRow {
    std::size_t epoch = 0;
    double ce = 0.0;
    double sao = 0.0;
    double total = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochRow> history;
    double final_test_acc = 0.0;
    double best_test_acc = 0.0;
};

/// Full optimization loop: per-epoch reshuffle, minibatch forward/backward,
/// Adam updates, and a test-split evaluation per epoch. Loss statistics are
/// sample-weighted epoch means; train accuracy is the running accuracy of
/// the training forwards themselves. A non-finite loss aborts immediately
/// with context rather than continuing on poisoned parameters.
template <typename S>
TrainResult train_model(FusionModel<S>& model, Adam<S>& opt, const Dataset& data,
                        const Split& split, const Config& cfg, std::ostream* log = nullptr) {
    const TrainConfig& tc = cfg.train;
    const ModelConfig& mc = model.config();
    check(!split.train.empty(), "training split is empty");
    check(!split.test.empty(), "test split is empty");
    SaoConfig scfg;
    scfg.temperature = mc.sao_temperature;
    const bool sao_on = mc.sao && mc.mode_enum() == Mode::Fused;
    Rng shuffle_rng = Rng(tc.seed).fork(1);

    TrainResult res;
    std::vector<std::size_t> order = split.train;
    for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double sum_ce = 0.0, sum_sao = 0.0, sum_total = 0.0;
        std::size_t correct = 0, seen = 0, step = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch) {
            const std::size_t b1 = std::min(order.size(), b0 + tc.batch);
            Batch<S> b = make_batch<S>(data, order, b0, b1);
            ++step;
            opt.zero_grad();
            typename FusionModel<S>::Output out = model.forward(b.audio, b.visual, true);
            LossBreakdown<S> lb =
                total_loss(out.logits, b.labels, out.res_a, out.res_v, scfg, sao_on);
            if (!std::isfinite(static_cast<double>(lb.total))) {
                fail("training diverged: loss ", lb.total, " (ce ", lb.ce, ", alignment ",
                     lb.sao, ") at epoch ", epoch, " step ", step, ", lr ", tc.lr,
                     ", batch ", b.labels.size());
            }
            lb.total_t.backward();
            opt.step();
            const double n = static_cast<double>(b.labels.size());
            sum_ce += static_cast<double>(lb.ce) * n;
            sum_sao += static_cast<double>(lb.sao) * n;
            sum_total += static_cast<double>(lb.total) * n;
            std::vector<std::size_t> pred = argmax_rows(out.logits);
            for (std::size_t i = 0; i < b.labels.size(); ++i) {
                if (pred[i] == b.labels[i]) ++correct;
            }
            seen += b.labels.size();
        }
        EpochRow row;
        row.epoch = epoch;
        row.ce = sum_ce / static_cast<double>(seen);
        row.sao = sum_sao / static_cast<double>(seen);
        row.total = sum_total / static_cast<double>(seen);
        row.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
        row.test_acc = evaluate(model, data, split.test, tc.batch).accuracy;
        res.history.push_back(row);
        res.final_test_acc = row.test_acc;
        res.best_test_acc = std::max(res.best_test_acc, row.test_acc);
        if (log) {
            *log << "epoch " << epoch << "/" << tc.epochs << std::fixed
                 << std::setprecision(4) << "  ce " << row.ce << "  sao " << row.sao
                 << "  total " << row.total << "  train " << row.train_acc << "  test "
                 << row.test_acc << std::defaultfloat << "\n";
        }
    }
    return res;
}

inline void write_metrics_csv(const std::string& path, const std::vector<EpochRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    check(out.good(), "cannot write ", path);
    out << "epoch,ce,sao,total,train_acc,test_acc\n";
    out << std::setprecision(10);
    for (const EpochRow& r : rows) {
        out << r.epoch << ',' << r.ce << ',' << r.sao << ',' << r.total << ','
            << r.train_acc << ',' << r.test_acc << '\n';
    }
    check(out.good(), "write failed for ", path);
}

inline void write_training_plots(const std::string& loss_path, const std::string& acc_path,
                                 const std::vector<EpochRow>& rows) {
    Series ce{"ce", "", {}, {}}, sao{"sao", "", {}, {}}, total{"total", "", {}, {}};
    Series tr{"train", "", {}, {}}, te{"test", "", {}, {}};
    for (const EpochRow& r : rows) {
        const double e = static_cast<double>(r.epoch);
        ce.x.push_back(e);
        ce.y.push_back(r.ce);
        sao.x.push_back(e);
        sao.y.push_back(r.sao);
        total.x.push_back(e);
        total.y.push_back(r.total);
        tr.x.push_back(e);
        tr.y.push_back(r.train_acc);
        te.x.push_back(e);
        te.y.push_back(r.test_acc);
    }
    PlotSpec loss_spec;
    loss_spec.title = "Training loss";
    loss_spec.x_label = "epoch";
    loss_spec.y_label = "loss";
    write_svg_plot(loss_path, loss_spec, {ce, sao, total});
    PlotSpec acc_spec;
    acc_spec.title = "Accuracy";
    acc_spec.x_label = "epoch";
    acc_spec.y_label = "accuracy";
    write_svg_plot(acc_path, acc_spec, {tr, te});
}

struct SweepRow {
    double snr = 0.0;
    double accuracy = 0.0;
};

template <typename S>
std::vector<SweepRow> snr_sweep(FusionModel<S>& model, const Dataset& data,
                                const std::vector<std::size_t>& indices, std::size_t batch,
                                const NoiseConfig& base, const std::vector<double>& snrs) {
    check(!snrs.empty(), "sweep needs at least one SNR value");
    std::vector<SweepRow> rows;
    for (double snr : snrs) {
        NoiseConfig nc = base;
        nc.snr_db = snr;
        rows.push_back({snr, evaluate(model, data, indices, batch, &nc).accuracy});
    }
    return rows;
}

inline void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    check(out.good(), "cannot write ", path);
    out << "snr,accuracy\n";
    out << std::setprecision(10);
    for (const SweepRow& r : rows) out << r.snr << ',' << r.accuracy << '\n';
    check(out.good(), "write failed for ", path);
}

inline void write_sweep_plot(const std::string& path, const std::vector<SweepRow>& rows) {
    Series s{"accuracy", "", {}, {}};
    for (const SweepRow& r : rows) {
        s.x.push_back(r.snr);
        s.y.push_back(r.accuracy);
    }
    PlotSpec spec;
    spec.title = "Accuracy vs SNR";
    spec.x_label = "SNR (dB)";
    spec.y_label = "accuracy";
    write_svg_plot(path, spec, {s});
}

}  // namespace spikefuse
