// End-to-end exercise of the command-line tool: synth -> train -> eval ->
// sweep -> gradcheck, plus failure modes. Runs the real binary in a scratch
// directory and inspects exit codes and produced files.
//
// Usage: cli_round_trip <path-to-spikefuse-binary> <scratch-dir>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(bool ok, const std::string& what) {
    std::cout << (ok ? "ok - " : "FAIL - ") << what << "\n";
    if (!ok) ++g_failures;
}

// Runs a shell command with stdout+stderr captured to a file; returns the
// exit code (or -1 if the child did not exit normally).
int run(const std::string& cmd, const fs::path& log) {
    const std::string full = cmd + " > " + log.string() + " 2>&1";
    const int rc = std::system(full.c_str());
    if (rc == -1) return -1;
    if (WIFEXITED(rc)) return WEXITSTATUS(rc);
    return -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    return slurp(a) == slurp(b);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: cli_round_trip <spikefuse-binary> <scratch-dir>\n";
        return 2;
    }
    const std::string cli = fs::absolute(argv[1]).string();
    const fs::path scratch = fs::absolute(argv[2]);
    std::error_code ec;
    fs::remove_all(scratch, ec);
    fs::create_directories(scratch);

    const fs::path data_dir = scratch / "data";
    const fs::path log_dir = scratch / "logs";
    fs::create_directories(log_dir);

    // --- synth ------------------------------------------------------------
    {
        const int rc = run(cli + " synth --out " + data_dir.string() +
                               " --classes 2 --n 3 --seed 5",
                           log_dir / "synth.log");
        report(rc == 0, "synth exits cleanly");
        std::size_t class_dirs = 0, wavs = 0, pngs = 0, evts = 0;
        if (fs::exists(data_dir)) {
            for (const auto& cls : fs::directory_iterator(data_dir)) {
                if (!cls.is_directory()) continue;
                ++class_dirs;
                for (const auto& f : fs::directory_iterator(cls.path())) {
                    const std::string ext = f.path().extension().string();
                    if (ext == ".wav") ++wavs;
                    if (ext == ".png") ++pngs;
                    if (ext == ".evt") ++evts;
                }
            }
        }
        report(class_dirs == 2, "synth creates one directory per class");
        report(wavs == 6 && pngs == 6 && evts == 6,
               "synth writes wav, png and evt for each sample");
    }

    // --- config files -----------------------------------------------------
    const fs::path cfg_path = scratch / "cfg.json";
    {
        std::ofstream out(cfg_path);
        out << R"({
  "model": {"T": 2, "embed_dim": 16, "classes": 2, "seed": 1,
            "sps_stages": 1, "input_hw": 8, "depth": 1, "mlp_ratio": 2},
  "train": {"epochs": 2, "batch": 8, "lr": 0.005, "seed": 1},
  "data": {"root": ")" << data_dir.string() << R"(", "seed": 5}
})";
    }
    const fs::path gc_cfg = scratch / "gc.json";
    {
        std::ofstream out(gc_cfg);
        out << R"({
  "model": {"T": 2, "embed_dim": 4, "classes": 2, "seed": 1,
            "sps_stages": 1, "input_hw": 8, "depth": 1, "mlp_ratio": 1},
  "train": {"seed": 1}
})";
    }

    // --- train (twice, identical seeds; outputs land in the cwd) ----------
    const fs::path run_a = scratch / "run_a";
    const fs::path run_b = scratch / "run_b";
    const fs::path run_c = scratch / "run_c";
    for (const fs::path& d : {run_a, run_b, run_c}) fs::create_directories(d);
    const std::string train_cmd = cli + " train --config " + cfg_path.string();
    {
        const int rc = run("cd " + run_a.string() + " && " + train_cmd,
                           log_dir / "train_a.log");
        report(rc == 0, "train exits cleanly");
        bool files = true;
        for (const char* f :
             {"train_metrics.csv", "train_loss.svg", "train_accuracy.svg", "model.ckpt"})
            files = files && fs::exists(run_a / f);
        report(files, "train writes metrics csv, both plots, and a checkpoint");
        report(first_line(run_a / "train_metrics.csv") ==
                   "epoch,ce,sao,total,train_acc,test_acc",
               "metrics csv carries the pinned header");
        report(count_lines(run_a / "train_metrics.csv") == 3,
               "metrics csv has one row per epoch");
    }
    {
        const int rc = run("cd " + run_b.string() + " && " + train_cmd,
                           log_dir / "train_b.log");
        report(rc == 0, "second identical train exits cleanly");
        report(same_bytes(run_a / "model.ckpt", run_b / "model.ckpt"),
               "identical seeds give byte-identical checkpoints across processes");
        report(same_bytes(run_a / "train_metrics.csv", run_b / "train_metrics.csv"),
               "identical seeds give byte-identical metrics");
    }
    {
        const int rc = run("cd " + run_c.string() + " && " + train_cmd +
                               " --mode baseline --no-sao --alpha 0 --seed 3",
                           log_dir / "train_c.log");
        report(rc == 0, "train accepts mode, alignment and seed overrides");
        report(fs::exists(run_c / "model.ckpt") &&
                   !same_bytes(run_a / "model.ckpt", run_c / "model.ckpt"),
               "a different seed and mode change the checkpoint");
    }

    const std::string ckpt = (run_a / "model.ckpt").string();

    // --- eval -------------------------------------------------------------
    {
        const int rc = run(cli + " eval --ckpt " + ckpt, log_dir / "eval1.log");
        report(rc == 0, "eval exits cleanly");
        report(slurp(log_dir / "eval1.log").find("accuracy") != std::string::npos,
               "eval reports an accuracy");
        run(cli + " eval --ckpt " + ckpt, log_dir / "eval2.log");
        report(same_bytes(log_dir / "eval1.log", log_dir / "eval2.log"),
               "repeated eval is bit-identical");
    }
    {
        const int rc = run(cli + " eval --ckpt " + ckpt + " --snr 10 --noise-target audio",
                           log_dir / "eval_noise.log");
        report(rc == 0, "eval accepts noise injection flags");
        report(slurp(log_dir / "eval_noise.log").find("SNR") != std::string::npos,
               "noisy eval mentions the SNR in effect");
    }
    {
        const int rc = run("SPIKEFUSE_THREADS=2 " + cli + " eval --ckpt " + ckpt,
                           log_dir / "eval_threads.log");
        report(rc == 0, "the worker cap env var is accepted");
    }

    // --- sweep ------------------------------------------------------------
    {
        const fs::path d = scratch / "sweep";
        fs::create_directories(d);
        const int rc = run("cd " + d.string() + " && " + cli + " sweep --ckpt " + ckpt +
                               " --snrs 0,10",
                           log_dir / "sweep.log");
        report(rc == 0, "sweep exits cleanly");
        report(fs::exists(d / "snr_sweep.csv") && fs::exists(d / "snr_sweep.svg"),
               "sweep writes csv and svg");
        report(first_line(d / "snr_sweep.csv") == "snr,accuracy",
               "sweep csv carries the pinned header");
        report(count_lines(d / "snr_sweep.csv") == 3, "sweep csv has one row per SNR");
    }

    // --- gradcheck --------------------------------------------------------
    {
        const int rc = run(cli + " gradcheck --config " + gc_cfg.string(),
                           log_dir / "gradcheck.log");
        report(rc == 0, "gradcheck exits cleanly");
        report(slurp(log_dir / "gradcheck.log").find("PASS") != std::string::npos,
               "gradcheck reports PASS");
    }

    // --- failure modes ----------------------------------------------------
    {
        const fs::path bad_cfg = scratch / "bad.json";
        std::ofstream(bad_cfg) << R"({"model": {"embd_dim": 8}})";
        report(run(cli + " train --config " + bad_cfg.string(), log_dir / "bad_cfg.log") != 0,
               "a misspelled config key is rejected");
        report(run(cli + " eval --ckpt " + (scratch / "absent.ckpt").string(),
                   log_dir / "bad_ckpt.log") != 0,
               "a missing checkpoint is rejected");
        report(run(cli + " train --config " + cfg_path.string() + " --mode sideways",
                   log_dir / "bad_mode.log") != 0,
               "an unknown mode is rejected");
        report(run(cli, log_dir / "no_sub.log") != 0, "a missing subcommand is rejected");
    }

    std::cout << (g_failures == 0 ? "all cli checks passed\n"
                                  : "cli checks FAILED: " + std::to_string(g_failures) + "\n");
    return g_failures == 0 ? 0 : 1;
}
