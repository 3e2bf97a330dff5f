// wintool: costing, gradient and Jacobian checks, training, ablations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "win/ablate.hpp"
#include "win/cost.hpp"
#include "win/errors.hpp"
#include "win/model_check.hpp"
#include "win/probe.hpp"
#include "win/train.hpp"

namespace fs = std::filesystem;
using namespace win;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kIo = 3 };

struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ModelConfig resolve_model(const std::string& spec) {
    if (is_preset(spec)) return preset(spec);
    if (!fs::exists(spec)) throw IoFailure("model config '" + spec + "' is neither a preset nor a readable file");
    return load_model_config(spec);
}

TrainConfig resolve_train(const std::string& path, const TrainConfig& fallback) {
    if (path.empty()) return fallback;
    if (!fs::exists(path)) throw IoFailure("train config '" + path + "' not found");
    return load_train_config(path);
}

void echo(const char* label, const std::string& json) { std::cout << "# " << label << "\n" << json << "\n"; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoFailure("cannot write '" + path.string() + "'");
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoFailure("cannot create '" + dir.string() + "': " + ec.message());
}

std::string scaled(std::uint64_t v, double unit, const char* suffix) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%s", static_cast<double>(v) / unit, suffix);
    return buf;
}

bool on_off(const std::string& s) { return s == "on"; }

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Win Transformer toolkit"};
    app.require_subcommand(1);

    std::string model_spec = "win-t";
    std::size_t input = 0;
    bool summary_only = false;
    auto* info = app.add_subcommand("info", "parameter and MAC report (analytic, allocates no tensors)");
    info->add_option("--model", model_spec, "preset (win-t, win-s, win-b, tiny) or model JSON");
    info->add_option("--input", input, "square input size in pixels (default: the config's)");
    info->add_flag("--summary", summary_only, "totals only, no per-layer table");

    std::string config = "tiny";
    std::uint64_t seed = 0;
    double eps = kModelCheckEps;
    std::size_t coords = 16;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the whole model (float64)");
    gradcheck->add_option("--config", config, "preset or model JSON");
    gradcheck->add_option("--seed", seed, "weights, input and label seed");
    gradcheck->add_option("--eps", eps, "central-difference step")->check(CLI::PositiveNumber);
    gradcheck->add_option("--coords", coords, "sampled coordinates per parameter tensor (0: all)");

    std::string conv, shift;
    std::size_t stage = 0, max_targets = 0;
    auto* probe = app.add_subcommand("probe", "cross-window Jacobian sparsity of one stage");
    probe->add_option("--config", config, "preset or model JSON");
    probe->add_option("--conv", conv, "override the conv sublayer")->check(CLI::IsMember({"on", "off"}));
    probe->add_option("--shift", shift, "override shifted windows")->check(CLI::IsMember({"on", "off"}));
    probe->add_option("--stage", stage, "stage index");
    probe->add_option("--seed", seed, "weights and input seed");
    probe->add_option("--max-targets", max_targets, "probe this many target tokens (0: all)");

    std::string train_config, out_dir;
    bool timing = false, quiet = false;
    auto* train = app.add_subcommand("train", "train on the synthetic task; writes metrics.csv and final.ckpt");
    train->add_option("--config", config, "preset or model JSON");
    train->add_option("--train-config", train_config, "train JSON (default: built-in settings)");
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_flag("--timing", timing, "record wall_ms (otherwise 0, keeping the CSV reproducible)");
    train->add_flag("--quiet", quiet, "no per-row progress");

    std::string axis;
    std::size_t threads = 1;
    auto* ablate_cmd = app.add_subcommand("ablate", "train a variant grid; writes ablate_<axis>.csv");
    ablate_cmd->add_option("--axis", axis, "placement, conv_shift, kernel or pe")
        ->required()
        ->check(CLI::IsMember({"placement", "conv_shift", "kernel", "pe"}));
    ablate_cmd->add_option("--out", out_dir, "output directory")->required();
    ablate_cmd->add_option("--config", config, "base preset or model JSON");
    ablate_cmd->add_option("--train-config", train_config, "train JSON (default: 2048 samples, batch 64)");
    ablate_cmd->add_option("--threads", threads, "variants trained concurrently")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*info) {
            auto cfg = resolve_model(model_spec);
            if (input != 0) cfg.input_h = cfg.input_w = input;
            echo("model", to_json(cfg));
            const auto report = count_flops(cfg, cfg.input_h, cfg.input_w);
            if (!summary_only) std::cout << report.table();
            std::cout << "params " << report.total_params() << " (" << scaled(report.total_params(), 1e6, "M")
                      << ")\nmacs   " << report.total_macs() << " (" << scaled(report.total_macs(), 1e9, "G")
                      << ")\n";
            return kOk;
        }
        if (*gradcheck) {
            const auto cfg = resolve_model(config);
            echo("model", to_json(cfg));
            std::cout << "seed " << seed << "  eps " << eps << "  coords/param " << coords << "\n";
            const auto r = model_grad_check(cfg, seed, eps, coords);
            std::cout << r.text();
            const bool ok = r.passed(kModelCheckTolerance);
            std::cout << (ok ? "PASS" : "FAIL") << " (tolerance " << kModelCheckTolerance << ")\n";
            return ok ? kOk : kCheckFailed;
        }
        if (*probe) {
            auto cfg = resolve_model(config);
            if (!conv.empty()) {
                if (!on_off(conv)) {
                    cfg.conv_placement = ConvPlacement::none;
                } else if (cfg.conv_placement == ConvPlacement::none) {
                    cfg.conv_placement = ConvPlacement::late_residual;
                }
            }
            if (!shift.empty()) cfg.shifted = on_off(shift);
            echo("model", to_json(cfg));
            const auto s = probe_summary(cfg, stage, seed, max_targets);
            std::cout << s.text();
            return s.matches_prediction() ? kOk : kCheckFailed;
        }
        if (*train) {
            const auto cfg = resolve_model(config);
            const auto tc = resolve_train(train_config, TrainConfig{});
            echo("model", to_json(cfg));
            echo("train", to_json(tc));
            make_dir(out_dir);
            write_text(fs::path(out_dir) / "model.json", to_json(cfg) + "\n");
            write_text(fs::path(out_dir) / "train.json", to_json(tc) + "\n");
            const auto data = gen_synthetic(tc.task, tc.samples, cfg.input_h, cfg.input_w, cfg.window, tc.seed);
            TrainOptions opt;
            opt.out_dir = out_dir;
            opt.timing = timing;
            opt.progress = quiet ? nullptr : &std::cout;
            const auto r = train_toy(cfg, tc, data, opt);
            std::cout << "final train accuracy " << r.final_train_acc << "\nfinal eval accuracy  "
                      << r.final_eval_acc << "\nwrote " << (fs::path(out_dir) / "metrics.csv").string() << ", "
                      << (fs::path(out_dir) / "final.ckpt").string() << "\n";
            return kOk;
        }
        if (*ablate_cmd) {
            const auto cfg = resolve_model(config);
            const auto tc = resolve_train(train_config, ablation_train_config());
            echo("model", to_json(cfg));
            echo("train", to_json(tc));
            const auto a = parse_ablation_axis(axis);
            make_dir(out_dir);
            const auto table = ablate(a, cfg, tc, threads, &std::cout);
            const auto path = fs::path(out_dir) / ("ablate_" + axis + ".csv");
            table.write_csv(path);
            std::cout << table.to_csv() << "wrote " << path.string() << "\n";
            return kOk;
        }
    } catch (const IoFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == CheckpointError::Kind::io ? kIo : kCheckFailed;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const GeometryError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kCheckFailed;
    }
    return kUsage;
}

int main(int argc, char** argv) { return run(argc, argv); }
