// End-to-end acceptance checks; one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "win/ablate.hpp"
#include "win/checkpoint.hpp"
#include "win/cost.hpp"
#include "win/model_check.hpp"
#include "win/probe.hpp"
#include "win/train.hpp"
#include "win/window_ops.hpp"

using namespace win;
using TensorD = Tensor<double>;

namespace {

struct Verdict {
    bool ok = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void report(int id, const char* title, const std::function<void(Verdict&)>& body) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(v);
    } catch (const std::exception& e) {
        v.ok = false;
        v.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.ok) ++failures;
    std::printf("%s %d %s:%s (%.1fs)\n", v.ok ? "PASS" : "FAIL", id, title, v.detail.str().c_str(), secs);
    std::fflush(stdout);
}

double rel(double value, double target) { return std::abs(value - target) / target; }

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

TensorD random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = d(rng);
    return TensorD(std::move(shape), std::move(v));
}

bool bit_equal(const TensorD& a, const TensorD& b) {
    return a.shape() == b.shape() && std::memcmp(a.values().data(), b.values().data(), a.size() * 8) == 0;
}

double max_abs_diff(const TensorD& a, const TensorD& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

AttentionParams<double> random_attention(const BlockConfig& cfg, std::mt19937_64& rng) {
    const std::size_t C = cfg.channels, M = cfg.window;
    AttentionParams<double> p;
    p.qkv_weight = random_tensor({C, 3 * C}, rng);
    p.qkv_bias = random_tensor({3 * C}, rng);
    p.proj_weight = random_tensor({C, C}, rng);
    p.proj_bias = random_tensor({C}, rng);
    if (cfg.pe_mode == PeMode::rpe) p.rpe_table = random_tensor({(2 * M - 1) * (2 * M - 1), cfg.heads}, rng);
    if (cfg.pe_mode == PeMode::lepe) p.lepe_kernel = random_tensor({kLepeKernel, kLepeKernel, C}, rng);
    return p;
}

BlockConfig attention_config(std::size_t C, std::size_t heads, std::size_t M, PeMode pe) {
    BlockConfig c;
    c.channels = C;
    c.heads = heads;
    c.window = M;
    c.pe_mode = pe;
    return c;
}

TensorD attend_map(const TensorD& x, const AttentionParams<double>& p, const BlockConfig& cfg) {
    auto [wins, grid] = window_partition(x, cfg.window);
    return window_reverse(window_attention(wins, p, cfg), grid);
}

// Sum over blocks of f(C, tokens, heads).
template <typename F>
std::uint64_t over_blocks(const ModelConfig& cfg, F f) {
    std::uint64_t total = 0;
    for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
        const std::uint64_t tokens = cfg.stage_height(s, cfg.input_h) * cfg.stage_width(s, cfg.input_w);
        total += cfg.depths[s] * f(cfg.stage_channels(s), tokens, cfg.heads[s]);
    }
    return total;
}

void parameter_counts(Verdict& v) {
    const struct {
        const char* name;
        double target;
    } rows[] = {{"win_t", 28.50e6}, {"win_s", 50e6}, {"win_b", 88e6}};
    for (const auto& r : rows) {
        const auto n = static_cast<double>(count_params(preset(r.name)).total_params());
        v.detail << " " << r.name << " " << fmt("%.3fM (%.2f%%)", n / 1e6, 100 * rel(n, r.target));
        v.require(rel(n, r.target) <= 0.02, std::string(r.name) + " outside 2%");
    }
    auto k3 = preset("win_t");
    k3.conv_kernel = 3;
    const auto delta = count_params(preset("win_t")).total_params() - count_params(k3).total_params();
    v.detail << "; k7-k3 delta " << delta;
    v.require(delta == 176640, "k7-k3 delta != 176640");
}

void mac_counts(Verdict& v) {
    const struct {
        const char* name;
        double target;
    } rows[] = {{"win_t", 4.56e9}, {"win_s", 8.9e9}, {"win_b", 15.6e9}};
    std::size_t blocks = 0;
    for (const auto& r : rows) {
        const auto cfg = preset(r.name);
        const auto report = count_flops(cfg, 224, 224);
        const auto n = static_cast<double>(report.total_macs());
        v.detail << " " << r.name << " " << fmt("%.3fG (%.2f%%)", n / 1e9, 100 * rel(n, r.target));
        v.require(rel(n, r.target) <= 0.05, std::string(r.name) + " outside 5%");
        for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
            const std::uint64_t H = 224 / 4 >> s, C = cfg.stage_channels(s), k = cfg.conv_kernel;
            for (std::size_t b = 0; b < cfg.depths[s]; ++b) {
                const auto name = "stages." + std::to_string(s) + ".blocks." + std::to_string(b) + ".conv.weight";
                const auto* e = report.find(name);
                v.require(e && e->macs == H * H * k * k * C, std::string(r.name) + " " + name + " != HWk^2c");
                ++blocks;
            }
        }
    }
    v.detail << "; dwconv MACs == HWk^2c in all " << blocks << " blocks";
}

void gradient_correctness(Verdict& v) {
    double worst = 0, worst_key = 0;
    std::string worst_cfg;
    std::size_t configs = 0;
    for (auto placement : {ConvPlacement::late_residual, ConvPlacement::early_residual, ConvPlacement::none}) {
        for (auto pe : {PeMode::rpe, PeMode::lepe, PeMode::none}) {
            for (bool shifted : {false, true}) {
                auto cfg = preset("tiny");
                cfg.conv_placement = placement;
                cfg.pe_mode = pe;
                cfg.shifted = shifted;
                const auto r = model_grad_check(cfg, configs);
                const std::string label = std::string(to_string(placement)) + "/" + std::string(to_string(pe)) +
                                          (shifted ? "/shifted" : "/plain");
                if (r.max_relative_error > worst) {
                    worst = r.max_relative_error;
                    worst_cfg = label;
                }
                worst_key = std::max(worst_key, r.key_bias_max_abs);
                v.require(r.passed(kModelCheckTolerance), label + ": " + fmt("%.3e", r.max_relative_error));
                ++configs;
            }
        }
    }
    v.detail << " " << configs << " configs, max rel err " << fmt("%.3e", worst) << " (" << worst_cfg
             << ", eps " << fmt("%.0e", kModelCheckEps) << ", tol 1e-4); key-bias |grad| "
             << fmt("%.1e", worst_key);
}

void cross_window_isolation(Verdict& v) {
    std::size_t checked = 0;
    for (std::size_t M : {4u, 2u}) {
        for (std::size_t stage = 0; stage < 2; ++stage) {
            auto cfg = preset("tiny");
            cfg.window = M;
            if (cfg.stage_height(stage, cfg.input_h) == M) continue;  // single window
            cfg.conv_placement = ConvPlacement::none;
            cfg.shifted = false;
            const auto off = probe_summary(cfg, stage);
            cfg.conv_placement = ConvPlacement::late_residual;
            const auto on = probe_summary(cfg, stage);
            const std::string where = "M=" + std::to_string(M) + " stage " + std::to_string(stage);
            v.require(off.cross_pairs > 0 && off.max_cross == 0.0, where + " conv off: cross |J| not exactly 0");
            v.require(on.boundary_pairs > 0 && on.min_boundary > kCouplingFloor,
                      where + " conv on: boundary |J| <= 1e-8");
            v.detail << " " << where << ": off max " << fmt("%.1e", off.max_cross) << ", on boundary min "
                     << fmt("%.2e", on.min_boundary) << ";";
            ++checked;
        }
    }
    v.require(checked == 3, "expected 3 multi-window geometries");
}

void structural_round_trips(Verdict& v) {
    std::mt19937_64 rng(5);
    auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
    const std::size_t cases = 150;
    std::size_t partition_ok = 0, shift_ok = 0, ckpt_ok = 0;
    for (std::size_t i = 0; i < cases; ++i) {
        const std::size_t M = pick(1, 7), B = pick(1, 3), C = pick(1, 4);
        const std::size_t H = M * pick(1, std::max<std::size_t>(1, 64 / M)), W = M * pick(1, std::max<std::size_t>(1, 64 / M));
        auto x = random_tensor({B, H, W, C}, rng);
        auto [wins, grid] = window_partition(x, M);
        partition_ok += bit_equal(window_reverse(wins, grid), x);

        const auto s = static_cast<std::ptrdiff_t>(pick(0, 2 * H)) - static_cast<std::ptrdiff_t>(H);
        shift_ok += bit_equal(cyclic_shift(cyclic_shift(x, s), -s), x);

        Checkpoint c;
        const std::size_t entries = pick(1, 4);
        for (std::size_t e = 0; e < entries; ++e) {
            Shape shape(pick(0, 3));
            for (auto& d : shape) d = pick(1, 6);
            auto t = random_tensor(shape, rng, -1e6, 1e6);
            if (e % 2) {
                c.push_back({"e" + std::to_string(e), cast<float>(t)});
            } else {
                c.push_back({"e" + std::to_string(e), t});
            }
        }
        const auto bytes = serialize_checkpoint(c);
        ckpt_ok += serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes;
    }
    const auto tiny = preset("tiny");
    const auto path = std::filesystem::temp_directory_path() / "win_acceptance.ckpt";
    const auto ckpt = to_checkpoint(init_params<float>(tiny, 1));
    save_checkpoint(ckpt, path);
    const bool file_ok = serialize_checkpoint(load_checkpoint(path)) == serialize_checkpoint(ckpt);
    std::filesystem::remove(path);

    v.detail << " partition/reverse " << partition_ok << "/" << cases << ", cyclic shift inverse " << shift_ok << "/"
             << cases << ", checkpoint bit-exact " << ckpt_ok << "/" << cases << " + model file "
             << (file_ok ? "ok" : "MISMATCH");
    v.require(partition_ok == cases && shift_ok == cases && ckpt_ok == cases && file_ok, "inexact round trip");
}

void equivariance_suite(Verdict& v) {
    std::mt19937_64 rng(6);
    // Within-window permutation, pe=none: every permutation of 4 tokens.
    double perm_err = 0;
    std::size_t perms = 0;
    {
        auto cfg = attention_config(6, 2, 2, PeMode::none);
        auto p = random_attention(cfg, rng);
        auto wins = random_tensor({5, 4, 6}, rng);
        auto base = window_attention(wins, p, cfg);
        auto permute = [](const TensorD& w, const std::vector<std::size_t>& perm) {
            const std::size_t G = w.extent(0), N = w.extent(1), C = w.extent(2);
            std::vector<double> out(w.size());
            for (std::size_t g = 0; g < G; ++g)
                for (std::size_t t = 0; t < N; ++t)
                    for (std::size_t c = 0; c < C; ++c) out[(g * N + t) * C + c] = w[(g * N + perm[t]) * C + c];
            return TensorD(w.shape(), std::move(out));
        };
        std::vector<std::size_t> perm{0, 1, 2, 3};
        while (std::next_permutation(perm.begin(), perm.end())) {
            perm_err = std::max(perm_err, max_abs_diff(window_attention(permute(wins, perm), p, cfg), permute(base, perm)));
            ++perms;
        }
        auto rpe = attention_config(6, 2, 2, PeMode::rpe);
        auto prpe = random_attention(rpe, rng);
        const std::vector<std::size_t> swap{3, 0, 2, 1};
        const double broken =
            max_abs_diff(window_attention(permute(wins, swap), prpe, rpe), permute(window_attention(wins, prpe, rpe), swap));
        v.require(broken > 1e-6, "rpe did not break permutation equivariance");
    }
    v.require(perm_err <= 1e-12, "permutation equivariance error " + fmt("%.2e", perm_err));

    // Cyclic translation by exactly (M, M) commutes with plain windowed attention.
    double trans_err = 0;
    for (PeMode pe : {PeMode::rpe, PeMode::lepe}) {
        auto cfg = attention_config(8, 2, 4, pe);
        auto p = random_attention(cfg, rng);
        auto x = random_tensor({2, 12, 8, 8}, rng);
        trans_err = std::max(trans_err, max_abs_diff(attend_map(cyclic_shift(x, 4), p, cfg),
                                                     cyclic_shift(attend_map(x, p, cfg), 4)));
    }
    v.require(trans_err <= 1e-12, "translation error " + fmt("%.2e", trans_err));

    // Shifted windows: attention across pre-shift regions after masking.
    double cross = 0;
    for (std::size_t M : {2u, 4u, 6u}) {
        const std::size_t s = M / 2;
        auto cfg = attention_config(8, 2, M, PeMode::rpe);
        auto p = random_attention(cfg, rng);
        auto x = cyclic_shift(random_tensor({2, 2 * M, 3 * M, 8}, rng, -3, 3), static_cast<std::ptrdiff_t>(s));
        auto [wins, grid] = window_partition(x, M);
        const auto labels = shift_region_labels(grid, s);
        AttentionTrace<double> trace;
        window_attention(wins, p, cfg, shift_attention_mask<double>(grid, s), &trace);
        const std::size_t N = M * M, nW = grid.windows_per_image();
        for (std::size_t g = 0; g < 2 * nW; ++g)
            for (std::size_t h = 0; h < 2; ++h)
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t j = 0; j < N; ++j)
                        if (labels[(g % nW) * N + i] != labels[(g % nW) * N + j])
                            cross = std::max(cross, trace.probabilities.at({g, h, i, j}));
    }
    v.require(cross <= 1e-8, "cross-region attention " + fmt("%.2e", cross));
    v.detail << " permutation (" << perms << " perms, pe=none) max err " << fmt("%.1e", perm_err)
             << ", rpe breaks it; (M,M) translation max err " << fmt("%.1e", trans_err)
             << "; cross-region attention max " << fmt("%.1e", cross);
}

void desk_scale_learning(Verdict& v) {
    const auto tiny = preset("tiny");
    auto off = tiny;
    off.conv_placement = ConvPlacement::none;
    off.shifted = false;

    TrainConfig small;  // n = 64, 500 steps, seed 0
    const auto data = gen_synthetic(small.task, small.samples, tiny.input_h, tiny.input_w, tiny.window, small.seed);
    const auto on_run = train_toy(tiny, small, data);
    const auto off_run = train_toy(off, small, data);
    v.detail << " n=64, 500 steps: conv on train acc " << fmt("%.3f", on_run.final_train_acc) << ", conv/shift off "
             << fmt("%.3f", off_run.final_train_acc) << ";";
    v.require(small.steps <= 500 && small.samples == 64, "training budget");
    v.require(on_run.final_train_acc >= 0.95, "conv-on train accuracy below 95%");
    v.require(off_run.final_train_acc <= on_run.final_train_acc, "conv-off accuracy above conv-on at n=64");

    // Held-out accuracy needs more than 64 samples to mean anything.
    const auto big = ablation_train_config();
    const auto big_data = gen_synthetic(big.task, big.samples, tiny.input_h, tiny.input_w, tiny.window, big.seed);
    const auto on_big = train_toy(tiny, big, big_data);
    const auto off_big = train_toy(off, big, big_data);
    v.detail << " n=" << big.samples << " held-out acc: conv on " << fmt("%.3f", on_big.final_eval_acc)
             << ", conv/shift off " << fmt("%.3f", off_big.final_eval_acc);
    v.require(off_big.final_eval_acc <= on_big.final_eval_acc, "conv-off held-out accuracy above conv-on");
}

void ablation_tables(Verdict& v) {
    const auto base = preset("tiny");
    TrainConfig quick;
    quick.steps = 4;
    quick.warmup_steps = 1;
    quick.batch_size = 8;
    quick.samples = 16;
    quick.eval_samples = 16;
    quick.eval_every = 2;

    std::map<std::string, std::map<std::string, std::pair<std::uint64_t, std::uint64_t>>> got;
    const std::map<std::string, std::vector<std::string>> expected{
        {"placement", {"late_residual", "early_residual", "no_residual"}},
        {"conv_shift", {"conv_off/shift_off", "conv_off/shift_on", "conv_on/shift_off", "conv_on/shift_on"}},
        {"kernel", {"k3", "k5", "k7"}},
        {"pe", {"rpe", "lepe", "none"}}};
    for (auto axis : {AblationAxis::placement, AblationAxis::conv_shift, AblationAxis::kernel, AblationAxis::pe}) {
        const auto table = ablate(axis, base, quick);
        const std::string name(to_string(axis));
        std::vector<std::string> names;
        for (const auto& r : table.rows) {
            names.push_back(r.variant);
            got[name][r.variant] = {r.params, r.macs};
            v.require(r.final_acc >= 0 && r.final_acc <= 1, name + "/" + r.variant + " accuracy out of range");
        }
        v.require(names == expected.at(name), name + " variant set");
        v.require(table.to_csv().starts_with("variant,params,macs,final_acc\n"), name + " csv header");
        v.detail << " " << name << "=" << names.size();
    }

    const std::uint64_t sum_c = over_blocks(base, [](auto C, auto, auto) { return C; });
    const std::uint64_t sum_tc = over_blocks(base, [](auto C, auto T, auto) { return C * T; });
    const std::uint64_t table = (2 * base.window - 1) * (2 * base.window - 1);
    const std::uint64_t sum_rpe = over_blocks(base, [&](auto, auto, auto h) { return table * h; });
    const std::uint64_t k2 = base.conv_kernel * base.conv_kernel;
    auto d = [&](const char* axis, const char* a, const char* b) {
        const auto& x = got[axis][a];
        const auto& y = got[axis][b];
        return std::pair<std::int64_t, std::int64_t>{std::int64_t(x.first) - std::int64_t(y.first),
                                                     std::int64_t(x.second) - std::int64_t(y.second)};
    };
    using P = std::pair<std::int64_t, std::int64_t>;
    auto S = [](std::uint64_t a, std::uint64_t b) { return P{std::int64_t(a), std::int64_t(b)}; };
    v.require(d("kernel", "k7", "k3") == S(40 * sum_c, 40 * sum_tc), "kernel k7-k3 delta");
    v.require(d("kernel", "k5", "k3") == S(16 * sum_c, 16 * sum_tc), "kernel k5-k3 delta");
    v.require(d("conv_shift", "conv_on/shift_off", "conv_off/shift_off") == S((k2 + 3) * sum_c, k2 * sum_tc),
              "conv on-off delta");
    v.require(d("conv_shift", "conv_on/shift_on", "conv_on/shift_off") == S(0, 0), "shift delta (conv on)");
    v.require(d("conv_shift", "conv_off/shift_on", "conv_off/shift_off") == S(0, 0), "shift delta (conv off)");
    v.require(d("pe", "rpe", "none") == S(sum_rpe, 0), "rpe delta");
    v.require(d("pe", "lepe", "none") == S(9 * sum_c, 9 * sum_tc), "lepe delta");
    v.require(d("placement", "early_residual", "late_residual") == S(0, 0), "placement delta early");
    v.require(d("placement", "no_residual", "late_residual") == S(0, 0), "placement delta none");
    v.detail << "; deltas: k7-k3 " << 40 * sum_c << " params / " << 40 * sum_tc << " MACs, conv "
             << (k2 + 3) * sum_c << " / " << k2 * sum_tc << ", rpe " << sum_rpe << " / 0, lepe " << 9 * sum_c
             << " / " << 9 * sum_tc << ", shift and placement 0";
}

}  // namespace

int main() {
    report(1, "parameter counts", parameter_counts);
    report(2, "MAC counts at 224", mac_counts);
    report(3, "gradient correctness (tiny, float64, 18 configs)", gradient_correctness);
    report(4, "cross-window isolation", cross_window_isolation);
    report(5, "structural round trips", structural_round_trips);
    report(6, "equivariance suite", equivariance_suite);
    report(7, "desk-scale learning (crosswindow)", desk_scale_learning);
    report(8, "ablation tables", ablation_tables);
    std::printf("%d of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
