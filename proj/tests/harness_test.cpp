#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "win/ablate.hpp"
#include "win/cost.hpp"
#include "win/dataset.hpp"
#include "win/errors.hpp"
#include "win/probe.hpp"
#include "win/train.hpp"

using namespace win;

namespace {

namespace fs = std::filesystem;

// right, left, down, up
constexpr int kDr[] = {0, 0, 1, -1};
constexpr int kDc[] = {1, -1, 0, 0};

int sign(long v) { return (v > 0) - (v < 0); }

TrainConfig short_run(std::size_t steps) {
    TrainConfig c;
    c.steps = steps;
    c.warmup_steps = std::min<std::size_t>(steps, 3);
    c.batch_size = 8;
    c.samples = 16;
    c.eval_samples = 8;
    c.eval_every = 2;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Sum over blocks of a per-block quantity f(C, tokens, heads).
template <typename F>
std::uint64_t over_blocks(const ModelConfig& cfg, F f) {
    std::uint64_t total = 0;
    for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
        const std::uint64_t tokens = cfg.stage_height(s, cfg.input_h) * cfg.stage_width(s, cfg.input_w);
        total += cfg.depths[s] * f(cfg.stage_channels(s), tokens, cfg.heads[s]);
    }
    return total;
}

}  // namespace

// ---- dataset ----

TEST(Dataset, CrosswindowMarkersLieInAdjacentWindows) {
    auto d = gen_synthetic(Task::crosswindow, 64, 32, 32, 4, 7);
    ASSERT_EQ(d.size(), 64u);
    EXPECT_EQ(d.images.shape(), (Shape{64, 32, 32, 3}));
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto a = d.marker_a[i], b = d.marker_b[i];
        ASSERT_NE(d.window_of(a), d.window_of(b)) << "sample " << i;
        const long wr = long(b.row / 4) - long(a.row / 4), wc = long(b.col / 4) - long(a.col / 4);
        EXPECT_EQ(wr, kDr[d.labels[i]]);
        EXPECT_EQ(wc, kDc[d.labels[i]]);
    }
}

TEST(Dataset, MarkersArePaintedOnWholePatches) {
    auto d = gen_synthetic(Task::crosswindow, 8, 32, 32, 4, 1);
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t y = 0; y < 32; ++y) {
            for (std::size_t x = 0; x < 32; ++x) {
                const TokenPos t{y / 4, x / 4};
                const double r = d.images.at({i, y, x, 0}), g = d.images.at({i, y, x, 1}),
                             b = d.images.at({i, y, x, 2});
                EXPECT_EQ(r > 0.5, t == d.marker_a[i]);
                EXPECT_EQ(g > 0.5, t == d.marker_b[i]);
                EXPECT_LE(std::abs(b), 0.1);
            }
        }
    }
}

TEST(Dataset, LocalMarkersShareAWindow) {
    for (std::size_t M : {2u, 4u}) {
        auto d = gen_synthetic(Task::local, 200, 8 * M * 2, 8 * M, M, 3);
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto a = d.marker_a[i], b = d.marker_b[i];
            ASSERT_EQ(d.window_of(a), d.window_of(b));
            ASSERT_FALSE(a == b);
            EXPECT_EQ(sign(long(b.row) - long(a.row)), kDr[d.labels[i]]);
            EXPECT_EQ(sign(long(b.col) - long(a.col)), kDc[d.labels[i]]);
        }
    }
}

TEST(Dataset, DeterministicInSeed) {
    auto a = gen_synthetic(Task::crosswindow, 32, 32, 48, 4, 11);
    auto b = gen_synthetic(Task::crosswindow, 32, 32, 48, 4, 11);
    auto c = gen_synthetic(Task::crosswindow, 32, 32, 48, 4, 12);
    EXPECT_TRUE(std::equal(a.images.values().begin(), a.images.values().end(), b.images.values().begin()));
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.marker_a, b.marker_a);
    EXPECT_FALSE(std::equal(a.images.values().begin(), a.images.values().end(), c.images.values().begin()));
}

TEST(Dataset, LabelsAreBalanced) {
    for (std::size_t n : {1u, 7u, 64u, 10001u}) {
        auto d = gen_synthetic(Task::crosswindow, n, 32, 32, 4, 5);
        std::size_t counts[4] = {};
        for (int l : d.labels) ++counts[l];
        const auto [lo, hi] = std::minmax_element(counts, counts + 4);
        EXPECT_LE(*hi - *lo, 1u) << n;
    }
    auto d = gen_synthetic(Task::crosswindow, 10000, 32, 32, 4, 9);
    std::size_t counts[4] = {};
    for (int l : d.labels) ++counts[l];
    for (auto c : counts) EXPECT_NEAR(c / 10000.0, 0.25, 0.02);
}

TEST(Dataset, GeometryErrors) {
    EXPECT_THROW(gen_synthetic(Task::crosswindow, 4, 24, 32, 4, 0), GeometryError);  // 24 px is 1.5 windows
    EXPECT_THROW(gen_synthetic(Task::crosswindow, 4, 16, 32, 4, 0), GeometryError);  // a single window row
    EXPECT_THROW(gen_synthetic(Task::local, 4, 16, 16, 1, 0), GeometryError);
    EXPECT_THROW(gen_synthetic(Task::crosswindow, 0, 32, 32, 4, 0), ConfigError);
    EXPECT_EQ(parse_task("local"), Task::local);
    EXPECT_THROW(parse_task("global"), ConfigError);
}

TEST(Dataset, BatchGathersRows) {
    auto d = gen_synthetic(Task::crosswindow, 6, 32, 32, 4, 2);
    auto b = d.batch<float>({5, 0});
    EXPECT_EQ(b.shape(), (Shape{2, 32, 32, 3}));
    EXPECT_EQ(b.at({0, 3, 4, 1}), static_cast<float>(d.images.at({5, 3, 4, 1})));
    EXPECT_EQ(b.at({1, 31, 0, 2}), static_cast<float>(d.images.at({0, 31, 0, 2})));
    EXPECT_EQ(d.batch_labels({5, 0}), (std::vector<int>{d.labels[5], d.labels[0]}));
    EXPECT_THROW(d.batch<double>({6}), ShapeError);
}

// ---- schedule ----

TEST(Schedule, EndpointsAndShape) {
    TrainConfig c;
    c.steps = 100;
    c.warmup_steps = 10;
    c.lr_peak = 3e-3;
    EXPECT_EQ(lr_at(0, c), 0.0);
    EXPECT_DOUBLE_EQ(lr_at(5, c), 1.5e-3);
    EXPECT_DOUBLE_EQ(lr_at(10, c), 3e-3);
    EXPECT_NEAR(lr_at(55, c), 1.5e-3, 1e-15);  // halfway through the cosine
    EXPECT_NEAR(lr_at(100, c), 0.0, 1e-12);
    for (std::size_t s = 11; s <= 100; ++s) EXPECT_LT(lr_at(s, c), lr_at(s - 1, c));
    EXPECT_THROW(lr_at(101, c), ConfigError);
}

TEST(Schedule, DegenerateWarmups) {
    TrainConfig c;
    c.steps = 4;
    c.warmup_steps = 0;
    c.lr_peak = 1.0;
    EXPECT_EQ(lr_at(0, c), 1.0);
    EXPECT_NEAR(lr_at(2, c), 0.5, 1e-15);
    c.warmup_steps = 4;
    EXPECT_EQ(lr_at(4, c), 1.0);
    c.warmup_steps = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(lr_at(1, c), ConfigError);
}

TEST(TrainConfigJson, RoundTripAndRejections) {
    TrainConfig c;
    c.steps = 12;
    c.warmup_steps = 4;
    c.seed = 99;
    c.dtype = DType::f64;
    c.task = Task::local;
    auto back = train_config_from_json(to_json(c));
    EXPECT_EQ(back.steps, 12u);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.dtype, DType::f64);
    EXPECT_EQ(back.task, Task::local);
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_THROW(train_config_from_json(R"({"step": 3})"), ConfigError);
    EXPECT_THROW(train_config_from_json(R"({"steps": -1})"), ConfigError);
    EXPECT_THROW(train_config_from_json(R"({"steps": 3, "warmup_steps": 4})"), ConfigError);
    EXPECT_THROW(train_config_from_json(R"({"dtype": "f16"})"), ConfigError);
    EXPECT_THROW(train_config_from_json("[1]"), ConfigError);
    EXPECT_THROW(load_train_config("/nonexistent/train.json"), ConfigError);
}

// ---- AdamW ----

TEST(AdamW, ZeroGradientLeavesParamsUnchanged) {
    std::vector<Tensor<double>> p{Tensor<double>({3}, {1, -2, 3})};
    AdamWState<double> st;
    for (int i = 0; i < 5; ++i) adamw_step(p, {{0, 0, 0}}, st, {0.1, 0.9, 0.999, 1e-8, 0.0});
    EXPECT_EQ(p[0].at({0}), 1.0);
    EXPECT_EQ(p[0].at({1}), -2.0);
    EXPECT_EQ(p[0].at({2}), 3.0);
}

TEST(AdamW, FirstStepIsUnitNormalised) {
    std::vector<Tensor<double>> p{Tensor<double>::scalar(1.0)};
    AdamWState<double> st;
    adamw_step(p, {{1.0}}, st, {0.1, 0.9, 0.999, 1e-8, 0.0});
    // m_hat = 1, v_hat = 1: theta = 1 - 0.1 / (1 + 1e-8)
    EXPECT_NEAR(p[0].item(), 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p[0].item(), 0.9, 1e-8);
}

TEST(AdamW, DecoupledDecayIsGeometric) {
    std::vector<Tensor<double>> p{Tensor<double>({2}, {2.0, -1.0})};
    AdamWState<double> st;
    const double lr = 0.01, wd = 0.5;
    for (int i = 0; i < 20; ++i) adamw_step(p, {{0, 0}}, st, {lr, 0.9, 0.999, 1e-8, wd});
    EXPECT_NEAR(p[0].at({0}), 2.0 * std::pow(1 - lr * wd, 20), 1e-14);
    EXPECT_NEAR(p[0].at({1}), -1.0 * std::pow(1 - lr * wd, 20), 1e-14);
}

TEST(AdamW, MatchesReferenceAdamWithoutDecay) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0, 1);
    std::vector<double> theta{0.3, -0.7, 1.1}, m(3, 0), v(3, 0);
    std::vector<Tensor<double>> p{Tensor<double>({3}, theta)};
    AdamWState<double> st;
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 7; ++t) {
        std::vector<double> grad{g(rng), g(rng), g(rng)};
        for (int i = 0; i < 3; ++i) {
            m[i] = b1 * m[i] + (1 - b1) * grad[i];
            v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
            theta[i] -= lr * (m[i] / (1 - std::pow(b1, t))) / (std::sqrt(v[i] / (1 - std::pow(b2, t))) + eps);
        }
        adamw_step(p, {grad}, st, {lr, b1, b2, eps, 0.0});
    }
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[0].at({std::size_t(i)}), theta[i], 1e-13);
    EXPECT_EQ(st.step, 7u);
}

TEST(AdamW, DecayMaskExempts) {
    std::vector<Tensor<double>> p{Tensor<double>({1}, {1.0}), Tensor<double>({1}, {1.0})};
    AdamWState<double> st;
    adamw_step(p, {{0}, {0}}, st, {0.1, 0.9, 0.999, 1e-8, 0.1}, {true, false});
    EXPECT_NEAR(p[0].at({0}), 0.99, 1e-15);
    EXPECT_EQ(p[1].at({0}), 1.0);
}

TEST(AdamW, ShapeMismatchesThrow) {
    std::vector<Tensor<double>> p{Tensor<double>({2})};
    AdamWState<double> st;
    EXPECT_THROW(adamw_step(p, {{0}}, st, {}), ShapeError);
    EXPECT_THROW(adamw_step(p, {}, st, {}), ShapeError);
    EXPECT_THROW(adamw_step(p, {{0, 0}}, st, {}, {true, true}), ShapeError);
    adamw_step(p, {{0, 0}}, st, {});
    std::vector<Tensor<double>> other{Tensor<double>({3})};
    EXPECT_THROW(adamw_step(other, {{0, 0, 0}}, st, {}), ShapeError);
}

TEST(AdamW, DecayMaskSkipsVectorsAndBiasTables) {
    auto cfg = preset("tiny");
    cfg.pe_mode = PeMode::rpe;
    auto p = init_params<float>(cfg, 0);
    auto mask = weight_decay_mask(p);
    ASSERT_EQ(mask.size(), p.all.size());
    std::size_t decayed = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const auto& nt = p.all[i];
        if (nt.name.ends_with("relative_position_bias_table") || nt.tensor.rank() == 1) {
            EXPECT_FALSE(mask[i]) << nt.name;
        } else {
            EXPECT_TRUE(mask[i]) << nt.name;
            ++decayed;
        }
    }
    EXPECT_GT(decayed, 0u);
}

// ---- metrics and training ----

TEST(Metrics, StepsStrictlyIncrease) {
    MetricsLog log;
    log.append({0, 0, 1, 0, 0, 0});
    log.append({5, 0.1, 1, 0, 0, 0});
    EXPECT_THROW(log.append({5, 0.1, 1, 0, 0, 0}), ConfigError);
    EXPECT_THROW(log.append({3, 0.1, 1, 0, 0, 0}), ConfigError);
    const auto csv = log.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,lr,train_loss,train_acc,eval_acc,wall_ms");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Train, ZeroStepsLogsOnlyTheInitialRow) {
    auto cfg = short_run(0);
    auto data = gen_synthetic(Task::crosswindow, cfg.samples, 32, 32, 4, cfg.seed);
    auto r = train_toy(preset("tiny"), cfg, data);
    ASSERT_EQ(r.log.rows().size(), 1u);
    EXPECT_EQ(r.log.back().step, 0u);
    EXPECT_EQ(r.log.back().lr, lr_at(0, cfg));
    EXPECT_NEAR(r.log.back().train_loss, std::log(4.0), 0.1);  // near-uniform logits at init
    EXPECT_EQ(r.final_train_acc, r.log.back().train_acc);
}

TEST(Train, SameSeedSameRun) {
    auto cfg = short_run(6);
    cfg.drop_path_max = 0.2;
    auto data = gen_synthetic(Task::crosswindow, cfg.samples, 32, 32, 4, 1);
    auto a = train_toy(preset("tiny"), cfg, data);
    auto b = train_toy(preset("tiny"), cfg, data);
    EXPECT_EQ(a.log.to_csv(), b.log.to_csv());
    EXPECT_EQ(serialize_checkpoint(a.checkpoint), serialize_checkpoint(b.checkpoint));
    cfg.seed = 1;
    auto c = train_toy(preset("tiny"), cfg, data);
    EXPECT_NE(a.log.to_csv(), c.log.to_csv());
}

TEST(Train, LoggedRatesFollowTheSchedule) {
    auto cfg = short_run(9);
    cfg.eval_every = 1;
    auto data = gen_synthetic(Task::crosswindow, cfg.samples, 32, 32, 4, 0);
    auto r = train_toy(preset("tiny"), cfg, data);
    ASSERT_EQ(r.log.rows().size(), 10u);
    for (const auto& row : r.log.rows()) EXPECT_NEAR(row.lr, lr_at(row.step, cfg), 1e-9) << row.step;

    std::istringstream csv(r.log.to_csv());
    std::string line;
    std::getline(csv, line);
    std::size_t n = 0;
    while (std::getline(csv, line)) {
        const auto step = std::stoul(line.substr(0, line.find(',')));
        const auto rest = line.substr(line.find(',') + 1);
        EXPECT_NEAR(std::stod(rest.substr(0, rest.find(','))), lr_at(step, cfg), 1e-9);
        ++n;
    }
    EXPECT_EQ(n, 10u);
}

TEST(Train, RowsAtIntervalAndFinalStep) {
    auto cfg = short_run(7);
    cfg.eval_every = 3;
    auto data = gen_synthetic(Task::crosswindow, cfg.samples, 32, 32, 4, 0);
    auto r = train_toy(preset("tiny"), cfg, data);
    std::vector<std::size_t> steps;
    for (const auto& row : r.log.rows()) steps.push_back(row.step);
    EXPECT_EQ(steps, (std::vector<std::size_t>{0, 3, 6, 7}));
    EXPECT_EQ(r.log.back().wall_ms, 0.0);
}

TEST(Train, LossDecreasesInDoublePrecision) {
    auto cfg = short_run(20);
    cfg.dtype = DType::f64;
    cfg.lr_peak = 3e-3;
    auto data = gen_synthetic(Task::crosswindow, cfg.samples, 32, 32, 4, 0);
    auto r = train_toy(preset("tiny"), cfg, data);
    EXPECT_LT(r.log.back().train_loss, r.log.rows().front().train_loss);
    auto params = params_from_checkpoint<double>(preset("tiny"), r.checkpoint);
    EXPECT_DOUBLE_EQ(evaluate(params, preset("tiny"), data), r.final_train_acc);
}

TEST(Train, WritesMetricsAndCheckpoint) {
    const auto dir = fs::temp_directory_path() / "win_harness_test" / "run";
    fs::remove_all(dir);
    auto cfg = short_run(4);
    auto data = gen_synthetic(Task::crosswindow, cfg.samples, 32, 32, 4, 0);
    TrainOptions opt;
    opt.out_dir = dir;
    auto r = train_toy(preset("tiny"), cfg, data, opt);
    EXPECT_EQ(slurp(dir / "metrics.csv"), r.log.to_csv());
    auto ckpt = load_checkpoint(dir / "final.ckpt");
    EXPECT_EQ(serialize_checkpoint(ckpt), serialize_checkpoint(r.checkpoint));
    EXPECT_NO_THROW(params_from_checkpoint<float>(preset("tiny"), ckpt));
}

TEST(Train, GeometryMismatchIsRejected) {
    auto cfg = short_run(1);
    auto data = gen_synthetic(Task::crosswindow, 8, 64, 64, 4, 0);
    EXPECT_THROW(train_toy(preset("tiny"), cfg, data), GeometryError);
    auto model = preset("tiny");
    model.num_classes = 3;
    EXPECT_THROW(train_toy(model, cfg, gen_synthetic(Task::crosswindow, 8, 32, 32, 4, 0)), ConfigError);
}

TEST(Train, DivergenceNamesTheStep) {
    auto cfg = short_run(30);
    cfg.lr_peak = 1e30;
    cfg.warmup_steps = 0;
    cfg.weight_decay = 0;
    auto data = gen_synthetic(Task::crosswindow, cfg.samples, 32, 32, 4, 0);
    try {
        train_toy(preset("tiny"), cfg, data);
        FAIL() << "expected divergence";
    } catch (const NumericError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("diverged at step "), std::string::npos) << what;
        EXPECT_EQ(what.find("step 0:"), std::string::npos) << what;
    }
}

// ---- probe ----

TEST(Probe, IsolatedWithoutConvOrShift) {
    auto cfg = preset("tiny");
    cfg.conv_placement = ConvPlacement::none;
    EXPECT_EQ(jacobian_probe(cfg, 0, {3, 3}, {3, 4}), 0.0);  // across the vertical window edge
    EXPECT_EQ(jacobian_probe(cfg, 0, {0, 0}, {7, 7}), 0.0);
    EXPECT_GT(jacobian_probe(cfg, 0, {3, 3}, {0, 0}), 0.0);  // same window
    EXPECT_GT(jacobian_probe(cfg, 0, {5, 6}, {5, 6}), 0.0);
}

TEST(Probe, ConvCouplesAcrossTheEdge) {
    auto cfg = preset("tiny");
    EXPECT_GT(jacobian_probe(cfg, 0, {3, 3}, {3, 4}), kCouplingFloor);
    EXPECT_GT(jacobian_probe(cfg, 0, {4, 0}, {3, 0}), kCouplingFloor);
    EXPECT_GT(jacobian_probe(cfg, 0, {0, 0}, {7, 7}), 0.0);  // conv, attend, conv, attend
}

TEST(Probe, InvalidCoordinates) {
    auto cfg = preset("tiny");
    EXPECT_THROW(jacobian_probe(cfg, 0, {8, 0}, {0, 0}), GeometryError);
    EXPECT_THROW(jacobian_probe(cfg, 0, {0, 0}, {0, 8}), GeometryError);
    EXPECT_THROW(jacobian_probe(cfg, 1, {4, 0}, {0, 0}), GeometryError);
    EXPECT_THROW(jacobian_probe(cfg, 2, {0, 0}, {0, 0}), GeometryError);
}

TEST(Probe, SparsityMatchesPredictionAcrossConfigs) {
    for (std::size_t M : {2u, 4u}) {
        for (auto placement : {ConvPlacement::late_residual, ConvPlacement::early_residual,
                               ConvPlacement::no_residual, ConvPlacement::none}) {
            for (bool shifted : {false, true}) {
                auto cfg = preset("tiny");
                cfg.window = M;
                cfg.conv_kernel = 3;
                cfg.conv_placement = placement;
                cfg.shifted = shifted;
                for (std::size_t stage = 0; stage < 2; ++stage) {
                    const auto s = probe_summary(cfg, stage, 1, 24);
                    SCOPED_TRACE(std::string(to_string(placement)) + " M=" + std::to_string(M) +
                                 " shifted=" + std::to_string(shifted) + " stage=" + std::to_string(stage));
                    EXPECT_TRUE(s.matches_prediction()) << s.text();
                    const bool shift_active = shifted && std::min(s.map_h, s.map_w) > M;
                    EXPECT_EQ(s.predicted_isolated, placement == ConvPlacement::none && !shift_active);
                    if (s.map_h == M) {
                        EXPECT_EQ(s.cross_pairs, 0u);
                    } else if (s.predicted_isolated) {
                        EXPECT_EQ(s.max_cross, 0.0);
                    } else {
                        EXPECT_GT(s.max_cross, 0.0);
                    }
                }
            }
        }
    }
}

TEST(Probe, SummaryCountsPairs) {
    auto cfg = preset("tiny");
    const auto s = probe_summary(cfg, 0, 0);
    EXPECT_EQ(s.targets, 64u);
    EXPECT_EQ(s.cross_pairs, 64u * 48u);
    // 8 rows x 1 vertical edge + 8 columns x 1 horizontal edge, both directions.
    EXPECT_EQ(s.boundary_pairs, 32u);
    EXPECT_TRUE(s.matches_prediction());
    EXPECT_NE(s.text().find("matches prediction"), std::string::npos);
}

// ---- ablation ----

TEST(Ablate, VariantGrids) {
    const auto base = preset("tiny");
    auto names = [&](AblationAxis a) {
        std::vector<std::string> out;
        for (const auto& v : ablation_variants(a, base)) out.push_back(v.name);
        return out;
    };
    EXPECT_EQ(names(AblationAxis::placement),
              (std::vector<std::string>{"late_residual", "early_residual", "no_residual"}));
    EXPECT_EQ(names(AblationAxis::conv_shift),
              (std::vector<std::string>{"conv_off/shift_off", "conv_off/shift_on", "conv_on/shift_off",
                                        "conv_on/shift_on"}));
    EXPECT_EQ(names(AblationAxis::kernel), (std::vector<std::string>{"k3", "k5", "k7"}));
    EXPECT_EQ(names(AblationAxis::pe), (std::vector<std::string>{"rpe", "lepe", "none"}));
    for (const auto& v : ablation_variants(AblationAxis::conv_shift, base)) {
        EXPECT_EQ(v.cfg.conv_placement == ConvPlacement::none, v.name.starts_with("conv_off"));
        EXPECT_EQ(v.cfg.shifted, v.name.ends_with("shift_on"));
        EXPECT_EQ(v.cfg.conv_kernel, base.conv_kernel);
    }
    EXPECT_EQ(parse_ablation_axis("kernel"), AblationAxis::kernel);
    EXPECT_THROW(parse_ablation_axis("depth"), ConfigError);
}

TEST(Ablate, CostDeltasMatchArithmetic) {
    const auto base = preset("tiny");
    auto costs = [&](AblationAxis a) {
        std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> out;
        for (const auto& v : ablation_variants(a, base)) {
            const auto r = count_flops(v.cfg, base.input_h, base.input_w);
            out[v.name] = {r.total_params(), r.total_macs()};
        }
        return out;
    };
    const auto sum_c = over_blocks(base, [](auto C, auto, auto) { return C; });
    const auto sum_tc = over_blocks(base, [](auto C, auto T, auto) { return C * T; });
    ASSERT_EQ(sum_c, 96u);

    auto k = costs(AblationAxis::kernel);
    EXPECT_EQ(k["k7"].first - k["k3"].first, 40 * sum_c);
    EXPECT_EQ(k["k5"].first - k["k3"].first, 16 * sum_c);
    EXPECT_EQ(k["k7"].second - k["k3"].second, 40 * sum_tc);
    EXPECT_EQ(k["k7"].second - k["k5"].second, 24 * sum_tc);

    auto cs = costs(AblationAxis::conv_shift);
    const std::uint64_t k2 = base.conv_kernel * base.conv_kernel;
    EXPECT_EQ(cs["conv_on/shift_off"].first - cs["conv_off/shift_off"].first, (k2 + 3) * sum_c);
    EXPECT_EQ(cs["conv_on/shift_off"].second - cs["conv_off/shift_off"].second, k2 * sum_tc);
    EXPECT_EQ(cs["conv_on/shift_on"], cs["conv_on/shift_off"]);
    EXPECT_EQ(cs["conv_off/shift_on"], cs["conv_off/shift_off"]);

    auto pe = costs(AblationAxis::pe);
    const std::uint64_t table = (2 * base.window - 1) * (2 * base.window - 1);
    EXPECT_EQ(pe["rpe"].first - pe["none"].first, over_blocks(base, [&](auto, auto, auto h) { return table * h; }));
    EXPECT_EQ(pe["rpe"].second, pe["none"].second);
    EXPECT_EQ(pe["lepe"].first - pe["none"].first, 9 * sum_c);
    EXPECT_EQ(pe["lepe"].second - pe["none"].second, 9 * sum_tc);

    auto pl = costs(AblationAxis::placement);
    EXPECT_EQ(pl["late_residual"], pl["early_residual"]);
    EXPECT_EQ(pl["late_residual"], pl["no_residual"]);
}

TEST(Ablate, TableIndependentOfThreadCount) {
    auto cfg = short_run(2);
    const auto one = ablate(AblationAxis::pe, preset("tiny"), cfg, 1);
    const auto three = ablate(AblationAxis::pe, preset("tiny"), cfg, 3);
    EXPECT_EQ(one.to_csv(), three.to_csv());
    ASSERT_EQ(one.rows.size(), 3u);
    const auto csv = one.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "variant,params,macs,final_acc");
    EXPECT_NE(csv.find("\nlepe,"), std::string::npos);
    ASSERT_NE(one.find("rpe"), nullptr);
    EXPECT_EQ(one.find("rpe")->params, count_params([] {
                                           auto c = preset("tiny");
                                           c.pe_mode = PeMode::rpe;
                                           return c;
                                       }())
                                           .total_params());
    EXPECT_EQ(one.find("k9"), nullptr);
}

TEST(Ablate, TrainingErrorsPropagate) {
    auto cfg = short_run(2);
    auto base = preset("tiny");
    base.input_h = 48;  // stage 2 map 6x6 is not tiled by 4x4 windows
    EXPECT_THROW(ablate(AblationAxis::kernel, base, cfg, 2), GeometryError);
}
