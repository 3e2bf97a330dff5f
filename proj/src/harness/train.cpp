#include "win/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "win/autograd.hpp"
#include "win/errors.hpp"
#include "win/ops.hpp"

namespace win {

using json = nlohmann::json;

void TrainConfig::validate() const {
    if (warmup_steps > steps) {
        throw ConfigError("warmup_steps (" + std::to_string(warmup_steps) + ") exceeds steps (" +
                          std::to_string(steps) + ")");
    }
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (samples == 0) throw ConfigError("samples must be positive");
    if (eval_every == 0) throw ConfigError("eval_every must be positive");
    if (!(lr_peak >= 0) || !std::isfinite(lr_peak)) throw ConfigError("lr_peak must be a finite non-negative number");
    if (!(weight_decay >= 0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be non-negative");
    if (!(drop_path_max >= 0 && drop_path_max < 1)) throw ConfigError("drop_path_max must lie in [0, 1)");
}

namespace {

std::size_t get_count(const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError("train config key '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

double get_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("train config key '" + key + "' must be a number");
    return v.get<double>();
}

std::string get_string(const json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError("train config key '" + key + "' must be a string");
    return v.get<std::string>();
}

DType parse_dtype(const std::string& s) {
    if (s == "f32" || s == "float32") return DType::f32;
    if (s == "f64" || s == "float64") return DType::f64;
    throw ConfigError("unknown dtype '" + s + "' (expected f32 or f64)");
}

}  // namespace

TrainConfig train_config_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("train config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    TrainConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "steps") c.steps = get_count(v, key);
        else if (key == "batch_size") c.batch_size = get_count(v, key);
        else if (key == "lr_peak") c.lr_peak = get_number(v, key);
        else if (key == "warmup_steps") c.warmup_steps = get_count(v, key);
        else if (key == "weight_decay") c.weight_decay = get_number(v, key);
        else if (key == "seed") c.seed = get_count(v, key);
        else if (key == "drop_path_max") c.drop_path_max = get_number(v, key);
        else if (key == "dtype") c.dtype = parse_dtype(get_string(v, key));
        else if (key == "task") c.task = parse_task(get_string(v, key));
        else if (key == "samples") c.samples = get_count(v, key);
        else if (key == "eval_samples") c.eval_samples = get_count(v, key);
        else if (key == "eval_every") c.eval_every = get_count(v, key);
        else throw ConfigError("unknown train config key '" + key + "'");
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open train config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return train_config_from_json(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string to_json(const TrainConfig& c) {
    json j;
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["lr_peak"] = c.lr_peak;
    j["warmup_steps"] = c.warmup_steps;
    j["weight_decay"] = c.weight_decay;
    j["seed"] = c.seed;
    j["drop_path_max"] = c.drop_path_max;
    j["dtype"] = c.dtype == DType::f32 ? "f32" : "f64";
    j["task"] = std::string(to_string(c.task));
    j["samples"] = c.samples;
    j["eval_samples"] = c.eval_samples;
    j["eval_every"] = c.eval_every;
    return j.dump(2);
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
    if (step > cfg.steps) {
        throw ConfigError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(cfg.steps) + "]");
    }
    if (cfg.warmup_steps > cfg.steps) throw ConfigError("lr_at: warmup_steps exceeds steps");
    if (step <= cfg.warmup_steps) {
        return cfg.warmup_steps == 0 ? cfg.lr_peak
                                     : cfg.lr_peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    }
    const double progress =
        static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(cfg.steps - cfg.warmup_steps);
    return cfg.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void adamw_step(std::vector<Tensor<T>>& params, const std::vector<std::vector<T>>& grads, AdamWState<T>& state,
                const AdamWHyper& h, const std::vector<bool>& decay) {
    if (grads.size() != params.size()) {
        throw ShapeError("adamw: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
    }
    if (!decay.empty() && decay.size() != params.size()) throw ShapeError("adamw: decay mask size mismatch");
    if (state.m.empty() && state.step == 0) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), T(0));
            state.v.emplace_back(p.size(), T(0));
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adamw: state holds " + std::to_string(state.m.size()) + " tensors, expected " +
                         std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].size() || state.m[i].size() != params[i].size() ||
            state.v[i].size() != params[i].size()) {
            throw ShapeError("adamw: size mismatch for parameter " + std::to_string(i) + " " +
                             shape_str(params[i].shape()));
        }
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].mutable_values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const double shrink = (decay.empty() || decay[i]) ? 1.0 - h.lr * h.weight_decay : 1.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double g = grads[i][k];
            m[k] = static_cast<T>(h.beta1 * m[k] + (1.0 - h.beta1) * g);
            v[k] = static_cast<T>(h.beta2 * v[k] + (1.0 - h.beta2) * g * g);
            const double mhat = m[k] / bc1, vhat = v[k] / bc2;
            w[k] = static_cast<T>(w[k] * shrink - h.lr * mhat / (std::sqrt(vhat) + h.eps));
        }
    }
}

template <typename T>
std::vector<bool> weight_decay_mask(const ModelParams<T>& params) {
    std::vector<bool> mask;
    for (const auto& nt : params.all) {
        const bool table = nt.name.ends_with("relative_position_bias_table");
        mask.push_back(nt.tensor.rank() >= 2 && !table);
    }
    return mask;
}

void MetricsLog::append(const MetricsRow& row) {
    if (!rows_.empty() && row.step <= rows_.back().step) {
        throw ConfigError("metrics step " + std::to_string(row.step) + " does not follow step " +
                          std::to_string(rows_.back().step));
    }
    rows_.push_back(row);
}

std::string MetricsLog::to_csv() const {
    std::string out = std::string(kHeader) + "\n";
    char buf[256];
    for (const auto& r : rows_) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.6f,%.6f,%.3f\n", r.step, r.lr, r.train_loss, r.train_acc,
                      r.eval_acc, r.wall_ms);
        out += buf;
    }
    return out;
}

void MetricsLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open '" + path.string() + "' for writing");
    out << to_csv();
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed for '" + path.string() + "'");
}

namespace {

constexpr std::size_t kEvalChunk = 64;

template <typename T>
std::size_t count_correct(const Tensor<T>& logits, const std::vector<int>& labels) {
    const std::size_t K = logits.extent(1);
    auto v = logits.values();
    std::size_t hits = 0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const auto row = v.subspan(b * K, K);
        const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        hits += best == labels[b];
    }
    return hits;
}

struct LossAcc {
    double loss = 0, acc = 0;
};

template <typename T>
LossAcc eval_loss_acc(const ModelParams<T>& params, const ModelConfig& model, const SyntheticDataset& data) {
    NoGradGuard guard;
    std::mt19937_64 unused(0);
    double loss = 0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
        std::vector<std::size_t> idx(std::min(kEvalChunk, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto labels = data.batch_labels(idx);
        auto logits = model_forward(data.batch<T>(idx), params, model, false, unused);
        loss += static_cast<double>(cross_entropy(logits, labels).item()) * static_cast<double>(idx.size());
        hits += count_correct(logits, labels);
    }
    const auto n = static_cast<double>(data.size());
    return {loss / n, static_cast<double>(hits) / n};
}

void check_geometry_match(const ModelConfig& model, const SyntheticDataset& data) {
    if (data.height != model.input_h || data.width != model.input_w || data.window != model.window ||
        data.patch != kDefaultPatch) {
        throw GeometryError("dataset geometry " + std::to_string(data.height) + "x" + std::to_string(data.width) +
                            " (window " + std::to_string(data.window) + ", patch " + std::to_string(data.patch) +
                            ") does not match model input " + std::to_string(model.input_h) + "x" +
                            std::to_string(model.input_w) + " (window " + std::to_string(model.window) + ")");
    }
    if (model.num_classes < kNumDirections) {
        throw ConfigError("model has " + std::to_string(model.num_classes) + " classes, the task needs " +
                          std::to_string(kNumDirections));
    }
}

template <typename T>
TrainResult train_impl(const ModelConfig& model_in, const TrainConfig& cfg, const SyntheticDataset& data,
                       const TrainOptions& opt) {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();

    ModelConfig model = model_in;
    model.drop_path_max = cfg.drop_path_max;
    model.validate();
    model.check_geometry(model.input_h, model.input_w);
    check_geometry_match(model, data);

    const SyntheticDataset held_out =
        cfg.eval_samples == 0 ? SyntheticDataset{}
                              : gen_synthetic(data.task, cfg.eval_samples, data.height, data.width, data.window,
                                              data.seed + 1, data.patch);
    const SyntheticDataset& eval_set = cfg.eval_samples == 0 ? data : held_out;

    auto params = init_params<T>(model, cfg.seed);
    const auto decay = weight_decay_mask(params);
    std::vector<Tensor<T>> tensors;
    for (const auto& nt : params.all) tensors.push_back(nt.tensor);
    AdamWState<T> state;

    std::mt19937_64 batch_rng(cfg.seed ^ 0x5bd1e995u), path_rng(cfg.seed + 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    const std::size_t B = std::min(cfg.batch_size, data.size());
    auto next_batch = [&] {
        std::vector<std::size_t> idx;
        while (idx.size() < B) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), batch_rng);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        return idx;
    };

    TrainResult result;
    auto diverged = [](std::size_t step, const std::string& why) {
        return NumericError("training diverged at step " + std::to_string(step) + ": " + why);
    };
    auto emit = [&](MetricsRow row) {
        try {
            row.eval_acc = eval_loss_acc(params, model, eval_set).acc;
        } catch (const NumericError& e) {
            throw diverged(row.step, e.what());
        }
        row.wall_ms = opt.timing ? std::chrono::duration<double, std::milli>(Clock::now() - t0).count() : 0.0;
        result.log.append(row);
        if (opt.progress) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "step %5zu  lr %.3e  loss %.4f  train_acc %.3f  eval_acc %.3f\n",
                          row.step, row.lr, row.train_loss, row.train_acc, row.eval_acc);
            *opt.progress << buf << std::flush;
        }
    };

    LossAcc start;
    try {
        start = eval_loss_acc(params, model, data);
    } catch (const NumericError& e) {
        throw diverged(0, e.what());
    }
    emit({0, lr_at(0, cfg), start.loss, start.acc, 0, 0});

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const auto idx = next_batch();
        const auto labels = data.batch_labels(idx);
        Tensor<T> logits, loss;
        try {
            logits = model_forward(data.batch<T>(idx), params, model, true, path_rng);
            loss = cross_entropy(logits, labels);
        } catch (const NumericError& e) {
            throw diverged(step, e.what());
        }
        const double loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) {
            throw diverged(step, "loss is " + std::to_string(loss_value));
        }
        params.zero_grad();
        backward(loss);
        std::vector<std::vector<T>> grads;
        grads.reserve(tensors.size());
        for (const auto& t : tensors) grads.push_back(t.grad());

        const double lr = lr_at(step, cfg);
        adamw_step(tensors, grads, state, AdamWHyper{lr, 0.9, 0.999, 1e-8, cfg.weight_decay}, decay);

        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            const double acc = static_cast<double>(count_correct(logits, labels)) / static_cast<double>(B);
            emit({step, lr, loss_value, acc, 0, 0});
        }
    }

    try {
        result.final_train_acc = eval_loss_acc(params, model, data).acc;
    } catch (const NumericError& e) {
        throw diverged(cfg.steps, e.what());
    }
    result.final_eval_acc = result.log.back().eval_acc;
    result.checkpoint = to_checkpoint(params);

    if (!opt.out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(opt.out_dir, ec);
        if (ec) {
            throw CheckpointError(CheckpointError::Kind::io,
                                  "cannot create '" + opt.out_dir.string() + "': " + ec.message());
        }
        result.log.write_csv(opt.out_dir / "metrics.csv");
        save_checkpoint(result.checkpoint, opt.out_dir / "final.ckpt");
    }
    return result;
}

}  // namespace

TrainResult train_toy(const ModelConfig& model, const TrainConfig& cfg, const SyntheticDataset& data,
                      const TrainOptions& options) {
    cfg.validate();
    return cfg.dtype == DType::f32 ? train_impl<float>(model, cfg, data, options)
                                   : train_impl<double>(model, cfg, data, options);
}

template <typename T>
double evaluate(const ModelParams<T>& params, const ModelConfig& model, const SyntheticDataset& data) {
    check_geometry_match(model, data);
    return eval_loss_acc(params, model, data).acc;
}

template void adamw_step(std::vector<Tensor<float>>&, const std::vector<std::vector<float>>&, AdamWState<float>&,
                         const AdamWHyper&, const std::vector<bool>&);
template void adamw_step(std::vector<Tensor<double>>&, const std::vector<std::vector<double>>&,
                         AdamWState<double>&, const AdamWHyper&, const std::vector<bool>&);
template std::vector<bool> weight_decay_mask(const ModelParams<float>&);
template std::vector<bool> weight_decay_mask(const ModelParams<double>&);
template double evaluate(const ModelParams<float>&, const ModelConfig&, const SyntheticDataset&);
template double evaluate(const ModelParams<double>&, const ModelConfig&, const SyntheticDataset&);

}  // namespace win
