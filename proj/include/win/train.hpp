#pragma once

// AdamW with warmup + cosine decay on the synthetic tasks.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "win/checkpoint.hpp"
#include "win/dataset.hpp"
#include "win/model.hpp"
#include "win/model_config.hpp"

namespace win {

struct TrainConfig {
    std::size_t steps = 500;
    std::size_t batch_size = 32;
    double lr_peak = 2e-3;
    std::size_t warmup_steps = 25;
    double weight_decay = 0.05;
    std::uint64_t seed = 0;
    /// Replaces the model's stochastic-depth maximum while training.
    double drop_path_max = 0.0;
    DType dtype = DType::f32;

    Task task = Task::crosswindow;
    std::size_t samples = 64;
    /// Held-out samples for eval_acc; 0 evaluates on the training set.
    std::size_t eval_samples = 256;
    /// A metrics row every eval_every steps, plus step 0 and the last step.
    std::size_t eval_every = 25;

    void validate() const;
};

TrainConfig train_config_from_json(std::string_view text);
TrainConfig load_train_config(const std::string& path);
std::string to_json(const TrainConfig& cfg);

/// Linear ramp 0 -> lr_peak over [0, warmup_steps], then
/// lr_peak * 0.5 * (1 + cos(pi * (step - warmup) / (steps - warmup))).
double lr_at(std::size_t step, const TrainConfig& cfg);

struct AdamWHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <typename T>
struct AdamWState {
    std::vector<std::vector<T>> m, v;
    std::size_t step = 0;
};

/// One AdamW update in place. `decay[i]` false exempts params[i] from weight
/// decay (empty: decay everything). Empty state is initialised on first use;
/// otherwise its shapes must match `params`.
template <typename T>
void adamw_step(std::vector<Tensor<T>>& params, const std::vector<std::vector<T>>& grads, AdamWState<T>& state,
                const AdamWHyper& hyper, const std::vector<bool>& decay = {});

/// Rank >= 2 tensors other than relative-position tables.
template <typename T>
std::vector<bool> weight_decay_mask(const ModelParams<T>& params);

struct MetricsRow {
    std::size_t step = 0;
    double lr = 0, train_loss = 0, train_acc = 0, eval_acc = 0, wall_ms = 0;
};

class MetricsLog {
public:
    /// Throws ConfigError unless row.step exceeds the previous row's step.
    void append(const MetricsRow& row);
    const std::vector<MetricsRow>& rows() const { return rows_; }
    bool empty() const { return rows_.empty(); }
    const MetricsRow& back() const { return rows_.back(); }

    static constexpr const char* kHeader = "step,lr,train_loss,train_acc,eval_acc,wall_ms";
    std::string to_csv() const;
    void write_csv(const std::filesystem::path& path) const;

private:
    std::vector<MetricsRow> rows_;
};

struct TrainOptions {
    /// When set, receives metrics.csv and final.ckpt.
    std::filesystem::path out_dir;
    /// Record wall-clock milliseconds; off keeps the CSV byte-reproducible.
    bool timing = false;
    /// Metrics rows are echoed here as they are produced.
    std::ostream* progress = nullptr;
};

struct TrainResult {
    MetricsLog log;
    Checkpoint checkpoint;
    /// Eval-mode accuracy over the whole training set after the last step.
    double final_train_acc = 0;
    /// eval_acc of the last row.
    double final_eval_acc = 0;
};

/// Mean cross-entropy training. Row 0 reports the untrained model on the
/// full training set; row s > 0 reports the minibatch loss/accuracy seen by
/// update s and the learning rate it used. Throws NumericError naming the
/// step if the loss or activations stop being finite.
TrainResult train_toy(const ModelConfig& model, const TrainConfig& cfg, const SyntheticDataset& data,
                      const TrainOptions& options = {});

/// Eval-mode accuracy of `params` on every sample of `data`.
template <typename T>
double evaluate(const ModelParams<T>& params, const ModelConfig& model, const SyntheticDataset& data);

}  // namespace win
