#include "win/ablate.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "win/cost.hpp"
#include "win/errors.hpp"

namespace win {

std::string_view to_string(AblationAxis a) {
    switch (a) {
        case AblationAxis::placement: return "placement";
        case AblationAxis::conv_shift: return "conv_shift";
        case AblationAxis::kernel: return "kernel";
        case AblationAxis::pe: return "pe";
    }
    return "?";
}

AblationAxis parse_ablation_axis(std::string_view s) {
    for (auto a : {AblationAxis::placement, AblationAxis::conv_shift, AblationAxis::kernel, AblationAxis::pe})
        if (s == to_string(a)) return a;
    throw ConfigError("unknown ablation axis '" + std::string(s) + "' (expected placement, conv_shift, kernel or pe)");
}

std::vector<AblationVariant> ablation_variants(AblationAxis axis, const ModelConfig& base) {
    std::vector<AblationVariant> out;
    auto add = [&](std::string name, auto&& edit) {
        ModelConfig c = base;
        edit(c);
        c.name = base.name + "/" + name;
        c.validate();
        out.push_back({std::move(name), std::move(c)});
    };
    switch (axis) {
        case AblationAxis::placement:
            for (auto p : {ConvPlacement::late_residual, ConvPlacement::early_residual, ConvPlacement::no_residual})
                add(std::string(to_string(p)), [&](ModelConfig& c) { c.conv_placement = p; });
            break;
        case AblationAxis::conv_shift: {
            const auto on = base.conv_placement == ConvPlacement::none ? ConvPlacement::late_residual
                                                                       : base.conv_placement;
            for (bool conv : {false, true})
                for (bool shift : {false, true})
                    add(std::string(conv ? "conv_on" : "conv_off") + "/" + (shift ? "shift_on" : "shift_off"),
                        [&](ModelConfig& c) {
                            c.conv_placement = conv ? on : ConvPlacement::none;
                            c.shifted = shift;
                        });
            break;
        }
        case AblationAxis::kernel:
            for (std::size_t k : {3, 5, 7})
                add("k" + std::to_string(k), [&](ModelConfig& c) {
                    c.conv_kernel = k;
                    if (c.conv_placement == ConvPlacement::none) c.conv_placement = ConvPlacement::late_residual;
                });
            break;
        case AblationAxis::pe:
            for (auto m : {PeMode::rpe, PeMode::lepe, PeMode::none})
                add(std::string(to_string(m)), [&](ModelConfig& c) { c.pe_mode = m; });
            break;
    }
    return out;
}

TrainConfig ablation_train_config() {
    TrainConfig c;
    c.samples = 2048;
    c.batch_size = 64;
    c.eval_samples = 512;
    c.eval_every = 100;
    return c;
}

const AblationRow* AblationTable::find(std::string_view variant) const {
    for (const auto& r : rows)
        if (r.variant == variant) return &r;
    return nullptr;
}

std::string AblationTable::to_csv() const {
    std::string out = std::string(kHeader) + "\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%llu,%llu,%.6f\n", static_cast<unsigned long long>(r.params),
                      static_cast<unsigned long long>(r.macs), r.final_acc);
        out += r.variant + buf;
    }
    return out;
}

void AblationTable::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open '" + path.string() + "' for writing");
    out << to_csv();
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed for '" + path.string() + "'");
}

AblationTable ablate(AblationAxis axis, const ModelConfig& base, const TrainConfig& cfg, std::size_t threads,
                     std::ostream* progress) {
    cfg.validate();
    const auto variants = ablation_variants(axis, base);
    const auto data = gen_synthetic(cfg.task, cfg.samples, base.input_h, base.input_w, base.window, cfg.seed);

    AblationTable table;
    table.axis = axis;
    table.rows.resize(variants.size());
    for (std::size_t i = 0; i < variants.size(); ++i) {
        const auto cost = count_flops(variants[i].cfg, base.input_h, base.input_w);
        table.rows[i] = {variants[i].name, cost.total_params(), cost.total_macs(), 0.0};
    }

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t i = next++; i < variants.size(); i = next++) {
            try {
                const auto r = train_toy(variants[i].cfg, cfg, data);
                std::lock_guard lock(mu);
                table.rows[i].final_acc = r.final_eval_acc;
                if (progress) {
                    *progress << to_string(axis) << " " << variants[i].name << ": final_acc " << r.final_eval_acc
                              << "\n" << std::flush;
                }
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(threads, variants.size()));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return table;
}

}  // namespace win
