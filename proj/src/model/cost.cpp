#include "win/cost.hpp"

#include <cstdio>
#include <sstream>

#include "win/window_ops.hpp"

namespace win {

std::uint64_t CostReport::total_params() const {
    std::uint64_t n = 0;
    for (const auto& e : entries) n += e.params;
    return n;
}

std::uint64_t CostReport::total_macs() const {
    std::uint64_t n = 0;
    for (const auto& e : entries) n += e.macs;
    return n;
}

const CostEntry* CostReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

CostEntry CostReport::sum_suffix(const std::string& suffix) const {
    CostEntry total{suffix, 0, 0};
    for (const auto& e : entries) {
        if (e.name.size() >= suffix.size() && e.name.compare(e.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            total.params += e.params;
            total.macs += e.macs;
        }
    }
    return total;
}

std::string CostReport::table() const {
    std::size_t width = 5;
    for (const auto& e : entries) width = std::max(width, e.name.size());
    std::ostringstream os;
    char buf[64];
    auto row = [&](const std::string& name, std::uint64_t p, std::uint64_t m) {
        os << name << std::string(width - name.size() + 2, ' ');
        std::snprintf(buf, sizeof buf, "%14llu %16llu\n", static_cast<unsigned long long>(p),
                      static_cast<unsigned long long>(m));
        os << buf;
    };
    os << "layer" << std::string(width - 3, ' ');
    std::snprintf(buf, sizeof buf, "%14s %16s\n", "params", "macs");
    os << buf;
    for (const auto& e : entries) row(e.name, e.params, e.macs);
    row("total", total_params(), total_macs());
    return os.str();
}

namespace {

CostReport build(const ModelConfig& cfg, bool with_macs, std::size_t h, std::size_t w) {
    cfg.validate();
    if (with_macs) cfg.check_geometry(h, w);
    using u64 = std::uint64_t;
    CostReport r;
    auto add = [&](std::string name, u64 params, u64 macs) {
        r.entries.push_back({std::move(name), params, with_macs ? macs : 0});
    };

    const u64 C0 = cfg.base_channels;
    u64 tokens = with_macs ? u64(h / 4) * (w / 4) : 0;
    add("patch_embed.proj", kPatchDim * C0 + C0, tokens * kPatchDim * C0);
    add("patch_embed.norm", 2 * C0, 0);

    for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
        const std::string sp = "stages." + std::to_string(s) + ".";
        const u64 C = cfg.stage_channels(s);
        if (s > 0) {
            const u64 D = cfg.stage_channels(s - 1);
            tokens /= 4;
            add(sp + "downsample.norm", 8 * D, 0);
            add(sp + "downsample.reduction", 8 * D * D, tokens * 4 * D * 2 * D);
        }
        const u64 M = cfg.window, N = M * M, heads = cfg.heads[s];
        const u64 hidden = static_cast<u64>(static_cast<double>(C) * cfg.mlp_ratio + 0.5);
        const u64 k = cfg.conv_kernel;
        for (std::size_t b = 0; b < cfg.depths[s]; ++b) {
            const std::string pre = sp + "blocks." + std::to_string(b) + ".";
            add(pre + "norm1", 2 * C, 0);
            add(pre + "attn.qkv", 3 * C * C + 3 * C, tokens * 3 * C * C);
            // QK^T and AV: 2 * N^2 * C per window, i.e. 2 * N * C per token.
            add(pre + "attn.core", 0, tokens * 2 * N * C);
            if (cfg.pe_mode == PeMode::rpe) {
                add(pre + "attn.relative_position_bias_table", (2 * M - 1) * (2 * M - 1) * heads, 0);
            } else if (cfg.pe_mode == PeMode::lepe) {
                add(pre + "attn.lepe", kLepeKernel * kLepeKernel * C, tokens * kLepeKernel * kLepeKernel * C);
            }
            add(pre + "attn.proj", C * C + C, tokens * C * C);
            if (cfg.conv_placement != ConvPlacement::none) {
                add(pre + "norm_conv", 2 * C, 0);
                add(pre + "conv.weight", k * k * C, tokens * k * k * C);
                add(pre + "conv.bias", C, 0);
            }
            add(pre + "norm2", 2 * C, 0);
            add(pre + "mlp.fc1", C * hidden + hidden, tokens * C * hidden);
            add(pre + "mlp.fc2", hidden * C + C, tokens * hidden * C);
        }
    }
    const u64 CL = cfg.stage_channels(cfg.num_stages() - 1), K = cfg.num_classes;
    add("norm", 2 * CL, 0);
    add("head", CL * K + K, CL * K);
    return r;
}

}  // namespace

CostReport count_params(const ModelConfig& cfg) { return build(cfg, false, 0, 0); }

CostReport count_flops(const ModelConfig& cfg, std::size_t h, std::size_t w) { return build(cfg, true, h, w); }

}  // namespace win
