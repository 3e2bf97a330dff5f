#include "win/dataset.hpp"

#include <algorithm>
#include <random>

#include "win/errors.hpp"

namespace win {

std::string_view to_string(Task t) { return t == Task::crosswindow ? "crosswindow" : "local"; }

Task parse_task(std::string_view s) {
    if (s == "crosswindow") return Task::crosswindow;
    if (s == "local") return Task::local;
    throw ConfigError("unknown task '" + std::string(s) + "' (expected crosswindow or local)");
}

std::size_t SyntheticDataset::window_of(TokenPos p) const {
    const std::size_t windows_w = width / patch / window;
    return (p.row / window) * windows_w + p.col / window;
}

template <typename T>
Tensor<T> SyntheticDataset::batch(const std::vector<std::size_t>& idx) const {
    const std::size_t per = height * width * 3;
    std::vector<T> out(idx.size() * per);
    auto src = images.values();
    for (std::size_t b = 0; b < idx.size(); ++b) {
        if (idx[b] >= size()) throw ShapeError("sample index " + std::to_string(idx[b]) + " out of range");
        std::transform(src.begin() + idx[b] * per, src.begin() + (idx[b] + 1) * per, out.begin() + b * per,
                       [](double v) { return static_cast<T>(v); });
    }
    return Tensor<T>({idx.size(), height, width, 3}, std::move(out));
}

std::vector<int> SyntheticDataset::batch_labels(const std::vector<std::size_t>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(labels.at(i));
    return out;
}

template Tensor<float> SyntheticDataset::batch(const std::vector<std::size_t>&) const;
template Tensor<double> SyntheticDataset::batch(const std::vector<std::size_t>&) const;

namespace {

// right, left, down, up
constexpr int kDr[] = {0, 0, 1, -1};
constexpr int kDc[] = {1, -1, 0, 0};

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void paint(std::vector<double>& img, std::size_t base, std::size_t width, std::size_t patch, TokenPos t,
           std::size_t channel) {
    for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
            img[base + ((t.row * patch + y) * width + t.col * patch + x) * 3 + channel] += 1.0;
}

}  // namespace

SyntheticDataset gen_synthetic(Task task, std::size_t n, std::size_t height, std::size_t width, std::size_t window,
                               std::uint64_t seed, std::size_t patch) {
    if (n == 0) throw ConfigError("dataset needs at least one sample");
    if (patch == 0 || window == 0) throw GeometryError("patch and window sizes must be positive");
    const std::size_t span = window * patch;
    if (height % span != 0 || width % span != 0) {
        throw GeometryError("image " + std::to_string(height) + "x" + std::to_string(width) +
                            " is not tiled by windows of " + std::to_string(span) + " pixels");
    }
    if (height < 2 * span || width < 2 * span) {
        throw GeometryError("image " + std::to_string(height) + "x" + std::to_string(width) +
                            " needs at least 2x2 windows of " + std::to_string(span) + " pixels");
    }
    if (task == Task::local && window < 2) throw GeometryError("local task needs windows of at least 2x2 tokens");

    SyntheticDataset d;
    d.task = task;
    d.height = height;
    d.width = width;
    d.window = window;
    d.patch = patch;
    d.seed = seed;

    std::mt19937_64 rng(seed);
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.labels[i] = static_cast<int>(i % kNumDirections);
    std::shuffle(d.labels.begin(), d.labels.end(), rng);

    const std::size_t wh = height / span, ww = width / span;
    std::vector<double> img(n * height * width * 3);
    std::uniform_real_distribution<double> noise(-0.1, 0.1);
    for (auto& v : img) v = noise(rng);

    for (std::size_t i = 0; i < n; ++i) {
        const int dir = d.labels[i];
        TokenPos a, b;
        if (task == Task::crosswindow) {
            // Window of A must have a neighbour in direction `dir`.
            const std::size_t r0 = kDr[dir] < 0 ? 1 : 0, r1 = wh - 1 - (kDr[dir] > 0 ? 1 : 0);
            const std::size_t c0 = kDc[dir] < 0 ? 1 : 0, c1 = ww - 1 - (kDc[dir] > 0 ? 1 : 0);
            const std::size_t wr = pick(rng, r0, r1), wc = pick(rng, c0, c1);
            const std::size_t vr = wr + kDr[dir], vc = wc + kDc[dir];
            a = {wr * window + pick(rng, 0, window - 1), wc * window + pick(rng, 0, window - 1)};
            b = {vr * window + pick(rng, 0, window - 1), vc * window + pick(rng, 0, window - 1)};
        } else {
            const std::size_t wr = pick(rng, 0, wh - 1), wc = pick(rng, 0, ww - 1);
            // Offsets inside the window so that B = A + distance * dir stays inside.
            const std::size_t dist = pick(rng, 1, window - 1);
            auto coord = [&](int delta) {
                if (delta > 0) return pick(rng, 0, window - 1 - dist);
                if (delta < 0) return pick(rng, dist, window - 1);
                return pick(rng, 0, window - 1);
            };
            const std::size_t ar = coord(kDr[dir]), ac = coord(kDc[dir]);
            a = {wr * window + ar, wc * window + ac};
            b = {a.row + static_cast<std::size_t>(kDr[dir] * static_cast<int>(dist)),
                 a.col + static_cast<std::size_t>(kDc[dir] * static_cast<int>(dist))};
        }
        const std::size_t base = i * height * width * 3;
        paint(img, base, width, patch, a, 0);
        paint(img, base, width, patch, b, 1);
        d.marker_a.push_back(a);
        d.marker_b.push_back(b);
    }
    d.images = Tensor<double>({n, height, width, 3}, std::move(img));
    return d;
}

}  // namespace win
