#include "win/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "win/errors.hpp"

namespace win {

namespace {

using Kind = CheckpointError::Kind;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (n > in_.size() - pos_) {
            throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what +
                                                       " at byte " + std::to_string(pos_));
        }
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8(const char* what) { return take(1, what)[0]; }
    std::uint32_t u32(const char* what) {
        auto s = take(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(s[i]) << (8 * i);
        return v;
    }
    std::size_t position() const { return pos_; }
    bool done() const { return pos_ == in_.size(); }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

template <typename T>
void write_values(Writer& w, std::span<const T> values) {
    for (T v : values) {
        if constexpr (sizeof(T) == 4) {
            const auto bits = std::bit_cast<std::uint32_t>(v);
            for (int i = 0; i < 4; ++i) w.u8(static_cast<std::uint8_t>(bits >> (8 * i)));
        } else {
            w.u64(std::bit_cast<std::uint64_t>(v));
        }
    }
}

template <typename T>
Tensor<T> read_tensor(Reader& r, Shape shape, std::size_t count) {
    using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    auto raw = r.take(count * sizeof(T), "tensor payload");
    std::vector<T> v(count);
    for (std::size_t i = 0; i < count; ++i) {
        Bits bits = 0;
        for (std::size_t b = 0; b < sizeof(T); ++b) bits |= Bits(raw[i * sizeof(T) + b]) << (8 * b);
        v[i] = std::bit_cast<T>(bits);
    }
    return Tensor<T>(std::move(shape), std::move(v));
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw CheckpointError(Kind::shape_overflow, "too many checkpoint entries");
    }
    std::set<std::string> seen;
    Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(static_cast<std::uint32_t>(ckpt.size()));
    for (const auto& e : ckpt) {
        if (!seen.insert(e.name).second) {
            throw CheckpointError(Kind::duplicate_name, "duplicate checkpoint entry '" + e.name + "'");
        }
        w.u32(static_cast<std::uint32_t>(e.name.size()));
        w.bytes(e.name.data(), e.name.size());
        std::visit(
            [&](const auto& t) {
                using T = typename std::decay_t<decltype(t)>::value_type;
                if (t.rank() > 255) throw CheckpointError(Kind::shape_overflow, "rank above 255 in '" + e.name + "'");
                w.u8(static_cast<std::uint8_t>(dtype_of<T>()));
                w.u8(static_cast<std::uint8_t>(t.rank()));
                for (auto d : t.shape()) {
                    if (d > std::numeric_limits<std::uint32_t>::max()) {
                        throw CheckpointError(Kind::shape_overflow, "extent too large in '" + e.name + "'");
                    }
                    w.u32(static_cast<std::uint32_t>(d));
                }
                write_values<T>(w, t.values());
            },
            e.tensor);
    }
    return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    auto magic = r.take(sizeof kCheckpointMagic, "magic");
    if (std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
        throw CheckpointError(Kind::bad_magic, "not a WINCKPT1 file (bad magic)");
    }
    const std::uint32_t count = r.u32("entry count");
    Checkpoint out;
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = r.u32("name length");
        auto name_bytes = r.take(len, "entry name");
        std::string name(name_bytes.begin(), name_bytes.end());
        if (!seen.insert(name).second) {
            throw CheckpointError(Kind::duplicate_name, "duplicate checkpoint entry '" + name + "'");
        }
        const std::uint8_t dtype = r.u8("dtype");
        if (dtype > 1) {
            throw CheckpointError(Kind::bad_dtype,
                                  "entry '" + name + "' has unknown dtype code " + std::to_string(dtype));
        }
        const std::uint8_t rank = r.u8("rank");
        Shape shape(rank);
        std::size_t count_values = 1;
        const std::size_t elem = dtype == 0 ? 4 : 8;
        for (auto& d : shape) {
            d = r.u32("extent");
            if (d == 0) throw CheckpointError(Kind::shape_overflow, "entry '" + name + "' has a zero extent");
            if (count_values > std::numeric_limits<std::size_t>::max() / elem / d) {
                throw CheckpointError(Kind::shape_overflow, "entry '" + name + "' shape overflows");
            }
            count_values *= d;
        }
        if (dtype == 0) {
            out.push_back({std::move(name), read_tensor<float>(r, std::move(shape), count_values)});
        } else {
            out.push_back({std::move(name), read_tensor<double>(r, std::move(shape), count_values)});
        }
    }
    if (!r.done()) {
        throw CheckpointError(Kind::trailing_data, "unexpected bytes after the last entry at byte " +
                                                       std::to_string(r.position()));
    }
    return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::io, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(Kind::io, "write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::io, "cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return deserialize_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(e.kind(), path.string() + ": " + e.what());
    }
}

template <typename T>
Checkpoint to_checkpoint(const ModelParams<T>& params) {
    Checkpoint out;
    out.reserve(params.all.size());
    for (const auto& nt : params.all) out.push_back({nt.name, nt.tensor.detach()});
    return out;
}

template <typename T>
ModelParams<T> params_from_checkpoint(const ModelConfig& cfg, const Checkpoint& ckpt) {
    std::vector<NamedTensor<T>> tensors;
    for (const auto& e : ckpt) {
        auto t = std::visit([](const auto& x) { return cast<T>(x); }, e.tensor);
        t.set_requires_grad(true);
        tensors.push_back({e.name, t});
    }
    try {
        return bind_params(cfg, tensors);
    } catch (const Error& e) {
        throw CheckpointError(Kind::mismatch, std::string("checkpoint does not fit model: ") + e.what());
    }
}

template Checkpoint to_checkpoint(const ModelParams<float>&);
template Checkpoint to_checkpoint(const ModelParams<double>&);
template ModelParams<float> params_from_checkpoint(const ModelConfig&, const Checkpoint&);
template ModelParams<double> params_from_checkpoint(const ModelConfig&, const Checkpoint&);

}  // namespace win
