#include <atomic>

#include "win/errors.hpp"
#include "win/kernels.hpp"

namespace win::kernels {

namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

std::atomic<Isa>& active_slot() {
    static std::atomic<Isa> slot{detected_isa()};
    return slot;
}

template <typename T>
const KernelTable<T> kScalarTable{&scalar::dot<T>, &scalar::axpy<T>, &scalar::madd<T>};

template <typename T>
const KernelTable<T> kAvx2Table{
    static_cast<T (*)(std::size_t, const T*, const T*)>(&avx2::dot),
    static_cast<void (*)(std::size_t, T, const T*, T*)>(&avx2::axpy),
    static_cast<void (*)(std::size_t, const T*, const T*, T*)>(&avx2::madd)};

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

Isa detected_isa() {
    static const Isa isa = cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
    return isa;
}

bool isa_supported(Isa isa) {
    return isa == Isa::scalar || (isa == Isa::avx2 && detected_isa() == Isa::avx2);
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
    if (!isa_supported(isa)) {
        throw Error("ISA " + std::string(isa_name(isa)) + " is not supported on this CPU");
    }
    active_slot().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table(Isa isa) {
    return isa == Isa::avx2 ? kAvx2Table<T> : kScalarTable<T>;
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);

}  // namespace win::kernels
