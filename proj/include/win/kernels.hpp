#pragma once

// Vector primitives behind the dense ops. Each primitive has a portable
// scalar reference and an AVX2+FMA variant; the variant is picked once at
// startup from CPUID and can be overridden (tests pin both and compare).

#include <cstddef>
#include <string_view>

namespace win::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Best ISA the running CPU supports.
Isa detected_isa();
bool isa_supported(Isa isa);

/// ISA used by the dense ops. Process-wide.
Isa active_isa();
/// Throws win::Error if the CPU cannot run `isa`.
void set_isa(Isa isa);

template <typename T>
struct KernelTable {
    /// sum_i x[i] * y[i]
    T (*dot)(std::size_t n, const T* x, const T* y);
    /// y[i] += alpha * x[i]
    void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
    /// y[i] += a[i] * b[i]
    void (*madd)(std::size_t n, const T* a, const T* b, T* y);
};

template <typename T>
const KernelTable<T>& table(Isa isa);

template <typename T>
const KernelTable<T>& active() {
    return table<T>(active_isa());
}

namespace scalar {
template <typename T>
T dot(std::size_t n, const T* x, const T* y);
template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <typename T>
void madd(std::size_t n, const T* a, const T* b, T* y);
}  // namespace scalar

namespace avx2 {
float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void madd(std::size_t n, const float* a, const float* b, float* y);
void madd(std::size_t n, const double* a, const double* b, double* y);
}  // namespace avx2

/// RAII override of the active ISA.
class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
    ~ScopedIsa() { set_isa(previous_); }
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    Isa previous_;
};

}  // namespace win::kernels
