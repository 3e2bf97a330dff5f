#include "win/kernels.hpp"

namespace win::kernels::scalar {

template <typename T>
T dot(std::size_t n, const T* x, const T* y) {
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void madd(std::size_t n, const T* a, const T* b, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template float dot(std::size_t, const float*, const float*);
template double dot(std::size_t, const double*, const double*);
template void axpy(std::size_t, float, const float*, float*);
template void axpy(std::size_t, double, const double*, double*);
template void madd(std::size_t, const float*, const float*, float*);
template void madd(std::size_t, const double*, const double*, double*);

}  // namespace win::kernels::scalar
