#include "lowfp/tensor.hpp"

#include "lowfp/parallel.hpp"

namespace lowfp {

std::string shape_to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.cols() != b.cols()) {
        throw InputError("matmul_nt: inner dimensions differ (" + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()) + ")");
    }
    const std::size_t m = a.rows(), n = b.rows(), k = a.cols();
    Tensor<T> c(m, n);
    parallel_for(m, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const T* ar = a.data() + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const T* br = b.data() + j * k;
                T acc{};
                for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
                c(i, j) = acc;
            }
        }
    });
    return c;
}

template TensorF matmul_nt(const TensorF&, const TensorF&);
template TensorD matmul_nt(const TensorD&, const TensorD&);

}  // namespace lowfp
