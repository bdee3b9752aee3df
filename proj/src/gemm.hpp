#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace manetl::detail {

// C[m,n] = op(A) * op(B) + (accumulate ? C : 0), all row-major.
// op(A) is [m,k], op(B) is [k,n].
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Map = Eigen::Map<const Mat>;
    const auto M = static_cast<Eigen::Index>(m);
    const auto N = static_cast<Eigen::Index>(n);
    const auto K = static_cast<Eigen::Index>(k);
    Eigen::Map<Mat> out(c, M, N);
    if (!accumulate) out.setZero();
    if (m == 0 || n == 0 || k == 0) return;
    if (!trans_a && !trans_b) {
        out.noalias() += Map(a, M, K) * Map(b, K, N);
    } else if (trans_a && !trans_b) {
        out.noalias() += Map(a, K, M).transpose() * Map(b, K, N);
    } else if (!trans_a && trans_b) {
        out.noalias() += Map(a, M, K) * Map(b, N, K).transpose();
    } else {
        out.noalias() += Map(a, K, M).transpose() * Map(b, N, K).transpose();
    }
}

}  // namespace manetl::detail
