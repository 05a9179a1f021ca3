#pragma once

// Hand-written packed GEMM used by the conv layers. Written in-tree rather
// than calling a BLAS so the reduction order is fixed: every output element
// is accumulated over k in ascending order, independent of thread count,
// which keeps training runs bit-reproducible.
//
// Layout follows the usual panel scheme: A is packed into kMr-row panels,
// B into kNr-column panels, and an kMr x kNr register tile is accumulated
// per (i0, j0) block. Vector code uses GCC vector extensions, so the same
// source compiles to AVX-512, AVX2 or SSE depending on -march.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace edrain {

namespace detail {

// Reused pack/col/pad workspaces. Conv layers run at a few hundred calls per
// second on multi-MB buffers, so per-call vectors spend real time in the
// allocator and in first-touch page faults; a grow-only pool avoids both.
enum ScratchSlot {
    kScratchA,
    kScratchB,
    kScratchCol,
    kScratchGcol,
    kScratchPad,
    kScratchGpad,
    kScratchDw,
    kScratchCount
};

template <typename T>
T* scratch(ScratchSlot slot, std::size_t n) {
    thread_local std::array<std::vector<T>, kScratchCount> pool;
    auto& buf = pool[slot];
    if (buf.size() < n) buf.resize(n);
    return buf.data();
}

#if defined(__AVX512F__)
inline constexpr int kVecBytes = 64;
inline constexpr int kMr = 8; // 32 vector registers: 16 accumulators fit
#elif defined(__AVX2__)
inline constexpr int kVecBytes = 32;
inline constexpr int kMr = 6; // 16 vector registers: 12 accumulators fit
#else
inline constexpr int kVecBytes = 16;
inline constexpr int kMr = 6;
#endif

template <typename T>
struct GemmTraits;

template <>
struct GemmTraits<float> {
    using V = float __attribute__((vector_size(kVecBytes)));
    static constexpr int kLanes = kVecBytes / 4;
};

template <>
struct GemmTraits<double> {
    using V = double __attribute__((vector_size(kVecBytes)));
    static constexpr int kLanes = kVecBytes / 8;
};

template <typename T>
inline constexpr int kNr = 2 * GemmTraits<T>::kLanes;

// One kMr x kNr tile: C[tile] (+)= Ap panel * Bp panel.
template <typename T>
inline void micro_kernel(int kc, const T* ap, const T* bp, T* c, int ldc,
                         int m_eff, int n_eff, bool accumulate) {
    using V = typename GemmTraits<T>::V;
    constexpr int lanes = GemmTraits<T>::kLanes;
    constexpr int nr = kNr<T>;

    V acc[kMr][2];
    for (int r = 0; r < kMr; ++r) {
        acc[r][0] = V{};
        acc[r][1] = V{};
    }
    for (int k = 0; k < kc; ++k) {
        V b0, b1;
        std::memcpy(&b0, bp + static_cast<std::size_t>(k) * nr, sizeof(V));
        std::memcpy(&b1, bp + static_cast<std::size_t>(k) * nr + lanes, sizeof(V));
        const T* arow = ap + static_cast<std::size_t>(k) * kMr;
        for (int r = 0; r < kMr; ++r) {
            const V a = V{} + arow[r];
            acc[r][0] += a * b0;
            acc[r][1] += a * b1;
        }
    }

    if (m_eff == kMr && n_eff == nr) {
        for (int r = 0; r < kMr; ++r)
            for (int v = 0; v < 2; ++v) {
                T* dst = c + static_cast<std::size_t>(r) * ldc + v * lanes;
                if (accumulate) {
                    V cur;
                    std::memcpy(&cur, dst, sizeof(V));
                    cur += acc[r][v];
                    std::memcpy(dst, &cur, sizeof(V));
                } else {
                    std::memcpy(dst, &acc[r][v], sizeof(V));
                }
            }
    } else {
        T tile[kMr * nr];
        for (int r = 0; r < kMr; ++r)
            std::memcpy(tile + static_cast<std::size_t>(r) * nr, &acc[r][0], 2 * sizeof(V));
        for (int r = 0; r < m_eff; ++r)
            for (int j = 0; j < n_eff; ++j) {
                T* dst = c + static_cast<std::size_t>(r) * ldc + j;
                *dst = (accumulate ? *dst : T(0)) + tile[r * nr + j];
            }
    }
}

// Packs rows [0, m) over the k-slice [k0, k0 + k_len).
template <typename T>
inline void pack_a(bool trans_a, int m, int k0, int k_len, const T* a, int lda, T* ap) {
    for (int i0 = 0; i0 < m; i0 += kMr)
        for (int kk = k0; kk < k0 + k_len; ++kk)
            for (int r = 0; r < kMr; ++r) {
                const int i = i0 + r;
                *ap++ = (i < m)
                            ? (trans_a ? a[static_cast<std::size_t>(kk) * lda + i]
                                       : a[static_cast<std::size_t>(i) * lda + kk])
                            : T(0);
            }
}

// k-chunk size: keeps one packed A slice plus one packed B panel slice inside
// L1 while still amortizing the per-chunk C read-modify-write.
inline constexpr int kKc = 256;

template <typename T>
inline void pack_b(bool trans_b, int k, int n, const T* b, int ldb, T* bp) {
    constexpr int nr = kNr<T>;
    if (!trans_b) {
        for (int j0 = 0; j0 < n; j0 += nr, bp += static_cast<std::size_t>(k) * nr) {
            const int n_eff = (n - j0 < nr) ? n - j0 : nr;
            for (int kk = 0; kk < k; ++kk) {
                const T* src = b + static_cast<std::size_t>(kk) * ldb + j0;
                T* dst = bp + static_cast<std::size_t>(kk) * nr;
                if (n_eff == nr) {
                    std::memcpy(dst, src, sizeof(T) * nr);
                } else {
                    std::memcpy(dst, src, sizeof(T) * n_eff);
                    std::memset(dst + n_eff, 0, sizeof(T) * (nr - n_eff));
                }
            }
        }
    } else {
        // nr parallel sequential read streams, sequential writes
        for (int j0 = 0; j0 < n; j0 += nr, bp += static_cast<std::size_t>(k) * nr) {
            const int n_eff = (n - j0 < nr) ? n - j0 : nr;
            const T* src = b + static_cast<std::size_t>(j0) * ldb;
            if (n_eff == nr) {
                for (int kk = 0; kk < k; ++kk) {
                    T* dst = bp + static_cast<std::size_t>(kk) * nr;
                    for (int j = 0; j < nr; ++j) dst[j] = src[static_cast<std::size_t>(j) * ldb + kk];
                }
            } else {
                for (int kk = 0; kk < k; ++kk) {
                    T* dst = bp + static_cast<std::size_t>(kk) * nr;
                    for (int j = 0; j < n_eff; ++j)
                        dst[j] = src[static_cast<std::size_t>(j) * ldb + kk];
                    for (int j = n_eff; j < nr; ++j) dst[j] = T(0);
                }
            }
        }
    }
}

} // namespace detail

// Column-block width of the packed-B layout; exposed so conv can build the
// packed buffer directly from its input (fused im2col).
template <typename T>
constexpr int gemm_col_block() {
    return detail::kNr<T>;
}

template <typename T>
std::size_t gemm_packed_b_size(int k, int n) {
    const int nr = detail::kNr<T>;
    const std::size_t nb = (static_cast<std::size_t>(n) + nr - 1) / nr;
    return nb * nr * static_cast<std::size_t>(k);
}

// C = A * B with B already packed into kNr-column panels.
template <typename T>
void gemm_packed_b(int m, int n, int k, const T* a, int lda, bool trans_a,
                   const T* bpack, T* c, int ldc, bool accumulate = false) {
    using namespace detail;
    if (m <= 0 || n <= 0) return;
    if (k <= 0) {
        if (!accumulate)
            for (int i = 0; i < m; ++i)
                std::memset(c + static_cast<std::size_t>(i) * ldc, 0, sizeof(T) * n);
        return;
    }
    constexpr int nr = kNr<T>;
    const int jblocks = (n + nr - 1) / nr;
    const std::size_t mpad = (static_cast<std::size_t>(m) + kMr - 1) / kMr * kMr;
    T* apack = detail::scratch<T>(detail::kScratchA,
                                  mpad * static_cast<std::size_t>(std::min(k, detail::kKc)));

    // k is consumed in ascending chunks, so every C element still accumulates
    // its products in ascending-k order no matter the chunk size
    for (int kb = 0; kb < k; kb += detail::kKc) {
        const int k_len = std::min(detail::kKc, k - kb);
        pack_a(trans_a, m, kb, k_len, a, lda, apack);
        const bool acc = accumulate || kb > 0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (jblocks > 1 && !omp_in_parallel())
#endif
        for (int jb = 0; jb < jblocks; ++jb) {
            const int j0 = jb * nr;
            const int n_eff = (n - j0 < nr) ? n - j0 : nr;
            const T* bp = bpack + (static_cast<std::size_t>(jb) * k + kb) * nr;
            for (int i0 = 0; i0 < m; i0 += kMr) {
                const int m_eff = (m - i0 < kMr) ? m - i0 : kMr;
                micro_kernel(k_len, apack + static_cast<std::size_t>(i0) * k_len,
                             bp, c + static_cast<std::size_t>(i0) * ldc + j0, ldc,
                             m_eff, n_eff, acc);
            }
        }
    }
}

// C = op(A) * op(B): A is m x k (or its transpose), B is k x n (or its
// transpose), C is m x n with leading dimension ldc.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda,
          const T* b, int ldb, T* c, int ldc, bool accumulate = false) {
    if (m <= 0 || n <= 0) return;
    T* bpack = detail::scratch<T>(detail::kScratchB, gemm_packed_b_size<T>(k > 0 ? k : 0, n));
    if (k > 0) detail::pack_b(trans_b, k, n, b, ldb, bpack);
    gemm_packed_b(m, n, k, a, lda, trans_a, bpack, c, ldc, accumulate);
}

} // namespace edrain
