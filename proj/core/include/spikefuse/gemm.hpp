#pragma once

#include <algorithm>
#include <vector>

#include "spikefuse/common.hpp"
#include "spikefuse/threads.hpp"

namespace spikefuse {

/// Dense kernels used by matmul/conv. All variants accumulate each output
/// element in a fixed k-order regardless of worker count, so results are
/// bit-identical across thread configurations.

namespace gemm_detail {

// Column-tile width. Four rows of accumulators at this width stay resident
// in vector registers on any AVX-class target, which is what removes the
// store-to-load chain through C that a plain ikj loop suffers from.
inline constexpr std::size_t kTileJ = 64;

// One MRxJW output tile, accumulators held locally across the whole k loop.
// Per element the k-order is identical to the naive ikj loop, so outputs do
// not depend on the tiling.
template <typename S, std::size_t MR, std::size_t JW>
inline void tile_fixed(std::size_t K, std::size_t P, const S* a, const S* b, S* c,
                       bool accumulate) {
    S acc[MR][JW];
    for (std::size_t r = 0; r < MR; ++r)
        for (std::size_t j = 0; j < JW; ++j) acc[r][j] = accumulate ? c[r * P + j] : S(0);
    for (std::size_t k = 0; k < K; ++k) {
        const S* brow = b + k * P;
        for (std::size_t r = 0; r < MR; ++r) {
            const S av = a[r * K + k];
            for (std::size_t j = 0; j < JW; ++j) acc[r][j] += av * brow[j];
        }
    }
    for (std::size_t r = 0; r < MR; ++r)
        for (std::size_t j = 0; j < JW; ++j) c[r * P + j] = acc[r][j];
}

// Ragged right/bottom edge, same accumulation order, runtime extents.
template <typename S>
inline void tile_edge(std::size_t rows, std::size_t jw, std::size_t K, std::size_t P,
                      const S* a, const S* b, S* c, bool accumulate) {
    S acc[4][kTileJ];
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < jw; ++j) acc[r][j] = accumulate ? c[r * P + j] : S(0);
    for (std::size_t k = 0; k < K; ++k) {
        const S* brow = b + k * P;
        for (std::size_t r = 0; r < rows; ++r) {
            const S av = a[r * K + k];
            for (std::size_t j = 0; j < jw; ++j) acc[r][j] += av * brow[j];
        }
    }
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < jw; ++j) c[r * P + j] = acc[r][j];
}

}  // namespace gemm_detail

/// C[M,P] (+)= A[M,K] * B[K,P]
template <typename S>
void gemm_nn(std::size_t M, std::size_t K, std::size_t P, const S* A, const S* B, S* C,
             bool accumulate = false, bool parallel = true) {
    using namespace gemm_detail;
    auto body = [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; i += 4) {
            const std::size_t rows = std::min<std::size_t>(4, i1 - i);
            const S* a = A + i * K;
            S* c = C + i * P;
            std::size_t j = 0;
            if (rows == 4)
                for (; j + kTileJ <= P; j += kTileJ)
                    tile_fixed<S, 4, kTileJ>(K, P, a, B + j, c + j, accumulate);
            for (; j < P; j += kTileJ)
                tile_edge(rows, std::min(kTileJ, P - j), K, P, a, B + j, c + j, accumulate);
        }
    };
    if (parallel && M > 1)
        parallel_for(M, body);
    else
        body(0, M);
}

/// dst[N,M] = src[M,N]
template <typename S>
void transpose_copy(std::size_t M, std::size_t N, const S* src, S* dst, bool parallel = true) {
    auto body = [&](std::size_t j0, std::size_t j1) {
        for (std::size_t j = j0; j < j1; ++j) {
            S* d = dst + j * M;
            for (std::size_t i = 0; i < M; ++i) d[i] = src[i * N + j];
        }
    };
    if (parallel && N > 1)
        parallel_for(N, body);
    else
        body(0, N);
}

/// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename S>
void gemm_nt(std::size_t M, std::size_t K, std::size_t N, const S* A, const S* B, S* C,
             bool accumulate = false, bool parallel = true) {
    std::vector<S> bt(K * N);
    transpose_copy(N, K, B, bt.data(), parallel);
    gemm_nn(M, K, N, A, bt.data(), C, accumulate, parallel);
}

/// C[K,P] (+)= A[M,K]^T * B[M,P]
template <typename S>
void gemm_tn(std::size_t M, std::size_t K, std::size_t P, const S* A, const S* B, S* C,
             bool accumulate = false, bool parallel = true) {
    std::vector<S> at(K * M);
    transpose_copy(M, K, A, at.data(), parallel);
    gemm_nn(K, M, P, at.data(), B, C, accumulate, parallel);
}

}  // namespace spikefuse
