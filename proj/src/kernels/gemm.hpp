#pragma once

// Row-major GEMM kernels used by the convolution and linear layers.
// Every output element accumulates over k in ascending order, so results do not depend
// on how rows are split across threads.

#include <algorithm>
#include <cstddef>
#include <vector>

namespace sau::kernels {

inline constexpr int kColBlock = 256;

/// C[M x N] (+)= A[M x K] * B[K x N]
template <typename T>
void gemm_nn(int M, int N, int K, const T* __restrict A, int lda, const T* __restrict B, int ldb,
             T* __restrict C, int ldc, bool accumulate) {
#pragma omp parallel for schedule(static) if (static_cast<long>(M) * N * K > 32768)
  for (int i = 0; i < M; ++i) {
    T* __restrict c_row = C + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) std::fill(c_row, c_row + N, T(0));
    const T* __restrict a_row = A + static_cast<std::size_t>(i) * lda;
    for (int j0 = 0; j0 < N; j0 += kColBlock) {
      const int j1 = std::min(N, j0 + kColBlock);
      for (int k = 0; k < K; ++k) {
        const T a = a_row[k];
        const T* __restrict b_row = B + static_cast<std::size_t>(k) * ldb;
        for (int j = j0; j < j1; ++j) c_row[j] += a * b_row[j];
      }
    }
  }
}

/// C[M x N] (+)= A^T * B where A is stored K x M.
template <typename T>
void gemm_tn(int M, int N, int K, const T* __restrict A, int lda, const T* __restrict B, int ldb,
             T* __restrict C, int ldc, bool accumulate) {
#pragma omp parallel for schedule(static) if (static_cast<long>(M) * N * K > 32768)
  for (int i = 0; i < M; ++i) {
    T* __restrict c_row = C + static_cast<std::size_t>(i) * ldc;
    if (!accumulate) std::fill(c_row, c_row + N, T(0));
    for (int j0 = 0; j0 < N; j0 += kColBlock) {
      const int j1 = std::min(N, j0 + kColBlock);
      for (int k = 0; k < K; ++k) {
        const T a = A[static_cast<std::size_t>(k) * lda + i];
        const T* __restrict b_row = B + static_cast<std::size_t>(k) * ldb;
        for (int j = j0; j < j1; ++j) c_row[j] += a * b_row[j];
      }
    }
  }
}

/// Out-of-place transpose: dst[cols x rows] = src[rows x cols]^T.
template <typename T>
void transpose(int rows, int cols, const T* __restrict src, T* __restrict dst) {
  constexpr int kTile = 32;
  for (int r0 = 0; r0 < rows; r0 += kTile) {
    for (int c0 = 0; c0 < cols; c0 += kTile) {
      const int r1 = std::min(rows, r0 + kTile);
      const int c1 = std::min(cols, c0 + kTile);
      for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
          dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
        }
      }
    }
  }
}

/// C[M x N] (+)= A[M x K] * B^T where B is stored N x K. Transposes B into `scratch`.
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, int lda, const T* B, T* C, int ldc, bool accumulate,
             std::vector<T>& scratch) {
  scratch.resize(static_cast<std::size_t>(K) * N);
  transpose(N, K, B, scratch.data());
  gemm_nn(M, N, K, A, lda, scratch.data(), N, C, ldc, accumulate);
}

/// Geometry shared by im2col / col2im: an image of C x H x W read by a kh x kw window.
struct Im2ColGeometry {
  int channels;
  int height;
  int width;
  int kernel_h;
  int kernel_w;
  int stride;
  int padding;
  int out_h;
  int out_w;
};

/// col[(c*kh + i)*kw + j][oh*out_w + ow] = img[c][oh*stride - pad + i][ow*stride - pad + j] (0 outside).
template <typename T>
void im2col(const Im2ColGeometry& g, const T* __restrict img, T* __restrict col) {
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
#pragma omp parallel for schedule(static) if (g.channels > 1 && plane * g.kernel_h * g.kernel_w > 4096)
  for (int c = 0; c < g.channels; ++c) {
    const T* src = img + static_cast<std::size_t>(c) * g.height * g.width;
    for (int i = 0; i < g.kernel_h; ++i) {
      for (int j = 0; j < g.kernel_w; ++j) {
        T* dst = col + (static_cast<std::size_t>(c) * g.kernel_h * g.kernel_w + i * g.kernel_w + j) * plane;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + i;
          T* drow = dst + static_cast<std::size_t>(oh) * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(drow, drow + g.out_w, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(ih) * g.width;
          if (g.stride == 1) {
            const int shift = j - g.padding;
            const int lo = std::max(0, -shift);
            const int hi = std::min(g.out_w, g.width - shift);
            for (int ow = 0; ow < std::min(lo, g.out_w); ++ow) drow[ow] = T(0);
            for (int ow = lo; ow < hi; ++ow) drow[ow] = srow[ow + shift];
            for (int ow = std::max(hi, 0); ow < g.out_w; ++ow) drow[ow] = T(0);
          } else {
            for (int ow = 0; ow < g.out_w; ++ow) {
              const int iw = ow * g.stride - g.padding + j;
              drow[ow] = (iw >= 0 && iw < g.width) ? srow[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: img (+)= scatter of col. Each channel plane is owned by one thread.
template <typename T>
void col2im(const Im2ColGeometry& g, const T* __restrict col, T* __restrict img, bool accumulate) {
  const std::size_t plane = static_cast<std::size_t>(g.out_h) * g.out_w;
#pragma omp parallel for schedule(static) if (g.channels > 1 && plane * g.kernel_h * g.kernel_w > 4096)
  for (int c = 0; c < g.channels; ++c) {
    T* dst = img + static_cast<std::size_t>(c) * g.height * g.width;
    if (!accumulate) std::fill(dst, dst + static_cast<std::size_t>(g.height) * g.width, T(0));
    for (int i = 0; i < g.kernel_h; ++i) {
      for (int j = 0; j < g.kernel_w; ++j) {
        const T* src = col + (static_cast<std::size_t>(c) * g.kernel_h * g.kernel_w + i * g.kernel_w + j) * plane;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + i;
          if (ih < 0 || ih >= g.height) continue;
          T* drow = dst + static_cast<std::size_t>(ih) * g.width;
          const T* srow = src + static_cast<std::size_t>(oh) * g.out_w;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + j;
            if (iw >= 0 && iw < g.width) drow[iw] += srow[ow];
          }
        }
      }
    }
  }
}

}  // namespace sau::kernels
