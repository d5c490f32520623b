#pragma once

#include <cstddef>
#include <cstdlib>
#include <new>
#include <vector>

#include <Eigen/Core>

#include "core/error.hpp"

namespace esi::nn {

// 64-byte-aligned storage so vectorized elementwise kernels see the same
// SIMD layout regardless of where the heap places a buffer; together with
// aligned chunk boundaries this keeps results bitwise reproducible.
template <typename T>
struct AlignedAlloc64 {
  using value_type = T;
  AlignedAlloc64() = default;
  template <typename U>
  AlignedAlloc64(const AlignedAlloc64<U>&) {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + 63) / 64 * 64;
    void* p = std::aligned_alloc(64, bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { std::free(p); }

  template <typename U>
  bool operator==(const AlignedAlloc64<U>&) const {
    return true;
  }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAlloc64<T>>;

// (batch, height, width, channels), row-major with channels fastest.
template <typename T>
struct Tensor4 {
  int b = 0, h = 0, w = 0, c = 0;
  AlignedVec<T> v;

  Tensor4() = default;
  Tensor4(int b_, int h_, int w_, int c_)
      : b(b_), h(h_), w(w_), c(c_), v(std::size_t(b_) * h_ * w_ * c_, T(0)) {
    if (b_ < 1 || h_ < 1 || w_ < 1 || c_ < 1)
      raise(ErrorCode::ShapeError, "tensor dims must be positive");
  }

  std::size_t size() const { return v.size(); }
  std::size_t sample_size() const { return std::size_t(h) * w * c; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  T* sample(int bi) { return v.data() + std::size_t(bi) * sample_size(); }
  const T* sample(int bi) const { return v.data() + std::size_t(bi) * sample_size(); }

  T& at(int bi, int hi, int wi, int ci) {
    return v[((std::size_t(bi) * h + hi) * w + wi) * c + ci];
  }
  const T& at(int bi, int hi, int wi, int ci) const {
    return v[((std::size_t(bi) * h + hi) * w + wi) * c + ci];
  }

  bool same_shape(const Tensor4& o) const { return b == o.b && h == o.h && w == o.w && c == o.c; }

  void fill(T value) { std::fill(v.begin(), v.end(), value); }
};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace esi::nn
