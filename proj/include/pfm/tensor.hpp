#pragma once

#include <cmath>
#include <cstddef>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfm {

// Fixed-alignment storage keeps vectorized kernels on one code path no matter
// where the heap places a buffer, so equal seeds give equal bits even across
// repeated runs inside one process.
template <typename T, size_t Align>
struct AlignedAllocator {
  using value_type = T;
  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) {}
  T* allocate(size_t n) {
    if (n == 0) return nullptr;
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, size_t) { ::operator delete(p, std::align_val_t(Align)); }
  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

using AlignedVec = std::vector<double, AlignedAllocator<double, 64>>;

// Dense row-major matrix of doubles. Vectors are 1 x n rows, scalars 1 x 1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  AlignedVec data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), data(checked_extent(r, c), fill) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor row(std::vector<double> v) {
    Tensor t;
    t.rows = 1;
    t.cols = int(v.size());
    t.data.assign(v.begin(), v.end());
    return t;
  }

  static size_t checked_extent(int r, int c) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative extent");
    return size_t(r) * c;
  }

  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  double& at(int r, int c) { return data[size_t(r) * cols + c]; }
  double at(int r, int c) const { return data[size_t(r) * cols + c]; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  Tensor row_slice(int r) const {
    Tensor out(1, cols);
    for (int c = 0; c < cols; ++c) out.data[c] = at(r, c);
    return out;
  }
  void set_row(int r, const Tensor& v) {
    if (v.size() != cols) throw std::invalid_argument("set_row: width mismatch");
    for (int c = 0; c < cols; ++c) at(r, c) = v.data[c];
  }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline void check_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows) +
                                "x" + std::to_string(a.cols) + " vs " + std::to_string(b.rows) +
                                "x" + std::to_string(b.cols) + ")");
}

}  // namespace pfm
