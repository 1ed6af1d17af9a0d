#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "prism/common.hpp"

namespace prism::ad {

/// Dense row-major array. Precision is a template parameter: training runs at
/// 32-bit, gradient oracles at 64-bit.
template <typename T>
struct ArrayT {
  std::vector<int64_t> shape;
  std::vector<T> v;

  ArrayT() = default;
  ArrayT(std::vector<int64_t> s, std::vector<T> data)
      : shape(std::move(s)), v(std::move(data)) {
    PRISM_CHECK(numel_of(shape) == static_cast<int64_t>(v.size()),
                "Array: shape/value size mismatch: shape product ",
                numel_of(shape), " vs ", v.size(), " values");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      PRISM_CHECK(d >= 0, "Array: negative dim ", d);
      n *= d;
    }
    return n;
  }

  static ArrayT zeros(std::vector<int64_t> s) {
    auto n = numel_of(s);
    return ArrayT(std::move(s), std::vector<T>(static_cast<size_t>(n), T(0)));
  }
  static ArrayT full(std::vector<int64_t> s, T value) {
    auto n = numel_of(s);
    return ArrayT(std::move(s), std::vector<T>(static_cast<size_t>(n), value));
  }
  static ArrayT scalar(T value) { return ArrayT({1}, {value}); }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  bool is_scalar() const { return v.size() == 1; }

  /// Matrix view helpers; rank-1 arrays count as a single row.
  int64_t rows() const {
    if (shape.size() <= 1) return 1;
    int64_t r = 1;
    for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
    return r;
  }
  int64_t cols() const { return shape.empty() ? 1 : shape.back(); }

  T& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols() + c)]; }
  const T& at(int64_t r, int64_t c) const {
    return v[static_cast<size_t>(r * cols() + c)];
  }

  template <typename U>
  ArrayT<U> cast() const {
    std::vector<U> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<U>(v[i]);
    return ArrayT<U>(shape, std::move(out));
  }
};

using Arr32 = ArrayT<float>;
using Arr64 = ArrayT<double>;

}  // namespace prism::ad
