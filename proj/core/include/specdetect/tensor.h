#ifndef SPECDETECT_TENSOR_H_
#define SPECDETECT_TENSOR_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "specdetect/error.h"

namespace specdetect::nn {

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

// Dense row-major array. Every dimension is positive and
// size() == product(shape).
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T{0});
  Tensor(std::vector<int> shape, std::vector<T> values);

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // Matrix view: a 1-D tensor is a single row; higher ranks fold leading
  // dimensions into rows.
  int cols() const { return shape_.empty() ? 0 : shape_.back(); }
  int rows() const { return cols() == 0 ? 0 : static_cast<int>(size() / cols()); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  const std::vector<T>& vector() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  T operator[](std::size_t i) const { return values_[i]; }
  T& at(int r, int c) { return values_[static_cast<std::size_t>(r) * cols() + c]; }
  T at(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(T v);
  Tensor reshaped(std::vector<int> shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  std::vector<T> values_;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
  bool decay = true;  // subject to AdamW weight decay
};

// Ordered, name-addressable collection of learnable tensors. Iteration
// order is insertion order and defines the checkpoint record order.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(std::string name, Tensor<T> value, bool decay = true);

  std::size_t size() const { return entries_.size(); }
  std::size_t num_values() const;

  NamedTensor<T>& operator[](std::size_t i) { return entries_[i]; }
  const NamedTensor<T>& operator[](std::size_t i) const { return entries_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  Tensor<T>& get(std::string_view name);
  const Tensor<T>& get(std::string_view name) const;

  // Same names, shapes and decay flags, all values zero.
  ParamStore zeros_like() const;
  void set_zero();

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.decay);
    return out;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<NamedTensor<T>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace specdetect::nn

#endif  // SPECDETECT_TENSOR_H_
