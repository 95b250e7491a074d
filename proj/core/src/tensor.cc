#include "specdetect/tensor.h"

#include <algorithm>
#include <functional>
#include <numeric>

namespace specdetect::nn {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return shape.empty() ? 0 : n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, T fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(std::vector<int> shape, std::vector<T> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_size(shape_) != values_.size())
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(values_.size()) + " values");
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(values_.begin(), values_.end(), v);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(std::vector<int> shape) const {
  if (shape_size(shape) != size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), values_);
}

template <typename T>
Tensor<T>& ParamStore<T>::add(std::string name, Tensor<T> value, bool decay) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value), decay});
  return entries_.back().value;
}

template <typename T>
std::size_t ParamStore<T>::num_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
std::optional<std::size_t> ParamStore<T>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::get(std::string_view name) {
  auto i = find(name);
  if (!i) throw InvalidArgument("unknown parameter: " + std::string(name));
  return entries_[*i].value;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(std::string_view name) const {
  auto i = find(name);
  if (!i) throw InvalidArgument("unknown parameter: " + std::string(name));
  return entries_[*i].value;
}

template <typename T>
ParamStore<T> ParamStore<T>::zeros_like() const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.name, Tensor<T>(e.value.shape()), e.decay);
  return out;
}

template <typename T>
void ParamStore<T>::set_zero() {
  for (auto& e : entries_) e.value.fill(T{0});
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<long double>;
template class ParamStore<float>;
template class ParamStore<double>;
template class ParamStore<long double>;

}  // namespace specdetect::nn
