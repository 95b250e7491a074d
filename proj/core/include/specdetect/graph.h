#ifndef SPECDETECT_GRAPH_H_
#define SPECDETECT_GRAPH_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "specdetect/tensor.h"

namespace specdetect::nn {

// Handle to a node of a Graph.
struct Var {
  int id = -1;
};

// Tape-based reverse-mode differentiation. Nodes are appended in
// evaluation order, which is a topological order, and backward() visits
// them once in reverse. One Graph per forward pass; not thread-safe, but
// independent graphs may run concurrently over shared read-only parameters.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor<T> value);
  // Refers to `value` without copying; it must outlive the graph. When
  // `grad` is non-null, backward() adds d(loss)/d(value) into it.
  Var parameter(const Tensor<T>& value, Tensor<T>* grad);

  const Tensor<T>& value(Var v) const;
  // Gradient accumulated by backward(); zeros if the node received none.
  Tensor<T> grad(Var v) const;
  std::size_t num_nodes() const { return nodes_.size(); }

  // [m x k] . [k x n] -> [m x n]
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // Adds a length-n vector to every row of an [m x n] matrix.
  Var add_bias(Var x, Var bias);
  Var mul(Var a, Var b);
  Var scale(Var x, T factor);
  Var relu(Var x);
  // Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
  Var gelu(Var x);
  Var sigmoid(Var x);
  // Max-shifted softmax over the last axis.
  Var softmax_rows(Var x);
  // Per-row (x - mean) / sqrt(var + eps) * gamma + beta.
  Var layer_norm(Var x, Var gamma, Var beta, T eps);
  Var transpose(Var x);
  Var slice_cols(Var x, int start, int width);
  Var concat_cols(std::span<const Var> parts);
  Var reshape(Var x, std::vector<int> shape);
  // Mean over rows: [m x n] -> [1 x n]. Invariant to row order, bit for bit.
  Var mean_rows(Var x);
  Var sum(Var x);
  Var mean(Var x);
  // -(1/n) sum_j [y_j log(p_j + eps) + (1 - y_j) log(1 - p_j + eps)],
  // n = number of probabilities. Returns a scalar.
  Var binary_cross_entropy(Var probs, const Tensor<T>& targets, T eps);

  // Seeds d(loss)/d(loss) = 1 and propagates. Throws ShapeError unless the
  // loss holds exactly one value.
  void backward(Var loss);

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T> grad;
    Tensor<T>* param_grad = nullptr;
    bool requires_grad = false;
    std::function<void()> backward;

    const Tensor<T>& value() const { return ref ? *ref : owned; }
  };

  Var push(Tensor<T> value, bool requires_grad);
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor<T>& grad_buffer(int id);
  bool needs(Var v) const { return node(v).requires_grad; }

  std::vector<Node> nodes_;
};

struct GradCheckEntry {
  std::string name;
  int coords = 0;
  int refined = 0;  // coordinates re-derived with the precise loss
  double max_rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::vector<GradCheckEntry> per_param;
};

// Loss function for check_gradients. Must be deterministic; when `grads` is
// non-null it must also accumulate the analytic gradient into it.
template <typename T>
using LossFunction = std::function<T(const ParamStore<T>& params, ParamStore<T>* grads)>;

// Compares analytic gradients against central differences
// (f(theta + h) - f(theta - h)) / 2h with h = eps * max(1, |theta|), on up
// to `coords_per_param` randomly chosen coordinates of every tensor (all of
// them for smaller tensors). Relative error is
// |a - n| / max(|a|, |n|, 1e-8).
template <typename T>
GradCheckResult check_gradients(const LossFunction<T>& f, ParamStore<T> params, double eps,
                                int coords_per_param, std::uint64_t seed);

// The same loss evaluated in extended precision.
template <typename T>
using PreciseLoss = std::function<long double(const ParamStore<T>& params)>;

// As above, but a coordinate whose error exceeds `refine_above` gets its
// central difference recomputed with `precise`, and that error is the one
// reported. In double, finite-difference noise near 1e-13 swamps gradients
// of order 1e-8 (the attention key bias is exactly zero); extended
// precision pushes the noise floor below that.
template <typename T>
GradCheckResult check_gradients(const LossFunction<T>& f, const PreciseLoss<T>& precise,
                                ParamStore<T> params, double eps, int coords_per_param,
                                std::uint64_t seed, double refine_above);

}  // namespace specdetect::nn

#endif  // SPECDETECT_GRAPH_H_
