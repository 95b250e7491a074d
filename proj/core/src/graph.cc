#include "specdetect/graph.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <set>

#include "specdetect/rng.h"

namespace specdetect::nn {
namespace {

template <typename T>
using MatrixR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<MatrixR<T>> as_matrix(Tensor<T>& t) {
  return {t.data(), t.rows(), t.cols()};
}

template <typename T>
Eigen::Map<const MatrixR<T>> as_matrix(const Tensor<T>& t) {
  return {t.data(), t.rows(), t.cols()};
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::vector<int> matrix_shape(int rows, int cols) { return {rows, cols}; }

}  // namespace

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var v) {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw InvalidArgument("graph: invalid node");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw InvalidArgument("graph: invalid node");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value().shape());
  return n.grad;
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Graph<T>::parameter(const Tensor<T>& value, Tensor<T>* grad) {
  if (grad && !grad->same_shape(value))
    throw ShapeError("graph: gradient buffer shape differs from parameter");
  Var v = push(Tensor<T>(), grad != nullptr);
  Node& n = nodes_.back();
  n.ref = &value;
  n.param_grad = grad;
  return v;
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).value();
}

template <typename T>
Tensor<T> Graph<T>::grad(Var v) const {
  const Node& n = node(v);
  return n.grad.empty() ? Tensor<T>(n.value().shape()) : n.grad;
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  require(av.cols() == bv.rows(), "matmul: inner dimensions " + shape_string(av.shape()) + " . " +
                                      shape_string(bv.shape()) + " disagree");
  Tensor<T> out(matrix_shape(av.rows(), bv.cols()));
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  Var c = push(std::move(out), needs(a) || needs(b));
  if (needs(c)) {
    node(c).backward = [this, a, b, c] {
      const Tensor<T>& g = nodes_[c.id].grad;
      if (needs(a)) as_matrix(grad_buffer(a.id)).noalias() += as_matrix(g) * as_matrix(value(b)).transpose();
      if (needs(b)) as_matrix(grad_buffer(b.id)).noalias() += as_matrix(value(a)).transpose() * as_matrix(g);
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  require(av.same_shape(bv), "add: shapes " + shape_string(av.shape()) + " and " +
                                 shape_string(bv.shape()) + " differ");
  Tensor<T> out = av;
  add_into(out, bv);
  Var c = push(std::move(out), needs(a) || needs(b));
  if (needs(c)) {
    node(c).backward = [this, a, b, c] {
      const Tensor<T>& g = nodes_[c.id].grad;
      if (needs(a)) add_into(grad_buffer(a.id), g);
      if (needs(b)) add_into(grad_buffer(b.id), g);
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::add_bias(Var x, Var bias) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& bv = value(bias);
  require(static_cast<int>(bv.size()) == xv.cols(), "add_bias: bias length differs from columns");
  Tensor<T> out = xv;
  const int rows = xv.rows();
  const int cols = xv.cols();
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j) out.at(r, j) += bv[static_cast<std::size_t>(j)];
  Var c = push(std::move(out), needs(x) || needs(bias));
  if (needs(c)) {
    node(c).backward = [this, x, bias, c, rows, cols] {
      const Tensor<T>& g = nodes_[c.id].grad;
      if (needs(x)) add_into(grad_buffer(x.id), g);
      if (needs(bias)) {
        Tensor<T>& gb = grad_buffer(bias.id);
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < cols; ++j) gb[static_cast<std::size_t>(j)] += g.at(r, j);
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  const Tensor<T>& av = value(a);
  const Tensor<T>& bv = value(b);
  require(av.same_shape(bv), "mul: shapes differ");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Var c = push(std::move(out), needs(a) || needs(b));
  if (needs(c)) {
    node(c).backward = [this, a, b, c] {
      const Tensor<T>& g = nodes_[c.id].grad;
      if (needs(a)) {
        Tensor<T>& ga = grad_buffer(a.id);
        const Tensor<T>& bv = value(b);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (needs(b)) {
        Tensor<T>& gb = grad_buffer(b.id);
        const Tensor<T>& av = value(a);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::scale(Var x, T factor) {
  Tensor<T> out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
  Var c = push(std::move(out), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c, factor] {
      const Tensor<T>& g = nodes_[c.id].grad;
      Tensor<T>& gx = grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::relu(Var x) {
  Tensor<T> out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > T{0} ? out[i] : T{0};
  Var c = push(std::move(out), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c] {
      const Tensor<T>& g = nodes_[c.id].grad;
      const Tensor<T>& xv = value(x);
      Tensor<T>& gx = grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > T{0}) gx[i] += g[i];
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::gelu(Var x) {
  constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
  constexpr T kA = static_cast<T>(0.044715);
  Tensor<T> out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = out[i];
    out[i] = T{0.5} * v * (T{1} + std::tanh(kC * (v + kA * v * v * v)));
  }
  Var c = push(std::move(out), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c] {
      const Tensor<T>& g = nodes_[c.id].grad;
      const Tensor<T>& xv = value(x);
      Tensor<T>& gx = grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T v = xv[i];
        const T t = std::tanh(kC * (v + kA * v * v * v));
        const T d = T{0.5} * (T{1} + t) +
                    T{0.5} * v * (T{1} - t * t) * kC * (T{1} + T{3} * kA * v * v);
        gx[i] += g[i] * d;
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::sigmoid(Var x) {
  Tensor<T> out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = out[i];
    if (v >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T{1} + e);
    }
  }
  Var c = push(std::move(out), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c] {
      const Tensor<T>& g = nodes_[c.id].grad;
      const Tensor<T>& y = value(c);
      Tensor<T>& gx = grad_buffer(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T{1} - y[i]);
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::softmax_rows(Var x) {
  Tensor<T> out = value(x);
  const int rows = out.rows();
  const int cols = out.cols();
  for (int r = 0; r < rows; ++r) {
    T* row = out.data() + static_cast<std::ptrdiff_t>(r) * cols;
    const T mx = *std::max_element(row, row + cols);
    T total{0};
    for (int j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (int j = 0; j < cols; ++j) row[j] /= total;
  }
  Var c = push(std::move(out), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c, rows, cols] {
      const Tensor<T>& g = nodes_[c.id].grad;
      const Tensor<T>& y = value(c);
      Tensor<T>& gx = grad_buffer(x.id);
      for (int r = 0; r < rows; ++r) {
        T dot{0};
        for (int j = 0; j < cols; ++j) dot += g.at(r, j) * y.at(r, j);
        for (int j = 0; j < cols; ++j) gx.at(r, j) += y.at(r, j) * (g.at(r, j) - dot);
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::layer_norm(Var x, Var gamma, Var beta, T eps) {
  const Tensor<T>& xv = value(x);
  const int rows = xv.rows();
  const int cols = xv.cols();
  require(static_cast<int>(value(gamma).size()) == cols && static_cast<int>(value(beta).size()) == cols,
          "layer_norm: gamma/beta length differs from last dimension");

  auto normed = std::make_shared<Tensor<T>>(xv.shape());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  Tensor<T> out(xv.shape());
  const Tensor<T>& gv = value(gamma);
  const Tensor<T>& bv = value(beta);
  for (int r = 0; r < rows; ++r) {
    T mean{0};
    for (int j = 0; j < cols; ++j) mean += xv.at(r, j);
    mean /= static_cast<T>(cols);
    T var{0};
    for (int j = 0; j < cols; ++j) var += (xv.at(r, j) - mean) * (xv.at(r, j) - mean);
    var /= static_cast<T>(cols);
    const T inv = T{1} / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = inv;
    for (int j = 0; j < cols; ++j) {
      const T h = (xv.at(r, j) - mean) * inv;
      normed->at(r, j) = h;
      out.at(r, j) = h * gv[static_cast<std::size_t>(j)] + bv[static_cast<std::size_t>(j)];
    }
  }
  Var c = push(std::move(out), needs(x) || needs(gamma) || needs(beta));
  if (needs(c)) {
    node(c).backward = [this, x, gamma, beta, c, rows, cols, normed, inv_std] {
      const Tensor<T>& g = nodes_[c.id].grad;
      const Tensor<T>& gv = value(gamma);
      if (needs(gamma)) {
        Tensor<T>& gg = grad_buffer(gamma.id);
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < cols; ++j) gg[static_cast<std::size_t>(j)] += g.at(r, j) * normed->at(r, j);
      }
      if (needs(beta)) {
        Tensor<T>& gb = grad_buffer(beta.id);
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < cols; ++j) gb[static_cast<std::size_t>(j)] += g.at(r, j);
      }
      if (needs(x)) {
        Tensor<T>& gx = grad_buffer(x.id);
        const T n = static_cast<T>(cols);
        for (int r = 0; r < rows; ++r) {
          T sum_d{0};
          T sum_dh{0};
          for (int j = 0; j < cols; ++j) {
            const T d = g.at(r, j) * gv[static_cast<std::size_t>(j)];
            sum_d += d;
            sum_dh += d * normed->at(r, j);
          }
          const T inv = (*inv_std)[static_cast<std::size_t>(r)];
          for (int j = 0; j < cols; ++j) {
            const T d = g.at(r, j) * gv[static_cast<std::size_t>(j)];
            gx.at(r, j) += inv / n * (n * d - sum_d - normed->at(r, j) * sum_dh);
          }
        }
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::transpose(Var x) {
  const Tensor<T>& xv = value(x);
  Tensor<T> out(matrix_shape(xv.cols(), xv.rows()));
  as_matrix(out) = as_matrix(xv).transpose();
  Var c = push(std::move(out), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c] {
      as_matrix(grad_buffer(x.id)) += as_matrix(nodes_[c.id].grad).transpose();
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::slice_cols(Var x, int start, int width) {
  const Tensor<T>& xv = value(x);
  require(start >= 0 && width > 0 && start + width <= xv.cols(), "slice_cols: range out of bounds");
  const int rows = xv.rows();
  Tensor<T> out(matrix_shape(rows, width));
  as_matrix(out) = as_matrix(xv).middleCols(start, width);
  Var c = push(std::move(out), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c, start, width] {
      as_matrix(grad_buffer(x.id)).middleCols(start, width) += as_matrix(nodes_[c.id].grad);
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const int rows = value(parts[0]).rows();
  int total = 0;
  bool any = false;
  for (Var p : parts) {
    require(value(p).rows() == rows, "concat_cols: row counts differ");
    total += value(p).cols();
    any = any || needs(p);
  }
  Tensor<T> out(matrix_shape(rows, total));
  int offset = 0;
  for (Var p : parts) {
    const int w = value(p).cols();
    as_matrix(out).middleCols(offset, w) = as_matrix(value(p));
    offset += w;
  }
  Var c = push(std::move(out), any);
  if (needs(c)) {
    std::vector<Var> inputs(parts.begin(), parts.end());
    node(c).backward = [this, inputs, c] {
      const Tensor<T>& g = nodes_[c.id].grad;
      int off = 0;
      for (Var p : inputs) {
        const int w = value(p).cols();
        if (needs(p)) as_matrix(grad_buffer(p.id)) += as_matrix(g).middleCols(off, w);
        off += w;
      }
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::reshape(Var x, std::vector<int> shape) {
  Tensor<T> out = value(x).reshaped(std::move(shape));
  Var c = push(std::move(out), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c] {
      Tensor<T>& gx = grad_buffer(x.id);
      const Tensor<T>& g = nodes_[c.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::mean_rows(Var x) {
  const Tensor<T>& xv = value(x);
  const int rows = xv.rows();
  const int cols = xv.cols();
  require(rows >= 1, "mean_rows: no rows");
  Tensor<T> out(matrix_shape(1, cols));
  // Each column is summed in ascending order so the result depends only on
  // the multiset of rows, never on their order.
  std::vector<T> column(static_cast<std::size_t>(rows));
  for (int j = 0; j < cols; ++j) {
    for (int r = 0; r < rows; ++r) column[static_cast<std::size_t>(r)] = xv.at(r, j);
    std::sort(column.begin(), column.end());
    T total{0};
    for (T v : column) total += v;
    out[static_cast<std::size_t>(j)] = total / static_cast<T>(rows);
  }
  Var c = push(std::move(out), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c, rows, cols] {
      const Tensor<T>& g = nodes_[c.id].grad;
      Tensor<T>& gx = grad_buffer(x.id);
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j) gx.at(r, j) += g[static_cast<std::size_t>(j)] / static_cast<T>(rows);
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::sum(Var x) {
  T total{0};
  for (T v : value(x).values()) total += v;
  Var c = push(Tensor<T>::scalar(total), needs(x));
  if (needs(c)) {
    node(c).backward = [this, x, c] {
      const T g = nodes_[c.id].grad[0];
      for (T& v : grad_buffer(x.id).values()) v += g;
    };
  }
  return c;
}

template <typename T>
Var Graph<T>::mean(Var x) {
  return scale(sum(x), T{1} / static_cast<T>(value(x).size()));
}

template <typename T>
Var Graph<T>::binary_cross_entropy(Var probs, const Tensor<T>& targets, T eps) {
  const Tensor<T>& p = value(probs);
  require(p.size() == targets.size(), "binary_cross_entropy: target count differs");
  const T n = static_cast<T>(p.size());
  T loss{0};
  for (std::size_t i = 0; i < p.size(); ++i)
    loss -= targets[i] * std::log(p[i] + eps) + (T{1} - targets[i]) * std::log(T{1} - p[i] + eps);
  Var c = push(Tensor<T>::scalar(loss / n), needs(probs));
  if (needs(c)) {
    node(c).backward = [this, probs, c, targets, eps, n] {
      const T g = nodes_[c.id].grad[0];
      const Tensor<T>& pv = value(probs);
      Tensor<T>& gp = grad_buffer(probs.id);
      for (std::size_t i = 0; i < pv.size(); ++i)
        gp[i] -= g / n * (targets[i] / (pv[i] + eps) - (T{1} - targets[i]) / (T{1} - pv[i] + eps));
    };
  }
  return c;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  Node& root = node(loss);
  if (root.value().size() != 1)
    throw ShapeError("backward: loss must be a scalar, got " + shape_string(root.value().shape()));
  if (!root.requires_grad) return;
  grad_buffer(loss.id).fill(T{1});
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward();
    if (n.param_grad) add_into(*n.param_grad, n.grad);
  }
}

namespace {

double rel_error(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); }

template <typename T>
GradCheckResult check_impl(const LossFunction<T>& f, const PreciseLoss<T>* precise, ParamStore<T> params,
                           double eps, int coords_per_param, std::uint64_t seed, double refine_above) {
  ParamStore<T> analytic = params.zeros_like();
  f(params, &analytic);

  Rng rng(seed);
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& theta = params[p].value;
    const std::size_t n = theta.size();
    std::vector<std::size_t> coords;
    if (n <= static_cast<std::size_t>(coords_per_param)) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      std::set<std::size_t> chosen;
      while (chosen.size() < static_cast<std::size_t>(coords_per_param)) chosen.insert(rng.below(n));
      coords.assign(chosen.begin(), chosen.end());
    }

    GradCheckEntry entry{params[p].name, static_cast<int>(coords.size()), 0, 0.0};
    for (std::size_t idx : coords) {
      const T orig = theta[idx];
      const T h = static_cast<T>(eps * std::max(1.0, std::abs(static_cast<double>(orig))));
      const T plus = orig + h;
      const T minus = orig - h;
      theta[idx] = plus;
      const double fp = static_cast<double>(f(params, nullptr));
      theta[idx] = minus;
      const double fm = static_cast<double>(f(params, nullptr));
      theta[idx] = orig;
      const double a = static_cast<double>(analytic[p].value[idx]);
      double err = rel_error(a, (fp - fm) / static_cast<double>(plus - minus));
      if (precise && err > refine_above) {
        theta[idx] = plus;
        const long double lp = (*precise)(params);
        theta[idx] = minus;
        const long double lm = (*precise)(params);
        theta[idx] = orig;
        const long double span = static_cast<long double>(plus) - static_cast<long double>(minus);
        err = rel_error(a, static_cast<double>((lp - lm) / span));
        ++entry.refined;
      }
      entry.max_rel_error = std::max(entry.max_rel_error, err);
    }
    if (entry.max_rel_error >= result.max_rel_error) {
      result.max_rel_error = entry.max_rel_error;
      result.worst_param = entry.name;
    }
    result.per_param.push_back(entry);
  }
  return result;
}

}  // namespace

template <typename T>
GradCheckResult check_gradients(const LossFunction<T>& f, ParamStore<T> params, double eps,
                                int coords_per_param, std::uint64_t seed) {
  return check_impl<T>(f, nullptr, std::move(params), eps, coords_per_param, seed, 0.0);
}

template <typename T>
GradCheckResult check_gradients(const LossFunction<T>& f, const PreciseLoss<T>& precise,
                                ParamStore<T> params, double eps, int coords_per_param,
                                std::uint64_t seed, double refine_above) {
  return check_impl<T>(f, &precise, std::move(params), eps, coords_per_param, seed, refine_above);
}

template class Graph<float>;
template class Graph<double>;
template class Graph<long double>;
template GradCheckResult check_gradients<float>(const LossFunction<float>&, ParamStore<float>, double,
                                                int, std::uint64_t);
template GradCheckResult check_gradients<double>(const LossFunction<double>&, ParamStore<double>,
                                                 double, int, std::uint64_t);
template GradCheckResult check_gradients<double>(const LossFunction<double>&, const PreciseLoss<double>&,
                                                 ParamStore<double>, double, int, std::uint64_t, double);

}  // namespace specdetect::nn
