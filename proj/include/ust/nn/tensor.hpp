#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ust/core/error.hpp"

namespace ust::nn {

// Reverse-mode autodiff on a dynamic per-session graph. Node values are
// written once when the op runs and treated as immutable afterwards; the
// only sanctioned mutation is the optimizer updating leaf parameters
// between tape builds.
template <typename T>
struct Node {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  bool leaf = true;
  bool backward_ran = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  long numel() const {
    long n = 1;
    for (int d : shape) n *= d;
    return n;
  }
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

// Scoped "inference mode": ops executed inside do not join the tape.
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(std::vector<int> shape, T v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    check_shape(n->shape);
    n->value.assign(size_t(n->numel()), v);
    set_requires(*n, requires_grad);
    return Tensor(std::move(n));
  }

  static Tensor from(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    check_shape(n->shape);
    if (size_t(n->numel()) != data.size())
      throw data_error("tensor: shape " + shape_str(n->shape) + " does not match data length " +
                       std::to_string(data.size()));
    n->value = std::move(data);
    set_requires(*n, requires_grad);
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[size_t(i)]; }
  int ndim() const { return int(node_->shape.size()); }
  long numel() const { return node_->numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::span<const T> value() const { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }

  T item() const {
    if (numel() != 1) throw usage_error("item(): tensor is not scalar");
    return node_->value[0];
  }

  // Raw access for the optimizer, parameter init, and checkpoint load only.
  std::vector<T>& raw_value() { return node_->value; }
  std::vector<T>& raw_grad() { return node_->grad; }

  void zero_grad() {
    if (!node_) return;
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    node_->backward_ran = false;
  }

  Tensor detach() const {
    auto n = std::make_shared<Node<T>>();
    n->shape = node_->shape;
    n->value = node_->value;
    n->requires_grad = false;
    n->leaf = true;
    return Tensor(std::move(n));
  }

  // Reverse pass from a scalar loss. Populates grad on every requires_grad
  // tensor reachable through the tape. Calling it a second time on the same
  // graph without zeroing is an error.
  void backward() const {
    if (!node_) throw usage_error("backward: undefined tensor");
    if (node_->numel() != 1) throw usage_error("backward: loss must be scalar");
    if (!node_->requires_grad)
      throw usage_error("backward: loss is not on the tape (nothing requires grad)");
    if (node_->backward_ran)
      throw usage_error("backward: called twice on the same graph without zeroing");

    std::vector<Node<T>*> order = topo_order(node_.get());
    for (Node<T>* n : order)
      if (n->requires_grad && n->grad.empty()) n->grad.assign(size_t(n->numel()), T(0));
    node_->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn) n->backward_fn(*n);
    }
    node_->backward_ran = true;
  }

  std::shared_ptr<Node<T>> node_;

 private:
  static void check_shape(const std::vector<int>& s) {
    for (int d : s)
      if (d <= 0) throw data_error("tensor: non-positive extent in shape " + shape_str(s));
  }

  static void set_requires(Node<T>& n, bool requires_grad) {
    n.requires_grad = requires_grad && grad_mode_flag();
    if (n.requires_grad) n.grad.assign(n.value.size(), T(0));
  }

  static std::vector<Node<T>*> topo_order(Node<T>* root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // iterative post-order DFS over parents
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }
};

namespace detail {

template <typename T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (const T& x : v)
    if (!std::isfinite(double(x)))
      throw numeric_error(std::string("non-finite value produced by ") + op);
}

}  // namespace detail

// Op-result constructor shared by every primitive. Decides tape membership,
// wires parents, and enforces the everything-finite invariant.
template <typename T>
Tensor<T> make_result(std::vector<int> shape, std::vector<T> value,
                      std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward_fn, const char* op_name) {
  detail::check_finite(value, op_name);
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->leaf = false;
  bool need = false;
  for (const auto& t : inputs) need = need || t.requires_grad();
  if (need && grad_mode_flag()) {
    n->requires_grad = true;
    for (auto& t : inputs) n->parents.push_back(t.node_);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(n));
}

// ---- elementwise primitives ----

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw data_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  std::vector<T> out(a.value().begin(), a.value().end());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result<T>(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        for (int p = 0; p < 2; ++p) {
          auto& par = *self.parents[size_t(p)];
          if (!par.requires_grad) continue;
          for (size_t i = 0; i < par.grad.size(); ++i) par.grad[i] += self.grad[i];
        }
      },
      "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  std::vector<T> out(a.value().begin(), a.value().end());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result<T>(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad)
          for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[i];
        if (pb.requires_grad)
          for (size_t i = 0; i < pb.grad.size(); ++i) pb.grad[i] -= self.grad[i];
      },
      "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  std::vector<T> out(a.value().begin(), a.value().end());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result<T>(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad)
          for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
        if (pb.requires_grad)
          for (size_t i = 0; i < pb.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
      },
      "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (T& x : out) x *= s;
  return make_result<T>(
      a.shape(), std::move(out), {a},
      [s](Node<T>& self) {
        auto& pa = *self.parents[0];
        if (pa.requires_grad)
          for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[i] * s;
      },
      "scale");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (T& x : out) x += s;
  return make_result<T>(
      a.shape(), std::move(out), {a},
      [](Node<T>& self) {
        auto& pa = *self.parents[0];
        if (pa.requires_grad)
          for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[i];
      },
      "add_scalar");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (T& x : out) x = x > T(0) ? x : T(0);
  return make_result<T>(
      a.shape(), std::move(out), {a},
      [](Node<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        for (size_t i = 0; i < pa.grad.size(); ++i)
          if (pa.value[i] > T(0)) pa.grad[i] += self.grad[i];
      },
      "relu");
}

template <typename T>
T sigmoid_val(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (T& x : out) x = sigmoid_val(x);
  return make_result<T>(
      a.shape(), std::move(out), {a},
      [](Node<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        for (size_t i = 0; i < pa.grad.size(); ++i) {
          T y = self.value[i];
          pa.grad[i] += self.grad[i] * y * (T(1) - y);
        }
      },
      "sigmoid");
}

template <typename T>
T softplus_val(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (T& x : out) x = softplus_val(x);
  return make_result<T>(
      a.shape(), std::move(out), {a},
      [](Node<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        for (size_t i = 0; i < pa.grad.size(); ++i)
          pa.grad[i] += self.grad[i] * sigmoid_val(pa.value[i]);
      },
      "softplus");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0;
  for (T x : a.value()) acc += double(x);
  return make_result<T>(
      {1}, {T(acc)}, {a},
      [](Node<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        T g = self.grad[0];
        for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g;
      },
      "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  double acc = 0;
  for (T x : a.value()) acc += double(x);
  const T inv = T(1.0 / double(a.numel()));
  return make_result<T>(
      {1}, {T(acc / double(a.numel()))}, {a},
      [inv](Node<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        T g = self.grad[0] * inv;
        for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += g;
      },
      "mean");
}

// Mean of squared differences, per the training objective. The target is a
// constant: passing a tape-tracked target is a contract violation.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  check_same_shape(pred, target, "mse_loss");
  if (target.requires_grad()) throw usage_error("mse_loss: target must not require grad");
  double acc = 0;
  const auto pv = pred.value();
  const auto tv = target.value();
  for (size_t i = 0; i < pv.size(); ++i) {
    double d = double(pv[i]) - double(tv[i]);
    acc += d * d;
  }
  const T inv = T(1.0 / double(pred.numel()));
  std::vector<T> tcopy(tv.begin(), tv.end());
  return make_result<T>(
      {1}, {T(acc / double(pred.numel()))}, {pred},
      [inv, tcopy = std::move(tcopy)](Node<T>& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        T g = self.grad[0] * T(2) * inv;
        for (size_t i = 0; i < pa.grad.size(); ++i)
          pa.grad[i] += g * (pa.value[i] - tcopy[i]);
      },
      "mse_loss");
}

}  // namespace ust::nn
