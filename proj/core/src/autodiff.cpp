// Copyright 2026 The unfoldsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "unfoldsep/autodiff.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "unfoldsep/errors.hpp"
#include "unfoldsep/masks.hpp"

namespace unfoldsep::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require(bool ok, const std::string& message) {
  if (!ok) {
    throw GraphError(message);
  }
}

Tape& tape_of(Var a) {
  require(a.valid(), "operation on an empty Var");
  return *a.tape();
}

Tape& same_tape(Var a, Var b) {
  Tape& tape = tape_of(a);
  require(b.valid() && b.tape() == &tape, "operands live on different tapes");
  return tape;
}

void require_same_shape(Var a, Var b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      a.shape().str() + " vs " + b.shape().str());
}

ConstMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

/// Elementwise unary op whose derivative is a function of input and output.
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& tape = tape_of(a);
  const auto in = a.value();
  std::vector<double> out(in.size());
  std::transform(in.begin(), in.end(), out.begin(), fwd);
  const std::size_t pid = a.id();
  return tape.record(a.shape(), std::move(out), {pid},
                     [pid, deriv](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       const auto g = t.grad(self);
                       const auto x = t.value(pid);
                       const auto y = t.value(self);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         sink[i] += g[i] * deriv(x[i], y[i]);
                       }
                     });
}

}  // namespace

std::string Shape::str() const {
  std::string s = "[";
  for (int i = 0; i < rank; ++i) {
    if (i > 0) s += "x";
    s += std::to_string(dims[static_cast<std::size_t>(i)]);
  }
  return s + "]";
}

const Shape& Var::shape() const { return tape_->shape(id_); }
std::span<const double> Var::value() const { return tape_->value(id_); }
std::span<const double> Var::grad() const { return tape_->grad(id_); }

double Var::item() const {
  require(shape().numel() == 1, "item() on a non-scalar node");
  return value()[0];
}

Var Tape::constant(Shape shape, std::vector<double> value) {
  require(value.size() == shape.numel(), "constant: value size does not match shape");
  nodes_.push_back({shape, std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Shape shape, std::vector<double> value) {
  require(value.size() == shape.numel(), "parameter: value size does not match shape");
  nodes_.push_back({shape, std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Shape shape, std::vector<double> value,
                 std::vector<std::size_t> parents, BackwardFn backward) {
  require(value.size() == shape.numel(), "record: value size does not match shape");
  bool needs = false;
  for (std::size_t p : parents) {
    require(p < nodes_.size(), "record: unknown parent");
    needs = needs || nodes_[p].requires_grad;
  }
  if (!needs) {
    backward = nullptr;
  }
  nodes_.push_back({shape, std::move(value), {}, std::move(parents),
                    std::move(backward), needs});
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_sink(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.requires_grad) {
    return {};
  }
  if (node.grad.empty()) {
    node.grad.assign(node.value.size(), 0.0);
  }
  return node.grad;
}

void Tape::seed(Var root) {
  require(root.tape() == this, "backward: root belongs to another tape");
  require(nodes_[root.id()].shape.numel() == 1, "backward: root must be a scalar");
  for (Node& node : nodes_) {
    node.grad.clear();
  }
  nodes_[root.id()].grad.assign(1, 1.0);
}

void Tape::run_node(std::size_t id) {
  Node& node = nodes_[id];
  if (node.requires_grad && node.backward && !node.grad.empty()) {
    node.backward(*this, id);
  }
}

void Tape::backward(Var root) {
  seed(root);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    run_node(id);
  }
}

void Tape::backward(Var root, std::span<const std::size_t> order) {
  require(root.tape() == this, "backward: root belongs to another tape");
  std::vector<std::size_t> position(nodes_.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < order.size(); ++i) {
    require(order[i] <= root.id(), "backward: order lists a node after the root");
    require(position[order[i]] == std::numeric_limits<std::size_t>::max(),
            "backward: order lists a node twice");
    position[order[i]] = i;
  }
  // Every differentiable node reachable from the root must come after all of
  // its consumers.
  std::vector<char> reached(nodes_.size(), 0);
  reached[root.id()] = 1;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    if (!reached[id] || !nodes_[id].requires_grad) continue;
    require(position[id] != std::numeric_limits<std::size_t>::max(),
            "backward: order misses a reachable node");
    for (std::size_t p : nodes_[id].parents) {
      if (!nodes_[p].requires_grad) continue;
      reached[p] = 1;
      require(position[p] != std::numeric_limits<std::size_t>::max() &&
                  position[p] > position[id],
              "backward: order is not reverse topological");
    }
  }
  seed(root);
  for (std::size_t id : order) {
    run_node(id);
  }
}

std::vector<std::size_t> Tape::dfs_order(Var root) const {
  std::vector<std::size_t> post;
  std::vector<char> state(nodes_.size(), 0);  // 0 new, 1 open, 2 done
  std::vector<std::pair<std::size_t, std::size_t>> stack{{root.id(), 0}};
  state[root.id()] = 1;
  while (!stack.empty()) {
    auto& [id, next] = stack.back();
    const auto& parents = nodes_[id].parents;
    if (next < parents.size()) {
      // Walk parents last-to-first so the order differs from creation order.
      const std::size_t p = parents[parents.size() - 1 - next];
      ++next;
      if (nodes_[p].requires_grad && state[p] == 0) {
        state[p] = 1;
        stack.emplace_back(p, 0);
      }
    } else {
      state[id] = 2;
      post.push_back(id);
      stack.pop_back();
    }
  }
  std::reverse(post.begin(), post.end());
  return post;
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a, b, "add");
  const auto x = a.value();
  const auto y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(a.shape(), std::move(out), {ia, ib},
                     [ia, ib](Tape& t, std::size_t self) {
                       const auto g = t.grad(self);
                       for (std::size_t pid : {ia, ib}) {
                         auto sink = t.grad_sink(pid);
                         for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += g[i];
                       }
                     });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a, b, "sub");
  const auto x = a.value();
  const auto y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(a.shape(), std::move(out), {ia, ib},
                     [ia, ib](Tape& t, std::size_t self) {
                       const auto g = t.grad(self);
                       auto sa = t.grad_sink(ia);
                       for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i];
                       auto sb = t.grad_sink(ib);
                       for (std::size_t i = 0; i < sb.size(); ++i) sb[i] -= g[i];
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape(a, b, "mul");
  const auto x = a.value();
  const auto y = b.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(a.shape(), std::move(out), {ia, ib},
                     [ia, ib](Tape& t, std::size_t self) {
                       const auto g = t.grad(self);
                       const auto xa = t.value(ia);
                       const auto xb = t.value(ib);
                       auto sa = t.grad_sink(ia);
                       for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i] * xb[i];
                       auto sb = t.grad_sink(ib);
                       for (std::size_t i = 0; i < sb.size(); ++i) sb[i] += g[i] * xa[i];
                     });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var mul_const(Var a, std::span<const double> c) {
  Tape& tape = tape_of(a);
  require(c.size() == a.shape().numel(), "mul_const: size mismatch");
  const auto x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * c[i];
  std::vector<double> factors(c.begin(), c.end());
  const std::size_t pid = a.id();
  return tape.record(a.shape(), std::move(out), {pid},
                     [pid, factors = std::move(factors)](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       const auto g = t.grad(self);
                       for (std::size_t i = 0; i < sink.size(); ++i) {
                         sink[i] += g[i] * factors[i];
                       }
                     });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  const auto x = a.value();
  double total = 0.0;
  for (double v : x) total += v;
  const std::size_t pid = a.id();
  return tape.record(Shape::scalar(), {total}, {pid},
                     [pid](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       const double g = t.grad(self)[0];
                       for (double& s : sink) s += g;
                     });
}

Var add_n(std::span<const Var> terms) {
  require(!terms.empty(), "add_n: no terms");
  Tape& tape = tape_of(terms[0]);
  std::vector<double> out(terms[0].value().begin(), terms[0].value().end());
  std::vector<std::size_t> ids{terms[0].id()};
  for (std::size_t k = 1; k < terms.size(); ++k) {
    require(terms[k].tape() == &tape, "add_n: operands live on different tapes");
    require_same_shape(terms[0], terms[k], "add_n");
    const auto x = terms[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
    ids.push_back(terms[k].id());
  }
  auto parents = ids;
  return tape.record(terms[0].shape(), std::move(out), std::move(parents),
                     [ids](Tape& t, std::size_t self) {
                       const auto g = t.grad(self);
                       for (std::size_t pid : ids) {
                         auto sink = t.grad_sink(pid);
                         for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += g[i];
                       }
                     });
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require(a.shape().rank == 2 && b.shape().rank == 2, "matmul: operands must be rank 2");
  const std::size_t m = a.shape().rows(), k = a.shape().cols(), n = b.shape().cols();
  require(b.shape().rows() == k, "matmul: inner dimensions differ " + a.shape().str() +
                                     " x " + b.shape().str());
  std::vector<double> out(m * n);
  as_matrix(std::span<double>(out), m, n).noalias() =
      as_matrix(a.value(), m, k) * as_matrix(b.value(), k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(Shape::matrix(m, n), std::move(out), {ia, ib},
                     [ia, ib, m, k, n](Tape& t, std::size_t self) {
                       const auto g = as_matrix(t.grad(self), m, n);
                       auto sa = t.grad_sink(ia);
                       if (!sa.empty()) {
                         as_matrix(sa, m, k).noalias() +=
                             g * as_matrix(t.value(ib), k, n).transpose();
                       }
                       auto sb = t.grad_sink(ib);
                       if (!sb.empty()) {
                         as_matrix(sb, k, n).noalias() +=
                             as_matrix(t.value(ia), m, k).transpose() * g;
                       }
                     });
}

Var add_row_bias(Var a, Var bias) {
  Tape& tape = same_tape(a, bias);
  require(a.shape().rank == 2, "add_row_bias: input must be rank 2");
  const std::size_t m = a.shape().rows(), n = a.shape().cols();
  require(bias.shape().numel() == n, "add_row_bias: bias length must equal column count");
  const auto x = a.value();
  const auto b = bias.value();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[r * n + c] + b[c];
  }
  const std::size_t ia = a.id(), ib = bias.id();
  return tape.record(a.shape(), std::move(out), {ia, ib},
                     [ia, ib, m, n](Tape& t, std::size_t self) {
                       const auto g = t.grad(self);
                       auto sa = t.grad_sink(ia);
                       for (std::size_t i = 0; i < sa.size(); ++i) sa[i] += g[i];
                       auto sb = t.grad_sink(ib);
                       if (!sb.empty()) {
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t c = 0; c < n; ++c) sb[c] += g[r * n + c];
                         }
                       }
                     });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& tape = tape_of(a);
  require(a.shape().rank == 2, "slice_cols: input must be rank 2");
  const std::size_t m = a.shape().rows(), n = a.shape().cols();
  require(begin < end && end <= n, "slice_cols: bad column range");
  const std::size_t w = end - begin;
  const auto x = a.value();
  std::vector<double> out(m * w);
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * n + begin), w,
                out.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  const std::size_t pid = a.id();
  return tape.record(Shape::matrix(m, w), std::move(out), {pid},
                     [pid, m, n, w, begin](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       const auto g = t.grad(self);
                       for (std::size_t r = 0; r < m; ++r) {
                         for (std::size_t c = 0; c < w; ++c) {
                           sink[r * n + begin + c] += g[r * w + c];
                         }
                       }
                     });
}

Var reshape(Var a, Shape shape) {
  Tape& tape = tape_of(a);
  require(shape.numel() == a.shape().numel(), "reshape: element count changes");
  const auto x = a.value();
  const std::size_t pid = a.id();
  return tape.record(shape, std::vector<double>(x.begin(), x.end()), {pid},
                     [pid](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       const auto g = t.grad(self);
                       for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += g[i];
                     });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return unfoldsep::sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var clip(Var a, double lo, double hi) {
  require(lo <= hi, "clip: lo > hi");
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var softmax3(Var a) {
  Tape& tape = tape_of(a);
  const auto x = a.value();
  require(x.size() % 3 == 0, "softmax3: size is not a multiple of 3");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); i += 3) {
    const auto p = unfoldsep::softmax3(x[i], x[i + 1], x[i + 2]);
    std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(i));
  }
  const std::size_t pid = a.id();
  return tape.record(a.shape(), std::move(out), {pid},
                     [pid](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       const auto g = t.grad(self);
                       const auto p = t.value(self);
                       for (std::size_t i = 0; i < g.size(); i += 3) {
                         const double dot =
                             p[i] * g[i] + p[i + 1] * g[i + 1] + p[i + 2] * g[i + 2];
                         for (std::size_t j = i; j < i + 3; ++j) {
                           sink[j] += p[j] * (g[j] - dot);
                         }
                       }
                     });
}

Var convex_combine3(Var probs) {
  Tape& tape = tape_of(probs);
  const Shape in = probs.shape();
  require(in.rank >= 1 && in.dims[static_cast<std::size_t>(in.rank - 1)] % 3 == 0,
          "convex_combine3: last dimension must be a multiple of 3");
  Shape out_shape = in;
  out_shape.dims[static_cast<std::size_t>(in.rank - 1)] /= 3;
  const auto p = probs.value();
  std::vector<double> out(p.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = p[3 * i + 1] + 2.0 * p[3 * i + 2];
  }
  const std::size_t pid = probs.id();
  return tape.record(out_shape, std::move(out), {pid},
                     [pid](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       const auto g = t.grad(self);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         sink[3 * i + 1] += g[i];
                         sink[3 * i + 2] += 2.0 * g[i];
                       }
                     });
}

Var normalize_rows(Var a) {
  Tape& tape = tape_of(a);
  require(a.shape().rank == 2, "normalize_rows: input must be rank 2");
  const std::size_t m = a.shape().rows(), n = a.shape().cols();
  const auto x = a.value();
  std::vector<double> out(x.size());
  std::vector<double> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < n; ++c) ss += x[r * n + c] * x[r * n + c];
    norms[r] = std::max(std::sqrt(ss), 1e-12);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[r * n + c] / norms[r];
  }
  const std::size_t pid = a.id();
  return tape.record(a.shape(), std::move(out), {pid},
                     [pid, m, n, norms = std::move(norms)](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       const auto g = t.grad(self);
                       const auto y = t.value(self);
                       for (std::size_t r = 0; r < m; ++r) {
                         const bool floored = norms[r] <= 1e-12;
                         double dot = 0.0;
                         if (!floored) {
                           for (std::size_t c = 0; c < n; ++c) dot += y[r * n + c] * g[r * n + c];
                         }
                         for (std::size_t c = 0; c < n; ++c) {
                           sink[r * n + c] += (g[r * n + c] - y[r * n + c] * dot) / norms[r];
                         }
                       }
                     });
}

Var log_magnitude(Var z, double delta) {
  Tape& tape = tape_of(z);
  require(z.shape().rank == 3 && z.shape().dims[2] == 2,
          "log_magnitude: input must be T x F x 2");
  const auto v = z.value();
  std::vector<double> out(v.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::log(std::hypot(v[2 * i], v[2 * i + 1]) + delta);
  }
  const std::size_t pid = z.id();
  return tape.record(Shape::matrix(z.shape().dims[0], z.shape().dims[1]),
                     std::move(out), {pid},
                     [pid, delta](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       const auto g = t.grad(self);
                       const auto v = t.value(pid);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double r = std::hypot(v[2 * i], v[2 * i + 1]);
                         if (r == 0.0) continue;
                         const double f = g[i] / (r * (r + delta));
                         sink[2 * i] += f * v[2 * i];
                         sink[2 * i + 1] += f * v[2 * i + 1];
                       }
                     });
}

Var stft(Var signal, std::shared_ptr<const StftOperator> op) {
  Tape& tape = tape_of(signal);
  require(op != nullptr, "stft: null operator");
  require(signal.shape().numel() == op->length(),
          "stft: signal length " + std::to_string(signal.shape().numel()) +
              " does not match operator length " + std::to_string(op->length()));
  std::vector<double> out(op->spectrum_size());
  op->analyze(signal.value(), out);
  const std::size_t pid = signal.id();
  return tape.record(Shape::tensor(op->frames(), op->bins(), 2), std::move(out), {pid},
                     [pid, op](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       std::vector<double> tmp(op->length());
                       op->analyze_adjoint(t.grad(self), tmp);
                       for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += tmp[i];
                     });
}

Var istft(Var spectrum, std::shared_ptr<const StftOperator> op) {
  Tape& tape = tape_of(spectrum);
  require(op != nullptr, "istft: null operator");
  require(spectrum.shape() == Shape::tensor(op->frames(), op->bins(), 2),
          "istft: spectrum shape " + spectrum.shape().str() +
              " does not match the operator");
  std::vector<double> out(op->length());
  op->synthesize(spectrum.value(), out);
  const std::size_t pid = spectrum.id();
  return tape.record(Shape::vector(op->length()), std::move(out), {pid},
                     [pid, op](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       std::vector<double> tmp(op->spectrum_size());
                       op->synthesize_adjoint(t.grad(self), tmp);
                       for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += tmp[i];
                     });
}

Var polar_reassign(Var z, Var magnitude, double eps) {
  Tape& tape = same_tape(z, magnitude);
  require(z.shape().rank == 3 && z.shape().dims[2] == 2,
          "polar_reassign: z must be T x F x 2");
  require(magnitude.shape().numel() * 2 == z.shape().numel(),
          "polar_reassign: magnitude must be T x F");
  require(eps > 0.0, "polar_reassign: eps must be positive");
  const auto v = z.value();
  const auto m = magnitude.value();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double r = std::max(std::hypot(v[2 * i], v[2 * i + 1]), eps);
    out[2 * i] = m[i] * v[2 * i] / r;
    out[2 * i + 1] = m[i] * v[2 * i + 1] / r;
  }
  const std::size_t iz = z.id(), im = magnitude.id();
  return tape.record(z.shape(), std::move(out), {iz, im},
                     [iz, im, eps](Tape& t, std::size_t self) {
                       const auto g = t.grad(self);
                       const auto v = t.value(iz);
                       const auto m = t.value(im);
                       auto sz = t.grad_sink(iz);
                       auto sm = t.grad_sink(im);
                       for (std::size_t i = 0; i < m.size(); ++i) {
                         const double a = v[2 * i], b = v[2 * i + 1];
                         const double gr = g[2 * i], gi = g[2 * i + 1];
                         const double norm = std::hypot(a, b);
                         const double r = std::max(norm, eps);
                         if (!sm.empty()) sm[i] += (gr * a + gi * b) / r;
                         if (sz.empty()) continue;
                         if (norm > eps) {
                           const double k = m[i] / (r * r * r);
                           const double cross = gr * b - gi * a;
                           sz[2 * i] += k * b * cross;
                           sz[2 * i + 1] -= k * a * cross;
                         } else {
                           sz[2 * i] += m[i] * gr / eps;
                           sz[2 * i + 1] += m[i] * gi / eps;
                         }
                       }
                     });
}

Var l1(Var a, std::span<const double> target) {
  Tape& tape = tape_of(a);
  require(target.size() == a.shape().numel(),
          "l1: target has " + std::to_string(target.size()) + " entries, node has " +
              std::to_string(a.shape().numel()));
  const auto x = a.value();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += std::abs(x[i] - target[i]);
  std::vector<double> ref(target.begin(), target.end());
  const std::size_t pid = a.id();
  return tape.record(Shape::scalar(), {total}, {pid},
                     [pid, ref = std::move(ref)](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       const double g = t.grad(self)[0];
                       const auto x = t.value(pid);
                       for (std::size_t i = 0; i < sink.size(); ++i) {
                         const double d = x[i] - ref[i];
                         sink[i] += d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
                       }
                     });
}

Var min_of(std::span<const Var> values) {
  require(!values.empty(), "min_of: empty set");
  Tape& tape = tape_of(values[0]);
  std::vector<std::size_t> ids;
  std::size_t best = 0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    require(values[k].tape() == &tape, "min_of: operands live on different tapes");
    require(values[k].shape().numel() == 1, "min_of: operands must be scalars");
    ids.push_back(values[k].id());
    if (values[k].item() < values[best].item()) best = k;
  }
  const std::size_t winner = ids[best];
  return tape.record(Shape::scalar(), {values[best].item()}, std::move(ids),
                     [winner](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(winner);
                       if (!sink.empty()) sink[0] += t.grad(self)[0];
                     });
}

Var dc_classic(Var embeddings, const Eigen::MatrixXd& labels) {
  Tape& tape = tape_of(embeddings);
  require(embeddings.shape().rank == 2, "dc_classic: embeddings must be rank 2");
  const std::size_t n = embeddings.shape().rows(), d = embeddings.shape().cols();
  require(static_cast<std::size_t>(labels.rows()) == n,
          "dc_classic: embedding and label row counts differ");
  const Eigen::MatrixXd v = as_matrix(embeddings.value(), n, d);
  const Eigen::MatrixXd vtv = v.transpose() * v;
  const Eigen::MatrixXd vty = v.transpose() * labels;
  const Eigen::MatrixXd yty = labels.transpose() * labels;
  const double value = vtv.squaredNorm() - 2.0 * vty.squaredNorm() + yty.squaredNorm();
  const std::size_t pid = embeddings.id();
  // dL/dV = 4 V (V^T V) - 4 Y (Y^T V)
  Eigen::MatrixXd dv = 4.0 * (v * vtv - labels * vty.transpose());
  return tape.record(Shape::scalar(), {value}, {pid},
                     [pid, n, d, dv = std::move(dv)](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       as_matrix(sink, n, d) += t.grad(self)[0] * dv;
                     });
}

Var dc_whitened(Var embeddings, const Eigen::MatrixXd& labels, double ridge) {
  Tape& tape = tape_of(embeddings);
  require(embeddings.shape().rank == 2, "dc_whitened: embeddings must be rank 2");
  const std::size_t n = embeddings.shape().rows(), d = embeddings.shape().cols();
  require(static_cast<std::size_t>(labels.rows()) == n,
          "dc_whitened: embedding and label row counts differ");
  const auto c = labels.cols();
  const Eigen::MatrixXd v = as_matrix(embeddings.value(), n, d);
  const Eigen::MatrixXd gram_v =
      v.transpose() * v + ridge * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d),
                                                             static_cast<Eigen::Index>(d));
  const Eigen::MatrixXd gram_y =
      labels.transpose() * labels + ridge * Eigen::MatrixXd::Identity(c, c);
  const Eigen::MatrixXd inv_v = gram_v.ldlt().solve(
      Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
  const Eigen::MatrixXd inv_y = gram_y.ldlt().solve(Eigen::MatrixXd::Identity(c, c));
  const Eigen::MatrixXd vty = v.transpose() * labels;          // D x C
  const Eigen::MatrixXd proj = vty * inv_y * vty.transpose();  // D x D
  const double value = static_cast<double>(d) - (inv_v * proj).trace();
  if (!std::isfinite(value)) {
    throw NumericalError("dc_whitened: non-finite loss (singular Gram matrix?)");
  }
  // dL/dV = 2 V A^-1 M A^-1 - 2 Y W B^T A^-1, A = V^T V + rI, W = (Y^T Y + rI)^-1,
  // B = V^T Y, M = B W B^T.
  Eigen::MatrixXd dv = 2.0 * (v * inv_v * proj * inv_v -
                              labels * inv_y * vty.transpose() * inv_v);
  const std::size_t pid = embeddings.id();
  return tape.record(Shape::scalar(), {value}, {pid},
                     [pid, n, d, dv = std::move(dv)](Tape& t, std::size_t self) {
                       auto sink = t.grad_sink(pid);
                       if (sink.empty()) return;
                       as_matrix(sink, n, d) += t.grad(self)[0] * dv;
                     });
}

}  // namespace unfoldsep::ad
