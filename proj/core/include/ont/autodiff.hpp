#pragma once

// Reverse-mode automatic differentiation on an explicit tape.
//
// A Tape owns a growing list of nodes; every operator records a closure that
// scatters the output gradient back into its inputs. backward() replays the
// closures in strict reverse creation order, so any value computed before the
// loss node receives a correct gradient. The tape is templated on the real
// type: float is the training configuration, double is the verification
// configuration used by the finite-difference checks.
//
// Tensors are dense row-major buffers with an explicit extent list. There is
// no broadcasting beyond the few fused ops that need it (bias adds); shape
// mismatches throw immediately rather than being silently reinterpreted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ont/error.hpp"

namespace ont {

template <class R>
class Tape;

template <class R>
struct Var {
  Tape<R>* tape = nullptr;
  std::size_t id = 0;

  const std::vector<std::size_t>& shape() const;
  std::size_t numel() const;
  const std::vector<R>& val() const;
  const std::vector<R>& grad() const;
};

namespace detail {

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

}  // namespace detail

template <class R>
class Tape {
 public:
  struct Node {
    std::vector<std::size_t> shape;
    std::vector<R> val;
    std::vector<R> grad;
    std::function<void()> backward;  // empty for leaves
    const char* op = "leaf";
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  Var<R> leaf(std::vector<std::size_t> shape, std::vector<R> data, const char* op = "leaf") {
    if (detail::shape_numel(shape) != data.size())
      throw Error("tape: leaf data size does not match shape " + detail::shape_str(shape));
    Node n;
    n.shape = std::move(shape);
    n.val = std::move(data);
    n.grad.assign(n.val.size(), R(0));
    n.op = op;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  Var<R> scalar(R v) { return leaf({1}, {v}, "scalar"); }

  Var<R> make(std::vector<std::size_t> shape, const char* op) {
    Node n;
    n.shape = std::move(shape);
    n.val.assign(detail::shape_numel(n.shape), R(0));
    n.grad.assign(n.val.size(), R(0));
    n.op = op;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  void set_backward(Var<R> v, std::function<void()> fn) {
    nodes_[v.id].backward = std::move(fn);
  }

  // Runs the recorded closures from `loss` back to the first node. The loss
  // must be a scalar; its gradient is seeded with one.
  void backward(Var<R> loss) {
    Node& ln = nodes_[loss.id];
    if (ln.val.size() != 1) throw Error("tape: backward requires a scalar loss node");
    ln.grad[0] = R(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward();
    }
  }

  void zero_grad() {
    for (Node& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), R(0));
  }

  // Returns the op name of the first node holding a non-finite value or
  // gradient, or nullptr when everything is finite.
  const char* first_non_finite() const {
    for (const Node& n : nodes_) {
      for (R v : n.val)
        if (!std::isfinite(static_cast<double>(v))) return n.op;
      for (R g : n.grad)
        if (!std::isfinite(static_cast<double>(g))) return n.op;
    }
    return nullptr;
  }

 private:
  // Deque, not vector: references into existing nodes (shapes, values)
  // stay valid while new nodes are appended, which the op builders rely on.
  std::deque<Node> nodes_;
};

template <class R>
const std::vector<std::size_t>& Var<R>::shape() const {
  return tape->node(id).shape;
}
template <class R>
std::size_t Var<R>::numel() const {
  return tape->node(id).val.size();
}
template <class R>
const std::vector<R>& Var<R>::val() const {
  return tape->node(id).val;
}
template <class R>
const std::vector<R>& Var<R>::grad() const {
  return tape->node(id).grad;
}

namespace detail {

template <class R>
void require_same_shape(Var<R> a, Var<R> b, const char* op) {
  if (a.shape() != b.shape())
    throw Error(std::string("tape: ") + op + " shape mismatch " + shape_str(a.shape()) +
                " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class R>
Var<R> add(Var<R> a, Var<R> b) {
  detail::require_same_shape(a, b, "add");
  Tape<R>* t = a.tape;
  Var<R> out = t->make(a.shape(), "add");
  auto& o = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const auto& bv = t->node(b.id).val;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  t->set_backward(out, [t, oa = a.id, ob = b.id, oo = out.id] {
    const auto& g = t->node(oo).grad;
    auto& ga = t->node(oa).grad;
    auto& gb = t->node(ob).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
  return out;
}

template <class R>
Var<R> sub(Var<R> a, Var<R> b) {
  detail::require_same_shape(a, b, "sub");
  Tape<R>* t = a.tape;
  Var<R> out = t->make(a.shape(), "sub");
  auto& o = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const auto& bv = t->node(b.id).val;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
  t->set_backward(out, [t, oa = a.id, ob = b.id, oo = out.id] {
    const auto& g = t->node(oo).grad;
    auto& ga = t->node(oa).grad;
    auto& gb = t->node(ob).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
  return out;
}

template <class R>
Var<R> mul(Var<R> a, Var<R> b) {
  detail::require_same_shape(a, b, "mul");
  Tape<R>* t = a.tape;
  Var<R> out = t->make(a.shape(), "mul");
  auto& o = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const auto& bv = t->node(b.id).val;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  t->set_backward(out, [t, oa = a.id, ob = b.id, oo = out.id] {
    const auto& g = t->node(oo).grad;
    const auto& av = t->node(oa).val;
    const auto& bv = t->node(ob).val;
    auto& ga = t->node(oa).grad;
    auto& gb = t->node(ob).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * bv[i];
      gb[i] += g[i] * av[i];
    }
  });
  return out;
}

template <class R>
Var<R> divide(Var<R> a, Var<R> b) {
  detail::require_same_shape(a, b, "div");
  Tape<R>* t = a.tape;
  Var<R> out = t->make(a.shape(), "div");
  auto& o = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const auto& bv = t->node(b.id).val;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] / bv[i];
  t->set_backward(out, [t, oa = a.id, ob = b.id, oo = out.id] {
    const auto& g = t->node(oo).grad;
    const auto& ov = t->node(oo).val;
    const auto& bv = t->node(ob).val;
    auto& ga = t->node(oa).grad;
    auto& gb = t->node(ob).grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] / bv[i];
      gb[i] -= g[i] * ov[i] / bv[i];
    }
  });
  return out;
}

template <class R>
Var<R> scale(Var<R> a, double c) {
  Tape<R>* t = a.tape;
  Var<R> out = t->make(a.shape(), "scale");
  auto& o = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const R rc = static_cast<R>(c);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * rc;
  t->set_backward(out, [t, oa = a.id, oo = out.id, rc] {
    const auto& g = t->node(oo).grad;
    auto& ga = t->node(oa).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * rc;
  });
  return out;
}

template <class R>
Var<R> neg(Var<R> a) {
  return scale(a, -1.0);
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

template <class R>
Var<R> tanh_op(Var<R> a) {
  Tape<R>* t = a.tape;
  Var<R> out = t->make(a.shape(), "tanh");
  auto& o = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(av[i]);
  t->set_backward(out, [t, oa = a.id, oo = out.id] {
    const auto& g = t->node(oo).grad;
    const auto& ov = t->node(oo).val;
    auto& ga = t->node(oa).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (R(1) - ov[i] * ov[i]);
  });
  return out;
}

template <class R>
Var<R> leaky_relu(Var<R> a, double slope) {
  Tape<R>* t = a.tape;
  Var<R> out = t->make(a.shape(), "leaky_relu");
  auto& o = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const R s = static_cast<R>(slope);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] > R(0) ? av[i] : s * av[i];
  t->set_backward(out, [t, oa = a.id, oo = out.id, s] {
    const auto& g = t->node(oo).grad;
    const auto& av = t->node(oa).val;
    auto& ga = t->node(oa).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (av[i] > R(0) ? R(1) : s);
  });
  return out;
}

// sqrt(x + c) with a strictly positive shift so the derivative stays bounded.
template <class R>
Var<R> sqrt_shift(Var<R> a, double c) {
  if (c <= 0.0) throw Error("tape: sqrt_shift requires a positive shift");
  Tape<R>* t = a.tape;
  Var<R> out = t->make(a.shape(), "sqrt_shift");
  auto& o = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const R rc = static_cast<R>(c);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::sqrt(av[i] + rc);
  t->set_backward(out, [t, oa = a.id, oo = out.id] {
    const auto& g = t->node(oo).grad;
    const auto& ov = t->node(oo).val;
    auto& ga = t->node(oa).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * R(0.5) / ov[i];
  });
  return out;
}

// Smoothed magnitude sqrt(x^2 + eps^2): differentiable everywhere, within
// eps of |x|.
template <class R>
Var<R> smooth_abs(Var<R> a, double eps) {
  Tape<R>* t = a.tape;
  Var<R> out = t->make(a.shape(), "smooth_abs");
  auto& o = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const R e2 = static_cast<R>(eps * eps);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::sqrt(av[i] * av[i] + e2);
  t->set_backward(out, [t, oa = a.id, oo = out.id] {
    const auto& g = t->node(oo).grad;
    const auto& av = t->node(oa).val;
    const auto& ov = t->node(oo).val;
    auto& ga = t->node(oa).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * av[i] / ov[i];
  });
  return out;
}

template <class R>
Var<R> square(Var<R> a) {
  return mul(a, a);
}

// ---------------------------------------------------------------------------
// Reductions. Accumulation runs in double regardless of R so that long sums
// over waveforms do not lose precision in the float configuration.

template <class R>
Var<R> sum(Var<R> a) {
  Tape<R>* t = a.tape;
  Var<R> out = t->make({1}, "sum");
  const auto& av = t->node(a.id).val;
  double acc = 0.0;
  for (R v : av) acc += static_cast<double>(v);
  t->node(out.id).val[0] = static_cast<R>(acc);
  t->set_backward(out, [t, oa = a.id, oo = out.id] {
    const R g = t->node(oo).grad[0];
    auto& ga = t->node(oa).grad;
    for (auto& v : ga) v += g;
  });
  return out;
}

template <class R>
Var<R> mean(Var<R> a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

template <class R>
Var<R> dot(Var<R> a, Var<R> b) {
  detail::require_same_shape(a, b, "dot");
  Tape<R>* t = a.tape;
  Var<R> out = t->make({1}, "dot");
  const auto& av = t->node(a.id).val;
  const auto& bv = t->node(b.id).val;
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i)
    acc += static_cast<double>(av[i]) * static_cast<double>(bv[i]);
  t->node(out.id).val[0] = static_cast<R>(acc);
  t->set_backward(out, [t, oa = a.id, ob = b.id, oo = out.id] {
    const R g = t->node(oo).grad[0];
    const auto& av = t->node(oa).val;
    const auto& bv = t->node(ob).val;
    auto& ga = t->node(oa).grad;
    auto& gb = t->node(ob).grad;
    for (std::size_t i = 0; i < av.size(); ++i) {
      ga[i] += g * bv[i];
      gb[i] += g * av[i];
    }
  });
  return out;
}

// Guarded Euclidean norm sqrt(sum(x^2) + eps^2); never reaches zero, so the
// ratio terms built on top of it stay differentiable.
template <class R>
Var<R> norm_guarded(Var<R> a, double eps) {
  Tape<R>* t = a.tape;
  Var<R> out = t->make({1}, "norm_guarded");
  const auto& av = t->node(a.id).val;
  double acc = eps * eps;
  for (R v : av) acc += static_cast<double>(v) * static_cast<double>(v);
  t->node(out.id).val[0] = static_cast<R>(std::sqrt(acc));
  t->set_backward(out, [t, oa = a.id, oo = out.id] {
    const R g = t->node(oo).grad[0];
    const R nv = t->node(oo).val[0];
    const auto& av = t->node(oa).val;
    auto& ga = t->node(oa).grad;
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g * av[i] / nv;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class R>
Var<R> reshape(Var<R> a, std::vector<std::size_t> shape) {
  if (detail::shape_numel(shape) != a.numel())
    throw Error("tape: reshape element count mismatch " + detail::shape_str(a.shape()) +
                " -> " + detail::shape_str(shape));
  Tape<R>* t = a.tape;
  Var<R> out = t->make(std::move(shape), "reshape");
  t->node(out.id).val = t->node(a.id).val;
  t->set_backward(out, [t, oa = a.id, oo = out.id] {
    const auto& g = t->node(oo).grad;
    auto& ga = t->node(oa).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return out;
}

namespace detail {

inline std::vector<std::size_t> row_major_strides(const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> st(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) st[i - 1] = st[i] * shape[i];
  return st;
}

}  // namespace detail

template <class R>
Var<R> permute(Var<R> a, const std::vector<std::size_t>& perm) {
  const auto& in_shape = a.shape();
  if (perm.size() != in_shape.size()) throw Error("tape: permute rank mismatch");
  std::vector<std::size_t> out_shape(perm.size());
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || seen[perm[i]]) throw Error("tape: permute is not a permutation");
    seen[perm[i]] = true;
    out_shape[i] = in_shape[perm[i]];
  }
  Tape<R>* t = a.tape;
  Var<R> out = t->make(out_shape, "permute");

  const auto in_strides = detail::row_major_strides(in_shape);
  // Map each output flat index to the matching input flat index once; the
  // backward pass reuses the same table in reverse.
  const std::size_t n = a.numel();
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(out_shape.size(), 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t s = 0;
    for (std::size_t d = 0; d < out_shape.size(); ++d) s += idx[d] * in_strides[perm[d]];
    src[o] = s;
    for (std::size_t d = out_shape.size(); d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  auto& ov = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  for (std::size_t o = 0; o < n; ++o) ov[o] = av[src[o]];
  t->set_backward(out, [t, oa = a.id, oo = out.id, src = std::move(src)] {
    const auto& g = t->node(oo).grad;
    auto& ga = t->node(oa).grad;
    for (std::size_t o = 0; o < g.size(); ++o) ga[src[o]] += g[o];
  });
  return out;
}

template <class R>
Var<R> slice_axis(Var<R> a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& in_shape = a.shape();
  if (axis >= in_shape.size()) throw Error("tape: slice axis out of range");
  if (begin >= end || end > in_shape[axis]) throw Error("tape: slice bounds out of range");
  std::vector<std::size_t> out_shape = in_shape;
  out_shape[axis] = end - begin;

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= in_shape[d];
  for (std::size_t d = axis + 1; d < in_shape.size(); ++d) inner *= in_shape[d];
  const std::size_t in_axis = in_shape[axis];
  const std::size_t out_axis = end - begin;

  Tape<R>* t = a.tape;
  Var<R> out = t->make(std::move(out_shape), "slice");
  auto& ov = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  for (std::size_t u = 0; u < outer; ++u)
    for (std::size_t j = 0; j < out_axis; ++j) {
      const R* s = av.data() + (u * in_axis + begin + j) * inner;
      R* d = ov.data() + (u * out_axis + j) * inner;
      for (std::size_t i = 0; i < inner; ++i) d[i] = s[i];
    }
  t->set_backward(out, [t, oa = a.id, oo = out.id, outer, inner, in_axis, out_axis, begin] {
    const auto& g = t->node(oo).grad;
    auto& ga = t->node(oa).grad;
    for (std::size_t u = 0; u < outer; ++u)
      for (std::size_t j = 0; j < out_axis; ++j) {
        const R* s = g.data() + (u * out_axis + j) * inner;
        R* d = ga.data() + (u * in_axis + begin + j) * inner;
        for (std::size_t i = 0; i < inner; ++i) d[i] += s[i];
      }
  });
  return out;
}

template <class R>
Var<R> concat_axis(Var<R> a, Var<R> b, std::size_t axis) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != bs.size() || axis >= as.size()) throw Error("tape: concat rank mismatch");
  for (std::size_t d = 0; d < as.size(); ++d)
    if (d != axis && as[d] != bs[d])
      throw Error("tape: concat shape mismatch " + detail::shape_str(as) + " vs " +
                  detail::shape_str(bs));
  std::vector<std::size_t> out_shape = as;
  out_shape[axis] = as[axis] + bs[axis];

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= as[d];
  for (std::size_t d = axis + 1; d < as.size(); ++d) inner *= as[d];
  const std::size_t na = as[axis], nb = bs[axis];

  Tape<R>* t = a.tape;
  Var<R> out = t->make(std::move(out_shape), "concat");
  auto& ov = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const auto& bv = t->node(b.id).val;
  for (std::size_t u = 0; u < outer; ++u) {
    R* d = ov.data() + u * (na + nb) * inner;
    const R* sa = av.data() + u * na * inner;
    const R* sb = bv.data() + u * nb * inner;
    for (std::size_t i = 0; i < na * inner; ++i) d[i] = sa[i];
    for (std::size_t i = 0; i < nb * inner; ++i) d[na * inner + i] = sb[i];
  }
  t->set_backward(out, [t, oa = a.id, ob = b.id, oo = out.id, outer, inner, na, nb] {
    const auto& g = t->node(oo).grad;
    auto& ga = t->node(oa).grad;
    auto& gb = t->node(ob).grad;
    for (std::size_t u = 0; u < outer; ++u) {
      const R* s = g.data() + u * (na + nb) * inner;
      R* da = ga.data() + u * na * inner;
      R* db = gb.data() + u * nb * inner;
      for (std::size_t i = 0; i < na * inner; ++i) da[i] += s[i];
      for (std::size_t i = 0; i < nb * inner; ++i) db[i] += s[na * inner + i];
    }
  });
  return out;
}

// Value copy that blocks gradient flow: the result is a fresh leaf.
template <class R>
Var<R> detach(Var<R> a) {
  return a.tape->leaf(a.shape(), a.val(), "detach");
}

// ---------------------------------------------------------------------------
// Linear algebra

template <class R>
Var<R> matmul(Var<R> a, Var<R> b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    throw Error("tape: matmul shape mismatch " + detail::shape_str(as) + " x " +
                detail::shape_str(bs));
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tape<R>* t = a.tape;
  Var<R> out = t->make({m, n}, "matmul");
  auto& ov = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const auto& bv = t->node(b.id).val;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const R aip = av[i * k + p];
      const R* brow = bv.data() + p * n;
      R* orow = ov.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  t->set_backward(out, [t, oa = a.id, ob = b.id, oo = out.id, m, k, n] {
    const auto& g = t->node(oo).grad;
    const auto& av = t->node(oa).val;
    const auto& bv = t->node(ob).val;
    auto& ga = t->node(oa).grad;
    auto& gb = t->node(ob).grad;
    // dA = G * B^T
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        R acc = R(0);
        const R* grow = g.data() + i * n;
        const R* brow = bv.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        ga[i * k + p] += acc;
      }
    // dB = A^T * G
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t i = 0; i < m; ++i) {
        const R aip = av[i * k + p];
        const R* grow = g.data() + i * n;
        R* brow = gb.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
      }
  });
  return out;
}

// Batched matmul on [g,m,k] x [g,k,n]; the leading extent indexes independent
// multiplications (used per attention head).
template <class R>
Var<R> bmm(Var<R> a, Var<R> b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
    throw Error("tape: bmm shape mismatch " + detail::shape_str(as) + " x " +
                detail::shape_str(bs));
  const std::size_t gcount = as[0], m = as[1], k = as[2], n = bs[2];
  Tape<R>* t = a.tape;
  Var<R> out = t->make({gcount, m, n}, "bmm");
  auto& ov = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  const auto& bv = t->node(b.id).val;
  for (std::size_t s = 0; s < gcount; ++s) {
    const R* ab = av.data() + s * m * k;
    const R* bb = bv.data() + s * k * n;
    R* ob = ov.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const R aip = ab[i * k + p];
        const R* brow = bb + p * n;
        R* orow = ob + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
      }
  }
  t->set_backward(out, [t, oa = a.id, ob = b.id, oo = out.id, gcount, m, k, n] {
    const auto& g = t->node(oo).grad;
    const auto& av = t->node(oa).val;
    const auto& bv = t->node(ob).val;
    auto& ga = t->node(oa).grad;
    auto& gb = t->node(ob).grad;
    for (std::size_t s = 0; s < gcount; ++s) {
      const R* gbk = g.data() + s * m * n;
      const R* ab = av.data() + s * m * k;
      const R* bb = bv.data() + s * k * n;
      R* gab = ga.data() + s * m * k;
      R* gbb = gb.data() + s * k * n;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          R acc = R(0);
          const R* grow = gbk + i * n;
          const R* brow = bb + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          gab[i * k + p] += acc;
        }
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) {
          const R aip = ab[i * k + p];
          const R* grow = gbk + i * n;
          R* brow = gbb + p * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
    }
  });
  return out;
}

// Adds a length-D vector to every row of an [..., D] tensor.
template <class R>
Var<R> add_rowvec(Var<R> x, Var<R> v) {
  const auto& xs = x.shape();
  const auto& vs = v.shape();
  if (vs.size() != 1 || xs.empty() || xs.back() != vs[0])
    throw Error("tape: add_rowvec shape mismatch " + detail::shape_str(xs) + " + " +
                detail::shape_str(vs));
  const std::size_t d = vs[0];
  const std::size_t rows = x.numel() / d;
  Tape<R>* t = x.tape;
  Var<R> out = t->make(xs, "add_rowvec");
  auto& ov = t->node(out.id).val;
  const auto& xv = t->node(x.id).val;
  const auto& vv = t->node(v.id).val;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < d; ++i) ov[r * d + i] = xv[r * d + i] + vv[i];
  t->set_backward(out, [t, ox = x.id, ovid = v.id, oo = out.id, rows, d] {
    const auto& g = t->node(oo).grad;
    auto& gx = t->node(ox).grad;
    auto& gv = t->node(ovid).grad;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < d; ++i) {
        gx[r * d + i] += g[r * d + i];
        gv[i] += g[r * d + i];
      }
  });
  return out;
}

// Adds a length-C vector across the channel axis of a [B,C,H,W] tensor.
template <class R>
Var<R> add_channel_bias(Var<R> x, Var<R> v) {
  const auto& xs = x.shape();
  const auto& vs = v.shape();
  if (xs.size() != 4 || vs.size() != 1 || xs[1] != vs[0])
    throw Error("tape: add_channel_bias shape mismatch " + detail::shape_str(xs) + " + " +
                detail::shape_str(vs));
  const std::size_t b = xs[0], c = xs[1], hw = xs[2] * xs[3];
  Tape<R>* t = x.tape;
  Var<R> out = t->make(xs, "add_channel_bias");
  auto& ov = t->node(out.id).val;
  const auto& xv = t->node(x.id).val;
  const auto& vv = t->node(v.id).val;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ci = 0; ci < c; ++ci) {
      const R bias = vv[ci];
      const std::size_t base = (bi * c + ci) * hw;
      for (std::size_t i = 0; i < hw; ++i) ov[base + i] = xv[base + i] + bias;
    }
  t->set_backward(out, [t, ox = x.id, ovid = v.id, oo = out.id, b, c, hw] {
    const auto& g = t->node(oo).grad;
    auto& gx = t->node(ox).grad;
    auto& gv = t->node(ovid).grad;
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t ci = 0; ci < c; ++ci) {
        const std::size_t base = (bi * c + ci) * hw;
        R acc = R(0);
        for (std::size_t i = 0; i < hw; ++i) {
          gx[base + i] += g[base + i];
          acc += g[base + i];
        }
        gv[ci] += acc;
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Softmax and layer normalization over the last axis

template <class R>
Var<R> softmax_rows(Var<R> a) {
  const auto& as = a.shape();
  if (as.empty()) throw Error("tape: softmax needs at least rank 1");
  const std::size_t d = as.back();
  const std::size_t rows = a.numel() / d;
  Tape<R>* t = a.tape;
  Var<R> out = t->make(as, "softmax");
  auto& ov = t->node(out.id).val;
  const auto& av = t->node(a.id).val;
  for (std::size_t r = 0; r < rows; ++r) {
    const R* in = av.data() + r * d;
    R* o = ov.data() + r * d;
    R mx = in[0];
    for (std::size_t i = 1; i < d; ++i) mx = std::max(mx, in[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      o[i] = std::exp(in[i] - mx);
      denom += static_cast<double>(o[i]);
    }
    const R inv = static_cast<R>(1.0 / denom);
    for (std::size_t i = 0; i < d; ++i) o[i] *= inv;
  }
  t->set_backward(out, [t, oa = a.id, oo = out.id, rows, d] {
    const auto& g = t->node(oo).grad;
    const auto& ov = t->node(oo).val;
    auto& ga = t->node(oa).grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const R* gr = g.data() + r * d;
      const R* orow = ov.data() + r * d;
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(gr[i]) * orow[i];
      for (std::size_t i = 0; i < d; ++i)
        ga[r * d + i] += orow[i] * (gr[i] - static_cast<R>(s));
    }
  });
  return out;
}

// Per-row normalization to zero mean / unit variance followed by a learned
// affine map; statistics use the population variance.
template <class R>
Var<R> layer_norm(Var<R> x, Var<R> gain, Var<R> bias, double eps = 1e-5) {
  const auto& xs = x.shape();
  const auto& gs = gain.shape();
  const auto& bs = bias.shape();
  if (xs.empty() || gs.size() != 1 || bs.size() != 1 || gs[0] != xs.back() || bs[0] != xs.back())
    throw Error("tape: layer_norm shape mismatch " + detail::shape_str(xs));
  const std::size_t d = xs.back();
  const std::size_t rows = x.numel() / d;
  Tape<R>* t = x.tape;
  Var<R> out = t->make(xs, "layer_norm");
  auto& ov = t->node(out.id).val;
  const auto& xv = t->node(x.id).val;
  const auto& gv = t->node(gain.id).val;
  const auto& bv = t->node(bias.id).val;

  std::vector<R> inv_std(rows), xhat(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const R* in = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += static_cast<double>(in[i]);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = static_cast<double>(in[i]) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<R>(istd);
    for (std::size_t i = 0; i < d; ++i) {
      const R xh = static_cast<R>((static_cast<double>(in[i]) - mu) * istd);
      xhat[r * d + i] = xh;
      ov[r * d + i] = gv[i] * xh + bv[i];
    }
  }
  t->set_backward(out, [t, ox = x.id, og = gain.id, ob = bias.id, oo = out.id, rows, d,
                        inv_std = std::move(inv_std), xhat = std::move(xhat)] {
    const auto& g = t->node(oo).grad;
    const auto& gv = t->node(og).val;
    auto& gx = t->node(ox).grad;
    auto& gg = t->node(og).grad;
    auto& gb = t->node(ob).grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const R* gr = g.data() + r * d;
      const R* xh = xhat.data() + r * d;
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double dxh = static_cast<double>(gr[i]) * gv[i];
        m1 += dxh;
        m2 += dxh * xh[i];
        gg[i] += gr[i] * xh[i];
        gb[i] += gr[i];
      }
      m1 /= static_cast<double>(d);
      m2 /= static_cast<double>(d);
      for (std::size_t i = 0; i < d; ++i) {
        const double dxh = static_cast<double>(gr[i]) * gv[i];
        gx[r * d + i] += static_cast<R>((dxh - m1 - xh[i] * m2) * inv_std[r]);
      }
    }
  });
  return out;
}

// Normalizes each (batch, channel) plane of a [B,C,H,W] tensor to zero mean
// and unit variance over its H*W cells, then applies a learned per-channel
// affine map. A zero-variance plane maps to the channel offset.
template <class R>
Var<R> channel_norm(Var<R> x, Var<R> gain, Var<R> bias, double eps = 1e-5) {
  const auto& xs = x.shape();
  const auto& gs = gain.shape();
  const auto& bs = bias.shape();
  if (xs.size() != 4 || gs.size() != 1 || bs.size() != 1 || gs[0] != xs[1] || bs[0] != xs[1])
    throw Error("tape: channel_norm shape mismatch " + detail::shape_str(xs));
  const std::size_t c = xs[1];
  const std::size_t plane = xs[2] * xs[3];
  const std::size_t planes = xs[0] * c;
  Tape<R>* t = x.tape;
  Var<R> out = t->make(xs, "channel_norm");
  auto& ov = t->node(out.id).val;
  const auto& xv = t->node(x.id).val;
  const auto& gv = t->node(gain.id).val;
  const auto& bv = t->node(bias.id).val;

  std::vector<R> inv_std(planes), xhat(x.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t ch = p % c;
    const R* in = xv.data() + p * plane;
    double mu = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mu += static_cast<double>(in[i]);
    mu /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(in[i]) - mu;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[p] = static_cast<R>(istd);
    for (std::size_t i = 0; i < plane; ++i) {
      const R xh = static_cast<R>((static_cast<double>(in[i]) - mu) * istd);
      xhat[p * plane + i] = xh;
      ov[p * plane + i] = gv[ch] * xh + bv[ch];
    }
  }
  t->set_backward(out, [t, ox = x.id, og = gain.id, ob = bias.id, oo = out.id, c, plane,
                        planes, inv_std = std::move(inv_std), xhat = std::move(xhat)] {
    const auto& g = t->node(oo).grad;
    const auto& gv = t->node(og).val;
    auto& gx = t->node(ox).grad;
    auto& gg = t->node(og).grad;
    auto& gb = t->node(ob).grad;
    for (std::size_t p = 0; p < planes; ++p) {
      const std::size_t ch = p % c;
      const R* gr = g.data() + p * plane;
      const R* xh = xhat.data() + p * plane;
      double m1 = 0.0, m2 = 0.0, sg = 0.0, sgx = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double dxh = static_cast<double>(gr[i]) * gv[ch];
        m1 += dxh;
        m2 += dxh * xh[i];
        sg += static_cast<double>(gr[i]);
        sgx += static_cast<double>(gr[i]) * xh[i];
      }
      gg[ch] += static_cast<R>(sgx);
      gb[ch] += static_cast<R>(sg);
      m1 /= static_cast<double>(plane);
      m2 /= static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) {
        const double dxh = static_cast<double>(gr[i]) * gv[ch];
        gx[p * plane + i] += static_cast<R>((dxh - m1 - xh[i] * m2) * inv_std[p]);
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// 2-D convolution pair. conv2d gathers over a zero-padded input; tconv2d
// scatters through the same index map, which makes it the exact adjoint:
// <conv2d(x;w), y> == <x, tconv2d(y;w)> when strides and padding agree and
// tconv2d's output_padding restores the original spatial extents.

template <class R>
Var<R> conv2d(Var<R> x, Var<R> w, std::size_t sh, std::size_t sw, std::size_t ph,
              std::size_t pw) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
    throw Error("tape: conv2d shape mismatch " + detail::shape_str(xs) + " * " +
                detail::shape_str(ws));
  const std::size_t b = xs[0], ci = xs[1], h = xs[2], wd = xs[3];
  const std::size_t co = ws[0], kh = ws[2], kw = ws[3];
  if (h + 2 * ph < kh || wd + 2 * pw < kw) throw Error("tape: conv2d kernel larger than input");
  const std::size_t oh = (h + 2 * ph - kh) / sh + 1;
  const std::size_t ow = (wd + 2 * pw - kw) / sw + 1;

  Tape<R>* t = x.tape;
  Var<R> out = t->make({b, co, oh, ow}, "conv2d");
  auto& ov = t->node(out.id).val;
  const auto& xv = t->node(x.id).val;
  const auto& wv = t->node(w.id).val;

  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t c = 0; c < co; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t z = 0; z < ow; ++z) {
          R acc = R(0);
          for (std::size_t q = 0; q < ci; ++q)
            for (std::size_t u = 0; u < kh; ++u) {
              const std::size_t iy = y * sh + u;
              if (iy < ph || iy >= h + ph) continue;
              const R* xrow = xv.data() + ((bi * ci + q) * h + (iy - ph)) * wd;
              const R* wrow = wv.data() + ((c * ci + q) * kh + u) * kw;
              for (std::size_t v = 0; v < kw; ++v) {
                const std::size_t iz = z * sw + v;
                if (iz < pw || iz >= wd + pw) continue;
                acc += xrow[iz - pw] * wrow[v];
              }
            }
          ov[((bi * co + c) * oh + y) * ow + z] = acc;
        }

  t->set_backward(out, [t, oxid = x.id, owid = w.id, oo = out.id, b, ci, h, wd, co, kh, kw, sh,
                        sw, ph, pw, oh, ow] {
    const auto& g = t->node(oo).grad;
    const auto& xv = t->node(oxid).val;
    const auto& wv = t->node(owid).val;
    auto& gx = t->node(oxid).grad;
    auto& gw = t->node(owid).grad;
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t c = 0; c < co; ++c)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t z = 0; z < ow; ++z) {
            const R gy = g[((bi * co + c) * oh + y) * ow + z];
            if (gy == R(0)) continue;
            for (std::size_t q = 0; q < ci; ++q)
              for (std::size_t u = 0; u < kh; ++u) {
                const std::size_t iy = y * sh + u;
                if (iy < ph || iy >= h + ph) continue;
                const std::size_t xbase = ((bi * ci + q) * h + (iy - ph)) * wd;
                const std::size_t wbase = ((c * ci + q) * kh + u) * kw;
                for (std::size_t v = 0; v < kw; ++v) {
                  const std::size_t iz = z * sw + v;
                  if (iz < pw || iz >= wd + pw) continue;
                  gx[xbase + iz - pw] += gy * wv[wbase + v];
                  gw[wbase + v] += gy * xv[xbase + iz - pw];
                }
              }
          }
  });
  return out;
}

// Transposed convolution with weight layout [C_in, C_out, kh, kw]; output size
// is (H-1)*sh - 2*ph + kh + output_padding.
template <class R>
Var<R> tconv2d(Var<R> x, Var<R> w, std::size_t sh, std::size_t sw, std::size_t ph,
               std::size_t pw, std::size_t oph, std::size_t opw) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[0])
    throw Error("tape: tconv2d shape mismatch " + detail::shape_str(xs) + " * " +
                detail::shape_str(ws));
  const std::size_t b = xs[0], ci = xs[1], h = xs[2], wd = xs[3];
  const std::size_t co = ws[1], kh = ws[2], kw = ws[3];
  const std::size_t oh_full = (h - 1) * sh + kh + oph;
  const std::size_t ow_full = (wd - 1) * sw + kw + opw;
  if (oh_full < 2 * ph || ow_full < 2 * pw) throw Error("tape: tconv2d padding exceeds output");
  const std::size_t oh = oh_full - 2 * ph;
  const std::size_t ow = ow_full - 2 * pw;

  Tape<R>* t = x.tape;
  Var<R> out = t->make({b, co, oh, ow}, "tconv2d");
  auto& ov = t->node(out.id).val;
  const auto& xv = t->node(x.id).val;
  const auto& wv = t->node(w.id).val;

  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t q = 0; q < ci; ++q)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t z = 0; z < wd; ++z) {
          const R xval = xv[((bi * ci + q) * h + y) * wd + z];
          if (xval == R(0)) continue;
          for (std::size_t c = 0; c < co; ++c) {
            const R* wrow = wv.data() + (q * co + c) * kh * kw;
            for (std::size_t u = 0; u < kh; ++u) {
              const std::size_t ty = y * sh + u;
              if (ty < ph || ty >= oh + ph) continue;
              R* orow = ov.data() + ((bi * co + c) * oh + (ty - ph)) * ow;
              for (std::size_t v = 0; v < kw; ++v) {
                const std::size_t tz = z * sw + v;
                if (tz < pw || tz >= ow + pw) continue;
                orow[tz - pw] += xval * wrow[u * kw + v];
              }
            }
          }
        }

  t->set_backward(out, [t, oxid = x.id, owid = w.id, oo = out.id, b, ci, h, wd, co, kh, kw, sh,
                        sw, ph, pw, oh, ow] {
    const auto& g = t->node(oo).grad;
    const auto& xv = t->node(oxid).val;
    const auto& wv = t->node(owid).val;
    auto& gx = t->node(oxid).grad;
    auto& gw = t->node(owid).grad;
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t q = 0; q < ci; ++q)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t z = 0; z < wd; ++z) {
            const std::size_t xi = ((bi * ci + q) * h + y) * wd + z;
            const R xval = xv[xi];
            R acc = R(0);
            for (std::size_t c = 0; c < co; ++c) {
              const R* wrow = wv.data() + (q * co + c) * kh * kw;
              R* gwrow = gw.data() + (q * co + c) * kh * kw;
              for (std::size_t u = 0; u < kh; ++u) {
                const std::size_t ty = y * sh + u;
                if (ty < ph || ty >= oh + ph) continue;
                const R* grow = g.data() + ((bi * co + c) * oh + (ty - ph)) * ow;
                for (std::size_t v = 0; v < kw; ++v) {
                  const std::size_t tz = z * sw + v;
                  if (tz < pw || tz >= ow + pw) continue;
                  acc += grow[tz - pw] * wrow[u * kw + v];
                  gwrow[u * kw + v] += grow[tz - pw] * xval;
                }
              }
            }
            gx[xi] += acc;
          }
  });
  return out;
}

}  // namespace ont
