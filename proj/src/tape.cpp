#include "mixflow/tape.hpp"

#include <cmath>

namespace mixflow {

namespace {

// Dot product with a fixed 8-lane accumulation tree so the summation order
// is identical regardless of vectorization or thread placement.
inline double dot_fixed(const double* w, const double* x, int64_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) acc[k] = std::fma(w[i + k], x[i + k], acc[k]);
  double tail = 0.0;
  for (; i < n; ++i) tail = std::fma(w[i], x[i], tail);
  return (((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))) +
         tail;
}

inline double clamp_lv(double lv) {
  return lv < kLogVarMin ? kLogVarMin : (lv > kLogVarMax ? kLogVarMax : lv);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

NodeRef Tape::push(Node n, int64_t len, bool external) {
  n.len = len;
  if (!external) {
    n.val_ofs = static_cast<int64_t>(vals_.size());
    vals_.resize(vals_.size() + static_cast<size_t>(len), 0.0);
  }
  n.grad_ofs = static_cast<int64_t>(grads_.size());
  // Param grads live externally; still reserve nothing for them.
  if (!external) grads_.resize(grads_.size() + static_cast<size_t>(len), 0.0);
  nodes_.push_back(n);
  return NodeRef{static_cast<int32_t>(nodes_.size()) - 1};
}

const double* Tape::val_ptr(const Node& n) const {
  return n.ext_val ? n.ext_val : vals_.data() + n.val_ofs;
}
double* Tape::val_ptr(Node& n) {
  return n.ext_val ? const_cast<double*>(n.ext_val) : vals_.data() + n.val_ofs;
}
double* Tape::grad_ptr(Node& n) { return n.ext_grad ? n.ext_grad : grads_.data() + n.grad_ofs; }
const double* Tape::grad_ptr(const Node& n) const {
  return n.ext_grad ? n.ext_grad : grads_.data() + n.grad_ofs;
}

const Tape::Node& Tape::node(NodeRef r) const {
  if (!r.valid() || r.i >= static_cast<int32_t>(nodes_.size()))
    throw UsageError("invalid node reference");
  return nodes_[r.i];
}

NodeRef Tape::constant(std::span<const double> v) {
  Node n;
  n.op = Op::Const;
  NodeRef r = push(n, static_cast<int64_t>(v.size()), false);
  std::copy(v.begin(), v.end(), vals_.begin() + nodes_[r.i].val_ofs);
  return r;
}

NodeRef Tape::scalar_constant(double v) { return constant(std::span<const double>(&v, 1)); }

NodeRef Tape::param(const double* value, double* grad, int64_t len) {
  Node n;
  n.op = Op::Param;
  n.ext_val = value;
  n.ext_grad = grad;
  return push(n, len, true);
}

NodeRef Tape::linear(NodeRef w, NodeRef b, NodeRef x, int rows, int cols) {
  const Node& wn = node(w);
  const Node& bn = node(b);
  const Node& xn = node(x);
  if (wn.len != static_cast<int64_t>(rows) * cols || bn.len != rows || xn.len != cols)
    throw ShapeError("linear: weight/bias/input dimensions disagree");
  Node n;
  n.op = Op::Linear;
  n.a = w.i;
  n.b = b.i;
  n.c = x.i;
  n.rows = rows;
  n.cols = cols;
  NodeRef r = push(n, rows, false);
  const double* W = val_ptr(nodes_[w.i]);
  const double* bias = val_ptr(nodes_[b.i]);
  const double* xin = val_ptr(nodes_[x.i]);
  double* y = val_ptr(nodes_[r.i]);
  for (int o = 0; o < rows; ++o) y[o] = bias[o] + dot_fixed(W + int64_t(o) * cols, xin, cols);
  return r;
}

NodeRef Tape::silu(NodeRef x) {
  const Node& xn = node(x);
  Node n;
  n.op = Op::SiLU;
  n.a = x.i;
  NodeRef r = push(n, xn.len, false);
  const double* in = val_ptr(nodes_[x.i]);
  double* y = val_ptr(nodes_[r.i]);
  for (int64_t i = 0; i < xn.len; ++i) y[i] = in[i] * sigmoid(in[i]);
  return r;
}

NodeRef Tape::relu(NodeRef x) {
  const Node& xn = node(x);
  Node n;
  n.op = Op::ReLU;
  n.a = x.i;
  NodeRef r = push(n, xn.len, false);
  const double* in = val_ptr(nodes_[x.i]);
  double* y = val_ptr(nodes_[r.i]);
  for (int64_t i = 0; i < xn.len; ++i) y[i] = in[i] > 0.0 ? in[i] : 0.0;
  return r;
}

NodeRef Tape::tanh(NodeRef x) {
  const Node& xn = node(x);
  Node n;
  n.op = Op::Tanh;
  n.a = x.i;
  NodeRef r = push(n, xn.len, false);
  const double* in = val_ptr(nodes_[x.i]);
  double* y = val_ptr(nodes_[r.i]);
  for (int64_t i = 0; i < xn.len; ++i) y[i] = std::tanh(in[i]);
  return r;
}

NodeRef Tape::concat(NodeRef a, NodeRef b) {
  const Node& an = node(a);
  const Node& bn = node(b);
  Node n;
  n.op = Op::Concat;
  n.a = a.i;
  n.b = b.i;
  NodeRef r = push(n, an.len + bn.len, false);
  const double* av = val_ptr(nodes_[a.i]);
  const double* bv = val_ptr(nodes_[b.i]);
  double* y = val_ptr(nodes_[r.i]);
  std::copy(av, av + an.len, y);
  std::copy(bv, bv + bn.len, y + an.len);
  return r;
}

NodeRef Tape::lincomb(double ca, NodeRef a, double cb, NodeRef b) {
  const Node& an = node(a);
  if (b.valid() && node(b).len != an.len) throw ShapeError("lincomb: length mismatch");
  Node n;
  n.op = Op::LinComb;
  n.a = a.i;
  n.b = b.valid() ? b.i : -1;
  n.c0 = ca;
  n.c1 = cb;
  NodeRef r = push(n, an.len, false);
  const double* av = val_ptr(nodes_[a.i]);
  double* y = val_ptr(nodes_[r.i]);
  if (b.valid()) {
    const double* bv = val_ptr(nodes_[b.i]);
    for (int64_t i = 0; i < an.len; ++i) y[i] = ca * av[i] + cb * bv[i];
  } else {
    for (int64_t i = 0; i < an.len; ++i) y[i] = ca * av[i];
  }
  return r;
}

NodeRef Tape::reparam(NodeRef mean, NodeRef log_var, NodeRef eps) {
  const Node& mn = node(mean);
  if (node(log_var).len != mn.len || node(eps).len != mn.len)
    throw ShapeError("reparam: length mismatch");
  Node n;
  n.op = Op::Reparam;
  n.a = mean.i;
  n.b = log_var.i;
  n.c = eps.i;
  NodeRef r = push(n, mn.len, false);
  const double* mu = val_ptr(nodes_[mean.i]);
  const double* lv = val_ptr(nodes_[log_var.i]);
  const double* e = val_ptr(nodes_[eps.i]);
  double* y = val_ptr(nodes_[r.i]);
  for (int64_t i = 0; i < mn.len; ++i) y[i] = mu[i] + std::exp(0.5 * clamp_lv(lv[i])) * e[i];
  return r;
}

NodeRef Tape::mix_log_var(NodeRef log_var, double w) {
  const Node& ln = node(log_var);
  Node n;
  n.op = Op::MixLogVar;
  n.a = log_var.i;
  n.c0 = w;
  NodeRef r = push(n, ln.len, false);
  const double* lv = val_ptr(nodes_[log_var.i]);
  double* y = val_ptr(nodes_[r.i]);
  for (int64_t i = 0; i < ln.len; ++i)
    y[i] = std::log(w * std::exp(clamp_lv(lv[i])) + (1.0 - w));
  return r;
}

NodeRef Tape::kl_std_normal(NodeRef mean, NodeRef log_var) {
  const Node& mn = node(mean);
  if (node(log_var).len != mn.len) throw ShapeError("kl: length mismatch");
  Node n;
  n.op = Op::KlStdNormal;
  n.a = mean.i;
  n.b = log_var.i;
  NodeRef r = push(n, 1, false);
  const double* mu = val_ptr(nodes_[mean.i]);
  const double* lv = val_ptr(nodes_[log_var.i]);
  double s = 0.0;
  for (int64_t i = 0; i < mn.len; ++i) s += std::exp(lv[i]) + mu[i] * mu[i] - 1.0 - lv[i];
  *val_ptr(nodes_[r.i]) = 0.5 * s;
  return r;
}

NodeRef Tape::squared_norm(NodeRef a) {
  const Node& an = node(a);
  Node n;
  n.op = Op::SquaredNorm;
  n.a = a.i;
  NodeRef r = push(n, 1, false);
  const double* av = val_ptr(nodes_[a.i]);
  double s = 0.0;
  for (int64_t i = 0; i < an.len; ++i) s += av[i] * av[i];
  *val_ptr(nodes_[r.i]) = s;
  return r;
}

NodeRef Tape::slice(NodeRef a, int64_t offset, int64_t len) {
  const Node& an = node(a);
  if (offset < 0 || offset + len > an.len) throw ShapeError("slice out of range");
  Node n;
  n.op = Op::Slice;
  n.a = a.i;
  n.slice_ofs = offset;
  NodeRef r = push(n, len, false);
  const double* av = val_ptr(nodes_[a.i]);
  double* y = val_ptr(nodes_[r.i]);
  std::copy(av + offset, av + offset + len, y);
  return r;
}

NodeRef Tape::sum(NodeRef a) {
  const Node& an = node(a);
  Node n;
  n.op = Op::Sum;
  n.a = a.i;
  NodeRef r = push(n, 1, false);
  const double* av = val_ptr(nodes_[a.i]);
  double s = 0.0;
  for (int64_t i = 0; i < an.len; ++i) s += av[i];
  *val_ptr(nodes_[r.i]) = s;
  return r;
}

std::span<const double> Tape::value(NodeRef n) const {
  const Node& nd = node(n);
  return {val_ptr(nd), static_cast<size_t>(nd.len)};
}

std::span<const double> Tape::grad(NodeRef n) const {
  const Node& nd = node(n);
  return {grad_ptr(nd), static_cast<size_t>(nd.len)};
}

double Tape::scalar(NodeRef n) const {
  const Node& nd = node(n);
  if (nd.len != 1) throw ShapeError("scalar() on non-scalar node");
  return *val_ptr(nd);
}

int64_t Tape::size(NodeRef n) const { return node(n).len; }

void Tape::backward_node(Node& n) {
  const double* g = grad_ptr(n);
  switch (n.op) {
    case Op::Const:
    case Op::Param:
      break;
    case Op::Linear: {
      Node& wn = nodes_[n.a];
      Node& bn = nodes_[n.b];
      Node& xn = nodes_[n.c];
      const double* W = val_ptr(wn);
      const double* x = val_ptr(xn);
      double* gW = grad_ptr(wn);
      double* gb = grad_ptr(bn);
      double* gx = grad_ptr(xn);
      const int rows = n.rows, cols = n.cols;
      for (int o = 0; o < rows; ++o) {
        const double go = g[o];
        gb[o] += go;
        const double* Wr = W + int64_t(o) * cols;
        double* gWr = gW + int64_t(o) * cols;
        for (int i = 0; i < cols; ++i) {
          gWr[i] = std::fma(go, x[i], gWr[i]);
          gx[i] = std::fma(go, Wr[i], gx[i]);
        }
      }
      break;
    }
    case Op::SiLU: {
      Node& xn = nodes_[n.a];
      const double* x = val_ptr(xn);
      double* gx = grad_ptr(xn);
      for (int64_t i = 0; i < n.len; ++i) {
        const double s = sigmoid(x[i]);
        gx[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
      }
      break;
    }
    case Op::ReLU: {
      Node& xn = nodes_[n.a];
      const double* x = val_ptr(xn);
      double* gx = grad_ptr(xn);
      for (int64_t i = 0; i < n.len; ++i)
        if (x[i] > 0.0) gx[i] += g[i];
      break;
    }
    case Op::Tanh: {
      Node& xn = nodes_[n.a];
      const double* y = val_ptr(n);
      double* gx = grad_ptr(xn);
      for (int64_t i = 0; i < n.len; ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::Concat: {
      Node& an = nodes_[n.a];
      Node& bn = nodes_[n.b];
      double* ga = grad_ptr(an);
      double* gb = grad_ptr(bn);
      for (int64_t i = 0; i < an.len; ++i) ga[i] += g[i];
      for (int64_t i = 0; i < bn.len; ++i) gb[i] += g[an.len + i];
      break;
    }
    case Op::LinComb: {
      Node& an = nodes_[n.a];
      double* ga = grad_ptr(an);
      for (int64_t i = 0; i < n.len; ++i) ga[i] += n.c0 * g[i];
      if (n.b >= 0) {
        Node& bn = nodes_[n.b];
        double* gb = grad_ptr(bn);
        for (int64_t i = 0; i < n.len; ++i) gb[i] += n.c1 * g[i];
      }
      break;
    }
    case Op::Reparam: {
      Node& mn = nodes_[n.a];
      Node& ln = nodes_[n.b];
      Node& en = nodes_[n.c];
      const double* lv = val_ptr(ln);
      const double* e = val_ptr(en);
      double* gm = grad_ptr(mn);
      double* gl = grad_ptr(ln);
      for (int64_t i = 0; i < n.len; ++i) {
        gm[i] += g[i];
        if (lv[i] > kLogVarMin && lv[i] < kLogVarMax)
          gl[i] += g[i] * 0.5 * std::exp(0.5 * lv[i]) * e[i];
      }
      break;
    }
    case Op::MixLogVar: {
      Node& ln = nodes_[n.a];
      const double* lv = val_ptr(ln);
      double* gl = grad_ptr(ln);
      const double w = n.c0;
      for (int64_t i = 0; i < n.len; ++i) {
        if (lv[i] > kLogVarMin && lv[i] < kLogVarMax) {
          const double ev = w * std::exp(lv[i]);
          gl[i] += g[i] * ev / (ev + (1.0 - w));
        }
      }
      break;
    }
    case Op::KlStdNormal: {
      Node& mn = nodes_[n.a];
      Node& ln = nodes_[n.b];
      const double* mu = val_ptr(mn);
      const double* lv = val_ptr(ln);
      double* gm = grad_ptr(mn);
      double* gl = grad_ptr(ln);
      const double g0 = g[0];
      for (int64_t i = 0; i < mn.len; ++i) {
        gm[i] += g0 * mu[i];
        gl[i] += g0 * 0.5 * (std::exp(lv[i]) - 1.0);
      }
      break;
    }
    case Op::SquaredNorm: {
      Node& an = nodes_[n.a];
      const double* a = val_ptr(an);
      double* ga = grad_ptr(an);
      const double g0 = g[0];
      for (int64_t i = 0; i < an.len; ++i) ga[i] += 2.0 * g0 * a[i];
      break;
    }
    case Op::Slice: {
      Node& an = nodes_[n.a];
      double* ga = grad_ptr(an);
      for (int64_t i = 0; i < n.len; ++i) ga[n.slice_ofs + i] += g[i];
      break;
    }
    case Op::Sum: {
      Node& an = nodes_[n.a];
      double* ga = grad_ptr(an);
      const double g0 = g[0];
      for (int64_t i = 0; i < an.len; ++i) ga[i] += g0;
      break;
    }
  }
}

void Tape::backward(NodeRef root, double seed) {
  if (backward_done_) throw UsageError("backward called twice without reset");
  const Node& rn = node(root);
  if (rn.len != 1) throw ShapeError("backward root must be scalar");
  backward_done_ = true;
  grad_ptr(nodes_[root.i])[0] += seed;
  for (int32_t i = root.i; i >= 0; --i) backward_node(nodes_[i]);
}

void Tape::reset() {
  nodes_.clear();
  vals_.clear();
  grads_.clear();
  backward_done_ = false;
}

}  // namespace mixflow
