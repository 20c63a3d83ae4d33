#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mixflow/common.hpp"

namespace mixflow {

// log-variances are clamped to this range inside reparameterized sampling
// and distribution mixing; values outside are degenerate.
inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 20.0;

struct NodeRef {
  int32_t i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape over small vector-valued nodes. Values are computed
// eagerly at node creation; backward() sweeps nodes in reverse creation
// order, which is a topological order by construction. Parameter leaves
// reference external value/grad memory, so gradients can be routed either
// straight into a ParamStore or into a per-chunk buffer.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  NodeRef constant(std::span<const double> v);
  NodeRef scalar_constant(double v);
  // External parameter leaf; grad may alias a chunk buffer.
  NodeRef param(const double* value, double* grad, int64_t len);

  // y = W x + b with W row-major (rows x cols).
  NodeRef linear(NodeRef w, NodeRef b, NodeRef x, int rows, int cols);
  NodeRef silu(NodeRef x);
  NodeRef relu(NodeRef x);
  NodeRef tanh(NodeRef x);
  NodeRef concat(NodeRef a, NodeRef b);
  // y = ca * a, or ca * a + cb * b when b is valid.
  NodeRef lincomb(double ca, NodeRef a, double cb = 0.0, NodeRef b = {});
  // y = mean + exp(0.5 * clamp(log_var)) * eps
  NodeRef reparam(NodeRef mean, NodeRef log_var, NodeRef eps);
  // y = log(w * exp(clamp(log_var)) + (1 - w))
  NodeRef mix_log_var(NodeRef log_var, double w);
  // scalar 0.5 * sum(exp(lv) + mu^2 - 1 - lv)
  NodeRef kl_std_normal(NodeRef mean, NodeRef log_var);
  NodeRef squared_norm(NodeRef a);
  NodeRef slice(NodeRef a, int64_t offset, int64_t len);
  NodeRef sum(NodeRef a);

  std::span<const double> value(NodeRef n) const;
  std::span<const double> grad(NodeRef n) const;
  double scalar(NodeRef n) const;
  int64_t size(NodeRef n) const;

  // Accumulates d(root)/d(leaf) into every leaf gradient. Throws UsageError
  // if called again before reset().
  void backward(NodeRef root, double seed = 1.0);
  void reset();
  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    Const,
    Param,
    Linear,
    SiLU,
    ReLU,
    Tanh,
    Concat,
    LinComb,
    Reparam,
    MixLogVar,
    KlStdNormal,
    SquaredNorm,
    Slice,
    Sum,
  };

  struct Node {
    Op op;
    int32_t a = -1, b = -1, c = -1;
    int64_t val_ofs = -1, grad_ofs = -1;
    int64_t len = 0;
    const double* ext_val = nullptr;
    double* ext_grad = nullptr;
    double c0 = 0.0, c1 = 0.0;
    int32_t rows = 0, cols = 0;
    int64_t slice_ofs = 0;
  };

  NodeRef push(Node n, int64_t len, bool external);
  const double* val_ptr(const Node& n) const;
  double* val_ptr(Node& n);
  double* grad_ptr(Node& n);
  const double* grad_ptr(const Node& n) const;
  const Node& node(NodeRef r) const;
  void backward_node(Node& n);

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  bool backward_done_ = false;
};

}  // namespace mixflow
