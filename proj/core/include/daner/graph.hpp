#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "daner/rng.hpp"
#include "daner/tensor.hpp"

namespace daner {

using NodeId = std::int32_t;

/// Reverse-mode differentiation tape. Operations record their backward rule
/// at build time; backward(root) walks the tape once in reverse creation
/// order (a reverse topological order, since every input predates its
/// consumers) and accumulates gradients additively across fan-out.
///
/// One graph per training step. The graph owns a seeded random source used
/// by dropout, so a step is reproducible from (params, batch, seed).
template <typename T>
class Graph {
 public:
  explicit Graph(std::uint64_t seed = 0) : rng_(seed) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Constant leaf: no gradient is tracked.
  NodeId input(Tensor<T> value);
  /// Differentiable leaf (a parameter); the value is copied in.
  NodeId param(const Tensor<T>& value);

  // Differentiable primitives. Shapes are row-major; "last dim" ops treat
  // the tensor as rows over its final axis.

  /// [..., K] x [K, N] -> [..., N]
  NodeId matmul(NodeId a, NodeId b);
  /// Same shapes, or b's shape is a trailing suffix of a's (bias add).
  NodeId add(NodeId a, NodeId b);
  /// Multiply by a compile-time constant.
  NodeId scale(NodeId a, T factor);
  NodeId gelu(NodeId a);
  NodeId softmax(NodeId a);
  NodeId log_softmax(NodeId a);
  /// Normalize over the last dim with learnable gain/shift vectors.
  NodeId layer_norm(NodeId x, NodeId gain, NodeId shift, T eps = T(1e-5));
  /// Inverted dropout; rate 0 is the identity. Mask is drawn from the
  /// graph's random source in op-creation order.
  NodeId dropout(NodeId x, double rate);
  /// table: [V, D]; ids: rows*cols indices into V. Output [rows, cols, D].
  NodeId embedding(NodeId table, const std::vector<std::int32_t>& ids, int rows, int cols);
  /// x: [B, T, D], mask: B*T bytes -> [B, D] mean over real positions.
  NodeId masked_mean_pool(NodeId x, const std::vector<std::uint8_t>& mask);
  /// Concatenate along the last dim; leading dims must match.
  NodeId concat_last(NodeId a, NodeId b);
  /// [B, T, D] -> [B, H, T, D/H]
  NodeId split_heads(NodeId x, int n_heads);
  /// [B, H, T, dh] -> [B, T, H*dh]
  NodeId merge_heads(NodeId x);
  /// Scaled dot-product attention. q, k, v: [B, H, T, dh]; additive_mask has
  /// B*T entries added to every query's scores over key positions
  /// (0 for real tokens, a large negative value for padding).
  NodeId attention(NodeId q, NodeId k, NodeId v, const Tensor<T>& additive_mask);
  /// Identity forward; backward multiplies the upstream gradient by -lambda.
  NodeId gradient_reversal(NodeId x, T lambda);
  /// Mean of -log_probs[i, targets[i]] over rows whose target != ignore.
  /// log_probs: [..., C] read as N rows. 0 (flag set) when all rows ignored.
  NodeId nll_loss(NodeId log_probs, const std::vector<std::int32_t>& targets,
                  std::int32_t ignore, bool* all_ignored = nullptr);
  /// Scalar sum(x * weights); weights is a constant of x's shape.
  NodeId weighted_sum(NodeId x, const Tensor<T>& weights);

  const Tensor<T>& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor<T>& grad(NodeId id) const;
  bool requires_grad(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }
  std::size_t node_count() const { return nodes_.size(); }

  /// Seed the root (must be scalar) with gradient 1 and run the tape
  /// backwards. Call at most once per graph.
  void backward(NodeId root);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated iff requires_grad
    std::function<void()> backprop;
    bool requires_grad = false;
  };

  NodeId emplace(Tensor<T> value, bool requires_grad);
  Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  Tensor<T>& grad_ref(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }

  std::vector<Node> nodes_;
  RandomSource rng_;
  bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace daner
