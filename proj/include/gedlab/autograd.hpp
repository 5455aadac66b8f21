#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "gedlab/rng.hpp"
#include "gedlab/tensor.hpp"

namespace gedlab {

class Graph;

// Handle to a node in a Graph. Only valid while the graph is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  double item() const;
  std::size_t id() const { return id_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run tape. Nodes are appended in evaluation order, so every node's
// inputs precede it and a reverse sweep over the list is a valid backward
// order. A graph is built for one forward pass and then discarded.
class Graph {
 public:
  // Called during backward with the node id; reads grad(id) and accumulates
  // into the grads of the node's inputs.
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool record_gradients = true) : record_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that owns its value and never receives a gradient.
  Var constant(Tensor value);
  // Leaf that aliases an external tensor. When the tensor requires_grad,
  // backward() accumulates into tensor.grad.
  Var parameter(Tensor& tensor);
  // Appends an interior node. fn is dropped when no input tracks gradients.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn fn);

  // Populates gradients of every parameter leaf reachable from loss.
  // Parameter grads accumulate across calls; interior grads are reset.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  bool tracks_grad(std::size_t id) const { return nodes_[id].tracks_grad; }
  // Gradient buffer of a tracked node; empty span otherwise.
  std::span<double> grad(std::size_t id);
  std::span<const std::size_t> inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::string_view op(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

 private:
  struct Node {
    std::string_view op;
    std::vector<std::size_t> inputs;
    Tensor owned;
    Tensor* external = nullptr;
    bool tracks_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
  };

  Var add_node(Node node);

  std::deque<Node> nodes_;  // stable addresses: value() references survive later nodes
  bool record_;
};

// Train-time randomness for dropout. A null rng means eval mode.
struct DropoutContext {
  Rng* rng = nullptr;
  bool training() const { return rng != nullptr; }
};

// ---- primitives -----------------------------------------------------------
// All matrices are row-major; linear maps are written x·W with W [in×out].

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
// x [N×C] + bias [C] broadcast over rows.
Var add_bias(Var x, Var bias);
Var sum(Var x);
Var relu(Var x);
Var softmax(Var x, std::size_t axis);
// Mean over rows of -ln(max(p[target], 1e-12)). Rows must be distributions.
Var cross_entropy(Var probabilities, std::span<const std::size_t> targets);
// Concatenation along the last axis of rank-2 inputs with equal row counts.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, std::size_t start, std::size_t width);
// Row lookup: out[n] = table[ids[n]].
Var embedding(Var table, std::span<const std::size_t> ids);
Var gather_rows(Var x, std::span<const std::size_t> rows);
// Row-wise scaling: out[n][d] = x[n][d] * weights[n][0], weights [N×1].
Var scale_rows(Var x, Var weights);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-12);
// Inverted dropout: survivors scaled by 1/(1-rate). Identity in eval mode.
Var dropout(Var x, double rate, const DropoutContext& ctx);

// Batched multi-head scaled dot-product self-attention over a stack of
// `batch` sequences of `seq_len` rows each. Keys whose key_mask entry is 0 are
// skipped entirely (not just down-weighted), so padded and unpadded runs
// produce identical sums for real positions.
struct SelfAttentionShape {
  std::size_t batch = 1;
  std::size_t seq_len = 0;
  std::size_t heads = 1;
};
Var masked_self_attention(Var q, Var k, Var v, const SelfAttentionShape& shape,
                          std::span<const std::uint8_t> key_mask, double attn_dropout,
                          const DropoutContext& ctx);

}  // namespace gedlab
