#ifndef VF_TENSOR_HPP
#define VF_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vf/errors.hpp"
#include "vf/rng.hpp"

namespace vf {

using Shape = std::vector<int>;

std::int64_t shape_count(const Shape& s);
std::string shape_str(const Shape& s);

class Graph;

// Dense N-dimensional array of 64-bit scalars, row-major storage (last axis
// fastest). Volumetric tensors use the layout [channels, x, y, z]. Buffers
// are shared between copies; the non-const data() accessor detaches first,
// so a tensor recorded on a graph never sees later edits made through
// another handle.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const {
    return data_ ? static_cast<std::int64_t>(data_->size()) : 0;
  }

  const double* data() const;
  double* data();  // detaches from shared buffer when aliased
  double operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }
  const std::vector<double>& values() const { return *data_; }

  // Value of a single-element tensor.
  double value() const;

  bool bound() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  int node() const { return node_; }
  bool requires_grad() const { return requires_grad_; }

 private:
  friend class Graph;
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  Graph* graph_ = nullptr;
  int node_ = -1;
  bool requires_grad_ = false;
};

enum class OpKind : std::uint8_t {
  leaf,
  conv3d,
  maxpool3d,
  upsample_nn,
  instance_norm,
  relu,
  prelu,
  dropout,
  add,
  sub,
  mul,
  div,
  scale,
  add_scalar,
  abs,
  tanh_op,
  concat_channels,
  mean_all,
  sum_all,
};

enum class Mode : std::uint8_t { train, eval };

// Recorded computation graph for one forward pass. Nodes are append-only and
// appended in execution order, so append order is a topological order and
// backward() is a single reverse sweep. Not shared across threads.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Registers a leaf that gradients are accumulated for.
  Tensor variable(const Tensor& value);
  // Registers a leaf that participates in the forward pass only.
  Tensor constant(const Tensor& value);

  // Reverse-mode sweep from a scalar loss. Throws NotScalar otherwise.
  // Clears gradients from any previous sweep first.
  void backward(const Tensor& loss);

  // Gradient of the last backward() loss w.r.t. a bound tensor. Zeros if no
  // gradient flowed.
  Tensor grad(const Tensor& t) const;

  int node_count() const { return static_cast<int>(nodes_.size()); }

  // --- internal surface used by the op implementations ---
  struct Node {
    OpKind kind;
    Shape shape;
    std::shared_ptr<std::vector<double>> value;
    std::vector<int> inputs;
    bool needs_grad = false;
    // Accumulates into input gradients given this node's gradient.
    std::function<void(Graph&, int)> backward_fn;
  };
  Tensor add_node(OpKind kind, Shape shape, std::vector<double> values,
                  std::vector<int> inputs, std::function<void(Graph&, int)> bw);
  const Node& node_at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::vector<double>& value_at(int id) const { return *nodes_[static_cast<std::size_t>(id)].value; }
  bool node_needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  // Gradient buffer for a node, allocated to zeros on first touch.
  std::vector<double>& grad_buf(int id);
  bool has_grad(int id) const {
    return !grads_[static_cast<std::size_t>(id)].empty();
  }

 private:
  Tensor make_leaf(const Tensor& value, bool requires_grad);
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// --- differentiable operations -------------------------------------------
// All operands must be bound to the same graph.

// Cross-correlation of input [Cin,X,Y,Z] with kernel [Cout,Cin,kx,ky,kz] and
// bias [Cout]. Zero padding; output spatial dim = floor((D + 2p - k)/s) + 1.
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int padding = 1, int stride = 1);

// 2x2x2 max pooling, stride 2. Gradient routes to the argmax voxel;
// ties go to the lowest linear index.
Tensor maxpool3d(const Tensor& input);

// Nearest-neighbour upsampling by an integer factor per spatial axis.
Tensor upsample_nn(const Tensor& input, int factor = 2);

// Per-channel standardization over spatial voxels (biased variance) with
// learnable scale/shift. Input [C,X,Y,Z], gamma/beta [C].
Tensor instance_norm(const Tensor& input, const Tensor& gamma,
                     const Tensor& beta, double eps = 1e-5);

Tensor relu(const Tensor& x);

// PReLU with per-channel slopes a [C] where C = x.shape()[0].
Tensor prelu(const Tensor& x, const Tensor& a);

// Inverted dropout: eval mode is the identity; train mode zeroes each
// element with probability rate and scales survivors by 1/(1-rate).
Tensor dropout(const Tensor& x, double rate, Mode mode, RngStream& stream);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor abs(const Tensor& x);
Tensor tanh(const Tensor& x);

// Stacks two [C,X,Y,Z] tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);

}  // namespace vf

#endif  // VF_TENSOR_HPP
