// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "maediff/tensor.hpp"

namespace maediff::ag {

class Graph;

struct Node {
    Tensor value;
    Tensor grad;
    bool grad_allocated = false;
    bool requires_grad = false;
    std::function<void(Node&)> backward; // accumulates into parents' grad buffers
    Tensor& grad_buf();
};

// Handle into a Graph-owned node.
struct Var {
    Node* node = nullptr;
    Graph* graph = nullptr;

    const Tensor& val() const { return node->value; }
    const std::vector<int64_t>& shape() const { return node->value.shape(); }
    int64_t numel() const { return node->value.numel(); }
    bool defined() const { return node != nullptr; }
};

// Tape of one forward pass. Creation order is a valid topological order, so
// backward() walks the tape in reverse. Graphs are single-threaded; run one
// graph per worker and merge parameter gradients in a fixed order for
// bit-reproducible training.
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    Var input(Tensor t, bool requires_grad = false);

    // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be scalar.
    void backward(const Var& loss);

    // Gradient accumulated at a leaf during the last backward() (zeros if the
    // leaf was not reached).
    Tensor leaf_grad(const Var& leaf) const;

    size_t size() const { return nodes_.size(); }

    Var make_node(Tensor value, bool requires_grad, std::function<void(Node&)> backward);

private:
    bool grad_enabled_;
    std::vector<std::unique_ptr<Node>> nodes_;
};

// ---- elementwise ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_const(Var a, const Tensor& c);
Var mul_const(Var a, const Tensor& c);
Var silu(Var a);
Var gelu(Var a);

// ---- shape ----
Var reshape(Var a, std::vector<int64_t> shape);
Var concat_channels(Var a, Var b);               // {C1,H,W} + {C2,H,W}
Var gather_rows(Var a, std::vector<int64_t> idx);  // {N,d} -> {|idx|,d}
Var split_cols(Var a, int64_t offset, int64_t len);
Var concat_cols(const std::vector<Var>& parts);
Var chw_to_tokens(Var a);                        // {C,H,W} -> {H*W, C}
Var tokens_to_chw(Var a, int64_t h, int64_t w);  // {N,d} -> {d,h,w}, N = h*w
// {C,H,W} -> {N, C*cell*cell} rows over row-major (H/cell)x(W/cell) grid
Var extract_grid_cells(Var a, int64_t cell);

// ---- linear algebra ----
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var linear(Var x, Var w, Var b);                 // {N,in} x {out,in}^T + {out}
Var add_bias_rows(Var x, Var b);                 // {N,d} + {d}
Var add_bias_chw(Var x, Var b);                  // {C,H,W} + {C}
Var softmax_rows(Var x);

// ---- normalization ----
Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var groupnorm(Var x, int64_t groups, Var gamma, Var beta, double eps = 1e-5);

// ---- convolution ----
Var conv2d(Var x, Var w, Var b, int64_t stride, int64_t pad);
Var conv_transpose2d(Var x, Var w, Var b, int64_t stride, int64_t pad);
Var upsample_nearest2x(Var x);

// ---- reductions ----
Var mean_all(Var x);
// mean over masked pixels of |pred - target|; mask entries are 0/1.
Var masked_l1(Var pred, const Tensor& target, const Tensor& mask);

} // namespace maediff::ag
