// SPDX-License-Identifier: Apache-2.0
#include "maediff/autograd.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace maediff::ag {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using MapC = Eigen::Map<const RowMat>;

// C (+)= op(A) * op(B), with C sized m x n.
void gemm(const float* a, int64_t ar, int64_t ac, bool ta, const float* b, int64_t br, int64_t bc, bool tb,
          float* c, int64_t m, int64_t n, bool accumulate) {
    MapC A(a, ar, ac);
    MapC B(b, br, bc);
    MapM C(c, m, n);
    if (!ta && !tb) {
        if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
    } else if (ta && !tb) {
        if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
    } else if (!ta && tb) {
        if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
    } else {
        if (accumulate) C.noalias() += A.transpose() * B.transpose(); else C.noalias() = A.transpose() * B.transpose();
    }
}

void check(bool cond, const std::string& what) {
    if (!cond) throw ConfigError("autograd: " + what);
}

int64_t conv_out(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// col[(C*k*k), (Ho*Wo)]
Tensor im2col(const Tensor& x, int64_t k, int64_t stride, int64_t pad) {
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int64_t Ho = conv_out(H, k, stride, pad), Wo = conv_out(W, k, stride, pad);
    Tensor col({C * k * k, Ho * Wo});
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t di = 0; di < k; ++di) {
            for (int64_t dj = 0; dj < k; ++dj) {
                float* row = col.data() + ((c * k + di) * k + dj) * Ho * Wo;
                for (int64_t oi = 0; oi < Ho; ++oi) {
                    const int64_t i = oi * stride + di - pad;
                    if (i < 0 || i >= H) continue;
                    const float* src = x.data() + (c * H + i) * W;
                    float* dst = row + oi * Wo;
                    for (int64_t oj = 0; oj < Wo; ++oj) {
                        const int64_t j = oj * stride + dj - pad;
                        if (j >= 0 && j < W) dst[oj] = src[j];
                    }
                }
            }
        }
    }
    return col;
}

// Adds col[(C*k*k), (Ho*Wo)] back into an image of shape {C,H,W}.
void col2im_accum(const Tensor& col, int64_t k, int64_t stride, int64_t pad, Tensor& x) {
    const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int64_t Ho = conv_out(H, k, stride, pad), Wo = conv_out(W, k, stride, pad);
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t di = 0; di < k; ++di) {
            for (int64_t dj = 0; dj < k; ++dj) {
                const float* row = col.data() + ((c * k + di) * k + dj) * Ho * Wo;
                for (int64_t oi = 0; oi < Ho; ++oi) {
                    const int64_t i = oi * stride + di - pad;
                    if (i < 0 || i >= H) continue;
                    float* dst = x.data() + (c * H + i) * W;
                    const float* src = row + oi * Wo;
                    for (int64_t oj = 0; oj < Wo; ++oj) {
                        const int64_t j = oj * stride + dj - pad;
                        if (j >= 0 && j < W) dst[j] += src[oj];
                    }
                }
            }
        }
    }
}

bool any_requires(std::initializer_list<Var> vars) {
    for (const Var& v : vars) {
        if (v.node->requires_grad) return true;
    }
    return false;
}

} // namespace

Tensor& Node::grad_buf() {
    if (!grad_allocated) {
        grad = Tensor(value.shape());
        grad_allocated = true;
    }
    return grad;
}

Var Graph::input(Tensor t, bool requires_grad) {
    return make_node(std::move(t), requires_grad && grad_enabled_, nullptr);
}

Var Graph::make_node(Tensor value, bool requires_grad, std::function<void(Node&)> backward) {
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad && grad_enabled_;
    if (node->requires_grad) node->backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{nodes_.back().get(), this};
}

void Graph::backward(const Var& loss) {
    check(loss.graph == this, "backward called on foreign graph");
    check(loss.numel() == 1, "backward needs a scalar loss");
    check(loss.node->requires_grad, "loss does not require grad");
    loss.node->grad_buf()[0] = 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.grad_allocated && n.backward) n.backward(n);
    }
}

Tensor Graph::leaf_grad(const Var& leaf) const {
    if (leaf.node->grad_allocated) return leaf.node->grad;
    return Tensor(leaf.node->value.shape());
}

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
    check(a.graph == b.graph, "add: graph mismatch");
    Tensor out = maediff::add(a.val(), b.val());
    Node* an = a.node;
    Node* bn = b.node;
    return a.graph->make_node(std::move(out), any_requires({a, b}), [an, bn](Node& n) {
        if (an->requires_grad) {
            Tensor& ga = an->grad_buf();
            for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_buf();
            for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] += n.grad[i];
        }
    });
}

Var sub(Var a, Var b) {
    check(a.graph == b.graph, "sub: graph mismatch");
    Tensor out = maediff::sub(a.val(), b.val());
    Node* an = a.node;
    Node* bn = b.node;
    return a.graph->make_node(std::move(out), any_requires({a, b}), [an, bn](Node& n) {
        if (an->requires_grad) {
            Tensor& ga = an->grad_buf();
            for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_buf();
            for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] -= n.grad[i];
        }
    });
}

Var mul(Var a, Var b) {
    check(a.graph == b.graph, "mul: graph mismatch");
    Tensor out = maediff::mul(a.val(), b.val());
    Node* an = a.node;
    Node* bn = b.node;
    return a.graph->make_node(std::move(out), any_requires({a, b}), [an, bn](Node& n) {
        if (an->requires_grad) {
            Tensor& ga = an->grad_buf();
            for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_buf();
            for (int64_t i = 0; i < n.grad.numel(); ++i) gb[i] += n.grad[i] * an->value[i];
        }
    });
}

Var scale(Var a, double c) {
    Tensor out = maediff::scale(a.val(), c);
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an, c](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += static_cast<float>(c * n.grad[i]);
    });
}

Var add_const(Var a, const Tensor& c) {
    Tensor out = maediff::add(a.val(), c);
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
    });
}

Var mul_const(Var a, const Tensor& c) {
    Tensor out = maediff::mul(a.val(), c);
    Node* an = a.node;
    Tensor cc = c;
    return a.graph->make_node(std::move(out), an->requires_grad, [an, cc = std::move(cc)](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] * cc[i];
    });
}

Var silu(Var a) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        float x = a.val()[i];
        out[i] = x / (1.0f + std::exp(-x));
    }
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            float x = an->value[i];
            float sig = 1.0f / (1.0f + std::exp(-x));
            ga[i] += n.grad[i] * sig * (1.0f + x * (1.0f - sig));
        }
    });
}

Var gelu(Var a) {
    constexpr float kInvSqrt2 = 0.70710678118654752440f;
    constexpr float kInvSqrt2Pi = 0.39894228040143267794f;
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
        float x = a.val()[i];
        out[i] = 0.5f * x * (1.0f + std::erf(x * kInvSqrt2));
    }
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            float x = an->value[i];
            float cdf = 0.5f * (1.0f + std::erf(x * kInvSqrt2));
            float pdf = kInvSqrt2Pi * std::exp(-0.5f * x * x);
            ga[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

// ---------------------------------------------------------------- shape

Var reshape(Var a, std::vector<int64_t> shape) {
    Tensor out = a.val().reshaped(shape);
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
    });
}

Var concat_channels(Var a, Var b) {
    check(a.graph == b.graph, "concat_channels: graph mismatch");
    check(a.shape().size() == 3 && b.shape().size() == 3, "concat_channels needs {C,H,W}");
    check(a.shape()[1] == b.shape()[1] && a.shape()[2] == b.shape()[2], "concat_channels: spatial mismatch");
    const int64_t c1 = a.shape()[0], c2 = b.shape()[0], hw = a.shape()[1] * a.shape()[2];
    Tensor out({c1 + c2, a.shape()[1], a.shape()[2]});
    std::copy(a.val().data(), a.val().data() + c1 * hw, out.data());
    std::copy(b.val().data(), b.val().data() + c2 * hw, out.data() + c1 * hw);
    Node* an = a.node;
    Node* bn = b.node;
    return a.graph->make_node(std::move(out), any_requires({a, b}), [an, bn, c1, c2, hw](Node& n) {
        if (an->requires_grad) {
            Tensor& ga = an->grad_buf();
            for (int64_t i = 0; i < c1 * hw; ++i) ga[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_buf();
            for (int64_t i = 0; i < c2 * hw; ++i) gb[i] += n.grad[c1 * hw + i];
        }
    });
}

Var gather_rows(Var a, std::vector<int64_t> idx) {
    check(a.shape().size() == 2, "gather_rows needs {N,d}");
    const int64_t d = a.shape()[1];
    Tensor out({static_cast<int64_t>(idx.size()), d});
    for (size_t r = 0; r < idx.size(); ++r) {
        check(idx[r] >= 0 && idx[r] < a.shape()[0], "gather_rows: index out of range");
        std::copy(a.val().data() + idx[r] * d, a.val().data() + (idx[r] + 1) * d, out.data() + static_cast<int64_t>(r) * d);
    }
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an, idx = std::move(idx), d](Node& n) {
        Tensor& ga = an->grad_buf();
        for (size_t r = 0; r < idx.size(); ++r) {
            const float* src = n.grad.data() + static_cast<int64_t>(r) * d;
            float* dst = ga.data() + idx[r] * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

Var split_cols(Var a, int64_t offset, int64_t len) {
    check(a.shape().size() == 2, "split_cols needs {N,d}");
    const int64_t N = a.shape()[0], d = a.shape()[1];
    check(offset >= 0 && offset + len <= d, "split_cols: range out of bounds");
    Tensor out({N, len});
    for (int64_t i = 0; i < N; ++i) {
        std::copy(a.val().data() + i * d + offset, a.val().data() + i * d + offset + len, out.data() + i * len);
    }
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an, offset, len, N, d](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t i = 0; i < N; ++i) {
            const float* src = n.grad.data() + i * len;
            float* dst = ga.data() + i * d + offset;
            for (int64_t j = 0; j < len; ++j) dst[j] += src[j];
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_cols: empty input");
    const int64_t N = parts[0].shape()[0];
    int64_t d = 0;
    bool req = false;
    for (const Var& p : parts) {
        check(p.shape().size() == 2 && p.shape()[0] == N, "concat_cols: row mismatch");
        d += p.shape()[1];
        req = req || p.node->requires_grad;
    }
    Tensor out({N, d});
    int64_t off = 0;
    for (const Var& p : parts) {
        const int64_t len = p.shape()[1];
        for (int64_t i = 0; i < N; ++i) {
            std::copy(p.val().data() + i * len, p.val().data() + (i + 1) * len, out.data() + i * d + off);
        }
        off += len;
    }
    std::vector<Node*> nodes;
    for (const Var& p : parts) nodes.push_back(p.node);
    return parts[0].graph->make_node(std::move(out), req, [nodes, N, d](Node& n) {
        int64_t off2 = 0;
        for (Node* pn : nodes) {
            const int64_t len = pn->value.shape()[1];
            if (pn->requires_grad) {
                Tensor& g = pn->grad_buf();
                for (int64_t i = 0; i < N; ++i) {
                    const float* src = n.grad.data() + i * d + off2;
                    float* dst = g.data() + i * len;
                    for (int64_t j = 0; j < len; ++j) dst[j] += src[j];
                }
            }
            off2 += len;
        }
    });
}

Var chw_to_tokens(Var a) {
    check(a.shape().size() == 3, "chw_to_tokens needs {C,H,W}");
    const int64_t C = a.shape()[0], HW = a.shape()[1] * a.shape()[2];
    Tensor out({HW, C});
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t p = 0; p < HW; ++p) out[p * C + c] = a.val()[c * HW + p];
    }
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an, C, HW](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t p = 0; p < HW; ++p) ga[c * HW + p] += n.grad[p * C + c];
        }
    });
}

Var tokens_to_chw(Var a, int64_t h, int64_t w) {
    check(a.shape().size() == 2 && a.shape()[0] == h * w, "tokens_to_chw: N != h*w");
    const int64_t N = a.shape()[0], d = a.shape()[1];
    Tensor out({d, h, w});
    for (int64_t p = 0; p < N; ++p) {
        for (int64_t c = 0; c < d; ++c) out[c * N + p] = a.val()[p * d + c];
    }
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an, N, d](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t p = 0; p < N; ++p) {
            for (int64_t c = 0; c < d; ++c) ga[p * d + c] += n.grad[c * N + p];
        }
    });
}

Var extract_grid_cells(Var a, int64_t cell) {
    check(a.shape().size() == 3, "extract_grid_cells needs {C,H,W}");
    const int64_t C = a.shape()[0], H = a.shape()[1], W = a.shape()[2];
    check(cell >= 1 && H % cell == 0 && W % cell == 0, "extract_grid_cells: dims not divisible by cell");
    const int64_t gh = H / cell, gw = W / cell, N = gh * gw, d = C * cell * cell;
    Tensor out({N, d});
    for (int64_t gy = 0; gy < gh; ++gy) {
        for (int64_t gx = 0; gx < gw; ++gx) {
            float* row = out.data() + (gy * gw + gx) * d;
            for (int64_t c = 0; c < C; ++c) {
                for (int64_t di = 0; di < cell; ++di) {
                    const float* src = a.val().data() + (c * H + gy * cell + di) * W + gx * cell;
                    float* dst = row + (c * cell + di) * cell;
                    std::copy(src, src + cell, dst);
                }
            }
        }
    }
    Node* an = a.node;
    return a.graph->make_node(std::move(out), an->requires_grad, [an, C, H, W, cell, gh, gw, d](Node& n) {
        Tensor& ga = an->grad_buf();
        for (int64_t gy = 0; gy < gh; ++gy) {
            for (int64_t gx = 0; gx < gw; ++gx) {
                const float* row = n.grad.data() + (gy * gw + gx) * d;
                for (int64_t c = 0; c < C; ++c) {
                    for (int64_t di = 0; di < cell; ++di) {
                        float* dst = ga.data() + (c * H + gy * cell + di) * W + gx * cell;
                        const float* src = row + (c * cell + di) * cell;
                        for (int64_t dj = 0; dj < cell; ++dj) dst[dj] += src[dj];
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
    check(a.graph == b.graph, "matmul: graph mismatch");
    check(a.shape().size() == 2 && b.shape().size() == 2, "matmul needs 2D operands");
    const int64_t m = trans_a ? a.shape()[1] : a.shape()[0];
    const int64_t k = trans_a ? a.shape()[0] : a.shape()[1];
    const int64_t kb = trans_b ? b.shape()[1] : b.shape()[0];
    const int64_t nn = trans_b ? b.shape()[0] : b.shape()[1];
    check(k == kb, "matmul: inner dimension mismatch");
    Tensor out({m, nn});
    gemm(a.val().data(), a.shape()[0], a.shape()[1], trans_a, b.val().data(), b.shape()[0], b.shape()[1], trans_b,
         out.data(), m, nn, false);
    Node* an = a.node;
    Node* bn = b.node;
    return a.graph->make_node(std::move(out), any_requires({a, b}), [an, bn, trans_a, trans_b, m, nn](Node& n) {
        // dA and dB follow from transposition cases of C = op(A) op(B).
        if (an->requires_grad) {
            Tensor& ga = an->grad_buf();
            if (!trans_a) {
                // dA = G op(B)^T
                gemm(n.grad.data(), m, nn, false, bn->value.data(), bn->value.shape()[0], bn->value.shape()[1],
                     !trans_b, ga.data(), ga.shape()[0], ga.shape()[1], true);
            } else {
                // dA = op(B) G^T
                gemm(bn->value.data(), bn->value.shape()[0], bn->value.shape()[1], trans_b, n.grad.data(), m, nn, true,
                     ga.data(), ga.shape()[0], ga.shape()[1], true);
            }
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_buf();
            if (!trans_b) {
                // dB = op(A)^T G
                gemm(an->value.data(), an->value.shape()[0], an->value.shape()[1], !trans_a, n.grad.data(), m, nn,
                     false, gb.data(), gb.shape()[0], gb.shape()[1], true);
            } else {
                // dB = G^T op(A)
                gemm(n.grad.data(), m, nn, true, an->value.data(), an->value.shape()[0], an->value.shape()[1], trans_a,
                     gb.data(), gb.shape()[0], gb.shape()[1], true);
            }
        }
    });
}

Var add_bias_rows(Var x, Var b) {
    check(x.graph == b.graph, "add_bias_rows: graph mismatch");
    check(x.shape().size() == 2 && b.shape().size() == 1 && x.shape()[1] == b.shape()[0],
          "add_bias_rows: incompatible shapes");
    const int64_t N = x.shape()[0], d = x.shape()[1];
    Tensor out({N, d});
    for (int64_t i = 0; i < N; ++i) {
        for (int64_t j = 0; j < d; ++j) out[i * d + j] = x.val()[i * d + j] + b.val()[j];
    }
    Node* xn = x.node;
    Node* bn = b.node;
    return x.graph->make_node(std::move(out), any_requires({x, b}), [xn, bn, N, d](Node& n) {
        if (xn->requires_grad) {
            Tensor& gx = xn->grad_buf();
            for (int64_t i = 0; i < N * d; ++i) gx[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_buf();
            for (int64_t i = 0; i < N; ++i) {
                for (int64_t j = 0; j < d; ++j) gb[j] += n.grad[i * d + j];
            }
        }
    });
}

Var linear(Var x, Var w, Var b) {
    check(x.shape().size() == 2 && w.shape().size() == 2, "linear needs 2D x and w");
    check(x.shape()[1] == w.shape()[1], "linear: in-features mismatch");
    Var y = matmul(x, w, false, true);
    if (b.defined()) y = add_bias_rows(y, b);
    return y;
}

Var add_bias_chw(Var x, Var b) {
    check(x.shape().size() == 3 && b.shape().size() == 1 && x.shape()[0] == b.shape()[0],
          "add_bias_chw: incompatible shapes");
    const int64_t C = x.shape()[0], HW = x.shape()[1] * x.shape()[2];
    Tensor out(x.shape());
    for (int64_t c = 0; c < C; ++c) {
        const float bc = b.val()[c];
        for (int64_t p = 0; p < HW; ++p) out[c * HW + p] = x.val()[c * HW + p] + bc;
    }
    Node* xn = x.node;
    Node* bn = b.node;
    return x.graph->make_node(std::move(out), any_requires({x, b}), [xn, bn, C, HW](Node& n) {
        if (xn->requires_grad) {
            Tensor& gx = xn->grad_buf();
            for (int64_t i = 0; i < C * HW; ++i) gx[i] += n.grad[i];
        }
        if (bn->requires_grad) {
            Tensor& gb = bn->grad_buf();
            for (int64_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (int64_t p = 0; p < HW; ++p) s += n.grad[c * HW + p];
                gb[c] += static_cast<float>(s);
            }
        }
    });
}

Var softmax_rows(Var x) {
    check(x.shape().size() == 2, "softmax_rows needs {N,M}");
    const int64_t N = x.shape()[0], M = x.shape()[1];
    Tensor out({N, M});
    for (int64_t i = 0; i < N; ++i) {
        const float* row = x.val().data() + i * M;
        float mx = row[0];
        for (int64_t j = 1; j < M; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        float* orow = out.data() + i * M;
        for (int64_t j = 0; j < M; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int64_t j = 0; j < M; ++j) orow[j] *= inv;
    }
    Node* xn = x.node;
    return x.graph->make_node(std::move(out), xn->requires_grad, [xn, N, M](Node& n) {
        Tensor& gx = xn->grad_buf();
        for (int64_t i = 0; i < N; ++i) {
            const float* y = n.value.data() + i * M;
            const float* g = n.grad.data() + i * M;
            double dot = 0.0;
            for (int64_t j = 0; j < M; ++j) dot += static_cast<double>(g[j]) * y[j];
            float* dst = gx.data() + i * M;
            for (int64_t j = 0; j < M; ++j) dst[j] += static_cast<float>(y[j] * (g[j] - dot));
        }
    });
}

// ---------------------------------------------------------------- normalization

Var layernorm(Var x, Var gamma, Var beta, double eps) {
    check(x.shape().size() == 2, "layernorm needs {N,d}");
    const int64_t N = x.shape()[0], d = x.shape()[1];
    check(gamma.shape() == std::vector<int64_t>{d} && beta.shape() == std::vector<int64_t>{d},
          "layernorm: affine shape mismatch");
    Tensor out({N, d});
    Tensor xhat({N, d});
    Tensor inv_std({N});
    for (int64_t i = 0; i < N; ++i) {
        const float* row = x.val().data() + i * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += row[j];
        mean /= d;
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double dv = row[j] - mean;
            var += dv * dv;
        }
        var /= d;
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[i] = static_cast<float>(istd);
        for (int64_t j = 0; j < d; ++j) {
            float xh = static_cast<float>((row[j] - mean) * istd);
            xhat[i * d + j] = xh;
            out[i * d + j] = xh * gamma.val()[j] + beta.val()[j];
        }
    }
    Node* xn = x.node;
    Node* gn = gamma.node;
    Node* bn = beta.node;
    return x.graph->make_node(std::move(out), any_requires({x, gamma, beta}),
                              [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), N, d](Node& n) {
        for (int64_t i = 0; i < N; ++i) {
            const float* g = n.grad.data() + i * d;
            const float* xh = xhat.data() + i * d;
            if (xn->requires_grad) {
                Tensor& gx = xn->grad_buf();
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    double dxh = static_cast<double>(g[j]) * gn->value[j];
                    mean_dxhat += dxh;
                    mean_dxhat_xhat += dxh * xh[j];
                }
                mean_dxhat /= d;
                mean_dxhat_xhat /= d;
                float* dst = gx.data() + i * d;
                for (int64_t j = 0; j < d; ++j) {
                    double dxh = static_cast<double>(g[j]) * gn->value[j];
                    dst[j] += static_cast<float>(inv_std[i] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat));
                }
            }
            if (gn->requires_grad) {
                Tensor& gg = gn->grad_buf();
                for (int64_t j = 0; j < d; ++j) gg[j] += g[j] * xh[j];
            }
            if (bn->requires_grad) {
                Tensor& gb = bn->grad_buf();
                for (int64_t j = 0; j < d; ++j) gb[j] += g[j];
            }
        }
    });
}

Var groupnorm(Var x, int64_t groups, Var gamma, Var beta, double eps) {
    check(x.shape().size() == 3, "groupnorm needs {C,H,W}");
    const int64_t C = x.shape()[0], HW = x.shape()[1] * x.shape()[2];
    check(C % groups == 0, "groupnorm: channels not divisible by groups");
    check(gamma.shape() == std::vector<int64_t>{C} && beta.shape() == std::vector<int64_t>{C},
          "groupnorm: affine shape mismatch");
    const int64_t cpg = C / groups;
    const int64_t gsize = cpg * HW;
    Tensor out(x.shape());
    Tensor xhat(x.shape());
    Tensor inv_std({groups});
    for (int64_t g = 0; g < groups; ++g) {
        const float* base = x.val().data() + g * gsize;
        double mean = 0.0;
        for (int64_t i = 0; i < gsize; ++i) mean += base[i];
        mean /= gsize;
        double var = 0.0;
        for (int64_t i = 0; i < gsize; ++i) {
            double dv = base[i] - mean;
            var += dv * dv;
        }
        var /= gsize;
        const double istd = 1.0 / std::sqrt(var + eps);
        inv_std[g] = static_cast<float>(istd);
        for (int64_t c = 0; c < cpg; ++c) {
            const int64_t ch = g * cpg + c;
            for (int64_t p = 0; p < HW; ++p) {
                float xh = static_cast<float>((x.val()[ch * HW + p] - mean) * istd);
                xhat[ch * HW + p] = xh;
                out[ch * HW + p] = xh * gamma.val()[ch] + beta.val()[ch];
            }
        }
    }
    Node* xn = x.node;
    Node* gn = gamma.node;
    Node* bn = beta.node;
    return x.graph->make_node(
        std::move(out), any_requires({x, gamma, beta}),
        [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), groups, cpg, HW](Node& n) {
            const int64_t gsize = cpg * HW;
            for (int64_t g = 0; g < groups; ++g) {
                if (xn->requires_grad) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (int64_t c = 0; c < cpg; ++c) {
                        const int64_t ch = g * cpg + c;
                        for (int64_t p = 0; p < HW; ++p) {
                            double dxh = static_cast<double>(n.grad[ch * HW + p]) * gn->value[ch];
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xhat[ch * HW + p];
                        }
                    }
                    mean_dxhat /= gsize;
                    mean_dxhat_xhat /= gsize;
                    Tensor& gx = xn->grad_buf();
                    for (int64_t c = 0; c < cpg; ++c) {
                        const int64_t ch = g * cpg + c;
                        for (int64_t p = 0; p < HW; ++p) {
                            double dxh = static_cast<double>(n.grad[ch * HW + p]) * gn->value[ch];
                            gx[ch * HW + p] += static_cast<float>(
                                inv_std[g] * (dxh - mean_dxhat - xhat[ch * HW + p] * mean_dxhat_xhat));
                        }
                    }
                }
                if (gn->requires_grad || bn->requires_grad) {
                    for (int64_t c = 0; c < cpg; ++c) {
                        const int64_t ch = g * cpg + c;
                        double sg = 0.0, sb = 0.0;
                        for (int64_t p = 0; p < HW; ++p) {
                            sg += static_cast<double>(n.grad[ch * HW + p]) * xhat[ch * HW + p];
                            sb += n.grad[ch * HW + p];
                        }
                        if (gn->requires_grad) gn->grad_buf()[ch] += static_cast<float>(sg);
                        if (bn->requires_grad) bn->grad_buf()[ch] += static_cast<float>(sb);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------- convolution

Var conv2d(Var x, Var w, Var b, int64_t stride, int64_t pad) {
    check(x.shape().size() == 3 && w.shape().size() == 4, "conv2d shapes");
    const int64_t Cin = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    const int64_t Cout = w.shape()[0], k = w.shape()[2];
    check(w.shape()[1] == Cin && w.shape()[3] == k, "conv2d: weight shape mismatch");
    const int64_t Ho = conv_out(H, k, stride, pad), Wo = conv_out(W, k, stride, pad);
    check(Ho >= 1 && Wo >= 1, "conv2d: empty output");

    Tensor col = im2col(x.val(), k, stride, pad);
    Tensor out({Cout, Ho, Wo});
    gemm(w.val().data(), Cout, Cin * k * k, false, col.data(), Cin * k * k, Ho * Wo, false, out.data(), Cout, Ho * Wo,
         false);
    if (b.defined()) {
        for (int64_t o = 0; o < Cout; ++o) {
            const float bo = b.val()[o];
            for (int64_t p = 0; p < Ho * Wo; ++p) out[o * Ho * Wo + p] += bo;
        }
    }

    Node* xn = x.node;
    Node* wn = w.node;
    Node* bn = b.defined() ? b.node : nullptr;
    const bool req = x.node->requires_grad || w.node->requires_grad || (bn && bn->requires_grad);
    return x.graph->make_node(std::move(out), req,
                              [xn, wn, bn, col = std::move(col), Cin, H, W, Cout, k, stride, pad, Ho, Wo](Node& n) {
        if (wn->requires_grad) {
            gemm(n.grad.data(), Cout, Ho * Wo, false, col.data(), Cin * k * k, Ho * Wo, true,
                 wn->grad_buf().data(), Cout, Cin * k * k, true);
        }
        if (bn && bn->requires_grad) {
            Tensor& gb = bn->grad_buf();
            for (int64_t o = 0; o < Cout; ++o) {
                double s = 0.0;
                for (int64_t p = 0; p < Ho * Wo; ++p) s += n.grad[o * Ho * Wo + p];
                gb[o] += static_cast<float>(s);
            }
        }
        if (xn->requires_grad) {
            Tensor dcol({Cin * k * k, Ho * Wo});
            gemm(wn->value.data(), Cout, Cin * k * k, true, n.grad.data(), Cout, Ho * Wo, false, dcol.data(),
                 Cin * k * k, Ho * Wo, false);
            col2im_accum(dcol, k, stride, pad, xn->grad_buf());
        }
    });
}

Var conv_transpose2d(Var x, Var w, Var b, int64_t stride, int64_t pad) {
    check(x.shape().size() == 3 && w.shape().size() == 4, "conv_transpose2d shapes");
    const int64_t Cin = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    check(w.shape()[0] == Cin, "conv_transpose2d: weight Cin mismatch");
    const int64_t Cout = w.shape()[1], k = w.shape()[2];
    check(w.shape()[3] == k, "conv_transpose2d: weight not square");
    const int64_t Ho = (H - 1) * stride - 2 * pad + k;
    const int64_t Wo = (W - 1) * stride - 2 * pad + k;
    check(Ho >= 1 && Wo >= 1, "conv_transpose2d: empty output");

    // cols[(Cout*k*k), (H*W)] = W^T * X, then scatter-add into the output.
    Tensor cols({Cout * k * k, H * W});
    gemm(w.val().data(), Cin, Cout * k * k, true, x.val().data(), Cin, H * W, false, cols.data(), Cout * k * k, H * W,
         false);
    Tensor out({Cout, Ho, Wo});
    col2im_accum(cols, k, stride, pad, out);
    if (b.defined()) {
        for (int64_t o = 0; o < Cout; ++o) {
            const float bo = b.val()[o];
            for (int64_t p = 0; p < Ho * Wo; ++p) out[o * Ho * Wo + p] += bo;
        }
    }

    Node* xn = x.node;
    Node* wn = w.node;
    Node* bn = b.defined() ? b.node : nullptr;
    const bool req = x.node->requires_grad || w.node->requires_grad || (bn && bn->requires_grad);
    return x.graph->make_node(std::move(out), req,
                              [xn, wn, bn, Cin, H, W, Cout, k, stride, pad, Ho, Wo](Node& n) {
        Tensor gcols = im2col(n.grad, k, stride, pad); // [(Cout*k*k), (H*W)]
        if (xn->requires_grad) {
            gemm(wn->value.data(), Cin, Cout * k * k, false, gcols.data(), Cout * k * k, H * W, false,
                 xn->grad_buf().data(), Cin, H * W, true);
        }
        if (wn->requires_grad) {
            gemm(xn->value.data(), Cin, H * W, false, gcols.data(), Cout * k * k, H * W, true, wn->grad_buf().data(),
                 Cin, Cout * k * k, true);
        }
        if (bn && bn->requires_grad) {
            Tensor& gb = bn->grad_buf();
            for (int64_t o = 0; o < Cout; ++o) {
                double s = 0.0;
                for (int64_t p = 0; p < Ho * Wo; ++p) s += n.grad[o * Ho * Wo + p];
                gb[o] += static_cast<float>(s);
            }
        }
    });
}

Var upsample_nearest2x(Var x) {
    check(x.shape().size() == 3, "upsample_nearest2x needs {C,H,W}");
    const int64_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    Tensor out({C, 2 * H, 2 * W});
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t i = 0; i < 2 * H; ++i) {
            const float* src = x.val().data() + (c * H + i / 2) * W;
            float* dst = out.data() + (c * 2 * H + i) * 2 * W;
            for (int64_t j = 0; j < 2 * W; ++j) dst[j] = src[j / 2];
        }
    }
    Node* xn = x.node;
    return x.graph->make_node(std::move(out), xn->requires_grad, [xn, C, H, W](Node& n) {
        Tensor& gx = xn->grad_buf();
        for (int64_t c = 0; c < C; ++c) {
            for (int64_t i = 0; i < 2 * H; ++i) {
                float* dst = gx.data() + (c * H + i / 2) * W;
                const float* src = n.grad.data() + (c * 2 * H + i) * 2 * W;
                for (int64_t j = 0; j < 2 * W; ++j) dst[j / 2] += src[j];
            }
        }
    });
}

// ---------------------------------------------------------------- reductions

Var mean_all(Var x) {
    const int64_t n = x.numel();
    Tensor out({1});
    out[0] = static_cast<float>(x.val().sum() / static_cast<double>(n));
    Node* xn = x.node;
    return x.graph->make_node(std::move(out), xn->requires_grad, [xn, n](Node& nd) {
        Tensor& gx = xn->grad_buf();
        const float g = nd.grad[0] / static_cast<float>(n);
        for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
}

Var masked_l1(Var pred, const Tensor& target, const Tensor& mask) {
    check(pred.val().same_shape(target) && pred.val().same_shape(mask), "masked_l1: shape mismatch");
    double msum = mask.sum();
    check(msum > 0.0, "masked_l1: empty mask");
    double acc = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (mask[i] != 0.0f) acc += std::fabs(static_cast<double>(pred.val()[i]) - target[i]);
    }
    Tensor out({1});
    out[0] = static_cast<float>(acc / msum);
    Node* pn = pred.node;
    Tensor tgt = target;
    Tensor msk = mask;
    return pred.graph->make_node(std::move(out), pn->requires_grad,
                                 [pn, tgt = std::move(tgt), msk = std::move(msk), msum](Node& n) {
        Tensor& gp = pn->grad_buf();
        const float g = n.grad[0] / static_cast<float>(msum);
        for (int64_t i = 0; i < gp.numel(); ++i) {
            if (msk[i] != 0.0f) {
                float r = pn->value[i] - tgt[i];
                gp[i] += r > 0.0f ? g : (r < 0.0f ? -g : 0.0f);
            }
        }
    });
}

} // namespace maediff::ag
