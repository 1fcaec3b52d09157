#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cadis/kernels.hpp"
#include "cadis/tensor.hpp"

// Minimal reverse-mode autograd over Tensor. Graphs are built per forward
// pass; backward() runs a reverse topological sweep. Gradients accumulate
// only into nodes on a path to a leaf with requires_grad set, so frozen
// networks report exactly-zero parameter gradients.

namespace cadis::ag {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;  // leaf parameter flag
    bool needs = false;          // on a path to a trainable leaf
    std::vector<Var> parents;
    std::function<void(Node&)> backfn;

    void ensure_grad() {
        if (!has_grad) {
            grad = Tensor::zeros(value.shape);
            has_grad = true;
        }
    }
};

inline Var leaf(Tensor v, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    n->needs = requires_grad;
    return n;
}

inline Var constant(Tensor v) { return leaf(std::move(v), false); }

inline Var detach(const Var& x) { return leaf(x->value, false); }

inline Var make(Tensor val, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(val);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->needs) n->needs = true;
    if (n->needs) n->backfn = std::move(fn);
    return n;
}

// ---- backward driver ----

inline void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    // Iterative topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->needs && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backfn && n->has_grad) n->backfn(*n);
    }
}

inline void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params) {
        p->has_grad = false;
        p->grad = Tensor();
    }
}

namespace detail {
inline void accum(const Var& p, const double* delta, std::size_t n) {
    if (!p->needs) return;
    p->ensure_grad();
    kernels::axpy(1.0, delta, p->grad.data.data(), n);
}
}  // namespace detail

// ---- elementwise ----

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out(a->value.shape);
    kernels::add(a->value.data.data(), b->value.data.data(), out.data.data(), out.numel());
    return make(std::move(out), {a, b}, [](Node& n) {
        detail::accum(n.parents[0], n.grad.data.data(), n.grad.numel());
        detail::accum(n.parents[1], n.grad.data.data(), n.grad.numel());
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out(a->value.shape);
    kernels::sub(a->value.data.data(), b->value.data.data(), out.data.data(), out.numel());
    return make(std::move(out), {a, b}, [](Node& n) {
        detail::accum(n.parents[0], n.grad.data.data(), n.grad.numel());
        auto& p = n.parents[1];
        if (p->needs) {
            p->ensure_grad();
            kernels::axpy(-1.0, n.grad.data.data(), p->grad.data.data(), n.grad.numel());
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out(a->value.shape);
    kernels::mul(a->value.data.data(), b->value.data.data(), out.data.data(), out.numel());
    return make(std::move(out), {a, b}, [](Node& n) {
        std::size_t m = n.grad.numel();
        std::vector<double> tmp(m);
        if (n.parents[0]->needs) {
            kernels::mul(n.grad.data.data(), n.parents[1]->value.data.data(), tmp.data(), m);
            detail::accum(n.parents[0], tmp.data(), m);
        }
        if (n.parents[1]->needs) {
            kernels::mul(n.grad.data.data(), n.parents[0]->value.data.data(), tmp.data(), m);
            detail::accum(n.parents[1], tmp.data(), m);
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out(a->value.shape);
    kernels::scale(a->value.data.data(), s, out.data.data(), out.numel());
    return make(std::move(out), {a}, [s](Node& n) {
        auto& p = n.parents[0];
        if (p->needs) {
            p->ensure_grad();
            kernels::axpy(s, n.grad.data.data(), p->grad.data.data(), n.grad.numel());
        }
    });
}

// out = s * x with s a trainable scalar (shape {1}).
inline Var scale_var(const Var& x, const Var& s) {
    if (s->value.numel() != 1) throw std::invalid_argument("scale_var: s must be scalar");
    double sv = s->value.data[0];
    Tensor out(x->value.shape);
    kernels::scale(x->value.data.data(), sv, out.data.data(), out.numel());
    return make(std::move(out), {x, s}, [sv](Node& n) {
        std::size_t m = n.grad.numel();
        auto& px = n.parents[0];
        auto& ps = n.parents[1];
        if (px->needs) {
            px->ensure_grad();
            kernels::axpy(sv, n.grad.data.data(), px->grad.data.data(), m);
        }
        if (ps->needs) {
            ps->ensure_grad();
            ps->grad.data[0] += kernels::dot(px->value.data.data(), n.grad.data.data(), m);
        }
    });
}

template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
    Tensor out(a->value.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = f(a->value.data[i]);
    return make(std::move(out), {a}, [df](Node& n) {
        auto& p = n.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (std::size_t i = 0; i < n.grad.numel(); ++i)
            p->grad.data[i] += df(p->value.data[i], n.value.data[i]) * n.grad.data[i];
    });
}

inline Var relu(const Var& a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; },
                 [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(const Var& a, double slope = 0.2) {
    return unary(a, [slope](double x) { return x > 0 ? x : slope * x; },
                 [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

inline Var sigmoid(const Var& a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh_op(const Var& a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

inline Var softplus(const Var& a) {
    return unary(a,
                 [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
                 [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

// ---- dense ----

// x: (N, in), w: (out, in), b: (out) -> (N, out)
inline Var linear(const Var& x, const Var& w, const Var& b) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1])
        throw std::invalid_argument("linear: dimension mismatch");
    int N = static_cast<int>(xs[0]), in = static_cast<int>(xs[1]), out_dim = static_cast<int>(ws[0]);
    if (b->value.numel() != static_cast<std::size_t>(out_dim))
        throw std::invalid_argument("linear: bias size mismatch");
    Tensor out({N, out_dim});
    kernels::gemm(false, true, N, out_dim, in, 1.0, x->value.data.data(), in,
                  w->value.data.data(), in, 0.0, out.data.data(), out_dim);
    for (int i = 0; i < N; ++i)
        kernels::add(out.data.data() + static_cast<std::size_t>(i) * out_dim,
                     b->value.data.data(), out.data.data() + static_cast<std::size_t>(i) * out_dim,
                     static_cast<std::size_t>(out_dim));
    return make(std::move(out), {x, w, b}, [N, in, out_dim](Node& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        auto& pb = n.parents[2];
        const double* g = n.grad.data.data();
        if (px->needs) {
            px->ensure_grad();
            kernels::gemm(false, false, N, in, out_dim, 1.0, g, out_dim,
                          pw->value.data.data(), in, 1.0, px->grad.data.data(), in);
        }
        if (pw->needs) {
            pw->ensure_grad();
            kernels::gemm(true, false, out_dim, in, N, 1.0, g, out_dim,
                          px->value.data.data(), in, 1.0, pw->grad.data.data(), in);
        }
        if (pb->needs) {
            pb->ensure_grad();
            for (int i = 0; i < N; ++i)
                kernels::axpy(1.0, g + static_cast<std::size_t>(i) * out_dim,
                              pb->grad.data.data(), static_cast<std::size_t>(out_dim));
        }
    });
}

// ---- convolution ----

namespace detail {

inline void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad,
                   int Ho, int Wo, double* col) {
    // col is (C*kh*kw) x (Ho*Wo)
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                double* row = col + static_cast<std::size_t>((c * kh + ky) * kw + kx) * Ho * Wo;
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride + ky - pad;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride + kx - pad;
                        row[oy * Wo + ox] =
                            (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                ? x[static_cast<std::size_t>((c * H + iy) * W + ix)]
                                : 0.0;
                    }
                }
            }
}

inline void col2im(const double* col, int C, int H, int W, int kh, int kw, int stride, int pad,
                   int Ho, int Wo, double* x) {
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const double* row = col + static_cast<std::size_t>((c * kh + ky) * kw + kx) * Ho * Wo;
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        x[static_cast<std::size_t>((c * H + iy) * W + ix)] += row[oy * Wo + ox];
                    }
                }
            }
}

}  // namespace detail

// x: (B, C, H, W), w: (O, C, kh, kw), b: (O)
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int pad = 1) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
        throw std::invalid_argument("conv2d: shape mismatch");
    int B = static_cast<int>(xs[0]), C = static_cast<int>(xs[1]);
    int H = static_cast<int>(xs[2]), W = static_cast<int>(xs[3]);
    int O = static_cast<int>(ws[0]), kh = static_cast<int>(ws[2]), kw = static_cast<int>(ws[3]);
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: output collapses");
    int K = C * kh * kw, HW = Ho * Wo;

    Tensor out({B, O, Ho, Wo});
    std::vector<double> col(static_cast<std::size_t>(K) * HW);
    for (int bi = 0; bi < B; ++bi) {
        detail::im2col(x->value.data.data() + static_cast<std::size_t>(bi) * C * H * W, C, H, W,
                       kh, kw, stride, pad, Ho, Wo, col.data());
        double* ob = out.data.data() + static_cast<std::size_t>(bi) * O * HW;
        kernels::gemm(false, false, O, HW, K, 1.0, w->value.data.data(), K, col.data(), HW, 0.0,
                      ob, HW);
        for (int o = 0; o < O; ++o) {
            double bias = b->value.data[static_cast<std::size_t>(o)];
            double* r = ob + static_cast<std::size_t>(o) * HW;
            for (int i = 0; i < HW; ++i) r[i] += bias;
        }
    }
    return make(std::move(out), {x, w, b},
                [B, C, H, W, O, kh, kw, stride, pad, Ho, Wo, K, HW](Node& n) {
                    auto& px = n.parents[0];
                    auto& pw = n.parents[1];
                    auto& pb = n.parents[2];
                    std::vector<double> col(static_cast<std::size_t>(K) * HW);
                    std::vector<double> dcol(static_cast<std::size_t>(K) * HW);
                    if (px->needs) px->ensure_grad();
                    if (pw->needs) pw->ensure_grad();
                    if (pb->needs) pb->ensure_grad();
                    for (int bi = 0; bi < B; ++bi) {
                        const double* g = n.grad.data.data() + static_cast<std::size_t>(bi) * O * HW;
                        if (pw->needs || px->needs)
                            detail::im2col(
                                px->value.data.data() + static_cast<std::size_t>(bi) * C * H * W,
                                C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
                        if (pw->needs)
                            kernels::gemm(false, true, O, K, HW, 1.0, g, HW, col.data(), HW, 1.0,
                                          pw->grad.data.data(), K);
                        if (pb->needs)
                            for (int o = 0; o < O; ++o)
                                pb->grad.data[static_cast<std::size_t>(o)] +=
                                    kernels::sum(g + static_cast<std::size_t>(o) * HW,
                                                 static_cast<std::size_t>(HW));
                        if (px->needs) {
                            kernels::gemm(true, false, K, HW, O, 1.0, pw->value.data.data(), K, g,
                                          HW, 0.0, dcol.data(), HW);
                            detail::col2im(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                           px->grad.data.data() +
                                               static_cast<std::size_t>(bi) * C * H * W);
                        }
                    }
                });
}

// ---- spatial / broadcast ----

// (B, C, H, W) -> (B, C) global average pool.
inline Var gap(const Var& x) {
    const auto& s = x->value.shape;
    if (s.size() != 4) throw std::invalid_argument("gap: expects 4-D input");
    int B = static_cast<int>(s[0]), C = static_cast<int>(s[1]);
    int HW = static_cast<int>(s[2] * s[3]);
    Tensor out({B, C});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            out.data[static_cast<std::size_t>(b * C + c)] =
                kernels::sum(x->value.data.data() + (static_cast<std::size_t>(b) * C + c) * HW,
                             static_cast<std::size_t>(HW)) /
                HW;
    return make(std::move(out), {x}, [B, C, HW](Node& n) {
        auto& p = n.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                double g = n.grad.data[static_cast<std::size_t>(b * C + c)] / HW;
                double* dst = p->grad.data.data() + (static_cast<std::size_t>(b) * C + c) * HW;
                for (int i = 0; i < HW; ++i) dst[i] += g;
            }
    });
}

// FiLM: (1 + gamma) * F + beta, gamma/beta shape (B, C), F shape (B, C, H, W).
inline Var film(const Var& f, const Var& gamma, const Var& beta) {
    const auto& s = f->value.shape;
    if (s.size() != 4) throw std::invalid_argument("film: expects 4-D feature");
    int B = static_cast<int>(s[0]), C = static_cast<int>(s[1]);
    int HW = static_cast<int>(s[2] * s[3]);
    if (gamma->value.shape != std::vector<std::int64_t>{B, C} ||
        beta->value.shape != std::vector<std::int64_t>{B, C})
        throw std::invalid_argument("film: conditioning shape mismatch");
    Tensor out(s);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double g = 1.0 + gamma->value.data[static_cast<std::size_t>(b * C + c)];
            double bt = beta->value.data[static_cast<std::size_t>(b * C + c)];
            const double* src = f->value.data.data() + (static_cast<std::size_t>(b) * C + c) * HW;
            double* dst = out.data.data() + (static_cast<std::size_t>(b) * C + c) * HW;
            for (int i = 0; i < HW; ++i) dst[i] = g * src[i] + bt;
        }
    return make(std::move(out), {f, gamma, beta}, [B, C, HW](Node& n) {
        auto& pf = n.parents[0];
        auto& pg = n.parents[1];
        auto& pb = n.parents[2];
        if (pf->needs) pf->ensure_grad();
        if (pg->needs) pg->ensure_grad();
        if (pb->needs) pb->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                std::size_t off = (static_cast<std::size_t>(b) * C + c) * HW;
                const double* g = n.grad.data.data() + off;
                if (pf->needs) {
                    double gm = 1.0 + pg->value.data[static_cast<std::size_t>(b * C + c)];
                    kernels::axpy(gm, g, pf->grad.data.data() + off, static_cast<std::size_t>(HW));
                }
                if (pg->needs)
                    pg->grad.data[static_cast<std::size_t>(b * C + c)] +=
                        kernels::dot(g, pf->value.data.data() + off, static_cast<std::size_t>(HW));
                if (pb->needs)
                    pb->grad.data[static_cast<std::size_t>(b * C + c)] +=
                        kernels::sum(g, static_cast<std::size_t>(HW));
            }
    });
}

// out[b,c,:,:] = x[b,c,:,:] * s[b,c]
inline Var channel_scale(const Var& x, const Var& s) {
    const auto& xs = x->value.shape;
    if (xs.size() != 4) throw std::invalid_argument("channel_scale: expects 4-D input");
    int B = static_cast<int>(xs[0]), C = static_cast<int>(xs[1]);
    int HW = static_cast<int>(xs[2] * xs[3]);
    if (s->value.shape != std::vector<std::int64_t>{B, C})
        throw std::invalid_argument("channel_scale: scale shape mismatch");
    Tensor out(xs);
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            std::size_t off = (static_cast<std::size_t>(b) * C + c) * HW;
            kernels::scale(x->value.data.data() + off,
                           s->value.data[static_cast<std::size_t>(b * C + c)],
                           out.data.data() + off, static_cast<std::size_t>(HW));
        }
    return make(std::move(out), {x, s}, [B, C, HW](Node& n) {
        auto& px = n.parents[0];
        auto& ps = n.parents[1];
        if (px->needs) px->ensure_grad();
        if (ps->needs) ps->ensure_grad();
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c) {
                std::size_t off = (static_cast<std::size_t>(b) * C + c) * HW;
                const double* g = n.grad.data.data() + off;
                if (px->needs)
                    kernels::axpy(ps->value.data[static_cast<std::size_t>(b * C + c)], g,
                                  px->grad.data.data() + off, static_cast<std::size_t>(HW));
                if (ps->needs)
                    ps->grad.data[static_cast<std::size_t>(b * C + c)] +=
                        kernels::dot(g, px->value.data.data() + off, static_cast<std::size_t>(HW));
            }
    });
}

// out[b,c] = m[b,c] * s[c] (broadcast a per-channel vector over the batch)
inline Var row_scale(const Var& m, const Var& s) {
    const auto& ms = m->value.shape;
    if (ms.size() != 2) throw std::invalid_argument("row_scale: expects 2-D input");
    int B = static_cast<int>(ms[0]), C = static_cast<int>(ms[1]);
    if (s->value.numel() != static_cast<std::size_t>(C))
        throw std::invalid_argument("row_scale: vector length mismatch");
    Tensor out(ms);
    for (int b = 0; b < B; ++b)
        kernels::mul(m->value.data.data() + static_cast<std::size_t>(b) * C,
                     s->value.data.data(), out.data.data() + static_cast<std::size_t>(b) * C,
                     static_cast<std::size_t>(C));
    return make(std::move(out), {m, s}, [B, C](Node& n) {
        auto& pm = n.parents[0];
        auto& ps = n.parents[1];
        std::vector<double> tmp(static_cast<std::size_t>(C));
        if (pm->needs) pm->ensure_grad();
        if (ps->needs) ps->ensure_grad();
        for (int b = 0; b < B; ++b) {
            const double* g = n.grad.data.data() + static_cast<std::size_t>(b) * C;
            if (pm->needs) {
                kernels::mul(g, ps->value.data.data(), tmp.data(), static_cast<std::size_t>(C));
                kernels::axpy(1.0, tmp.data(),
                              pm->grad.data.data() + static_cast<std::size_t>(b) * C,
                              static_cast<std::size_t>(C));
            }
            if (ps->needs) {
                kernels::mul(g, pm->value.data.data() + static_cast<std::size_t>(b) * C,
                             tmp.data(), static_cast<std::size_t>(C));
                kernels::axpy(1.0, tmp.data(), ps->grad.data.data(),
                              static_cast<std::size_t>(C));
            }
        }
    });
}

inline Var upsample_nearest2(const Var& x) {
    const auto& s = x->value.shape;
    if (s.size() != 4) throw std::invalid_argument("upsample: expects 4-D input");
    int B = static_cast<int>(s[0]), C = static_cast<int>(s[1]);
    int H = static_cast<int>(s[2]), W = static_cast<int>(s[3]);
    Tensor out({B, C, 2 * H, 2 * W});
    for (int bc = 0; bc < B * C; ++bc) {
        const double* src = x->value.data.data() + static_cast<std::size_t>(bc) * H * W;
        double* dst = out.data.data() + static_cast<std::size_t>(bc) * 4 * H * W;
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                double v = src[y * W + xx];
                dst[(2 * y) * 2 * W + 2 * xx] = v;
                dst[(2 * y) * 2 * W + 2 * xx + 1] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xx] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xx + 1] = v;
            }
    }
    return make(std::move(out), {x}, [B, C, H, W](Node& n) {
        auto& p = n.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        for (int bc = 0; bc < B * C; ++bc) {
            double* dst = p->grad.data.data() + static_cast<std::size_t>(bc) * H * W;
            const double* g = n.grad.data.data() + static_cast<std::size_t>(bc) * 4 * H * W;
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                    dst[y * W + xx] += g[(2 * y) * 2 * W + 2 * xx] +
                                       g[(2 * y) * 2 * W + 2 * xx + 1] +
                                       g[(2 * y + 1) * 2 * W + 2 * xx] +
                                       g[(2 * y + 1) * 2 * W + 2 * xx + 1];
        }
    });
}

inline Var concat_channels(const Var& a, const Var& b) {
    const auto& as = a->value.shape;
    const auto& bs = b->value.shape;
    if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
        throw std::invalid_argument("concat_channels: shape mismatch");
    int B = static_cast<int>(as[0]), Ca = static_cast<int>(as[1]), Cb = static_cast<int>(bs[1]);
    int HW = static_cast<int>(as[2] * as[3]);
    Tensor out({B, Ca + Cb, as[2], as[3]});
    for (int bi = 0; bi < B; ++bi) {
        std::copy_n(a->value.data.data() + static_cast<std::size_t>(bi) * Ca * HW,
                    static_cast<std::size_t>(Ca) * HW,
                    out.data.data() + static_cast<std::size_t>(bi) * (Ca + Cb) * HW);
        std::copy_n(b->value.data.data() + static_cast<std::size_t>(bi) * Cb * HW,
                    static_cast<std::size_t>(Cb) * HW,
                    out.data.data() + static_cast<std::size_t>(bi) * (Ca + Cb) * HW +
                        static_cast<std::size_t>(Ca) * HW);
    }
    return make(std::move(out), {a, b}, [B, Ca, Cb, HW](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->needs) pa->ensure_grad();
        if (pb->needs) pb->ensure_grad();
        for (int bi = 0; bi < B; ++bi) {
            const double* g = n.grad.data.data() + static_cast<std::size_t>(bi) * (Ca + Cb) * HW;
            if (pa->needs)
                kernels::axpy(1.0, g, pa->grad.data.data() + static_cast<std::size_t>(bi) * Ca * HW,
                              static_cast<std::size_t>(Ca) * HW);
            if (pb->needs)
                kernels::axpy(1.0, g + static_cast<std::size_t>(Ca) * HW,
                              pb->grad.data.data() + static_cast<std::size_t>(bi) * Cb * HW,
                              static_cast<std::size_t>(Cb) * HW);
        }
    });
}

// ---- reductions ----

inline Var mean_all(const Var& x) {
    std::size_t m = x->value.numel();
    Tensor out = Tensor::scalar(kernels::sum(x->value.data.data(), m) / static_cast<double>(m));
    return make(std::move(out), {x}, [m](Node& n) {
        auto& p = n.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        double g = n.grad.data[0] / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) p->grad.data[i] += g;
    });
}

inline Var sum_all(const Var& x) {
    std::size_t m = x->value.numel();
    Tensor out = Tensor::scalar(kernels::sum(x->value.data.data(), m));
    return make(std::move(out), {x}, [m](Node& n) {
        auto& p = n.parents[0];
        if (!p->needs) return;
        p->ensure_grad();
        kernels::axpy(n.grad.data[0], std::vector<double>(m, 1.0).data(), p->grad.data.data(), m);
    });
}

// Mean squared error over every element.
inline Var mse(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "mse");
    std::size_t m = a->value.numel();
    std::vector<double> diff(m);
    kernels::sub(a->value.data.data(), b->value.data.data(), diff.data(), m);
    Tensor out = Tensor::scalar(kernels::sumsq(diff.data(), m) / static_cast<double>(m));
    return make(std::move(out), {a, b}, [m](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        std::vector<double> diff(m);
        kernels::sub(pa->value.data.data(), pb->value.data.data(), diff.data(), m);
        double g = 2.0 * n.grad.data[0] / static_cast<double>(m);
        if (pa->needs) {
            pa->ensure_grad();
            kernels::axpy(g, diff.data(), pa->grad.data.data(), m);
        }
        if (pb->needs) {
            pb->ensure_grad();
            kernels::axpy(-g, diff.data(), pb->grad.data.data(), m);
        }
    });
}

}  // namespace cadis::ag
