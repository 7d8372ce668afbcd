#include "fsfg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace fsfg::ad {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

static Var make_node(std::vector<std::size_t> shape, Eigen::ArrayXd data, bool req) {
    if (shape_numel(shape) != static_cast<std::size_t>(data.size()))
        throw std::invalid_argument("ad: shape does not match data size");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = req;
    return n;
}

Var leaf(std::vector<std::size_t> shape, Eigen::ArrayXd data) {
    return make_node(std::move(shape), std::move(data), true);
}

Var constant(std::vector<std::size_t> shape, Eigen::ArrayXd data) {
    return make_node(std::move(shape), std::move(data), false);
}

static Var result(std::vector<std::size_t> shape, Eigen::ArrayXd data,
                  std::vector<Var> parents, std::function<void(Node&)> backprop) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    auto n = make_node(std::move(shape), std::move(data), req);
    if (req) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

void backward(const Var& root) {
    if (root->size() != 1) throw std::invalid_argument("ad: backward needs a scalar root");
    // topological order via iterative DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) n->grad = Eigen::ArrayXd::Zero(n->value.size());
    root->grad(0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---- elementwise ----

static void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->shape != b->shape)
        throw std::invalid_argument(std::string("ad: shape mismatch in ") + op);
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return result(a->shape, a->value + b->value, {a, b}, [](Node& n) {
        for (auto& p : n.parents)
            if (p->requires_grad) { p->ensure_grad(); p->grad += n.grad; }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return result(a->shape, a->value - b->value, {a, b}, [](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad; }
        if (b->requires_grad) { b->ensure_grad(); b->grad -= n.grad; }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return result(a->shape, a->value * b->value, {a, b}, [](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad * b->value; }
        if (b->requires_grad) { b->ensure_grad(); b->grad += n.grad * a->value; }
    });
}

Var scale(const Var& a, double s) {
    return result(a->shape, a->value * s, {a}, [s](Node& n) {
        auto& a = n.parents[0];
        if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad * s; }
    });
}

Var add_scalar(const Var& a, double s) {
    return result(a->shape, a->value + s, {a}, [](Node& n) {
        auto& a = n.parents[0];
        if (a->requires_grad) { a->ensure_grad(); a->grad += n.grad; }
    });
}

Var average(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("ad: average of empty list");
    Eigen::ArrayXd acc = xs[0]->value;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        check_same_shape(xs[0], xs[i], "average");
        acc += xs[i]->value;
    }
    const double inv = 1.0 / static_cast<double>(xs.size());
    return result(xs[0]->shape, acc * inv, xs, [inv](Node& n) {
        for (auto& p : n.parents)
            if (p->requires_grad) { p->ensure_grad(); p->grad += n.grad * inv; }
    });
}

// ---- shape ----

Var reshape(const Var& x, std::vector<std::size_t> new_shape) {
    if (shape_numel(new_shape) != x->size())
        throw std::invalid_argument("ad: reshape changes element count");
    return result(std::move(new_shape), x->value, {x}, [](Node& n) {
        auto& x = n.parents[0];
        if (x->requires_grad) { x->ensure_grad(); x->grad += n.grad; }
    });
}

Var chw_to_rows(const Var& x) {
    if (x->shape.size() != 3) throw std::invalid_argument("ad: chw_to_rows needs (c,h,w)");
    const std::size_t c = x->shape[0], hw = x->shape[1] * x->shape[2];
    Eigen::ArrayXd out(c * hw);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t r = 0; r < hw; ++r) out(r * c + k) = x->value(k * hw + r);
    return result({hw, c}, std::move(out), {x}, [c, hw](Node& n) {
        auto& x = n.parents[0];
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t r = 0; r < hw; ++r) x->grad(k * hw + r) += n.grad(r * c + k);
    });
}

// ---- conv / pooling / norm ----

namespace {

struct ConvDims {
    int C, H, W, O, K, stride, pad, oh, ow;
};

void im2col(const Eigen::ArrayXd& x, const ConvDims& d, MatRM& cols) {
    cols.setZero(d.C * d.K * d.K, d.oh * d.ow);
    for (int c = 0; c < d.C; ++c)
        for (int ki = 0; ki < d.K; ++ki)
            for (int kj = 0; kj < d.K; ++kj) {
                const int row = (c * d.K + ki) * d.K + kj;
                for (int oi = 0; oi < d.oh; ++oi) {
                    const int ii = oi * d.stride + ki - d.pad;
                    if (ii < 0 || ii >= d.H) continue;
                    for (int oj = 0; oj < d.ow; ++oj) {
                        const int jj = oj * d.stride + kj - d.pad;
                        if (jj < 0 || jj >= d.W) continue;
                        cols(row, oi * d.ow + oj) = x((c * d.H + ii) * d.W + jj);
                    }
                }
            }
}

void col2im_accum(const MatRM& cols, const ConvDims& d, Eigen::ArrayXd& gx) {
    for (int c = 0; c < d.C; ++c)
        for (int ki = 0; ki < d.K; ++ki)
            for (int kj = 0; kj < d.K; ++kj) {
                const int row = (c * d.K + ki) * d.K + kj;
                for (int oi = 0; oi < d.oh; ++oi) {
                    const int ii = oi * d.stride + ki - d.pad;
                    if (ii < 0 || ii >= d.H) continue;
                    for (int oj = 0; oj < d.ow; ++oj) {
                        const int jj = oj * d.stride + kj - d.pad;
                        if (jj < 0 || jj >= d.W) continue;
                        gx((c * d.H + ii) * d.W + jj) += cols(row, oi * d.ow + oj);
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    if (x->shape.size() != 3 || w->shape.size() != 4 || b->shape.size() != 1)
        throw std::invalid_argument("ad: conv2d expects x(C,H,W), w(O,C,k,k), b(O)");
    ConvDims d;
    d.C = static_cast<int>(x->shape[0]);
    d.H = static_cast<int>(x->shape[1]);
    d.W = static_cast<int>(x->shape[2]);
    d.O = static_cast<int>(w->shape[0]);
    d.K = static_cast<int>(w->shape[2]);
    d.stride = stride;
    d.pad = pad;
    if (w->shape[1] != x->shape[0] || w->shape[3] != w->shape[2] || b->shape[0] != w->shape[0])
        throw std::invalid_argument("ad: conv2d weight/bias dims inconsistent");
    d.oh = (d.H + 2 * pad - d.K) / stride + 1;
    d.ow = (d.W + 2 * pad - d.K) / stride + 1;
    if (d.oh <= 0 || d.ow <= 0) throw std::invalid_argument("ad: conv2d output is empty");

    MatRM cols;
    im2col(x->value, d, cols);
    CMapM wm(w->value.data(), d.O, d.C * d.K * d.K);
    MatRM y = wm * cols;
    y.colwise() += Eigen::Map<const Eigen::VectorXd>(b->value.data(), d.O);
    Eigen::ArrayXd out = Eigen::Map<Eigen::ArrayXd>(y.data(), y.size());

    return result({static_cast<std::size_t>(d.O), static_cast<std::size_t>(d.oh),
                   static_cast<std::size_t>(d.ow)},
                  std::move(out), {x, w, b}, [d](Node& n) {
        auto& x = n.parents[0];
        auto& w = n.parents[1];
        auto& b = n.parents[2];
        CMapM gy(n.grad.data(), d.O, d.oh * d.ow);
        if (b->requires_grad) {
            b->ensure_grad();
            Eigen::Map<Eigen::VectorXd>(b->grad.data(), d.O) += gy.rowwise().sum();
        }
        if (w->requires_grad || x->requires_grad) {
            MatRM cols;
            im2col(x->value, d, cols);
            if (w->requires_grad) {
                w->ensure_grad();
                MapM gw(w->grad.data(), d.O, d.C * d.K * d.K);
                gw += gy * cols.transpose();
            }
            if (x->requires_grad) {
                x->ensure_grad();
                CMapM wm(w->value.data(), d.O, d.C * d.K * d.K);
                MatRM gcols = wm.transpose() * gy;
                col2im_accum(gcols, d, x->grad);
            }
        }
    });
}

Var relu(const Var& x) {
    return result(x->shape, x->value.max(0.0), {x}, [](Node& n) {
        auto& x = n.parents[0];
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad += n.grad * (x->value > 0.0).cast<double>();
    });
}

Var maxpool2(const Var& x) {
    if (x->shape.size() != 3) throw std::invalid_argument("ad: maxpool2 needs (c,h,w)");
    const int C = static_cast<int>(x->shape[0]);
    const int H = static_cast<int>(x->shape[1]);
    const int W = static_cast<int>(x->shape[2]);
    const int oh = H / 2, ow = W / 2;
    if (oh == 0 || ow == 0) throw std::invalid_argument("ad: maxpool2 output is empty");
    Eigen::ArrayXd out(static_cast<std::size_t>(C) * oh * ow);
    auto argmax = std::make_shared<std::vector<int>>(out.size());
    for (int c = 0; c < C; ++c)
        for (int oi = 0; oi < oh; ++oi)
            for (int oj = 0; oj < ow; ++oj) {
                int best = (c * H + 2 * oi) * W + 2 * oj;
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) {
                        const int idx = (c * H + 2 * oi + di) * W + 2 * oj + dj;
                        if (x->value(idx) > x->value(best)) best = idx;
                    }
                const int o = (c * oh + oi) * ow + oj;
                out(o) = x->value(best);
                (*argmax)[o] = best;
            }
    return result({static_cast<std::size_t>(C), static_cast<std::size_t>(oh),
                   static_cast<std::size_t>(ow)},
                  std::move(out), {x}, [argmax](Node& n) {
        auto& x = n.parents[0];
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (Eigen::Index o = 0; o < n.grad.size(); ++o) x->grad((*argmax)[o]) += n.grad(o);
    });
}

Var channel_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (x->shape.size() != 3) throw std::invalid_argument("ad: channel_norm needs (c,h,w)");
    const std::size_t C = x->shape[0], HW = x->shape[1] * x->shape[2];
    if (gamma->shape != std::vector<std::size_t>{C} || beta->shape != gamma->shape)
        throw std::invalid_argument("ad: channel_norm affine dims mismatch");
    Eigen::ArrayXd out(x->size());
    auto stats = std::make_shared<Eigen::ArrayXXd>(C, 2);  // mean, inv_std per channel
    for (std::size_t c = 0; c < C; ++c) {
        auto seg = x->value.segment(c * HW, HW);
        const double mean = seg.mean();
        const double var = (seg - mean).square().mean();
        const double inv_std = 1.0 / std::sqrt(var + eps);
        (*stats)(c, 0) = mean;
        (*stats)(c, 1) = inv_std;
        out.segment(c * HW, HW) = (seg - mean) * inv_std * gamma->value(c) + beta->value(c);
    }
    return result(x->shape, std::move(out), {x, gamma, beta}, [stats, C, HW](Node& n) {
        auto& x = n.parents[0];
        auto& gamma = n.parents[1];
        auto& beta = n.parents[2];
        for (std::size_t c = 0; c < C; ++c) {
            auto g = n.grad.segment(c * HW, HW);
            const double mean = (*stats)(c, 0), inv_std = (*stats)(c, 1);
            Eigen::ArrayXd xhat = (x->value.segment(c * HW, HW) - mean) * inv_std;
            if (gamma->requires_grad) {
                gamma->ensure_grad();
                gamma->grad(c) += (g * xhat).sum();
            }
            if (beta->requires_grad) {
                beta->ensure_grad();
                beta->grad(c) += g.sum();
            }
            if (x->requires_grad) {
                x->ensure_grad();
                const double gk = gamma->value(c);
                const double m = static_cast<double>(HW);
                const double gsum = g.sum();
                const double gx_dot = (g * xhat).sum();
                x->grad.segment(c * HW, HW) +=
                    gk * inv_std * (g - gsum / m - xhat * gx_dot / m);
            }
        }
    });
}

Var gap(const Var& x) {
    if (x->shape.size() != 3) throw std::invalid_argument("ad: gap needs (c,h,w)");
    const std::size_t C = x->shape[0], HW = x->shape[1] * x->shape[2];
    Eigen::ArrayXd out(C);
    for (std::size_t c = 0; c < C; ++c) out(c) = x->value.segment(c * HW, HW).mean();
    return result({C}, std::move(out), {x}, [C, HW](Node& n) {
        auto& x = n.parents[0];
        if (!x->requires_grad) return;
        x->ensure_grad();
        const double inv = 1.0 / static_cast<double>(HW);
        for (std::size_t c = 0; c < C; ++c)
            x->grad.segment(c * HW, HW) += n.grad(c) * inv;
    });
}

Var matvec(const Var& w, const Var& v) {
    if (w->shape.size() != 2 || v->shape.size() != 1 || w->shape[1] != v->shape[0])
        throw std::invalid_argument("ad: matvec dims mismatch");
    const std::size_t G = w->shape[0], c = w->shape[1];
    CMapM wm(w->value.data(), G, c);
    Eigen::VectorXd y = wm * Eigen::Map<const Eigen::VectorXd>(v->value.data(), c);
    return result({G}, Eigen::ArrayXd(y.array()), {w, v}, [G, c](Node& n) {
        auto& w = n.parents[0];
        auto& v = n.parents[1];
        Eigen::Map<const Eigen::VectorXd> gy(n.grad.data(), G);
        if (w->requires_grad) {
            w->ensure_grad();
            MapM gw(w->grad.data(), G, c);
            gw += gy * Eigen::Map<const Eigen::VectorXd>(v->value.data(), c).transpose();
        }
        if (v->requires_grad) {
            v->ensure_grad();
            CMapM wm(w->value.data(), G, c);
            Eigen::Map<Eigen::VectorXd>(v->grad.data(), c) += wm.transpose() * gy;
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        throw std::invalid_argument("ad: matmul dims mismatch");
    const std::size_t m = a->shape[0], k = a->shape[1], n_ = b->shape[1];
    CMapM am(a->value.data(), m, k);
    CMapM bm(b->value.data(), k, n_);
    MatRM y = am * bm;
    return result({m, n_}, Eigen::ArrayXd(Eigen::Map<Eigen::ArrayXd>(y.data(), y.size())),
                  {a, b}, [m, k, n_](Node& n) {
        auto& a = n.parents[0];
        auto& b = n.parents[1];
        CMapM gy(n.grad.data(), m, n_);
        if (a->requires_grad) {
            a->ensure_grad();
            CMapM bm(b->value.data(), k, n_);
            MapM ga(a->grad.data(), m, k);
            ga += gy * bm.transpose();
        }
        if (b->requires_grad) {
            b->ensure_grad();
            CMapM am(a->value.data(), m, k);
            MapM gb(b->grad.data(), k, n_);
            gb += am.transpose() * gy;
        }
    });
}

Var transpose(const Var& a) {
    if (a->shape.size() != 2) throw std::invalid_argument("ad: transpose needs a matrix");
    const std::size_t m = a->shape[0], n_ = a->shape[1];
    CMapM am(a->value.data(), m, n_);
    MatRM t = am.transpose();
    return result({n_, m}, Eigen::ArrayXd(Eigen::Map<Eigen::ArrayXd>(t.data(), t.size())),
                  {a}, [m, n_](Node& n) {
        auto& a = n.parents[0];
        if (!a->requires_grad) return;
        a->ensure_grad();
        CMapM gy(n.grad.data(), n_, m);
        MapM ga(a->grad.data(), m, n_);
        ga += gy.transpose();
    });
}

Var row_l2_normalize(const Var& x, double eps) {
    if (x->shape.size() != 2) throw std::invalid_argument("ad: row_l2_normalize needs a matrix");
    const std::size_t R = x->shape[0], C = x->shape[1];
    Eigen::ArrayXd out(x->size());
    auto norms = std::make_shared<Eigen::ArrayXd>(R);
    for (std::size_t r = 0; r < R; ++r) {
        auto row = x->value.segment(r * C, C);
        (*norms)(r) = std::max(std::sqrt(row.square().sum()), eps);
        out.segment(r * C, C) = row / (*norms)(r);
    }
    return result(x->shape, std::move(out), {x}, [norms, R, C, eps](Node& n) {
        auto& x = n.parents[0];
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t r = 0; r < R; ++r) {
            auto g = n.grad.segment(r * C, C);
            const double nr = (*norms)(r);
            Eigen::ArrayXd y = n.value.segment(r * C, C);
            if (nr <= eps) {
                // clamped branch: y = v/eps is linear in v
                x->grad.segment(r * C, C) += g / eps;
            } else {
                x->grad.segment(r * C, C) += (g - y * (g * y).sum()) / nr;
            }
        }
    });
}

Var row_softmax(const Var& x) {
    if (x->shape.size() != 2) throw std::invalid_argument("ad: row_softmax needs a matrix");
    const std::size_t R = x->shape[0], C = x->shape[1];
    Eigen::ArrayXd out(x->size());
    for (std::size_t r = 0; r < R; ++r) {
        auto row = x->value.segment(r * C, C);
        Eigen::ArrayXd e = (row - row.maxCoeff()).exp();
        out.segment(r * C, C) = e / e.sum();
    }
    return result(x->shape, std::move(out), {x}, [R, C](Node& n) {
        auto& x = n.parents[0];
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t r = 0; r < R; ++r) {
            auto g = n.grad.segment(r * C, C);
            Eigen::ArrayXd y = n.value.segment(r * C, C);
            x->grad.segment(r * C, C) += y * (g - (g * y).sum());
        }
    });
}

Var sum_all(const Var& x) {
    Eigen::ArrayXd out(1);
    out(0) = x->value.sum();
    return result({1}, std::move(out), {x}, [](Node& n) {
        auto& x = n.parents[0];
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad += n.grad(0);
    });
}

Var spatial_mask(const Var& x, const Eigen::ArrayXd& mask) {
    if (x->shape.size() != 3) throw std::invalid_argument("ad: spatial_mask needs (c,h,w)");
    const std::size_t C = x->shape[0], HW = x->shape[1] * x->shape[2];
    if (static_cast<std::size_t>(mask.size()) != HW)
        throw std::invalid_argument("ad: spatial_mask size mismatch");
    Eigen::ArrayXd out(x->size());
    auto m = std::make_shared<Eigen::ArrayXd>(mask);
    for (std::size_t c = 0; c < C; ++c)
        out.segment(c * HW, HW) = x->value.segment(c * HW, HW) * mask;
    return result(x->shape, std::move(out), {x}, [m, C, HW](Node& n) {
        auto& x = n.parents[0];
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t c = 0; c < C; ++c)
            x->grad.segment(c * HW, HW) += n.grad.segment(c * HW, HW) * (*m);
    });
}

Var concat_scalars(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("ad: concat of empty list");
    Eigen::ArrayXd out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i]->size() != 1) throw std::invalid_argument("ad: concat_scalars needs scalars");
        out(i) = xs[i]->value(0);
    }
    return result({xs.size()}, std::move(out), xs, [](Node& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            auto& p = n.parents[i];
            if (p->requires_grad) { p->ensure_grad(); p->grad(0) += n.grad(i); }
        }
    });
}

Var cross_entropy_logits(const Var& logits, std::size_t label) {
    if (logits->shape.size() != 1) throw std::invalid_argument("ad: ce needs a logit vector");
    if (label >= logits->shape[0]) throw std::invalid_argument("ad: ce label out of range");
    const double mx = logits->value.maxCoeff();
    Eigen::ArrayXd e = (logits->value - mx).exp();
    const double lse = std::log(e.sum()) + mx;
    Eigen::ArrayXd out(1);
    out(0) = lse - logits->value(label);
    auto probs = std::make_shared<Eigen::ArrayXd>(e / e.sum());
    return result({1}, std::move(out), {logits}, [probs, label](Node& n) {
        auto& x = n.parents[0];
        if (!x->requires_grad) return;
        x->ensure_grad();
        x->grad += n.grad(0) * (*probs);
        x->grad(label) -= n.grad(0);
    });
}

}  // namespace fsfg::ad
