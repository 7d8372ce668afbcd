#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace fsfg::ad {

/// Reverse-mode autodiff over dense double arrays.
///
/// A Node owns a flat value buffer plus a shape; ops build a DAG of
/// shared_ptr<Node> and register a backprop closure that scatters the
/// node's gradient into its parents. Everything is double precision so
/// finite-difference checks are meaningful.
class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
    std::vector<std::size_t> shape;
    Eigen::ArrayXd value;
    Eigen::ArrayXd grad;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;
    bool requires_grad = false;

    std::size_t size() const { return static_cast<std::size_t>(value.size()); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad = Eigen::ArrayXd::Zero(value.size());
    }
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);

/// Trainable leaf (participates in gradients).
Var leaf(std::vector<std::size_t> shape, Eigen::ArrayXd data);
/// Non-trainable input.
Var constant(std::vector<std::size_t> shape, Eigen::ArrayXd data);

/// Run backprop from a scalar root; fills .grad on every reachable node
/// that requires gradients.
void backward(const Var& root);

// ---- elementwise / arithmetic ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var average(const std::vector<Var>& xs);

// ---- shape ----
Var reshape(const Var& x, std::vector<std::size_t> new_shape);
/// (c,h,w) -> (h*w, c): row r = i*w + j holds the descriptor at cell (i,j).
Var chw_to_rows(const Var& x);

// ---- neural net primitives ----
/// x: (C,H,W), w: (O,C,k,k), b: (O). Zero padding `pad`, stride `stride`.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var relu(const Var& x);
/// 2x2 stride-2 max pooling on (C,H,W); odd trailing row/col dropped.
Var maxpool2(const Var& x);
/// Per-channel normalization over spatial positions with learnable affine.
/// x: (C,H,W), gamma/beta: (C).
Var channel_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Spatial mean per channel: (C,H,W) -> (C).
Var gap(const Var& x);
/// logits = W * v for W: (G,c), v: (c) -> (G).
Var matvec(const Var& w, const Var& v);

// ---- matrix ops for alignment ----
Var matmul(const Var& a, const Var& b);                 // (m,k)x(k,n)->(m,n)
Var transpose(const Var& a);                            // (m,n)->(n,m)
Var row_l2_normalize(const Var& x, double eps = 1e-8);  // rows scaled to unit norm
Var row_softmax(const Var& x);                          // stabilized, per row
Var sum_all(const Var& x);                              // -> scalar

// ---- masking / losses ----
/// Multiply every channel of x (C,H,W) by a constant spatial mask (H*W).
Var spatial_mask(const Var& x, const Eigen::ArrayXd& mask);
/// Pack scalar vars into one vector (N).
Var concat_scalars(const std::vector<Var>& xs);
/// Stable -log softmax(logits)[label].
Var cross_entropy_logits(const Var& logits, std::size_t label);

}  // namespace fsfg::ad
