#pragma once

#include "lblm/common.hpp"
#include "lblm/diff/param.hpp"

#include <functional>
#include <span>
#include <vector>

namespace lblm::diff {

class Graph;

// Handle to a node on a Graph tape. Cheap to copy; only valid while its graph lives.
struct Var {
    Graph* graph = nullptr;
    int id = -1;

    const Mat& value() const;
    const Mat& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }
};

// Reverse-mode tape. Every op appends a node holding its forward value and a
// closure that pushes the node's gradient into its inputs.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaf bound to a parameter; backward() accumulates into p.grad.
    Var param(ParamTensor& p);
    Var constant(Mat value);

    // Seeds d(root)/d(root) = 1 and runs the tape backwards. root must be 1×1.
    void backward(Var root);

    const Mat& value(int id) const { return nodes_[id].value; }
    const Mat& grad(int id) const;
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }

    // Used by op implementations.
    using Backward = std::function<void(Graph&, int self)>;
    Var emplace(Mat value, bool requires_grad, Backward back);
    template <typename Expr>
    void accumulate(int id, const Expr& g) {
        Node& n = nodes_[id];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }
    Mat& grad_mut(int id);
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        Backward backward;
    };
    std::vector<Node> nodes_;
    Mat empty_;
};

// ---- elementwise / affine -------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_rowvec(Var x, Var row);
Var matmul(Var a, Var b);
Var linear(Var x, Var w, Var b);

Var sigmoid(Var x);
Var tanh(Var x);
Var swish(Var x);
// Gated linear unit over columns: first half ⊙ sigmoid(second half).
Var glu(Var x);

Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// ---- sequence ops ---------------------------------------------------------
// Rows are tokens; consecutive blocks of `group` rows are independent sequences.

// Multi-head scaled dot-product self-attention over each row group.
// Scaling is 1/sqrt(cols/heads). With causal=true key j > query i is excluded.
Var attention(Var q, Var k, Var v, int group, int heads, bool causal);

// Per-column convolution along the row axis. w is kernel×cols, b is 1×cols.
// Bidirectional mode pads (kernel-1)/2 on both sides; causal pads kernel-1 on the left.
Var depthwise_conv(Var x, Var w, Var b, int group, bool causal);

// im2col along the row axis with "same" zero padding: output row t holds rows
// t-(k-1)/2 .. t+(k-1)/2 concatenated, so a full 1-D convolution is unfold + linear.
Var unfold_time(Var x, int kernel, int group);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, int start, int count);

// Output row i = x row idx[i].
Var gather_rows(Var x, std::vector<int> idx);
// Rows where mask[i] != 0 are replaced by the 1×cols token.
Var replace_rows(Var x, const std::vector<char>& mask, Var token);
// g is rows×1: out = g⊙a + (1-g)⊙b, g broadcast across columns.
Var blend_rows(Var g, Var a, Var b);

// Input rows are ordered (batch, channel, token). Output is (batch, token) rows
// with columns (channel, feature).
Var channels_to_cols(Var x, int channels, int group);
// Per-feature weighted sum over channels: out[b,n,j] = sum_c w[c,j] x[b,c,n,j].
Var spatial_depthwise(Var x, Var w, int channels, int group);
// Mean of each block of `group` consecutive rows.
Var mean_groups(Var x, int group);

// ---- losses ----------------------------------------------------------------
// Elementwise Huber averaged over all entries. Returns 1×1.
Var huber_mean(Var pred, const Mat& target, double delta);
// Mean softmax cross-entropy of logits rows against labels. Returns 1×1.
Var cross_entropy(Var logits, const std::vector<int>& labels);

// ---- plain helpers -----------------------------------------------------------
// Huber loss averaged over elements; x and xhat must have equal length.
double huber_loss(std::span<const double> x, std::span<const double> xhat, double delta);
double huber_value(double r, double delta);
double huber_grad(double r, double delta);
// Row-wise numerically stable softmax.
Mat softmax_rows(const Mat& logits);

}  // namespace lblm::diff
