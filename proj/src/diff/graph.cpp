#include "lblm/diff/graph.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace lblm::diff {

const Mat& Var::value() const { return graph->value(id); }
const Mat& Var::grad() const { return graph->grad(id); }

Var Graph::emplace(Mat value, bool requires_grad, Backward back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(ParamTensor& p) {
    ParamTensor* ptr = &p;
    return emplace(p.value, true, [ptr](Graph& g, int self) { ptr->grad += g.grad(self); });
}

Var Graph::constant(Mat value) { return emplace(std::move(value), false, nullptr); }

const Mat& Graph::grad(int id) const {
    const Node& n = nodes_[id];
    return n.grad.size() == 0 ? empty_ : n.grad;
}

Mat& Graph::grad_mut(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Graph::backward(Var root) {
    if (root.graph != this) throw Error("backward root belongs to a different graph");
    const Mat& v = value(root.id);
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("backward root must be a scalar");
    if (!nodes_[root.id].requires_grad) return;
    nodes_[root.id].grad = Mat::Ones(1, 1);
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
        n.backward(*this, id);
    }
}

namespace {

void check_same_graph(Var a, Var b) {
    if (a.graph != b.graph || a.graph == nullptr) throw Error("vars belong to different graphs");
}

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

bool any_grad(Graph& g, std::initializer_list<Var> vs) {
    for (Var v : vs) {
        if (g.requires_grad(v.id)) return true;
    }
    return false;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var add(Var a, Var b) {
    check_same_graph(a, b);
    check_same_shape(a.value(), b.value(), "add");
    Graph& g = *a.graph;
    return g.emplace(a.value() + b.value(), any_grad(g, {a, b}), [a, b](Graph& g, int self) {
        g.accumulate(a.id, g.grad(self));
        g.accumulate(b.id, g.grad(self));
    });
}

Var sub(Var a, Var b) {
    check_same_graph(a, b);
    check_same_shape(a.value(), b.value(), "sub");
    Graph& g = *a.graph;
    return g.emplace(a.value() - b.value(), any_grad(g, {a, b}), [a, b](Graph& g, int self) {
        g.accumulate(a.id, g.grad(self));
        g.accumulate(b.id, -g.grad(self));
    });
}

Var mul(Var a, Var b) {
    check_same_graph(a, b);
    check_same_shape(a.value(), b.value(), "mul");
    Graph& g = *a.graph;
    return g.emplace(a.value().cwiseProduct(b.value()), any_grad(g, {a, b}),
                     [a, b](Graph& g, int self) {
                         const Mat& d = g.grad(self);
                         if (g.requires_grad(a.id)) g.accumulate(a.id, d.cwiseProduct(g.value(b.id)));
                         if (g.requires_grad(b.id)) g.accumulate(b.id, d.cwiseProduct(g.value(a.id)));
                     });
}

Var scale(Var a, double s) {
    Graph& g = *a.graph;
    return g.emplace(a.value() * s, any_grad(g, {a}),
                     [a, s](Graph& g, int self) { g.accumulate(a.id, g.grad(self) * s); });
}

Var add_rowvec(Var x, Var row) {
    check_same_graph(x, row);
    if (row.rows() != 1 || row.cols() != x.cols()) throw ShapeError("add_rowvec: row must be 1xcols");
    Graph& g = *x.graph;
    Mat out = x.value().rowwise() + row.value().row(0);
    return g.emplace(std::move(out), any_grad(g, {x, row}), [x, row](Graph& g, int self) {
        const Mat& d = g.grad(self);
        g.accumulate(x.id, d);
        if (g.requires_grad(row.id)) g.accumulate(row.id, d.colwise().sum());
    });
}

Var matmul(Var a, Var b) {
    check_same_graph(a, b);
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Graph& g = *a.graph;
    Mat out = a.value() * b.value();
    return g.emplace(std::move(out), any_grad(g, {a, b}), [a, b](Graph& g, int self) {
        const Mat& d = g.grad(self);
        if (g.requires_grad(a.id)) g.accumulate(a.id, d * g.value(b.id).transpose());
        if (g.requires_grad(b.id)) g.accumulate(b.id, g.value(a.id).transpose() * d);
    });
}

Var linear(Var x, Var w, Var b) {
    check_same_graph(x, w);
    check_same_graph(x, b);
    if (x.cols() != w.rows()) throw ShapeError("linear: input width does not match weight rows");
    if (b.rows() != 1 || b.cols() != w.cols()) throw ShapeError("linear: bias must be 1xout");
    Graph& g = *x.graph;
    Mat out = x.value() * w.value();
    out.rowwise() += b.value().row(0);
    return g.emplace(std::move(out), any_grad(g, {x, w, b}), [x, w, b](Graph& g, int self) {
        const Mat& d = g.grad(self);
        if (g.requires_grad(x.id)) g.accumulate(x.id, d * g.value(w.id).transpose());
        if (g.requires_grad(w.id)) g.accumulate(w.id, g.value(x.id).transpose() * d);
        if (g.requires_grad(b.id)) g.accumulate(b.id, d.colwise().sum());
    });
}

Var sigmoid(Var x) {
    Graph& g = *x.graph;
    Mat out = x.value().unaryExpr([](double v) { return sigm(v); });
    return g.emplace(std::move(out), any_grad(g, {x}), [x](Graph& g, int self) {
        const Mat& y = g.value(self);
        g.accumulate(x.id, g.grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
    });
}

Var tanh(Var x) {
    Graph& g = *x.graph;
    Mat out = x.value().array().tanh().matrix();
    return g.emplace(std::move(out), any_grad(g, {x}), [x](Graph& g, int self) {
        const Mat& y = g.value(self);
        g.accumulate(x.id, g.grad(self).cwiseProduct((1.0 - y.array().square()).matrix()));
    });
}

Var swish(Var x) {
    Graph& g = *x.graph;
    Mat out = x.value().unaryExpr([](double v) { return v * sigm(v); });
    return g.emplace(std::move(out), any_grad(g, {x}), [x](Graph& g, int self) {
        Mat dydx = g.value(x.id).unaryExpr([](double v) {
            double s = sigm(v);
            return s + v * s * (1.0 - s);
        });
        g.accumulate(x.id, g.grad(self).cwiseProduct(dydx));
    });
}

Var glu(Var x) {
    if (x.cols() % 2 != 0) throw ShapeError("glu: column count must be even");
    Graph& g = *x.graph;
    const Eigen::Index h = x.cols() / 2;
    const Mat& xv = x.value();
    Mat gate = xv.rightCols(h).unaryExpr([](double v) { return sigm(v); });
    Mat out = xv.leftCols(h).cwiseProduct(gate);
    return g.emplace(std::move(out), any_grad(g, {x}), [x, h, gate](Graph& g, int self) {
        const Mat& d = g.grad(self);
        const Mat& xv = g.value(x.id);
        Mat dx(xv.rows(), xv.cols());
        dx.leftCols(h) = d.cwiseProduct(gate);
        dx.rightCols(h) = d.cwiseProduct(xv.leftCols(h))
                              .cwiseProduct(gate)
                              .cwiseProduct((1.0 - gate.array()).matrix());
        g.accumulate(x.id, dx);
    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    check_same_graph(x, gamma);
    check_same_graph(x, beta);
    const Eigen::Index n = x.rows(), d = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
        throw ShapeError("layer_norm: gamma/beta must be 1xcols");
    }
    Graph& g = *x.graph;
    const Mat& xv = x.value();
    auto xhat = std::make_shared<Mat>(n, d);
    auto rstd = std::make_shared<Vec>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mu = xv.row(i).mean();
        double var = (xv.row(i).array() - mu).square().mean();
        double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)(i) = rs;
        xhat->row(i) = (xv.row(i).array() - mu) * rs;
    }
    Mat out = xhat->array().rowwise() * gamma.value().row(0).array();
    out.rowwise() += beta.value().row(0);
    return g.emplace(std::move(out), any_grad(g, {x, gamma, beta}),
                     [x, gamma, beta, xhat, rstd](Graph& g, int self) {
                         const Mat& dy = g.grad(self);
                         if (g.requires_grad(gamma.id)) {
                             g.accumulate(gamma.id, dy.cwiseProduct(*xhat).colwise().sum());
                         }
                         if (g.requires_grad(beta.id)) g.accumulate(beta.id, dy.colwise().sum());
                         if (g.requires_grad(x.id)) {
                             Mat dxhat = dy.array().rowwise() * g.value(gamma.id).row(0).array();
                             Mat dx(dy.rows(), dy.cols());
                             for (Eigen::Index i = 0; i < dy.rows(); ++i) {
                                 double m1 = dxhat.row(i).mean();
                                 double m2 = dxhat.row(i).cwiseProduct(xhat->row(i)).mean();
                                 dx.row(i) = (*rstd)(i) * (dxhat.row(i).array() - m1 -
                                                           xhat->row(i).array() * m2);
                             }
                             g.accumulate(x.id, dx);
                         }
                     });
}

Var attention(Var q, Var k, Var v, int group, int heads, bool causal) {
    check_same_graph(q, k);
    check_same_graph(q, v);
    check_same_shape(q.value(), k.value(), "attention");
    check_same_shape(q.value(), v.value(), "attention");
    const Eigen::Index rows = q.rows(), d = q.cols();
    if (group <= 0 || rows % group != 0) throw ShapeError("attention: rows not divisible by group");
    if (heads <= 0 || d % heads != 0) throw ShapeError("attention: width not divisible by heads");
    const int dh = static_cast<int>(d / heads);
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    const Eigen::Index groups = rows / group;
    Graph& g = *q.graph;
    const Mat& Q = q.value();
    const Mat& K = k.value();
    const Mat& V = v.value();

    auto probs = std::make_shared<std::vector<Mat>>(groups * heads);
    Mat out(rows, d);
    for (Eigen::Index gi = 0; gi < groups; ++gi) {
        const Eigen::Index r0 = gi * group;
        for (int h = 0; h < heads; ++h) {
            const int c0 = h * dh;
            Mat S = Q.block(r0, c0, group, dh) * K.block(r0, c0, group, dh).transpose() * sc;
            for (int i = 0; i < group; ++i) {
                const int last = causal ? i : group - 1;
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j <= last; ++j) mx = std::max(mx, S(i, j));
                double z = 0.0;
                for (int j = 0; j <= last; ++j) {
                    S(i, j) = std::exp(S(i, j) - mx);
                    z += S(i, j);
                }
                for (int j = 0; j <= last; ++j) S(i, j) /= z;
                for (int j = last + 1; j < group; ++j) S(i, j) = 0.0;
            }
            out.block(r0, c0, group, dh).noalias() = S * V.block(r0, c0, group, dh);
            (*probs)[gi * heads + h] = std::move(S);
        }
    }
    return g.emplace(
        std::move(out), any_grad(g, {q, k, v}),
        [q, k, v, group, heads, dh, sc, groups, probs](Graph& g, int self) {
            const Mat& dO = g.grad(self);
            const Mat& Q = g.value(q.id);
            const Mat& K = g.value(k.id);
            const Mat& V = g.value(v.id);
            Mat dQ = Mat::Zero(Q.rows(), Q.cols());
            Mat dK = Mat::Zero(Q.rows(), Q.cols());
            Mat dV = Mat::Zero(Q.rows(), Q.cols());
            for (Eigen::Index gi = 0; gi < groups; ++gi) {
                const Eigen::Index r0 = gi * group;
                for (int h = 0; h < heads; ++h) {
                    const int c0 = h * dh;
                    const Mat& A = (*probs)[gi * heads + h];
                    auto dOb = dO.block(r0, c0, group, dh);
                    dV.block(r0, c0, group, dh).noalias() = A.transpose() * dOb;
                    Mat dA = dOb * V.block(r0, c0, group, dh).transpose();
                    Vec rs = dA.cwiseProduct(A).rowwise().sum();
                    Mat dS = A.cwiseProduct((dA.colwise() - rs).matrix()) * sc;
                    dQ.block(r0, c0, group, dh).noalias() = dS * K.block(r0, c0, group, dh);
                    dK.block(r0, c0, group, dh).noalias() = dS.transpose() * Q.block(r0, c0, group, dh);
                }
            }
            g.accumulate(q.id, dQ);
            g.accumulate(k.id, dK);
            g.accumulate(v.id, dV);
        });
}

Var depthwise_conv(Var x, Var w, Var b, int group, bool causal) {
    check_same_graph(x, w);
    check_same_graph(x, b);
    const Eigen::Index rows = x.rows(), d = x.cols();
    const int kern = static_cast<int>(w.rows());
    if (w.cols() != d || b.rows() != 1 || b.cols() != d) throw ShapeError("depthwise_conv: weight shape");
    if (group <= 0 || rows % group != 0) throw ShapeError("depthwise_conv: rows not divisible by group");
    const int pad = causal ? kern - 1 : (kern - 1) / 2;
    Graph& g = *x.graph;
    const Mat& X = x.value();
    const Mat& W = w.value();
    Mat out(rows, d);
    out.rowwise() = b.value().row(0);
    for (Eigen::Index r0 = 0; r0 < rows; r0 += group) {
        for (int t = 0; t < group; ++t) {
            for (int u = 0; u < kern; ++u) {
                const int src = t + u - pad;
                if (src < 0 || src >= group) continue;
                out.row(r0 + t).array() += W.row(u).array() * X.row(r0 + src).array();
            }
        }
    }
    return g.emplace(std::move(out), any_grad(g, {x, w, b}),
                     [x, w, b, group, pad, kern](Graph& g, int self) {
                         const Mat& dY = g.grad(self);
                         const Mat& X = g.value(x.id);
                         const Mat& W = g.value(w.id);
                         const bool gx = g.requires_grad(x.id), gw = g.requires_grad(w.id);
                         Mat dX = gx ? Mat::Zero(X.rows(), X.cols()) : Mat();
                         Mat dW = gw ? Mat::Zero(W.rows(), W.cols()) : Mat();
                         for (Eigen::Index r0 = 0; r0 < X.rows(); r0 += group) {
                             for (int t = 0; t < group; ++t) {
                                 for (int u = 0; u < kern; ++u) {
                                     const int src = t + u - pad;
                                     if (src < 0 || src >= group) continue;
                                     if (gx) dX.row(r0 + src).array() += W.row(u).array() * dY.row(r0 + t).array();
                                     if (gw) dW.row(u).array() += X.row(r0 + src).array() * dY.row(r0 + t).array();
                                 }
                             }
                         }
                         if (gx) g.accumulate(x.id, dX);
                         if (gw) g.accumulate(w.id, dW);
                         if (g.requires_grad(b.id)) g.accumulate(b.id, dY.colwise().sum());
                     });
}

Var unfold_time(Var x, int kernel, int group) {
    const Eigen::Index rows = x.rows(), d = x.cols();
    if (kernel <= 0 || kernel % 2 == 0) throw ShapeError("unfold_time: kernel must be odd");
    if (group <= 0 || rows % group != 0) throw ShapeError("unfold_time: rows not divisible by group");
    const int pad = (kernel - 1) / 2;
    Graph& g = *x.graph;
    const Mat& X = x.value();
    Mat out = Mat::Zero(rows, d * kernel);
    for (Eigen::Index r0 = 0; r0 < rows; r0 += group) {
        for (int t = 0; t < group; ++t) {
            for (int u = 0; u < kernel; ++u) {
                const int src = t + u - pad;
                if (src < 0 || src >= group) continue;
                out.block(r0 + t, u * d, 1, d) = X.row(r0 + src);
            }
        }
    }
    return g.emplace(std::move(out), any_grad(g, {x}), [x, kernel, group, pad, d](Graph& g, int self) {
        const Mat& dY = g.grad(self);
        Mat dX = Mat::Zero(dY.rows(), d);
        for (Eigen::Index r0 = 0; r0 < dY.rows(); r0 += group) {
            for (int t = 0; t < group; ++t) {
                for (int u = 0; u < kernel; ++u) {
                    const int src = t + u - pad;
                    if (src < 0 || src >= group) continue;
                    dX.row(r0 + src) += dY.block(r0 + t, u * d, 1, d);
                }
            }
        }
        g.accumulate(x.id, dX);
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    Graph& g = *parts[0].graph;
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index total = 0;
    bool req = false;
    for (const Var& p : parts) {
        check_same_graph(parts[0], p);
        if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
        total += p.cols();
        req = req || g.requires_grad(p.id);
    }
    Mat out(rows, total);
    Eigen::Index c = 0;
    for (const Var& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    std::vector<Var> ps(parts.begin(), parts.end());
    return g.emplace(std::move(out), req, [ps](Graph& g, int self) {
        const Mat& d = g.grad(self);
        Eigen::Index c = 0;
        for (const Var& p : ps) {
            if (g.requires_grad(p.id)) g.accumulate(p.id, d.middleCols(c, p.cols()));
            c += p.cols();
        }
    });
}

Var slice_cols(Var x, int start, int count) {
    if (start < 0 || count <= 0 || start + count > x.cols()) throw ShapeError("slice_cols: out of range");
    Graph& g = *x.graph;
    Mat out = x.value().middleCols(start, count);
    return g.emplace(std::move(out), any_grad(g, {x}), [x, start, count](Graph& g, int self) {
        Mat& dx = g.grad_mut(x.id);
        dx.middleCols(start, count) += g.grad(self);
    });
}

Var gather_rows(Var x, std::vector<int> idx) {
    Graph& g = *x.graph;
    const Mat& X = x.value();
    Mat out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= X.rows()) throw RangeError("gather_rows: index out of range");
        out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    }
    return g.emplace(std::move(out), any_grad(g, {x}), [x, idx = std::move(idx)](Graph& g, int self) {
        const Mat& d = g.grad(self);
        Mat& dx = g.grad_mut(x.id);
        for (std::size_t i = 0; i < idx.size(); ++i) dx.row(idx[i]) += d.row(static_cast<Eigen::Index>(i));
    });
}

Var replace_rows(Var x, const std::vector<char>& mask, Var token) {
    check_same_graph(x, token);
    if (static_cast<Eigen::Index>(mask.size()) != x.rows()) throw ShapeError("replace_rows: mask length");
    if (token.rows() != 1 || token.cols() != x.cols()) throw ShapeError("replace_rows: token must be 1xcols");
    Graph& g = *x.graph;
    Mat out = x.value();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) out.row(static_cast<Eigen::Index>(i)) = token.value().row(0);
    }
    return g.emplace(std::move(out), any_grad(g, {x, token}), [x, token, mask](Graph& g, int self) {
        const Mat& d = g.grad(self);
        if (g.requires_grad(x.id)) {
            Mat dx = d;
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (mask[i]) dx.row(static_cast<Eigen::Index>(i)).setZero();
            }
            g.accumulate(x.id, dx);
        }
        if (g.requires_grad(token.id)) {
            Mat dt = Mat::Zero(1, d.cols());
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (mask[i]) dt.row(0) += d.row(static_cast<Eigen::Index>(i));
            }
            g.accumulate(token.id, dt);
        }
    });
}

Var blend_rows(Var gate, Var a, Var b) {
    check_same_graph(gate, a);
    check_same_graph(gate, b);
    check_same_shape(a.value(), b.value(), "blend_rows");
    if (gate.cols() != 1 || gate.rows() != a.rows()) throw ShapeError("blend_rows: gate must be rowsx1");
    Graph& g = *a.graph;
    const Mat& G = gate.value();
    Mat out = (a.value().array().colwise() * G.col(0).array()) +
              (b.value().array().colwise() * (1.0 - G.col(0).array()));
    return g.emplace(std::move(out), any_grad(g, {gate, a, b}), [gate, a, b](Graph& g, int self) {
        const Mat& d = g.grad(self);
        const Mat& G = g.value(gate.id);
        if (g.requires_grad(gate.id)) {
            Mat dg = (d.cwiseProduct(g.value(a.id) - g.value(b.id))).rowwise().sum();
            g.accumulate(gate.id, dg);
        }
        if (g.requires_grad(a.id)) g.accumulate(a.id, (d.array().colwise() * G.col(0).array()).matrix());
        if (g.requires_grad(b.id)) {
            g.accumulate(b.id, (d.array().colwise() * (1.0 - G.col(0).array())).matrix());
        }
    });
}

Var channels_to_cols(Var x, int channels, int group) {
    const Eigen::Index rows = x.rows(), d = x.cols();
    if (channels <= 0 || group <= 0 || rows % (static_cast<Eigen::Index>(channels) * group) != 0) {
        throw ShapeError("channels_to_cols: rows not divisible by channels*group");
    }
    const Eigen::Index batch = rows / (channels * group);
    Graph& g = *x.graph;
    const Mat& X = x.value();
    Mat out(batch * group, channels * d);
    for (Eigen::Index b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c)
            for (int n = 0; n < group; ++n)
                out.block(b * group + n, c * d, 1, d) = X.row((b * channels + c) * group + n);
    return g.emplace(std::move(out), any_grad(g, {x}), [x, channels, group, batch, d](Graph& g, int self) {
        const Mat& dY = g.grad(self);
        Mat dX(batch * channels * group, d);
        for (Eigen::Index b = 0; b < batch; ++b)
            for (int c = 0; c < channels; ++c)
                for (int n = 0; n < group; ++n)
                    dX.row((b * channels + c) * group + n) = dY.block(b * group + n, c * d, 1, d);
        g.accumulate(x.id, dX);
    });
}

Var spatial_depthwise(Var x, Var w, int channels, int group) {
    check_same_graph(x, w);
    const Eigen::Index rows = x.rows(), d = x.cols();
    if (w.rows() != channels || w.cols() != d) {
        throw ShapeError("spatial_depthwise: weight is " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + ", input has " + std::to_string(channels) +
                         " channels of width " + std::to_string(d));
    }
    if (group <= 0 || rows % (static_cast<Eigen::Index>(channels) * group) != 0) {
        throw ShapeError("spatial_depthwise: rows not divisible by channels*group");
    }
    const Eigen::Index batch = rows / (channels * group);
    Graph& g = *x.graph;
    const Mat& X = x.value();
    const Mat& W = w.value();
    Mat out = Mat::Zero(batch * group, d);
    for (Eigen::Index b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c)
            for (int n = 0; n < group; ++n)
                out.row(b * group + n).array() += W.row(c).array() * X.row((b * channels + c) * group + n).array();
    return g.emplace(std::move(out), any_grad(g, {x, w}), [x, w, channels, group, batch](Graph& g, int self) {
        const Mat& dY = g.grad(self);
        const Mat& X = g.value(x.id);
        const Mat& W = g.value(w.id);
        const bool gx = g.requires_grad(x.id), gw = g.requires_grad(w.id);
        Mat dX = gx ? Mat(X.rows(), X.cols()) : Mat();
        Mat dW = gw ? Mat::Zero(W.rows(), W.cols()) : Mat();
        for (Eigen::Index b = 0; b < batch; ++b)
            for (int c = 0; c < channels; ++c)
                for (int n = 0; n < group; ++n) {
                    const Eigen::Index src = (b * channels + c) * group + n;
                    if (gx) dX.row(src) = W.row(c).cwiseProduct(dY.row(b * group + n));
                    if (gw) dW.row(c) += X.row(src).cwiseProduct(dY.row(b * group + n));
                }
        if (gx) g.accumulate(x.id, dX);
        if (gw) g.accumulate(w.id, dW);
    });
}

Var mean_groups(Var x, int group) {
    const Eigen::Index rows = x.rows(), d = x.cols();
    if (group <= 0 || rows % group != 0) throw ShapeError("mean_groups: rows not divisible by group");
    const Eigen::Index n = rows / group;
    Graph& g = *x.graph;
    Mat out(n, d);
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = x.value().middleRows(i * group, group).colwise().mean();
    return g.emplace(std::move(out), any_grad(g, {x}), [x, group, n](Graph& g, int self) {
        const Mat& dY = g.grad(self);
        Mat dX(n * group, dY.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            dX.middleRows(i * group, group).rowwise() = dY.row(i) / static_cast<double>(group);
        }
        g.accumulate(x.id, dX);
    });
}

double huber_value(double r, double delta) {
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_grad(double r, double delta) {
    if (std::abs(r) <= delta) return r;
    return r > 0 ? delta : -delta;
}

double huber_loss(std::span<const double> x, std::span<const double> xhat, double delta) {
    if (x.size() != xhat.size()) throw ShapeError("huber_loss: shape mismatch");
    if (!(delta > 0)) throw ConfigError("huber_loss: delta must be positive");
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += huber_value(x[i] - xhat[i], delta);
    return s / static_cast<double>(x.size());
}

Var huber_mean(Var pred, const Mat& target, double delta) {
    check_same_shape(pred.value(), target, "huber_mean");
    if (!(delta > 0)) throw ConfigError("huber_mean: delta must be positive");
    Graph& g = *pred.graph;
    const Mat r = pred.value() - target;
    const double count = static_cast<double>(r.size());
    double s = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) s += huber_value(r.data()[i], delta);
    Mat out(1, 1);
    out(0, 0) = count > 0 ? s / count : 0.0;
    return g.emplace(std::move(out), any_grad(g, {pred}), [pred, r, delta, count](Graph& g, int self) {
        const double up = g.grad(self)(0, 0);
        Mat d = r.unaryExpr([delta](double v) { return huber_grad(v, delta); }) * (up / count);
        g.accumulate(pred.id, d);
    });
}

Mat softmax_rows(const Mat& logits) {
    Mat p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

Var cross_entropy(Var logits, const std::vector<int>& labels) {
    const Eigen::Index n = logits.rows(), k = logits.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("cross_entropy: label count");
    for (int l : labels) {
        if (l < 0 || l >= k) throw RangeError("cross_entropy: label " + std::to_string(l) + " out of range");
    }
    Graph& g = *logits.graph;
    const Mat& Z = logits.value();
    Mat probs = softmax_rows(Z);
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = Z.row(i).maxCoeff();
        const double lse = mx + std::log((Z.row(i).array() - mx).exp().sum());
        s += lse - Z(i, labels[i]);
    }
    Mat out(1, 1);
    out(0, 0) = s / static_cast<double>(n);
    return g.emplace(std::move(out), any_grad(g, {logits}), [logits, labels, probs, n](Graph& g, int self) {
        const double up = g.grad(self)(0, 0) / static_cast<double>(n);
        Mat d = probs;
        for (Eigen::Index i = 0; i < n; ++i) d(i, labels[i]) -= 1.0;
        g.accumulate(logits.id, d * up);
    });
}

}  // namespace lblm::diff
