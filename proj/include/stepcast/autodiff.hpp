#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "stepcast/common.hpp"

namespace stepcast::ad {

/// Row-major 64-bit tensor. Rank is 1 or 2 everywhere in this library;
/// scalars use shape {1}.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        data.assign(n, 0.0);
    }
    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor scalar(double v) {
        Tensor t({1});
        t.data[0] = v;
        return t;
    }
    static Tensor from_rows(int r, int c, std::vector<double> values) {
        Tensor t;
        t.shape = {r, c};
        if (values.size() != static_cast<std::size_t>(r) * c) throw ShapeError("from_rows: value count mismatch");
        t.data = std::move(values);
        return t;
    }

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return rank() == 2 ? shape[0] : 1; }
    int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EMat>;
using MutMap = Eigen::Map<EMat>;

inline ConstMap cmap(const Tensor& t) { return ConstMap(t.data.data(), t.rows(), t.cols()); }
inline MutMap mmap(Tensor& t) { return MutMap(t.data.data(), t.rows(), t.cols()); }

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

enum class Activation { identity, relu, sigmoid, tanh };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

/// Named parameter tensors with gradient buffers of identical shapes.
/// std::map keeps iteration deterministic by name.
struct ParameterSet {
    std::map<std::string, Tensor> values;
    std::map<std::string, Tensor> grads;

    Tensor& add(const std::string& name, Tensor init) {
        auto [it, inserted] = values.emplace(name, std::move(init));
        if (!inserted) throw StateError("parameter '" + name + "' already exists");
        grads.emplace(name, Tensor(it->second.shape));
        return it->second;
    }
    Tensor& value(const std::string& name) {
        auto it = values.find(name);
        if (it == values.end()) throw StateError("unknown parameter '" + name + "'");
        return it->second;
    }
    const Tensor& value(const std::string& name) const { return const_cast<ParameterSet*>(this)->value(name); }
    Tensor& grad(const std::string& name) {
        auto it = grads.find(name);
        if (it == grads.end()) throw StateError("unknown parameter '" + name + "'");
        return it->second;
    }
    void zero_grads() {
        for (auto& [name, g] : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
    }
    double grad_norm() const {
        double s = 0.0;
        for (const auto& [name, g] : grads)
            for (double v : g.data) s += v * v;
        return std::sqrt(s);
    }
    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [name, t] : values) n += t.numel();
        return n;
    }
};

/// Reverse-mode tape. Nodes are appended in topological order during the
/// forward pass; backward() walks them in reverse. Node ids are invalidated
/// by reset().
class Tape {
  public:
    using NodeId = int;

    NodeId constant(Tensor v) { return push(std::move(v), false, {}); }
    NodeId leaf(Tensor v) { return push(std::move(v), true, {}); }

    const Tensor& value(NodeId id) const { return node(id).val; }
    const Tensor& grad(NodeId id) const { return node(id).grad; }
    std::size_t size() const { return nodes_.size(); }
    void reset() { nodes_.clear(); }

    /// y = x * W^T (+ b broadcast over rows). x: (B,d), W: (o,d), b: (o).
    NodeId linear(NodeId x, NodeId w, NodeId b = -1) {
        const Tensor& xv = node(x).val;
        const Tensor& wv = node(w).val;
        if (xv.rank() != 2 || wv.rank() != 2 || xv.cols() != wv.cols())
            throw ShapeError("linear: x is " + shape_str(xv) + ", W is " + shape_str(wv));
        Tensor out({xv.rows(), wv.rows()});
        mmap(out).noalias() = cmap(xv) * cmap(wv).transpose();
        if (b >= 0) {
            const Tensor& bv = node(b).val;
            if (static_cast<int>(bv.numel()) != wv.rows()) throw ShapeError("linear: bias length mismatch");
            mmap(out).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data.data(), bv.numel());
        }
        bool rg = node(x).rg || node(w).rg || (b >= 0 && node(b).rg);
        return push(std::move(out), rg, [x, w, b](Tape& t, NodeId self) {
            const Tensor& dy = t.node(self).grad;
            if (t.node(x).rg) mmap(t.node(x).grad).noalias() += cmap(dy) * cmap(t.node(w).val);
            if (t.node(w).rg) mmap(t.node(w).grad).noalias() += cmap(dy).transpose() * cmap(t.node(x).val);
            if (b >= 0 && t.node(b).rg) {
                Eigen::Map<Eigen::RowVectorXd> db(t.node(b).grad.data.data(), t.node(b).grad.numel());
                db += cmap(dy).colwise().sum();
            }
        });
    }

    NodeId add(NodeId a, NodeId b) {
        const Tensor& av = node(a).val;
        const Tensor& bv = node(b).val;
        if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
        Tensor out = av;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
        return push(std::move(out), node(a).rg || node(b).rg, [a, b](Tape& t, NodeId self) {
            const Tensor& dy = t.node(self).grad;
            if (t.node(a).rg) axpy(t.node(a).grad, dy);
            if (t.node(b).rg) axpy(t.node(b).grad, dy);
        });
    }

    NodeId mul(NodeId a, NodeId b) {
        const Tensor& av = node(a).val;
        const Tensor& bv = node(b).val;
        if (!av.same_shape(bv)) throw ShapeError("mul: shape mismatch");
        Tensor out = av;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
        return push(std::move(out), node(a).rg || node(b).rg, [a, b](Tape& t, NodeId self) {
            const Tensor& dy = t.node(self).grad;
            if (t.node(a).rg) {
                Tensor& da = t.node(a).grad;
                const Tensor& bv2 = t.node(b).val;
                for (std::size_t i = 0; i < dy.data.size(); ++i) da.data[i] += dy.data[i] * bv2.data[i];
            }
            if (t.node(b).rg) {
                Tensor& db = t.node(b).grad;
                const Tensor& av2 = t.node(a).val;
                for (std::size_t i = 0; i < dy.data.size(); ++i) db.data[i] += dy.data[i] * av2.data[i];
            }
        });
    }

    NodeId sigmoid_op(NodeId x) {
        Tensor out = node(x).val;
        for (double& v : out.data) v = stepcast::ad::sigmoid(v);
        return push(std::move(out), node(x).rg, [x](Tape& t, NodeId self) {
            if (!t.node(x).rg) return;
            const Tensor& y = t.node(self).val;
            const Tensor& dy = t.node(self).grad;
            Tensor& dx = t.node(x).grad;
            for (std::size_t i = 0; i < y.data.size(); ++i) dx.data[i] += dy.data[i] * y.data[i] * (1.0 - y.data[i]);
        });
    }

    NodeId tanh_op(NodeId x) {
        Tensor out = node(x).val;
        for (double& v : out.data) v = std::tanh(v);
        return push(std::move(out), node(x).rg, [x](Tape& t, NodeId self) {
            if (!t.node(x).rg) return;
            const Tensor& y = t.node(self).val;
            const Tensor& dy = t.node(self).grad;
            Tensor& dx = t.node(x).grad;
            for (std::size_t i = 0; i < y.data.size(); ++i) dx.data[i] += dy.data[i] * (1.0 - y.data[i] * y.data[i]);
        });
    }

    NodeId relu_op(NodeId x) {
        Tensor out = node(x).val;
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return push(std::move(out), node(x).rg, [x](Tape& t, NodeId self) {
            if (!t.node(x).rg) return;
            const Tensor& xv = t.node(x).val;
            const Tensor& dy = t.node(self).grad;
            Tensor& dx = t.node(x).grad;
            for (std::size_t i = 0; i < xv.data.size(); ++i)
                if (xv.data[i] > 0.0) dx.data[i] += dy.data[i];
        });
    }

    NodeId activate(NodeId x, Activation a) {
        switch (a) {
            case Activation::identity: return x;
            case Activation::relu: return relu_op(x);
            case Activation::sigmoid: return sigmoid_op(x);
            case Activation::tanh: return tanh_op(x);
        }
        throw ConfigError("unknown activation");
    }

    NodeId concat_cols(NodeId a, NodeId b) {
        const Tensor& av = node(a).val;
        const Tensor& bv = node(b).val;
        if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) throw ShapeError("concat_cols: row mismatch");
        int rows = av.rows(), ca = av.cols(), cb = bv.cols();
        Tensor out({rows, ca + cb});
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < ca; ++c) out.at(r, c) = av.at(r, c);
            for (int c = 0; c < cb; ++c) out.at(r, ca + c) = bv.at(r, c);
        }
        return push(std::move(out), node(a).rg || node(b).rg, [a, b, ca, cb](Tape& t, NodeId self) {
            const Tensor& dy = t.node(self).grad;
            int rows = dy.rows();
            if (t.node(a).rg) {
                Tensor& da = t.node(a).grad;
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < ca; ++c) da.at(r, c) += dy.at(r, c);
            }
            if (t.node(b).rg) {
                Tensor& db = t.node(b).grad;
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cb; ++c) db.at(r, c) += dy.at(r, ca + c);
            }
        });
    }

    NodeId slice_cols(NodeId x, int c0, int c1) {
        const Tensor& xv = node(x).val;
        if (xv.rank() != 2 || c0 < 0 || c1 > xv.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
        int rows = xv.rows();
        Tensor out({rows, c1 - c0});
        for (int r = 0; r < rows; ++r)
            for (int c = c0; c < c1; ++c) out.at(r, c - c0) = xv.at(r, c);
        return push(std::move(out), node(x).rg, [x, c0, c1](Tape& t, NodeId self) {
            if (!t.node(x).rg) return;
            const Tensor& dy = t.node(self).grad;
            Tensor& dx = t.node(x).grad;
            for (int r = 0; r < dy.rows(); ++r)
                for (int c = 0; c < dy.cols(); ++c) dx.at(r, c0 + c) += dy.at(r, c);
        });
    }

    /// mean((pred - target)^2) over all entries.
    NodeId mse(NodeId pred, NodeId target) {
        const Tensor& pv = node(pred).val;
        const Tensor& tv = node(target).val;
        if (!pv.same_shape(tv)) throw ShapeError("mse: shape mismatch");
        if (pv.numel() == 0) throw ShapeError("mse: empty inputs");
        double n = static_cast<double>(pv.numel());
        double s = 0.0;
        for (std::size_t i = 0; i < pv.data.size(); ++i) {
            double d = pv.data[i] - tv.data[i];
            s += d * d;
        }
        return push(Tensor::scalar(s / n), node(pred).rg || node(target).rg, [pred, target, n](Tape& t, NodeId self) {
            double dl = t.node(self).grad.data[0];
            const Tensor& pv2 = t.node(pred).val;
            const Tensor& tv2 = t.node(target).val;
            if (t.node(pred).rg) {
                Tensor& dp = t.node(pred).grad;
                for (std::size_t i = 0; i < pv2.data.size(); ++i)
                    dp.data[i] += dl * 2.0 * (pv2.data[i] - tv2.data[i]) / n;
            }
            if (t.node(target).rg) {
                Tensor& dt = t.node(target).grad;
                for (std::size_t i = 0; i < pv2.data.size(); ++i)
                    dt.data[i] += dl * 2.0 * (tv2.data[i] - pv2.data[i]) / n;
            }
        });
    }

    /// Mean binary cross-entropy. Probabilities are clamped to
    /// [1e-12, 1 - 1e-12]; the clamp passes no gradient outside the range.
    NodeId bce(NodeId prob, NodeId label) {
        const Tensor& pv = node(prob).val;
        const Tensor& lv = node(label).val;
        if (!pv.same_shape(lv)) throw ShapeError("bce: shape mismatch");
        if (pv.numel() == 0) throw ShapeError("bce: empty inputs");
        constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
        double n = static_cast<double>(pv.numel());
        double s = 0.0;
        for (std::size_t i = 0; i < pv.data.size(); ++i) {
            double p = std::min(std::max(pv.data[i], lo), hi);
            double y = lv.data[i];
            s += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
        }
        return push(Tensor::scalar(s / n), node(prob).rg, [prob, label, n](Tape& t, NodeId self) {
            if (!t.node(prob).rg) return;
            double dl = t.node(self).grad.data[0];
            const Tensor& pv2 = t.node(prob).val;
            const Tensor& lv2 = t.node(label).val;
            Tensor& dp = t.node(prob).grad;
            for (std::size_t i = 0; i < pv2.data.size(); ++i) {
                double p = pv2.data[i];
                if (p <= lo || p >= hi) continue;
                double y = lv2.data[i];
                dp.data[i] += dl * (-y / p + (1.0 - y) / (1.0 - p)) / n;
            }
        });
    }

    /// Propagates d(loss)/d(node) into every gradient buffer. The loss node
    /// must be a scalar produced by a prior forward pass on this tape.
    void backward(NodeId loss) {
        if (nodes_.empty()) throw StateError("backward called before any forward pass");
        if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size())) throw StateError("backward: unknown node");
        if (node(loss).val.numel() != 1) throw ShapeError("backward: loss must be scalar");
        node(loss).grad.data[0] = 1.0;
        for (NodeId i = loss; i >= 0; --i) {
            Node& nd = nodes_[static_cast<std::size_t>(i)];
            if (nd.rg && nd.back) nd.back(*this, i);
        }
    }

  private:
    struct Node {
        Tensor val;
        Tensor grad;
        bool rg = false;
        std::function<void(Tape&, NodeId)> back;
    };

    static void axpy(Tensor& dst, const Tensor& src) {
        for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
    }
    static std::string shape_str(const Tensor& t) {
        std::string s = "(";
        for (std::size_t i = 0; i < t.shape.size(); ++i) s += (i ? "," : "") + std::to_string(t.shape[i]);
        return s + ")";
    }

    Node& node(NodeId id) {
        if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) throw StateError("bad node id");
        return nodes_[static_cast<std::size_t>(id)];
    }
    const Node& node(NodeId id) const { return const_cast<Tape*>(this)->node(id); }

    NodeId push(Tensor val, bool rg, std::function<void(Tape&, NodeId)> back) {
        Node nd;
        nd.grad = Tensor(val.shape);
        nd.val = std::move(val);
        nd.rg = rg;
        nd.back = std::move(back);
        nodes_.push_back(std::move(nd));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

/// Gate blocks are stacked input/forget/output/candidate, so the combined
/// pre-activation has 4h rows and the forget block lives at [h, 2h).
struct LSTMCellParams {
    Tensor w_in;   // 4h x d
    Tensor w_rec;  // 4h x h
    Tensor bias;   // 4h
    int hidden = 0;
    int input = 0;
};

inline double glorot_limit(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

inline Tensor uniform_init(std::vector<int> shape, double limit, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t.data) v = dist(rng);
    return t;
}

/// Glorot-uniform weights; zero biases except the forget gate, which starts
/// at 1.0.
inline LSTMCellParams make_lstm_params(int input, int hidden, std::mt19937_64& rng) {
    LSTMCellParams p;
    p.input = input;
    p.hidden = hidden;
    p.w_in = uniform_init({4 * hidden, input}, glorot_limit(input, 4 * hidden), rng);
    p.w_rec = uniform_init({4 * hidden, hidden}, glorot_limit(hidden, 4 * hidden), rng);
    p.bias = Tensor({4 * hidden});
    for (int i = hidden; i < 2 * hidden; ++i) p.bias.data[i] = 1.0;
    return p;
}

struct LstmTrace {
    std::vector<std::vector<double>> input_gate, forget_gate, output_gate, candidate;
};

struct LstmResult {
    Tensor hidden_seq;  // w x h
    std::vector<double> h_final, c_final;
};

/// Single-sequence LSTM forward pass (inference path). Standard gate
/// equations: c = f*c_prev + i*g, h = o*tanh(c).
inline LstmResult lstm_forward(const Tensor& seq, const LSTMCellParams& p, const std::vector<double>& h0 = {},
                               const std::vector<double>& c0 = {}, LstmTrace* trace = nullptr) {
    if (seq.rank() != 2 || seq.cols() != p.input)
        throw ShapeError("lstm_forward: sequence has width " + std::to_string(seq.cols()) + ", cell expects " +
                         std::to_string(p.input));
    int h = p.hidden;
    std::vector<double> hs = h0.empty() ? std::vector<double>(h, 0.0) : h0;
    std::vector<double> cs = c0.empty() ? std::vector<double>(h, 0.0) : c0;
    if (static_cast<int>(hs.size()) != h || static_cast<int>(cs.size()) != h)
        throw ShapeError("lstm_forward: initial state size mismatch");

    int w = seq.rows();
    LstmResult res;
    res.hidden_seq = Tensor({w, h});
    std::vector<double> gates(4 * h);
    for (int t = 0; t < w; ++t) {
        for (int r = 0; r < 4 * h; ++r) {
            double acc = p.bias.data[r];
            for (int c = 0; c < p.input; ++c) acc += p.w_in.at(r, c) * seq.at(t, c);
            for (int c = 0; c < h; ++c) acc += p.w_rec.at(r, c) * hs[c];
            gates[r] = acc;
        }
        if (trace) {
            trace->input_gate.emplace_back(h);
            trace->forget_gate.emplace_back(h);
            trace->output_gate.emplace_back(h);
            trace->candidate.emplace_back(h);
        }
        for (int k = 0; k < h; ++k) {
            double ig = sigmoid(gates[k]);
            double fg = sigmoid(gates[h + k]);
            double og = sigmoid(gates[2 * h + k]);
            double gg = std::tanh(gates[3 * h + k]);
            cs[k] = fg * cs[k] + ig * gg;
            hs[k] = og * std::tanh(cs[k]);
            res.hidden_seq.at(t, k) = hs[k];
            if (trace) {
                trace->input_gate.back()[k] = ig;
                trace->forget_gate.back()[k] = fg;
                trace->output_gate.back()[k] = og;
                trace->candidate.back()[k] = gg;
            }
        }
    }
    res.h_final = std::move(hs);
    res.c_final = std::move(cs);
    return res;
}

/// activation(W x + b) for a single vector.
inline std::vector<double> dense_forward(const std::vector<double>& x, const Tensor& w, const std::vector<double>& b,
                                         Activation act) {
    if (w.rank() != 2 || w.cols() != static_cast<int>(x.size()))
        throw ShapeError("dense_forward: weight/input mismatch");
    if (static_cast<int>(b.size()) != w.rows()) throw ShapeError("dense_forward: bias length mismatch");
    std::vector<double> out(b);
    for (int r = 0; r < w.rows(); ++r) {
        double acc = out[r];
        for (int c = 0; c < w.cols(); ++c) acc += w.at(r, c) * x[c];
        switch (act) {
            case Activation::identity: out[r] = acc; break;
            case Activation::relu: out[r] = acc > 0.0 ? acc : 0.0; break;
            case Activation::sigmoid: out[r] = sigmoid(acc); break;
            case Activation::tanh: out[r] = std::tanh(acc); break;
        }
    }
    return out;
}

inline double mse_loss(const std::vector<double>& predictions, const std::vector<double>& targets) {
    if (predictions.empty() || predictions.size() != targets.size()) throw ShapeError("mse_loss: bad input lengths");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        double d = predictions[i] - targets[i];
        s += d * d;
    }
    return s / static_cast<double>(predictions.size());
}

inline double bce_loss(const std::vector<double>& probabilities, const std::vector<double>& labels) {
    if (probabilities.empty() || probabilities.size() != labels.size()) throw ShapeError("bce_loss: bad input lengths");
    constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
    double s = 0.0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        double p = std::min(std::max(probabilities[i], lo), hi);
        s += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    return s / static_cast<double>(probabilities.size());
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::map<std::string, Tensor> m, v;
    long long t = 0;
};

/// Scales every gradient so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
inline double clip_global_norm(ParameterSet& params, double max_norm) {
    double norm = params.grad_norm();
    if (norm > max_norm && norm > 0.0) {
        double scale = max_norm / norm;
        for (auto& [name, g] : params.grads)
            for (double& x : g.data) x *= scale;
    }
    return norm;
}

/// One bias-corrected adaptive-moment update over every parameter tensor.
/// Aborts on non-finite gradients.
inline void adam_step(ParameterSet& params, AdamState& state, const AdamConfig& cfg) {
    ++state.t;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (auto& [name, value] : params.values) {
        const Tensor& g = params.grads.at(name);
        if (!g.all_finite())
            throw NumericalError("adam_step: non-finite gradient in '" + name + "' at step " + std::to_string(state.t));
        auto mit = state.m.find(name);
        if (mit == state.m.end()) {
            mit = state.m.emplace(name, Tensor(value.shape)).first;
            state.v.emplace(name, Tensor(value.shape));
        }
        Tensor& m = mit->second;
        Tensor& v = state.v.at(name);
        for (std::size_t i = 0; i < value.data.size(); ++i) {
            double gi = g.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
    std::map<std::string, double> max_rel_err;
    double overall = 0.0;
    bool passed(double tolerance) const { return overall < tolerance; }
};

/// Compares analytic gradients against central finite differences.
/// `loss_fn` evaluates the loss with the current parameter values and must
/// not mutate them; `grad_fn` runs forward+backward and fills params.grads.
/// Entries below 1e-3 in magnitude are compared with an absolute scale to
/// keep finite-difference noise out of the ratio. Tensors larger than
/// max_entries_per_tensor are sampled.
inline GradCheckReport grad_check(ParameterSet& params, const std::function<double()>& loss_fn,
                                  const std::function<double()>& grad_fn, double step = 1e-5,
                                  int max_entries_per_tensor = 64, std::uint64_t sample_seed = 0) {
    params.zero_grads();
    grad_fn();
    std::map<std::string, Tensor> analytic;
    for (const auto& [name, g] : params.grads) analytic.emplace(name, g);

    GradCheckReport report;
    std::mt19937_64 rng(sample_seed);
    for (auto& [name, value] : params.values) {
        std::size_t n = value.numel();
        std::vector<std::size_t> idx;
        if (static_cast<int>(n) <= max_entries_per_tensor) {
            idx.resize(n);
            for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        } else {
            for (int i = 0; i < max_entries_per_tensor; ++i) idx.push_back(rng() % n);
        }
        double worst = 0.0;
        for (std::size_t i : idx) {
            double saved = value.data[i];
            value.data[i] = saved + step;
            double up = loss_fn();
            value.data[i] = saved - step;
            double down = loss_fn();
            value.data[i] = saved;
            double fd = (up - down) / (2.0 * step);
            double an = analytic.at(name).data[i];
            double rel = std::fabs(an - fd) / std::max({1e-3, std::fabs(an), std::fabs(fd)});
            worst = std::max(worst, rel);
        }
        report.max_rel_err[name] = worst;
        report.overall = std::max(report.overall, worst);
    }
    return report;
}

}  // namespace stepcast::ad
