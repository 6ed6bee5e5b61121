#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "crossfuse/contrastive.hpp"
#include "crossfuse/error.hpp"
#include "crossfuse/matrix.hpp"
#include "crossfuse/nn.hpp"

namespace crossfuse {

// Reverse-mode gradients over a closed op set. Every forward builder appends
// one node; node inputs always have smaller ids, so a single reverse sweep
// from the loss node propagates all gradients.
class Tape {
public:
    // Deliberately wrong relu derivative (1 everywhere). Exists so the
    // gradient checker's failure path can be exercised on demand.
    bool debug_break_relu = false;

    int input(Vec v) {
        Node n;
        n.kind = Kind::input;
        n.val = std::move(v);
        return push(std::move(n));
    }

    // sink == nullptr freezes the layer: input gradients still flow through,
    // but no parameter gradient is accumulated.
    int dense(int x, const DenseLayer& layer, DenseGrad* sink) {
        Node n;
        n.kind = Kind::dense;
        n.inputs = {check(x)};
        n.layer = &layer;
        n.gsink = sink;
        n.val = dense_forward(layer, val(x));
        return push(std::move(n));
    }

    int relu_node(int x) {
        Node n;
        n.kind = Kind::relu;
        n.inputs = {check(x)};
        n.val = relu(val(x));
        return push(std::move(n));
    }

    int dropout_node(int x, Vec mask) {
        Node n;
        n.kind = Kind::dropout;
        n.inputs = {check(x)};
        n.val = apply_mask(val(x), mask);
        n.mask = std::move(mask);
        return push(std::move(n));
    }

    int concat_node(const std::vector<int>& xs) {
        require(!xs.empty(), ErrKind::state, "tape concat: no inputs");
        Node n;
        n.kind = Kind::concat;
        for (int x : xs) n.inputs.push_back(check(x));
        for (int x : xs) n.val.insert(n.val.end(), val(x).begin(), val(x).end());
        return push(std::move(n));
    }

    int softmax_node(int x) {
        Node n;
        n.kind = Kind::softmax;
        n.inputs = {check(x)};
        n.val = softmax(val(x));
        return push(std::move(n));
    }

    int add(int a, int b) {
        require(val(a).size() == val(b).size(), ErrKind::dimension,
                "tape add: length mismatch");
        Node n;
        n.kind = Kind::add;
        n.inputs = {check(a), check(b)};
        n.val = val(a);
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] += val(b)[i];
        return push(std::move(n));
    }

    int scale(int x, double c) {
        Node n;
        n.kind = Kind::scale;
        n.inputs = {check(x)};
        n.c = c;
        n.val = val(x);
        for (double& v : n.val) v *= c;
        return push(std::move(n));
    }

    int reduce_sum(int x) {
        Node n;
        n.kind = Kind::reduce_sum;
        n.inputs = {check(x)};
        double acc = 0.0;
        for (double v : val(x)) acc += v;
        n.val = {acc};
        return push(std::move(n));
    }

    int squared_error(int a, int b) {
        require(val(a).size() == val(b).size(), ErrKind::dimension,
                "tape squared_error: length mismatch");
        Node n;
        n.kind = Kind::squared_error;
        n.inputs = {check(a), check(b)};
        double acc = 0.0;
        for (std::size_t i = 0; i < val(a).size(); ++i) {
            const double d = val(a)[i] - val(b)[i];
            acc += d * d;
        }
        n.val = {acc};
        return push(std::move(n));
    }

    int cosine(int a, int b) {
        Node n;
        n.kind = Kind::cosine;
        n.inputs = {check(a), check(b)};
        n.val = {cosine_sim(val(a), val(b))};
        return push(std::move(n));
    }

    int supcon(const std::vector<int>& zs, std::vector<std::size_t> labels,
               const SupConConfig& cfg) {
        require(zs.size() == labels.size(), ErrKind::dimension,
                "tape supcon: embeddings and labels disagree in count");
        Node n;
        n.kind = Kind::supcon;
        for (int z : zs) n.inputs.push_back(check(z));
        std::vector<Vec> rows;
        rows.reserve(zs.size());
        for (int z : zs) {
            require(all_finite(val(z)), ErrKind::numeric,
                    "tape supcon: non-finite embedding");
            rows.push_back(val(z));
        }
        n.sims = pairwise_cosine(rows);
        n.val = {supcon_from_sims(n.sims, labels, cfg)};
        n.labels = std::move(labels);
        n.sc = cfg;
        return push(std::move(n));
    }

    int cross_entropy(int logits, std::size_t label) {
        Node n;
        n.kind = Kind::cross_entropy;
        n.inputs = {check(logits)};
        n.label = label;
        n.val = {cross_entropy_logits(val(logits), label)};
        n.cache = softmax(val(logits));
        return push(std::move(n));
    }

    const Vec& val(int i) const { return nodes_[static_cast<std::size_t>(i)].val; }
    const Vec& grad(int i) const { return nodes_[static_cast<std::size_t>(i)].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. The root must
    // be a scalar node (a loss).
    void backward(int root) {
        require(!nodes_.empty(), ErrKind::state, "tape backward: nothing recorded");
        require(root >= 0 && root < static_cast<int>(nodes_.size()), ErrKind::state,
                "tape backward: root id out of range");
        require(nodes_[static_cast<std::size_t>(root)].val.size() == 1, ErrKind::state,
                "tape backward: root must be a scalar loss");
        for (Node& n : nodes_) n.grad.assign(n.val.size(), 0.0);
        nodes_[static_cast<std::size_t>(root)].grad[0] = 1.0;
        for (int i = root; i >= 0; --i) step_back(static_cast<std::size_t>(i));
    }

private:
    enum class Kind {
        input,
        dense,
        relu,
        dropout,
        concat,
        softmax,
        add,
        scale,
        reduce_sum,
        squared_error,
        cosine,
        supcon,
        cross_entropy,
    };

    struct Node {
        Kind kind = Kind::input;
        std::vector<int> inputs;
        Vec val;
        Vec grad;
        const DenseLayer* layer = nullptr;
        DenseGrad* gsink = nullptr;
        Vec mask;
        Vec cache;
        std::vector<std::size_t> labels;
        SupConConfig sc;
        Matrix sims;
        double c = 0.0;
        std::size_t label = 0;
    };

    std::vector<Node> nodes_;

    int push(Node&& n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int check(int x) const {
        require(x >= 0 && x < static_cast<int>(nodes_.size()), ErrKind::state,
                "tape: input node id out of range");
        return x;
    }

    Vec& gref(int i) { return nodes_[static_cast<std::size_t>(i)].grad; }

    void step_back(std::size_t idx) {
        Node& n = nodes_[idx];
        switch (n.kind) {
            case Kind::input:
                break;
            case Kind::dense: {
                const Vec& x = val(n.inputs[0]);
                Vec dx = matvec_t(n.layer->w, n.grad);
                axpy(1.0, dx, gref(n.inputs[0]));
                if (n.gsink != nullptr) {
                    add_outer(n.gsink->dw, n.grad, x);
                    axpy(1.0, n.grad, n.gsink->db);
                }
                break;
            }
            case Kind::relu: {
                const Vec& x = val(n.inputs[0]);
                Vec& dx = gref(n.inputs[0]);
                for (std::size_t i = 0; i < x.size(); ++i) {
                    const double pass = debug_break_relu ? 1.0 : (x[i] > 0.0 ? 1.0 : 0.0);
                    dx[i] += n.grad[i] * pass;
                }
                break;
            }
            case Kind::dropout: {
                Vec& dx = gref(n.inputs[0]);
                for (std::size_t i = 0; i < n.mask.size(); ++i)
                    dx[i] += n.grad[i] * n.mask[i];
                break;
            }
            case Kind::concat: {
                std::size_t off = 0;
                for (int in : n.inputs) {
                    Vec& dx = gref(in);
                    for (std::size_t i = 0; i < dx.size(); ++i)
                        dx[i] += n.grad[off + i];
                    off += dx.size();
                }
                break;
            }
            case Kind::softmax: {
                const Vec& y = n.val;
                double gdoty = 0.0;
                for (std::size_t i = 0; i < y.size(); ++i) gdoty += n.grad[i] * y[i];
                Vec& dx = gref(n.inputs[0]);
                for (std::size_t i = 0; i < y.size(); ++i)
                    dx[i] += y[i] * (n.grad[i] - gdoty);
                break;
            }
            case Kind::add: {
                axpy(1.0, n.grad, gref(n.inputs[0]));
                axpy(1.0, n.grad, gref(n.inputs[1]));
                break;
            }
            case Kind::scale: {
                axpy(n.c, n.grad, gref(n.inputs[0]));
                break;
            }
            case Kind::reduce_sum: {
                Vec& dx = gref(n.inputs[0]);
                for (double& v : dx) v += n.grad[0];
                break;
            }
            case Kind::squared_error: {
                const Vec& a = val(n.inputs[0]);
                const Vec& b = val(n.inputs[1]);
                Vec& da = gref(n.inputs[0]);
                Vec& db = gref(n.inputs[1]);
                for (std::size_t i = 0; i < a.size(); ++i) {
                    const double d = 2.0 * (a[i] - b[i]) * n.grad[0];
                    da[i] += d;
                    db[i] -= d;
                }
                break;
            }
            case Kind::cosine: {
                accumulate_cosine(n.grad[0], n.inputs[0], n.inputs[1], n.val[0]);
                break;
            }
            case Kind::supcon: {
                Matrix sg = supcon_sim_grad(n.sims, n.labels, n.sc);
                const std::size_t bn = n.labels.size();
                for (std::size_t i = 0; i < bn; ++i)
                    for (std::size_t j = 0; j < bn; ++j) {
                        if (i == j) continue;
                        const double g = sg.at(i, j) * n.grad[0];
                        if (g == 0.0) continue;
                        accumulate_cosine(g, n.inputs[i], n.inputs[j], n.sims.at(i, j));
                    }
                break;
            }
            case Kind::cross_entropy: {
                const Vec& p = n.cache;
                Vec& dx = gref(n.inputs[0]);
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const double onehot = (i == n.label) ? 1.0 : 0.0;
                    dx[i] += n.grad[0] * (p[i] - onehot);
                }
                break;
            }
        }
    }

    // d cos(u,v)/du = (v_hat - s u_hat)/|u|, symmetric in v. Degenerate
    // vectors (norm < 1e-12) carry zero gradient, matching the forward guard.
    void accumulate_cosine(double g, int ui, int vi, double s) {
        const Vec& u = val(ui);
        const Vec& v = val(vi);
        const double nu = norm2(u);
        const double nv = norm2(v);
        if (nu < 1e-12 || nv < 1e-12) return;
        Vec& du = gref(ui);
        Vec& dv = gref(vi);
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double uh = u[i] / nu;
            const double vh = v[i] / nv;
            du[i] += g * (vh - s * uh) / nu;
            dv[i] += g * (uh - s * vh) / nv;
        }
    }
};

// ---------------------------------------------------------------------------
// finite-difference checking
// ---------------------------------------------------------------------------

// One flat view of a parameter block plus its analytic gradient, both owned
// by the caller.
struct ParamBlock {
    std::string name;
    double* data = nullptr;
    const double* grad = nullptr;
    std::size_t n = 0;
};

inline ParamBlock param_block(const std::string& name, DenseLayer& layer,
                              const DenseGrad& g, bool weights) {
    if (weights)
        return {name + ".w", layer.w.data.data(), g.dw.data.data(), layer.w.size()};
    return {name + ".b", layer.b.data(), g.db.data(), layer.b.size()};
}

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

// Central differences against caller-supplied analytic gradients. loss_fn
// must be a pure function of the parameter blocks (no fresh randomness) and
// the analytic gradients must already be evaluated at the current point.
template <class LossFn>
GradCheckReport grad_check(LossFn&& loss_fn, const std::vector<ParamBlock>& params,
                           double h = 1e-5) {
    GradCheckReport rep;
    for (const ParamBlock& pb : params) {
        for (std::size_t i = 0; i < pb.n; ++i) {
            const double keep = pb.data[i];
            pb.data[i] = keep + h;
            const double fp = loss_fn();
            pb.data[i] = keep - h;
            const double fm = loss_fn();
            pb.data[i] = keep;
            require(std::isfinite(fp) && std::isfinite(fm), ErrKind::numeric,
                    "grad check: non-finite loss while perturbing " + pb.name);
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = pb.grad[i];
            const double rel = std::abs(analytic - numeric) /
                               std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = pb.name;
                rep.worst_index = i;
                rep.analytic = analytic;
                rep.numeric = numeric;
            }
        }
    }
    return rep;
}

}  // namespace crossfuse
