#include "dynhat/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace dynhat::ad {

namespace {
ConstMap map_of(const double* data, Eigen::Index r, Eigen::Index c, Eigen::Index outer) {
    return ConstMap(data, r, c, Eigen::OuterStride<>(outer));
}
}  // namespace

ConstMap Var::value() const {
    const auto& n = g_->node(*this);
    return map_of(n.data, n.r, n.c, n.outer);
}

Eigen::Index Var::rows() const { return g_->node(*this).r; }
Eigen::Index Var::cols() const { return g_->node(*this).c; }

double Var::scalar() const {
    const auto& n = g_->node(*this);
    if (n.r != 1 || n.c != 1) throw std::logic_error("scalar() on non-1x1 value");
    return n.data[0];
}

const Mat& Var::grad() const {
    const auto& n = g_->node(*this);
    if (!n.requires_grad) throw std::logic_error("grad() on a node without gradient");
    return n.grad;
}

bool Var::requires_grad() const { return g_ && g_->node(*this).requires_grad; }

Var Graph::make_owned(Mat value, bool requires_grad) {
    auto n = std::make_unique<Node>();
    n->storage = std::move(value);
    n->data = n->storage.data();
    n->r = n->storage.rows();
    n->c = n->storage.cols();
    n->outer = n->storage.outerStride();
    n->requires_grad = recording_ && requires_grad;
    if (n->requires_grad) n->grad = Mat::Zero(n->r, n->c);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::constant(Mat v) { return make_owned(std::move(v), false); }

Var Graph::leaf_view(const double* data, Eigen::Index rows, Eigen::Index cols,
                     Eigen::Index outer_stride, bool requires_grad) {
    auto n = std::make_unique<Node>();
    n->data = data;
    n->r = rows;
    n->c = cols;
    n->outer = outer_stride;
    n->requires_grad = recording_ && requires_grad;
    if (n->requires_grad) n->grad = Mat::Zero(rows, cols);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::matmul(Var a, Var b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims mismatch");
    Var out = make_owned(a.value() * b.value(), a.requires_grad() || b.requires_grad());
    if (out.requires_grad()) {
        Node* na = &node(a);
        Node* nb = &node(b);
        Node* no = &node(out);
        no->back = [na, nb, no] {
            if (na->requires_grad)
                na->grad.noalias() += no->grad * map_of(nb->data, nb->r, nb->c, nb->outer).transpose();
            if (nb->requires_grad)
                nb->grad.noalias() += map_of(na->data, na->r, na->c, na->outer).transpose() * no->grad;
        };
    }
    return out;
}

Var Graph::matmul_nt(Var a, Var b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dims mismatch");
    Var out = make_owned(a.value() * b.value().transpose(), a.requires_grad() || b.requires_grad());
    if (out.requires_grad()) {
        Node* na = &node(a);
        Node* nb = &node(b);
        Node* no = &node(out);
        no->back = [na, nb, no] {
            if (na->requires_grad)
                na->grad.noalias() += no->grad * map_of(nb->data, nb->r, nb->c, nb->outer);
            if (nb->requires_grad)
                nb->grad.noalias() += no->grad.transpose() * map_of(na->data, na->r, na->c, na->outer);
        };
    }
    return out;
}

Var Graph::add(Var a, Var b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("add: shape mismatch");
    Var out = make_owned(a.value() + b.value(), a.requires_grad() || b.requires_grad());
    if (out.requires_grad()) {
        Node* na = &node(a);
        Node* nb = &node(b);
        Node* no = &node(out);
        no->back = [na, nb, no] {
            if (na->requires_grad) na->grad += no->grad;
            if (nb->requires_grad) nb->grad += no->grad;
        };
    }
    return out;
}

Var Graph::add_constant(Var a, const Mat& c) {
    if (a.rows() != c.rows() || a.cols() != c.cols())
        throw std::invalid_argument("add_constant: shape mismatch");
    Var out = make_owned(a.value() + c, a.requires_grad());
    if (out.requires_grad()) {
        Node* na = &node(a);
        Node* no = &node(out);
        no->back = [na, no] { na->grad += no->grad; };
    }
    return out;
}

Var Graph::mul_constant(Var a, const Mat& c) {
    if (a.rows() != c.rows() || a.cols() != c.cols())
        throw std::invalid_argument("mul_constant: shape mismatch");
    Var out = make_owned(a.value().cwiseProduct(c), a.requires_grad());
    if (out.requires_grad()) {
        Node* na = &node(a);
        Node* no = &node(out);
        no->back = [na, no, c] { na->grad += no->grad.cwiseProduct(c); };
    }
    return out;
}

Var Graph::sum_all(Var a) {
    Mat v(1, 1);
    v(0, 0) = a.value().sum();
    Var out = make_owned(std::move(v), a.requires_grad());
    if (out.requires_grad()) {
        Node* na = &node(a);
        Node* no = &node(out);
        no->back = [na, no] { na->grad.array() += no->grad(0, 0); };
    }
    return out;
}

Var Graph::scale(Var a, double s) {
    Var out = make_owned(a.value() * s, a.requires_grad());
    if (out.requires_grad()) {
        Node* na = &node(a);
        Node* no = &node(out);
        no->back = [na, no, s] { na->grad += s * no->grad; };
    }
    return out;
}

Var Graph::relu(Var a) {
    Var out = make_owned(a.value().cwiseMax(0.0), a.requires_grad());
    if (out.requires_grad()) {
        Node* na = &node(a);
        Node* no = &node(out);
        no->back = [na, no] {
            auto x = map_of(na->data, na->r, na->c, na->outer);
            na->grad.array() += (x.array() > 0.0).cast<double>() * no->grad.array();
        };
    }
    return out;
}

Var Graph::slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
    if (start < 0 || n < 0 || start + n > a.cols())
        throw std::invalid_argument("slice_cols: out of range");
    Var out = make_owned(a.value().middleCols(start, n), a.requires_grad());
    if (out.requires_grad()) {
        Node* na = &node(a);
        Node* no = &node(out);
        no->back = [na, no, start, n] { na->grad.middleCols(start, n) += no->grad; };
    }
    return out;
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    Eigen::Index rows = parts.front().rows(), cols = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p.cols();
        rg = rg || p.requires_grad();
    }
    Mat v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    Var out = make_owned(std::move(v), rg);
    if (out.requires_grad()) {
        std::vector<Node*> ins;
        for (const auto& p : parts) ins.push_back(&node(p));
        Node* no = &node(out);
        no->back = [ins, no] {
            Eigen::Index at = 0;
            for (Node* n : ins) {
                if (n->requires_grad) n->grad += no->grad.middleCols(at, n->c);
                at += n->c;
            }
        };
    }
    return out;
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    Eigen::Index cols = parts.front().cols(), rows = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
        rows += p.rows();
        rg = rg || p.requires_grad();
    }
    Mat v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    Var out = make_owned(std::move(v), rg);
    if (out.requires_grad()) {
        std::vector<Node*> ins;
        for (const auto& p : parts) ins.push_back(&node(p));
        Node* no = &node(out);
        no->back = [ins, no] {
            Eigen::Index at = 0;
            for (Node* n : ins) {
                if (n->requires_grad) n->grad += no->grad.middleRows(at, n->r);
                at += n->r;
            }
        };
    }
    return out;
}

Var Graph::gather_rows(Var table, const std::vector<int>& ids) {
    const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
    auto t = table.value();
    for (int id : ids)
        if (id < 0 || id >= t.rows()) throw std::out_of_range("gather_rows: id out of range");
    Mat v(n, t.cols());
    for (Eigen::Index i = 0; i < n; ++i) v.row(i) = t.row(ids[static_cast<std::size_t>(i)]);
    Var out = make_owned(std::move(v), table.requires_grad());
    if (out.requires_grad()) {
        Node* nt = &node(table);
        Node* no = &node(out);
        no->back = [nt, no, ids] {
            for (Eigen::Index i = 0; i < no->r; ++i)
                nt->grad.row(ids[static_cast<std::size_t>(i)]) += no->grad.row(i);
        };
    }
    return out;
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Eigen::Index d = x.cols();
    if (gain.rows() != d || gain.cols() != 1 || bias.rows() != d || bias.cols() != 1)
        throw std::invalid_argument("layer_norm: gain/bias must be [dim x 1]");
    auto xv = x.value();
    Mat xhat(x.rows(), d);
    Eigen::VectorXd inv_sd(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = xv.row(i).mean();
        const double var = (xv.row(i).array() - mu).square().mean();
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sd(i) = inv;
        xhat.row(i) = (xv.row(i).array() - mu) * inv;
    }
    Mat y = (xhat.array().rowwise() * gain.value().col(0).transpose().array()).rowwise() +
            bias.value().col(0).transpose().array();
    const bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
    Var out = make_owned(std::move(y), rg);
    if (out.requires_grad()) {
        Node* nx = &node(x);
        Node* ng = &node(gain);
        Node* nb = &node(bias);
        Node* no = &node(out);
        no->back = [nx, ng, nb, no, xhat = std::move(xhat), inv_sd = std::move(inv_sd)] {
            const Mat& dy = no->grad;
            if (ng->requires_grad)
                ng->grad.col(0) += (dy.array() * xhat.array()).colwise().sum().transpose().matrix();
            if (nb->requires_grad)
                nb->grad.col(0) += dy.colwise().sum().transpose();
            if (nx->requires_grad) {
                auto g = map_of(ng->data, ng->r, ng->c, ng->outer).col(0);
                Mat dxhat = dy.array().rowwise() * g.transpose().array();
                const double d = static_cast<double>(dy.cols());
                for (Eigen::Index i = 0; i < dy.rows(); ++i) {
                    const double m1 = dxhat.row(i).sum() / d;
                    const double m2 = (dxhat.row(i).array() * xhat.row(i).array()).sum() / d;
                    nx->grad.row(i).array() +=
                        inv_sd(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
                }
            }
        };
    }
    return out;
}

Var Graph::softmax_rows(Var scores, const Mat* additive_bias) {
    auto sv = scores.value();
    Mat z = sv;
    if (additive_bias) {
        if (additive_bias->rows() != z.rows() || additive_bias->cols() != z.cols())
            throw std::invalid_argument("softmax_rows: bias shape mismatch");
        z += *additive_bias;
    }
    Mat y(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        Eigen::ArrayXd e = (z.row(i).array() - mx).exp();
        y.row(i) = (e / e.sum()).matrix();
    }
    Var out = make_owned(y, scores.requires_grad());
    if (out.requires_grad()) {
        Node* ns = &node(scores);
        Node* no = &node(out);
        no->back = [ns, no, y = std::move(y)] {
            const Mat& dy = no->grad;
            for (Eigen::Index i = 0; i < dy.rows(); ++i) {
                const double dot = (dy.row(i).array() * y.row(i).array()).sum();
                ns->grad.row(i).array() += y.row(i).array() * (dy.row(i).array() - dot);
            }
        };
    }
    return out;
}

Var Graph::cross_entropy_mean(Var logits, const std::vector<int>& targets,
                              double label_smoothing,
                              const std::vector<bool>* counted_rows) {
    const Eigen::Index t = logits.rows();
    const Eigen::Index v = logits.cols();
    if (static_cast<Eigen::Index>(targets.size()) != t)
        throw std::invalid_argument("cross_entropy: target count mismatch");
    if (counted_rows && static_cast<Eigen::Index>(counted_rows->size()) != t)
        throw std::invalid_argument("cross_entropy: mask size mismatch");

    auto lv = logits.value();
    double total = 0.0;
    Eigen::Index counted = 0;
    const double eps = label_smoothing;
    for (Eigen::Index i = 0; i < t; ++i) {
        if (counted_rows && !(*counted_rows)[static_cast<std::size_t>(i)]) continue;
        const int tgt = targets[static_cast<std::size_t>(i)];
        if (tgt < 0 || tgt >= v) throw std::out_of_range("cross_entropy: target id out of range");
        const double mx = lv.row(i).maxCoeff();
        const double lse = mx + std::log((lv.row(i).array() - mx).exp().sum());
        const double uniform_term = lv.row(i).sum() / static_cast<double>(v);
        total += lse - (1.0 - eps) * lv(i, tgt) - eps * uniform_term;
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("cross_entropy: no counted rows");
    Mat out(1, 1);
    out(0, 0) = total / static_cast<double>(counted);

    Var loss = make_owned(std::move(out), logits.requires_grad());
    if (loss.requires_grad()) {
        Node* nl = &node(logits);
        Node* no = &node(loss);
        auto mask = counted_rows ? *counted_rows : std::vector<bool>();
        no->back = [nl, no, targets, mask, eps, counted] {
            const double scale = no->grad(0, 0) / static_cast<double>(counted);
            auto lv = map_of(nl->data, nl->r, nl->c, nl->outer);
            const double v = static_cast<double>(nl->c);
            for (Eigen::Index i = 0; i < nl->r; ++i) {
                if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
                const double mx = lv.row(i).maxCoeff();
                Eigen::ArrayXd e = (lv.row(i).array() - mx).exp();
                Eigen::ArrayXd p = e / e.sum();
                p -= eps / v;
                p(targets[static_cast<std::size_t>(i)]) -= 1.0 - eps;
                nl->grad.row(i).array() += scale * p;
            }
        };
    }
    return loss;
}

void Graph::backward(Var loss) {
    if (!recording_) throw std::logic_error("backward on a non-recording graph");
    if (backward_done_) throw std::logic_error("backward may only run once per graph");
    backward_done_ = true;
    Node& ln = node(loss);
    if (ln.r != 1 || ln.c != 1) throw std::invalid_argument("backward: loss must be 1x1");
    if (!ln.requires_grad) throw std::invalid_argument("backward: loss has no gradient path");
    ln.grad(0, 0) = 1.0;
    for (int i = loss.id_; i >= 0; --i) {
        Node& n = *nodes_[static_cast<std::size_t>(i)];
        if (n.requires_grad && n.back) n.back();
    }
}

}  // namespace dynhat::ad
