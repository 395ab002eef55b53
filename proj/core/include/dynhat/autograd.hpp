#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace dynhat::ad {

using Mat = Eigen::MatrixXd;
using ConstMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

class Graph;

/// Handle to one value in a Graph. Cheap to copy; valid while the Graph
/// lives. Leaf values can alias external storage (e.g. blocks of a weight
/// bank) so no weights are copied to run a forward pass.
class Var {
  public:
    Var() = default;
    bool valid() const { return g_ != nullptr; }
    ConstMap value() const;
    Eigen::Index rows() const;
    Eigen::Index cols() const;
    double scalar() const;
    /// Accumulated gradient; zero until backward() visits this node.
    const Mat& grad() const;
    bool requires_grad() const;

  private:
    friend class Graph;
    Var(Graph* g, int id) : g_(g), id_(id) {}
    Graph* g_ = nullptr;
    int id_ = -1;
};

/// Reverse-mode tape over Eigen matrices. Construct with recording=false for
/// plain inference: no gradients are allocated and no backward closures are
/// recorded, the ops just compute values.
class Graph {
  public:
    explicit Graph(bool recording = true) : recording_(recording) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return recording_; }

    /// Owned constant (no gradient).
    Var constant(Mat v);
    /// Non-owning leaf over external column-major storage. `outer_stride` is
    /// the distance between columns of the parent allocation. The storage
    /// must outlive the graph.
    Var leaf_view(const double* data, Eigen::Index rows, Eigen::Index cols,
                  Eigen::Index outer_stride, bool requires_grad);

    Var matmul(Var a, Var b);      // A * B
    Var matmul_nt(Var a, Var b);   // A * B^T
    Var add(Var a, Var b);
    Var add_constant(Var a, const Mat& c);
    Var mul_constant(Var a, const Mat& c);  // elementwise
    Var scale(Var a, double s);
    Var sum_all(Var a);  // 1x1 sum of every entry
    Var relu(Var a);
    Var slice_cols(Var a, Eigen::Index start, Eigen::Index n);
    Var concat_cols(const std::vector<Var>& parts);
    Var concat_rows(const std::vector<Var>& parts);
    /// out.row(i) = table.row(ids[i])
    Var gather_rows(Var table, const std::vector<int>& ids);
    /// Row-wise layer normalization; gain/bias are [dim x 1].
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    /// Row-wise softmax of (scores + additive_bias). Masking is expressed as
    /// a large negative additive bias. The bias gets no gradient.
    Var softmax_rows(Var scores, const Mat* additive_bias = nullptr);
    /// Mean token cross-entropy of row-wise logits against integer targets,
    /// optional label smoothing, optional per-row inclusion mask. Returns a
    /// 1x1 value in nats per counted token.
    Var cross_entropy_mean(Var logits, const std::vector<int>& targets,
                           double label_smoothing,
                           const std::vector<bool>* counted_rows = nullptr);

    /// Runs reverse accumulation from a 1x1 loss node. May be called once.
    void backward(Var loss);

  private:
    struct Node {
        Mat storage;                 // owned value, empty for external views
        const double* data = nullptr;
        Eigen::Index r = 0, c = 0, outer = 0;
        Mat grad;                    // allocated iff requires_grad
        bool requires_grad = false;
        std::function<void()> back;  // propagates this->grad into inputs
    };

    Node& node(Var v) { return *nodes_[static_cast<std::size_t>(v.id_)]; }
    const Node& node(Var v) const { return *nodes_[static_cast<std::size_t>(v.id_)]; }
    Var make_owned(Mat value, bool requires_grad);
    friend class Var;

    std::vector<std::unique_ptr<Node>> nodes_;
    bool recording_;
    bool backward_done_ = false;
};

}  // namespace dynhat::ad
