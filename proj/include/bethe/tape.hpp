#pragma once

#include <vector>

#include "bethe/matrix.hpp"

namespace bethe {

enum class OpKind {
    Leaf,
    Constant,
    MatMul,
    Add,
    Sub,
    Hadamard,
    Scale,
    Tanh,
    Exp,
    Log,
    LogFloored,
    Square,
    Sqrt,
    Reciprocal,
    Sum,
    BroadcastRow,
    Transpose,
    LogNdtr,
    Ndtr,
    Softplus,
    SpdInverse,
    LogdetSpd,
};

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Gradients of a scalar root with respect to every parameter leaf, keyed by
/// leaf node id.
class Gradient {
public:
    explicit Gradient(std::size_t node_count) : slots_(node_count) {}

    const Matrix& at(Var leaf) const {
        const Matrix& m = slots_.at(static_cast<std::size_t>(leaf.id));
        if (m.empty()) throw std::invalid_argument("Gradient::at: node is not a parameter leaf");
        return m;
    }

    Matrix& slot(int id) { return slots_[static_cast<std::size_t>(id)]; }

private:
    std::vector<Matrix> slots_;
};

/// Record of one forward computation. Nodes are stored in topological order
/// by construction; backward() replays them in reverse, accumulating
/// adjoints. A tape is built fresh for every evaluation and is not reused
/// across steps. Single-threaded; independent tapes are independent.
class Tape {
public:
    /// Leaf registered as a trainable parameter.
    Var leaf(Matrix value);
    /// Leaf that receives no gradient (inputs, masks, fixed constants).
    Var constant(Matrix value);

    Var forward_op(OpKind kind, Var a, Var b = {}, double scalar = 0.0);

    Var matmul(Var a, Var b) { return forward_op(OpKind::MatMul, a, b); }
    Var add(Var a, Var b) { return forward_op(OpKind::Add, a, b); }
    Var sub(Var a, Var b) { return forward_op(OpKind::Sub, a, b); }
    Var hadamard(Var a, Var b) { return forward_op(OpKind::Hadamard, a, b); }
    Var scale(Var a, double s) { return forward_op(OpKind::Scale, a, {}, s); }
    Var tanh(Var a) { return forward_op(OpKind::Tanh, a); }
    Var exp(Var a) { return forward_op(OpKind::Exp, a); }
    Var log(Var a) { return forward_op(OpKind::Log, a); }
    Var log_floored(Var a) { return forward_op(OpKind::LogFloored, a); }
    Var square(Var a) { return forward_op(OpKind::Square, a); }
    Var sqrt(Var a) { return forward_op(OpKind::Sqrt, a); }
    Var reciprocal(Var a) { return forward_op(OpKind::Reciprocal, a); }
    Var sum(Var a) { return forward_op(OpKind::Sum, a); }
    Var broadcast_row(Var a, std::size_t rows) {
        return forward_op(OpKind::BroadcastRow, a, {}, static_cast<double>(rows));
    }
    Var transpose(Var a) { return forward_op(OpKind::Transpose, a); }
    Var log_ndtr(Var a) { return forward_op(OpKind::LogNdtr, a); }
    Var ndtr(Var a) { return forward_op(OpKind::Ndtr, a); }
    Var softplus(Var a) { return forward_op(OpKind::Softplus, a); }
    Var spd_inverse(Var a) { return forward_op(OpKind::SpdInverse, a); }
    Var logdet_spd(Var a) { return forward_op(OpKind::LogdetSpd, a); }

    const Matrix& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
    double scalar_value(Var v) const { return value(v).item(); }

    const std::vector<int>& parameters() const { return params_; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Adjoint accumulation from a 1x1 root. Pure: repeated calls on the
    /// same tape return identical gradients.
    Gradient backward(Var root) const;

private:
    struct Node {
        OpKind kind;
        int a = -1;
        int b = -1;
        double scalar = 0.0;
        Matrix value;
        Matrix aux;  // cached extra state (e.g. the SPD inverse)
    };

    Var push(Node node);
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    std::vector<Node> nodes_;
    std::vector<int> params_;
};

}  // namespace bethe
