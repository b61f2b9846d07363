#include "bethe/tape.hpp"

#include <cmath>

#include "bethe/linalg.hpp"
#include "bethe/special_functions.hpp"

namespace bethe {

namespace {

constexpr double kProbFloor = 1e-300;

Matrix map_unary(const Matrix& a, double (*fn)(double)) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = fn(a[k]);
    return out;
}

Matrix zip_binary(const Matrix& a, const Matrix& b, double (*fn)(double, double)) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = fn(a[k], b[k]);
    return out;
}

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Matrix value) {
    Var v = push(Node{OpKind::Leaf, -1, -1, 0.0, std::move(value), {}});
    params_.push_back(v.id);
    return v;
}

Var Tape::constant(Matrix value) {
    return push(Node{OpKind::Constant, -1, -1, 0.0, std::move(value), {}});
}

Var Tape::forward_op(OpKind kind, Var a, Var b, double scalar) {
    require(a.valid(), "forward_op: missing input");
    const Matrix& av = value(a);
    Node out{kind, a.id, b.id, scalar, {}, {}};
    switch (kind) {
        case OpKind::Leaf:
        case OpKind::Constant:
            throw std::invalid_argument("forward_op: leaves are created via leaf()/constant()");
        case OpKind::MatMul:
            require(b.valid(), "matmul: missing second input");
            out.value = bethe::matmul(av, value(b));
            break;
        case OpKind::Add:
            require(b.valid(), "add: missing second input");
            check_same_shape(av, value(b), "add");
            out.value = zip_binary(av, value(b), [](double x, double y) { return x + y; });
            break;
        case OpKind::Sub:
            require(b.valid(), "sub: missing second input");
            check_same_shape(av, value(b), "sub");
            out.value = zip_binary(av, value(b), [](double x, double y) { return x - y; });
            break;
        case OpKind::Hadamard:
            require(b.valid(), "hadamard: missing second input");
            check_same_shape(av, value(b), "hadamard");
            out.value = zip_binary(av, value(b), [](double x, double y) { return x * y; });
            break;
        case OpKind::Scale: {
            out.value = av;
            for (std::size_t k = 0; k < out.value.size(); ++k) out.value[k] *= scalar;
            break;
        }
        case OpKind::Tanh:
            out.value = map_unary(av, [](double x) { return std::tanh(x); });
            break;
        case OpKind::Exp:
            out.value = map_unary(av, [](double x) { return std::exp(x); });
            break;
        case OpKind::Log:
            for (std::size_t k = 0; k < av.size(); ++k)
                if (!(av[k] > 0.0)) throw std::domain_error("log: non-positive input");
            out.value = map_unary(av, [](double x) { return std::log(x); });
            break;
        case OpKind::LogFloored:
            // Value is floored away from zero; the adjoint stays 1/x with the
            // unfloored input.
            out.value = map_unary(av, [](double x) { return std::log(std::fmax(x, kProbFloor)); });
            break;
        case OpKind::Square:
            out.value = map_unary(av, [](double x) { return x * x; });
            break;
        case OpKind::Sqrt:
            for (std::size_t k = 0; k < av.size(); ++k)
                if (av[k] < 0.0) throw std::domain_error("sqrt: negative input");
            out.value = map_unary(av, [](double x) { return std::sqrt(x); });
            break;
        case OpKind::Reciprocal:
            out.value = map_unary(av, [](double x) { return 1.0 / x; });
            break;
        case OpKind::Sum: {
            double s = 0.0;
            for (std::size_t k = 0; k < av.size(); ++k) s += av[k];
            out.value = Matrix::scalar(s);
            break;
        }
        case OpKind::BroadcastRow: {
            require(av.rows() == 1, "broadcast_row: input must be a row vector");
            const auto rows = static_cast<std::size_t>(scalar);
            require(rows >= 1, "broadcast_row: target row count must be positive");
            Matrix m(rows, av.cols());
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < av.cols(); ++j) m(i, j) = av(0, j);
            out.value = std::move(m);
            break;
        }
        case OpKind::Transpose:
            out.value = bethe::transpose(av);
            break;
        case OpKind::LogNdtr:
            out.value = map_unary(av, &sf::log_ndtr);
            break;
        case OpKind::Ndtr:
            out.value = map_unary(av, &sf::ndtr);
            break;
        case OpKind::Softplus:
            out.value = map_unary(av, &sf::softplus);
            break;
        case OpKind::SpdInverse:
            require(av.rows() == av.cols(), "spd_inverse: matrix not square");
            out.value = bethe::spd_inverse(av);
            break;
        case OpKind::LogdetSpd: {
            require(av.rows() == av.cols(), "logdet_spd: matrix not square");
            const Matrix chol = cholesky(av);
            out.value = Matrix::scalar(logdet_from_cholesky(chol));
            out.aux = bethe::spd_inverse(av);  // reused by the adjoint
            break;
        }
    }
    return push(std::move(out));
}

Gradient Tape::backward(Var root) const {
    require(root.valid() && static_cast<std::size_t>(root.id) < nodes_.size(),
            "backward: invalid root");
    if (value(root).size() != 1)
        throw std::invalid_argument("backward: root must be a 1x1 scalar");

    std::vector<Matrix> adj(nodes_.size());
    adj[static_cast<std::size_t>(root.id)] = Matrix::scalar(1.0);

    auto accumulate = [&](int id, const Matrix& g) {
        Matrix& slot = adj[static_cast<std::size_t>(id)];
        if (slot.empty()) {
            slot = g;
        } else {
            for (std::size_t k = 0; k < slot.size(); ++k) slot[k] += g[k];
        }
    };

    for (int id = root.id; id >= 0; --id) {
        const Matrix& g = adj[static_cast<std::size_t>(id)];
        if (g.empty()) continue;
        const Node& n = node(id);
        const Matrix* av = n.a >= 0 ? &node(n.a).value : nullptr;
        const Matrix* bv = n.b >= 0 ? &node(n.b).value : nullptr;
        switch (n.kind) {
            case OpKind::Leaf:
            case OpKind::Constant:
                break;
            case OpKind::MatMul:
                accumulate(n.a, bethe::matmul(g, bethe::transpose(*bv)));
                accumulate(n.b, bethe::matmul(bethe::transpose(*av), g));
                break;
            case OpKind::Add:
                accumulate(n.a, g);
                accumulate(n.b, g);
                break;
            case OpKind::Sub: {
                accumulate(n.a, g);
                Matrix neg = g;
                for (std::size_t k = 0; k < neg.size(); ++k) neg[k] = -neg[k];
                accumulate(n.b, neg);
                break;
            }
            case OpKind::Hadamard:
                accumulate(n.a, zip_binary(g, *bv, [](double x, double y) { return x * y; }));
                accumulate(n.b, zip_binary(g, *av, [](double x, double y) { return x * y; }));
                break;
            case OpKind::Scale: {
                Matrix d = g;
                for (std::size_t k = 0; k < d.size(); ++k) d[k] *= n.scalar;
                accumulate(n.a, d);
                break;
            }
            case OpKind::Tanh:
                accumulate(n.a, zip_binary(g, n.value,
                                           [](double gk, double y) { return gk * (1.0 - y * y); }));
                break;
            case OpKind::Exp:
                accumulate(n.a,
                           zip_binary(g, n.value, [](double gk, double y) { return gk * y; }));
                break;
            case OpKind::Log:
            case OpKind::LogFloored:
                accumulate(n.a, zip_binary(g, *av, [](double gk, double x) { return gk / x; }));
                break;
            case OpKind::Square:
                accumulate(n.a,
                           zip_binary(g, *av, [](double gk, double x) { return 2.0 * gk * x; }));
                break;
            case OpKind::Sqrt:
                accumulate(n.a, zip_binary(g, n.value,
                                           [](double gk, double y) { return 0.5 * gk / y; }));
                break;
            case OpKind::Reciprocal:
                accumulate(n.a, zip_binary(g, n.value,
                                           [](double gk, double y) { return -gk * y * y; }));
                break;
            case OpKind::Sum: {
                const double gs = g.item();
                accumulate(n.a, Matrix::full(av->rows(), av->cols(), gs));
                break;
            }
            case OpKind::BroadcastRow: {
                Matrix colsum(1, g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) colsum(0, j) += g(i, j);
                accumulate(n.a, colsum);
                break;
            }
            case OpKind::Transpose:
                accumulate(n.a, bethe::transpose(g));
                break;
            case OpKind::LogNdtr:
                accumulate(n.a, zip_binary(
                                    g, *av, [](double gk, double x) { return gk * sf::mills_ratio(x); }));
                break;
            case OpKind::Ndtr:
                accumulate(n.a,
                           zip_binary(g, *av, [](double gk, double x) { return gk * sf::npdf(x); }));
                break;
            case OpKind::Softplus:
                accumulate(n.a,
                           zip_binary(g, *av, [](double gk, double x) { return gk * sf::sigmoid(x); }));
                break;
            case OpKind::SpdInverse: {
                // d/dM of F(M^-1): -M^-1 G M^-1 with M symmetric.
                Matrix d = bethe::matmul(bethe::matmul(n.value, g), n.value);
                for (std::size_t k = 0; k < d.size(); ++k) d[k] = -d[k];
                accumulate(n.a, d);
                break;
            }
            case OpKind::LogdetSpd: {
                const double gs = g.item();
                Matrix d = n.aux;
                for (std::size_t k = 0; k < d.size(); ++k) d[k] *= gs;
                accumulate(n.a, d);
                break;
            }
        }
    }

    Gradient grad(nodes_.size());
    for (int pid : params_) {
        Matrix& slot = adj[static_cast<std::size_t>(pid)];
        if (slot.empty()) slot = Matrix::zeros(node(pid).value.rows(), node(pid).value.cols());
        grad.slot(pid) = std::move(slot);
    }
    return grad;
}

}  // namespace bethe
