#include "bethe/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bethe {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::V1: return "v1";
        case Variant::V2: return "v2";
        case Variant::V3: return "v3";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "v1") return Variant::V1;
    if (name == "v2") return Variant::V2;
    if (name == "v3") return Variant::V3;
    throw std::invalid_argument("unknown covariance variant: " + name);
}

Backbone make_backbone(int depth, std::size_t input_dim, std::size_t width, Rng& rng) {
    if (depth < 0 || depth > 2) throw std::invalid_argument("backbone depth must be 0, 1 or 2");
    Backbone bb;
    bb.depth = depth;
    bb.input_dim = input_dim;
    bb.width = depth == 0 ? input_dim : width;
    for (int l = 0; l < depth; ++l) {
        const std::size_t fan_in = (l == 0) ? input_dim : width;
        Matrix w(fan_in, width);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = rng.uniform(-bound, bound);
        bb.weights.push_back(std::move(w));
    }
    return bb;
}

double LastLayerPosterior::alpha() const { return std::exp(log_alpha.item()); }

LastLayerPosterior make_posterior(Variant variant, std::size_t width) {
    LastLayerPosterior post;
    post.variant = variant;
    post.mu = Matrix::zeros(width, 1);
    post.log_alpha = Matrix::scalar(0.0);
    if (variant == Variant::V2) {
        post.rho = Matrix::full(width, 1, std::log(1e-2));
    } else if (variant == Variant::V3) {
        post.chol_raw = Matrix::zeros(width, width);
        for (std::size_t i = 0; i < width; ++i) post.chol_raw(i, i) = std::log(0.1);
    }
    return post;
}

BackboneVars register_backbone(Tape& tape, const Backbone& bb, bool trainable) {
    BackboneVars vars;
    for (const Matrix& w : bb.weights)
        vars.weights.push_back(trainable ? tape.leaf(w) : tape.constant(w));
    return vars;
}

PosteriorVars register_posterior(Tape& tape, const LastLayerPosterior& post, bool trainable,
                                 bool train_alpha) {
    PosteriorVars vars;
    auto reg = [&](const Matrix& m, bool t) { return t ? tape.leaf(m) : tape.constant(m); };
    vars.mu = reg(post.mu, trainable);
    if (post.variant == Variant::V2) vars.rho = reg(post.rho, trainable);
    if (post.variant == Variant::V3) vars.chol_raw = reg(post.chol_raw, trainable);
    vars.log_alpha = reg(post.log_alpha, trainable && train_alpha);
    return vars;
}

Var features(Tape& tape, const BackboneVars& vars, Var x) {
    Var h = x;
    for (Var w : vars.weights) h = tape.tanh(tape.matmul(h, w));
    return h;
}

Var chol_factor(Tape& tape, Var chol_raw, std::size_t h) {
    Matrix strict(h, h), eye(h, h);
    for (std::size_t i = 0; i < h; ++i) {
        eye(i, i) = 1.0;
        for (std::size_t j = 0; j < i; ++j) strict(i, j) = 1.0;
    }
    Var lower = tape.hadamard(chol_raw, tape.constant(std::move(strict)));
    Var diag = tape.hadamard(tape.exp(chol_raw), tape.constant(std::move(eye)));
    return tape.add(lower, diag);
}

ForwardMessageVars forward_message(Tape& tape, const LastLayerPosterior& post,
                                   const PosteriorVars& vars, Var psi) {
    ForwardMessageVars msg;
    msg.mu_f = tape.matmul(psi, vars.mu);
    const std::size_t n = tape.value(psi).rows();
    const std::size_t h = tape.value(psi).cols();
    switch (post.variant) {
        case Variant::V1:
            msg.v = tape.constant(Matrix::zeros(n, 1));
            break;
        case Variant::V2: {
            // psi^T (diag(exp rho) + eps I) psi, one matmul over squared features
            Var scaled = tape.add(tape.exp(vars.rho),
                                  tape.constant(Matrix::full(h, 1, post.epsilon)));
            msg.v = tape.matmul(tape.square(psi), scaled);
            break;
        }
        case Variant::V3: {
            Var l = chol_factor(tape, vars.chol_raw, h);
            Var ones = tape.constant(Matrix::full(h, 1, 1.0));
            Var quad = tape.matmul(tape.square(tape.matmul(psi, l)), ones);
            Var jitter = tape.scale(tape.matmul(tape.square(psi), ones), post.epsilon);
            msg.v = tape.add(quad, jitter);
            break;
        }
    }
    return msg;
}

Var backbone_l2(Tape& tape, const BackboneVars& vars, double lambda_bb) {
    Var total;
    for (Var w : vars.weights) {
        Var s = tape.sum(tape.square(w));
        total = total.valid() ? tape.add(total, s) : s;
    }
    if (!total.valid()) return tape.constant(Matrix::scalar(0.0));
    return tape.scale(total, lambda_bb);
}

ForwardMessage compute_forward_message(const Backbone& bb, const LastLayerPosterior& post,
                                       const Matrix& x) {
    Tape tape;
    BackboneVars bvars = register_backbone(tape, bb, false);
    PosteriorVars pvars = register_posterior(tape, post, false);
    Var psi = features(tape, bvars, tape.constant(x));
    ForwardMessageVars msg = forward_message(tape, post, pvars, psi);
    return ForwardMessage{tape.value(msg.mu_f), tape.value(msg.v)};
}

void save_matrix_map(const std::string& path,
                     const std::vector<std::pair<std::string, const Matrix*>>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out << "bethe-checkpoint v1\n";
    char buf[32];
    for (const auto& [name, mat] : entries) {
        out << "key " << name << " " << mat->rows() << " " << mat->cols() << "\n";
        for (std::size_t i = 0; i < mat->rows(); ++i) {
            for (std::size_t j = 0; j < mat->cols(); ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", (*mat)(i, j));
                out << buf << (j + 1 < mat->cols() ? " " : "");
            }
            out << "\n";
        }
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

std::map<std::string, Matrix> load_matrix_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string header;
    std::getline(in, header);
    if (header != "bethe-checkpoint v1")
        throw std::runtime_error("unrecognized checkpoint header in " + path);
    std::map<std::string, Matrix> out;
    std::string tok;
    while (in >> tok) {
        if (tok != "key") throw std::runtime_error("malformed checkpoint near '" + tok + "'");
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(in >> name >> rows >> cols))
            throw std::runtime_error("malformed checkpoint entry header");
        Matrix m(rows, cols);
        for (std::size_t k = 0; k < m.size(); ++k)
            if (!(in >> m[k])) throw std::runtime_error("truncated checkpoint entry: " + name);
        out.emplace(name, std::move(m));
    }
    return out;
}

}  // namespace bethe
