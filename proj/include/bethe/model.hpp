#pragma once

#include <map>
#include <string>
#include <vector>

#include "bethe/matrix.hpp"
#include "bethe/rng.hpp"
#include "bethe/tape.hpp"

namespace bethe {

enum class Variant { V1, V2, V3 };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// Deterministic feature map: `depth` tanh hidden layers of equal width with
/// no bias. depth 0 is the identity map (plain linear model on the raw
/// inputs), used by the linear ablations.
struct Backbone {
    int depth = 1;
    std::size_t input_dim = 0;
    std::size_t width = 0;  // H; equals input_dim when depth == 0
    std::vector<Matrix> weights;

    std::size_t output_dim() const { return depth == 0 ? input_dim : width; }
};

Backbone make_backbone(int depth, std::size_t input_dim, std::size_t width, Rng& rng);

/// Gaussian posterior over the last-layer weights of one output head.
/// V1 carries only the mean, V2 per-dimension log variances, V3 an
/// unconstrained matrix packing a Cholesky factor (strict lower triangle
/// free, diagonal stored as logs). alpha is kept as log(alpha).
struct LastLayerPosterior {
    Variant variant = Variant::V1;
    Matrix mu;         // H x 1
    Matrix rho;        // H x 1, V2 only
    Matrix chol_raw;   // H x H, V3 only
    Matrix log_alpha;  // 1 x 1
    double epsilon = 1e-4;

    std::size_t dim() const { return mu.rows(); }
    double alpha() const;
};

LastLayerPosterior make_posterior(Variant variant, std::size_t width);

/// Tape handles for the trainable pieces.
struct BackboneVars {
    std::vector<Var> weights;
};

struct PosteriorVars {
    Var mu;
    Var rho;
    Var chol_raw;
    Var log_alpha;
};

BackboneVars register_backbone(Tape& tape, const Backbone& bb, bool trainable);
PosteriorVars register_posterior(Tape& tape, const LastLayerPosterior& post, bool trainable,
                                 bool train_alpha = true);

/// psi = NN(x), differentiable through the tape.
Var features(Tape& tape, const BackboneVars& vars, Var x);

/// Lower-triangular factor L with positive diagonal from the packed V3
/// parameter matrix.
Var chol_factor(Tape& tape, Var chol_raw, std::size_t h);

struct ForwardMessageVars {
    Var mu_f;  // N x 1
    Var v;     // N x 1, zero for V1
};

/// Per-sample Gaussian message at the latent output: mean Psi*mu and
/// variance per covariance variant. The epsilon jitter enters V2/V3 only.
ForwardMessageVars forward_message(Tape& tape, const LastLayerPosterior& post,
                                   const PosteriorVars& vars, Var psi);

/// lambda_bb * sum of squared backbone weights.
Var backbone_l2(Tape& tape, const BackboneVars& vars, double lambda_bb);

/// Plain-value forward message for prediction paths.
struct ForwardMessage {
    Matrix mu_f;
    Matrix v;
};

ForwardMessage compute_forward_message(const Backbone& bb, const LastLayerPosterior& post,
                                       const Matrix& x);

/// Text checkpoint: named key -> matrix map, full double precision.
void save_matrix_map(const std::string& path,
                     const std::vector<std::pair<std::string, const Matrix*>>& entries);
std::map<std::string, Matrix> load_matrix_map(const std::string& path);

}  // namespace bethe
