#pragma once

#include <vector>

#include "bethe/model.hpp"
#include "bethe/tape.hpp"

namespace bethe {

/// Ordered thresholds for the cumulative probit head, parameterized as a
/// free first threshold plus log-gaps so the reconstruction is strictly
/// increasing by construction.
struct OrdinalThresholds {
    Matrix tau1;      // 1 x 1
    Matrix log_gaps;  // (K-2) x 1, empty when K == 2

    std::size_t num_classes() const { return log_gaps.rows() + 2; }
    std::vector<double> thresholds() const;
};

OrdinalThresholds make_thresholds(std::size_t num_classes);

struct OrdinalVars {
    Var tau1;
    Var log_gaps;  // invalid when K == 2
};

OrdinalVars register_thresholds(Tape& tape, const OrdinalThresholds& th, bool trainable);

/// Reconstructed (K-1) x 1 threshold vector on the tape.
Var threshold_vector(Tape& tape, const OrdinalVars& vars, std::size_t num_classes);

struct LossTerms {
    Var prior;  // invalid when the objective has no prior term
    Var data;
    Var l2;
    Var total;
};

struct LossBreakdown {
    double prior_term = 0.0;
    double data_term = 0.0;
    double backbone_l2 = 0.0;
    double total = 0.0;
};

/// total = prior + data + l2; missing terms enter as zero.
LossTerms assemble_loss(Tape& tape, Var prior, Var data, Var l2);
LossBreakdown read_breakdown(const Tape& tape, const LossTerms& terms);

/// -log N(mu; 0, Sigma_eff + alpha^-1 I). Diagonal closed forms for V1/V2,
/// dense Cholesky route for V3.
Var prior_neg_log_z(Tape& tape, const LastLayerPosterior& post, const PosteriorVars& vars);

/// Heteroscedastic Gaussian data term, one addend per sample:
/// (y - mu_f)^2 / (2 V) + 0.5 log V + 0.5 log 2pi with V = sigma_obs^2 + v.
Var regression_data_term(Tape& tape, const ForwardMessageVars& msg, const Matrix& y,
                         Var log_sigma_obs_sq);

/// Probit data term: sum_n -log Phi(y_n mu_f_n / sqrt(c^2 + v_n)).
Var binary_data_term(Tape& tape, const ForwardMessageVars& msg, const Matrix& y_pm, double c);

/// Cumulative probit data term over K ordered classes.
Var ordinal_data_term(Tape& tape, const ForwardMessageVars& msg, const std::vector<int>& labels,
                      std::size_t num_classes, const OrdinalVars& thresholds, double c);

/// One-vs-all objective: K independent binary probit heads, each with its
/// own prior precision, sharing the backbone. Returns the summed prior and
/// data terms.
struct OvaTerms {
    Var prior;
    Var data;
};

OvaTerms ova_terms(Tape& tape, const std::vector<LastLayerPosterior>& posts,
                   const std::vector<PosteriorVars>& vars,
                   const std::vector<ForwardMessageVars>& msgs, const std::vector<int>& labels,
                   double c);

/// Point-estimate baselines: squared-error NLL at fixed observation noise
/// and the probit cross-entropy of raw logits.
Var map_regression_data_term(Tape& tape, Var preds, const Matrix& y, double sigma_obs_sq);
Var map_probit_data_term(Tape& tape, Var logits, const Matrix& y_pm, double c);

/// lambda * ||w||^2 penalty for MAP-type last layers.
Var ridge_penalty(Tape& tape, Var weights, double lambda);

/// Expected negative log-likelihood under the forward message, the
/// variational counterpart of the data terms above. Quadrature-backed for
/// probit; closed form for Gaussian. Diagnostic/test use only.
double elbo_gauss_data_term(const ForwardMessage& msg, const Matrix& y, double sigma_obs_sq);
double elbo_probit_data_term(const ForwardMessage& msg, const Matrix& y_pm, double c,
                             std::size_t nodes = 128);

/// Closed-form per-sample derivatives of the data terms in the message
/// variance, used as training diagnostics.
double dloss_dv_probit(double t, double c, double v);
double dloss_dv_gauss(double resid, double V);

}  // namespace bethe
