#include "bethe/losses.hpp"

#include <cmath>

#include "bethe/quadrature.hpp"
#include "bethe/special_functions.hpp"

namespace bethe {

namespace {

void check_pm_labels(const Matrix& y) {
    if (y.cols() != 1) throw std::invalid_argument("labels must be a column vector");
    for (std::size_t k = 0; k < y.size(); ++k)
        if (y[k] != 1.0 && y[k] != -1.0)
            throw std::invalid_argument("binary labels must be +-1");
}

}  // namespace

std::vector<double> OrdinalThresholds::thresholds() const {
    std::vector<double> out;
    double t = tau1.item();
    out.push_back(t);
    for (std::size_t k = 0; k < log_gaps.rows(); ++k) {
        t += std::exp(log_gaps[k]);
        out.push_back(t);
    }
    return out;
}

OrdinalThresholds make_thresholds(std::size_t num_classes) {
    if (num_classes < 2) throw std::invalid_argument("ordinal head needs at least 2 classes");
    OrdinalThresholds th;
    if (num_classes == 2) {
        th.tau1 = Matrix::scalar(0.0);
        th.log_gaps = Matrix(0, 1);
        return th;
    }
    // evenly spaced over [-1, 1]
    const double gap = 2.0 / static_cast<double>(num_classes - 2);
    th.tau1 = Matrix::scalar(-1.0);
    th.log_gaps = Matrix::full(num_classes - 2, 1, std::log(gap));
    return th;
}

OrdinalVars register_thresholds(Tape& tape, const OrdinalThresholds& th, bool trainable) {
    OrdinalVars vars;
    vars.tau1 = trainable ? tape.leaf(th.tau1) : tape.constant(th.tau1);
    if (th.log_gaps.rows() > 0)
        vars.log_gaps = trainable ? tape.leaf(th.log_gaps) : tape.constant(th.log_gaps);
    return vars;
}

Var threshold_vector(Tape& tape, const OrdinalVars& vars, std::size_t num_classes) {
    const std::size_t m = num_classes - 1;
    Var tau = tape.matmul(tape.constant(Matrix::full(m, 1, 1.0)), vars.tau1);
    if (num_classes > 2) {
        Matrix cum(m, num_classes - 2);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < i; ++j) cum(i, j) = 1.0;
        tau = tape.add(tau, tape.matmul(tape.constant(std::move(cum)), tape.exp(vars.log_gaps)));
    }
    return tau;
}

LossTerms assemble_loss(Tape& tape, Var prior, Var data, Var l2) {
    LossTerms terms;
    terms.prior = prior;
    terms.data = data;
    terms.l2 = l2;
    Var total = data;
    if (prior.valid()) total = tape.add(prior, total);
    if (l2.valid()) total = tape.add(total, l2);
    terms.total = total;
    return terms;
}

LossBreakdown read_breakdown(const Tape& tape, const LossTerms& terms) {
    LossBreakdown b;
    if (terms.prior.valid()) b.prior_term = tape.scalar_value(terms.prior);
    if (terms.data.valid()) b.data_term = tape.scalar_value(terms.data);
    if (terms.l2.valid()) b.backbone_l2 = tape.scalar_value(terms.l2);
    b.total = tape.scalar_value(terms.total);
    return b;
}

Var prior_neg_log_z(Tape& tape, const LastLayerPosterior& post, const PosteriorVars& vars) {
    const std::size_t h = post.dim();
    const double hd = static_cast<double>(h);
    Var la = vars.log_alpha;
    Var const_term = tape.constant(Matrix::scalar(0.5 * hd * sf::kLog2Pi));
    switch (post.variant) {
        case Variant::V1: {
            // (alpha/2) ||mu||^2 - (H/2) log alpha + (H/2) log 2pi
            Var quad = tape.scale(tape.hadamard(tape.exp(la), tape.sum(tape.square(vars.mu))), 0.5);
            return tape.add(tape.add(quad, tape.scale(la, -0.5 * hd)), const_term);
        }
        case Variant::V2: {
            // diagonal: m_d = exp(rho_d) + eps + 1/alpha
            Var alpha_inv = tape.matmul(tape.constant(Matrix::full(h, 1, 1.0)),
                                        tape.exp(tape.scale(la, -1.0)));
            Var m = tape.add(tape.add(tape.exp(vars.rho),
                                      tape.constant(Matrix::full(h, 1, post.epsilon))),
                             alpha_inv);
            Var quad =
                tape.scale(tape.sum(tape.hadamard(tape.square(vars.mu), tape.reciprocal(m))), 0.5);
            Var logdet = tape.scale(tape.sum(tape.log(m)), 0.5);
            return tape.add(tape.add(quad, logdet), const_term);
        }
        case Variant::V3: {
            Var l = chol_factor(tape, vars.chol_raw, h);
            Matrix jitter(h, h);
            for (std::size_t i = 0; i < h; ++i) jitter(i, i) = post.epsilon;
            Var sigma_eff =
                tape.add(tape.matmul(l, tape.transpose(l)), tape.constant(std::move(jitter)));
            Var alpha_inv_col = tape.matmul(tape.constant(Matrix::full(h, 1, 1.0)),
                                            tape.exp(tape.scale(la, -1.0)));
            Var alpha_eye =
                tape.hadamard(tape.matmul(alpha_inv_col, tape.constant(Matrix::full(1, h, 1.0))),
                              tape.constant(Matrix::identity(h)));
            Var m = tape.add(sigma_eff, alpha_eye);
            Var quad = tape.scale(
                tape.matmul(tape.transpose(vars.mu), tape.matmul(tape.spd_inverse(m), vars.mu)),
                0.5);
            Var logdet = tape.scale(tape.logdet_spd(m), 0.5);
            return tape.add(tape.add(quad, logdet), const_term);
        }
    }
    throw std::logic_error("unreachable");
}

Var regression_data_term(Tape& tape, const ForwardMessageVars& msg, const Matrix& y,
                         Var log_sigma_obs_sq) {
    const std::size_t n = tape.value(msg.mu_f).rows();
    if (y.rows() != n || y.cols() != 1)
        throw std::invalid_argument("regression targets must be an N x 1 column");
    Var sigma_sq = tape.matmul(tape.constant(Matrix::full(n, 1, 1.0)), tape.exp(log_sigma_obs_sq));
    Var total_var = tape.add(msg.v, sigma_sq);
    for (std::size_t k = 0; k < n; ++k)
        if (!(tape.value(total_var)[k] > 0.0))
            throw std::domain_error("regression data term: non-positive total variance");
    Var resid_sq = tape.square(tape.sub(tape.constant(y), msg.mu_f));
    Var fit = tape.scale(tape.sum(tape.hadamard(resid_sq, tape.reciprocal(total_var))), 0.5);
    Var logv = tape.scale(tape.sum(tape.log(total_var)), 0.5);
    Var norm = tape.constant(Matrix::scalar(static_cast<double>(n) * sf::kHalfLog2Pi));
    return tape.add(tape.add(fit, logv), norm);
}

Var binary_data_term(Tape& tape, const ForwardMessageVars& msg, const Matrix& y_pm, double c) {
    check_pm_labels(y_pm);
    const std::size_t n = tape.value(msg.mu_f).rows();
    if (y_pm.rows() != n) throw std::invalid_argument("binary labels: wrong sample count");
    if (!(c > 0.0)) throw std::domain_error("binary data term: probit scale must be positive");
    Var denom = tape.sqrt(tape.add(msg.v, tape.constant(Matrix::full(n, 1, c * c))));
    Var margins =
        tape.hadamard(tape.hadamard(tape.constant(y_pm), msg.mu_f), tape.reciprocal(denom));
    return tape.scale(tape.sum(tape.log_ndtr(margins)), -1.0);
}

Var ordinal_data_term(Tape& tape, const ForwardMessageVars& msg, const std::vector<int>& labels,
                      std::size_t num_classes, const OrdinalVars& thresholds, double c) {
    const std::size_t n = tape.value(msg.mu_f).rows();
    if (labels.size() != n) throw std::invalid_argument("ordinal labels: wrong sample count");
    for (int lbl : labels)
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= num_classes)
            throw std::invalid_argument("ordinal label out of range");
    const std::size_t m = num_classes - 1;

    Var tau = threshold_vector(tape, thresholds, num_classes);

    // One-hot threshold selectors per sample; boundary classes get a zero row
    // and the Phi(+-inf) constant is injected through the masks below.
    Matrix sel_up(n, m), sel_lo(n, m), mask_up(n, 1), mask_lo(n, 1), top(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto lbl = static_cast<std::size_t>(labels[i]);
        if (lbl < num_classes - 1) {
            sel_up(i, lbl) = 1.0;
            mask_up[i] = 1.0;
        } else {
            top[i] = 1.0;
        }
        if (lbl > 0) {
            sel_lo(i, lbl - 1) = 1.0;
            mask_lo[i] = 1.0;
        }
    }

    Var inv_d = tape.reciprocal(
        tape.sqrt(tape.add(msg.v, tape.constant(Matrix::full(n, 1, c * c)))));
    auto side = [&](Matrix sel, Matrix mask) {
        Var raw = tape.hadamard(
            tape.sub(tape.matmul(tape.constant(std::move(sel)), tau), msg.mu_f), inv_d);
        return tape.hadamard(tape.constant(std::move(mask)), tape.ndtr(raw));
    };
    Var upper = tape.add(side(std::move(sel_up), std::move(mask_up)),
                         tape.constant(std::move(top)));
    Var lower = side(std::move(sel_lo), std::move(mask_lo));
    Var probs = tape.sub(upper, lower);
    return tape.scale(tape.sum(tape.log_floored(probs)), -1.0);
}

OvaTerms ova_terms(Tape& tape, const std::vector<LastLayerPosterior>& posts,
                   const std::vector<PosteriorVars>& vars,
                   const std::vector<ForwardMessageVars>& msgs, const std::vector<int>& labels,
                   double c) {
    const std::size_t k = posts.size();
    if (k < 2) throw std::invalid_argument("ova: need at least 2 heads");
    if (vars.size() != k || msgs.size() != k)
        throw std::invalid_argument("ova: heads, vars and messages must align");
    for (int lbl : labels)
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= k)
            throw std::invalid_argument("ova label out of range");

    OvaTerms terms;
    for (std::size_t head = 0; head < k; ++head) {
        Matrix y_pm(labels.size(), 1);
        for (std::size_t i = 0; i < labels.size(); ++i)
            y_pm[i] = static_cast<std::size_t>(labels[i]) == head ? 1.0 : -1.0;
        Var prior = prior_neg_log_z(tape, posts[head], vars[head]);
        Var data = binary_data_term(tape, msgs[head], y_pm, c);
        terms.prior = terms.prior.valid() ? tape.add(terms.prior, prior) : prior;
        terms.data = terms.data.valid() ? tape.add(terms.data, data) : data;
    }
    return terms;
}

Var map_regression_data_term(Tape& tape, Var preds, const Matrix& y, double sigma_obs_sq) {
    if (!(sigma_obs_sq > 0.0))
        throw std::domain_error("map regression: observation variance must be positive");
    const std::size_t n = tape.value(preds).rows();
    if (y.rows() != n || y.cols() != 1)
        throw std::invalid_argument("map regression targets must be an N x 1 column");
    Var fit = tape.scale(tape.sum(tape.square(tape.sub(tape.constant(y), preds))),
                         0.5 / sigma_obs_sq);
    const double norm = static_cast<double>(n) * (sf::kHalfLog2Pi + 0.5 * std::log(sigma_obs_sq));
    return tape.add(fit, tape.constant(Matrix::scalar(norm)));
}

Var map_probit_data_term(Tape& tape, Var logits, const Matrix& y_pm, double c) {
    check_pm_labels(y_pm);
    if (!(c > 0.0)) throw std::domain_error("map probit: probit scale must be positive");
    Var margins = tape.scale(tape.hadamard(tape.constant(y_pm), logits), 1.0 / c);
    return tape.scale(tape.sum(tape.log_ndtr(margins)), -1.0);
}

Var ridge_penalty(Tape& tape, Var weights, double lambda) {
    return tape.scale(tape.sum(tape.square(weights)), lambda);
}

double elbo_gauss_data_term(const ForwardMessage& msg, const Matrix& y, double sigma_obs_sq) {
    // E_q[(y-f)^2]/(2 s2) + 0.5 log(2 pi s2), the quadratic expectation
    double acc = 0.0;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        const double r = y[i] - msg.mu_f[i];
        acc += (r * r + msg.v[i]) / (2.0 * sigma_obs_sq) + 0.5 * std::log(sigma_obs_sq) +
               sf::kHalfLog2Pi;
    }
    return acc;
}

double elbo_probit_data_term(const ForwardMessage& msg, const Matrix& y_pm, double c,
                             std::size_t nodes) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y_pm.rows(); ++i) {
        const double y = y_pm[i];
        acc += gauss_hermite_expectation(
            [y, c](double f) { return -sf::log_ndtr(y * f / c); }, msg.mu_f[i], msg.v[i], nodes);
    }
    return acc;
}

double dloss_dv_probit(double t, double c, double v) {
    return 0.5 * sf::mills_ratio(t) * t / (c * c + v);
}

double dloss_dv_gauss(double resid, double V) {
    return (1.0 - resid * resid / V) / (2.0 * V);
}

}  // namespace bethe
