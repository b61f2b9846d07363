#include "bethe/verify.hpp"

#include <cmath>
#include <sstream>

#include "bethe/losses.hpp"
#include "bethe/metrics.hpp"
#include "bethe/quadrature.hpp"
#include "bethe/rng.hpp"
#include "bethe/special_functions.hpp"
#include "bethe/trainer.hpp"

namespace bethe::verify {

namespace {

std::string fail(const std::string& msg) { return msg; }

std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo, double hi) {
    Matrix m(r, c);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = rng.uniform(lo, hi);
    return m;
}

void perturb_trainables(ModelState& model, const TrainConfig& cfg, Rng& rng, double scale) {
    for (auto& [name, mat] : trainable_parameters(model, cfg))
        for (std::size_t k = 0; k < mat->size(); ++k) mat->operator[](k) += rng.uniform(-scale, scale);
}

struct DirectionalResult {
    double ad = 0.0;
    double fd = 0.0;
    bool ok(double rtol, double atol) const {
        return std::fabs(ad - fd) <= atol + rtol * std::fmax(std::fabs(ad), std::fabs(fd));
    }
};

DirectionalResult directional_check(ModelState& model, const TrainConfig& cfg, const Matrix& x,
                                    const Matrix& y, Rng& rng, double h = 1e-5) {
    auto params = trainable_parameters(model, cfg);
    std::vector<Matrix> dir;
    for (auto& [name, mat] : params) {
        Matrix d(mat->rows(), mat->cols());
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = rng.uniform(-1.0, 1.0);
        dir.push_back(std::move(d));
    }

    DirectionalResult res;
    {
        BuiltLoss bl = build_training_loss(model, cfg, x, y);
        Gradient grad = bl.tape.backward(bl.terms.total);
        for (std::size_t i = 0; i < params.size(); ++i) {
            const Matrix& g = grad.at(bl.param_vars[i]);
            for (std::size_t k = 0; k < g.size(); ++k) res.ad += g[k] * dir[i][k];
        }
    }
    auto shift = [&](double s) {
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t k = 0; k < dir[i].size(); ++k)
                params[i].second->operator[](k) += s * dir[i][k];
    };
    auto value = [&]() {
        BuiltLoss bl = build_training_loss(model, cfg, x, y);
        return read_breakdown(bl.tape, bl.terms).total;
    };
    shift(h);
    const double up = value();
    shift(-2.0 * h);
    const double down = value();
    shift(h);
    res.fd = (up - down) / (2.0 * h);
    return res;
}

struct SyntheticBatch {
    Matrix x;
    Matrix y;  // regression targets or class indices
};

SyntheticBatch make_batch(Rng& rng, std::size_t n, std::size_t d, std::size_t num_classes) {
    SyntheticBatch b;
    b.x = Matrix(n, d);
    for (std::size_t k = 0; k < b.x.size(); ++k) b.x[k] = rng.gaussian();
    b.y = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i)
        b.y[i] = num_classes == 0 ? rng.gaussian()
                                  : static_cast<double>(rng.below(num_classes));
    return b;
}

}  // namespace

std::string check_convolution_exactness() {
    Rng rng(101);
    double worst = 0.0;
    for (int rep = 0; rep < 125; ++rep) {
        // probit side
        {
            const double mu = rng.uniform(-3.0, 3.0);
            const double v = rng.uniform(0.0, 2.0);
            const double c = rng.uniform(0.8, 2.0);
            const double y = rng.uniform() < 0.5 ? 1.0 : -1.0;
            Tape t;
            ForwardMessageVars msg{t.constant(Matrix::scalar(mu)),
                                   t.constant(Matrix::scalar(v))};
            const double bethe =
                t.scalar_value(binary_data_term(t, msg, Matrix::scalar(y), c));
            const double marg = gauss_hermite_expectation(
                [y, c](double f) { return sf::ndtr(y * f / c); }, mu, v, 128);
            worst = std::fmax(worst, std::fabs(bethe + std::log(marg)));
        }
        // gaussian side
        {
            const double mu = rng.uniform(-3.0, 3.0);
            const double v = rng.uniform(0.0, 2.0);
            const double s2 = rng.uniform(0.5, 2.0);
            const double y = mu + rng.uniform(-2.5, 2.5) * std::sqrt(s2 + v);
            Tape t;
            ForwardMessageVars msg{t.constant(Matrix::scalar(mu)),
                                   t.constant(Matrix::scalar(v))};
            const double bethe = t.scalar_value(
                regression_data_term(t, msg, Matrix::scalar(y),
                                     t.constant(Matrix::scalar(std::log(s2)))));
            const double marg = gauss_hermite_expectation(
                [y, s2](double f) {
                    const double r = y - f;
                    return std::exp(-0.5 * r * r / s2) / std::sqrt(2.0 * M_PI * s2);
                },
                mu, v, 128);
            worst = std::fmax(worst, std::fabs(bethe + std::log(marg)));
        }
    }
    if (worst > 1e-8) return fail("worst |data term + log marginal| = " + num(worst));
    return "";
}

std::string check_gradient_integrity() {
    Rng rng(102);
    const std::size_t n = 48, d = 6;

    struct Case {
        const char* label;
        HeadKind head;
        Variant variant;
        std::size_t classes;  // 0 = regression
    };
    const Case cases[] = {
        {"regression-v1", HeadKind::Regression, Variant::V1, 0},
        {"regression-v2", HeadKind::Regression, Variant::V2, 0},
        {"regression-v3", HeadKind::Regression, Variant::V3, 0},
        {"binary-v2", HeadKind::Binary, Variant::V2, 2},
        {"binary-v3", HeadKind::Binary, Variant::V3, 2},
        {"ova-v2-k3", HeadKind::Ova, Variant::V2, 3},
        {"ordinal-v2-k3", HeadKind::Ordinal, Variant::V2, 3},
        {"map-regression", HeadKind::MapRegression, Variant::V1, 0},
        {"map-class", HeadKind::MapClass, Variant::V1, 2},
    };
    for (const Case& cs : cases) {
        TrainConfig cfg;
        cfg.head = cs.head;
        cfg.variant = cs.variant;
        cfg.depth = 1;
        cfg.width = 16;
        cfg.seed = 7;
        for (int point = 0; point < 20; ++point) {
            SyntheticBatch batch = make_batch(rng, n, d, cs.classes);
            ModelState model = init_model(cfg, d, cs.classes, batch.y);
            perturb_trainables(model, cfg, rng, 0.6);
            DirectionalResult res = directional_check(model, cfg, batch.x, batch.y, rng);
            if (!res.ok(1e-4, 1e-7))
                return fail(std::string(cs.label) + " point " + std::to_string(point) +
                            ": ad=" + num(res.ad) + " fd=" + num(res.fd));
        }
    }

    // prior term alone, per covariance variant
    for (Variant variant : {Variant::V1, Variant::V2, Variant::V3}) {
        for (int point = 0; point < 20; ++point) {
            const std::size_t h = 8;
            LastLayerPosterior post = make_posterior(variant, h);
            post.mu = random_matrix(rng, h, 1, -1.5, 1.5);
            if (variant == Variant::V2) post.rho = random_matrix(rng, h, 1, -3.0, 0.5);
            if (variant == Variant::V3) post.chol_raw = random_matrix(rng, h, h, -0.7, 0.7);
            post.log_alpha = Matrix::scalar(rng.uniform(-1.0, 1.0));

            Tape t;
            PosteriorVars pv = register_posterior(t, post, true);
            Gradient g = t.backward(prior_neg_log_z(t, post, pv));
            const double h_fd = 1e-5;
            auto value_at = [&](double delta) {
                LastLayerPosterior p = post;
                p.log_alpha = Matrix::scalar(post.log_alpha.item() + delta);
                Tape tt;
                return tt.scalar_value(prior_neg_log_z(tt, p, register_posterior(tt, p, false)));
            };
            const double fd = (value_at(h_fd) - value_at(-h_fd)) / (2.0 * h_fd);
            const double ad = g.at(pv.log_alpha)[0];
            if (std::fabs(ad - fd) > 1e-7 + 1e-4 * std::fmax(std::fabs(ad), std::fabs(fd)))
                return fail("prior " + variant_name(variant) + ": d/dlog_alpha ad=" + num(ad) +
                            " fd=" + num(fd));
        }
    }
    return "";
}

std::string check_jensen_ordering() {
    Rng rng(103);
    for (int rep = 0; rep < 1000; ++rep) {
        const bool probit = rep % 2 == 0;
        const double mu = rng.uniform(-2.5, 2.5);
        const double v = rng.uniform(0.05, 3.0);
        ForwardMessage msg{Matrix::scalar(mu), Matrix::scalar(v)};
        double bethe, elbo;
        if (probit) {
            const double y = rng.uniform() < 0.5 ? 1.0 : -1.0;
            Tape t;
            ForwardMessageVars mv{t.constant(msg.mu_f), t.constant(msg.v)};
            bethe = t.scalar_value(binary_data_term(t, mv, Matrix::scalar(y), 1.0));
            elbo = elbo_probit_data_term(msg, Matrix::scalar(y), 1.0);
        } else {
            const double y = rng.uniform(-3.0, 3.0);
            const double s2 = rng.uniform(0.3, 2.0);
            Tape t;
            ForwardMessageVars mv{t.constant(msg.mu_f), t.constant(msg.v)};
            bethe = t.scalar_value(regression_data_term(
                t, mv, Matrix::scalar(y), t.constant(Matrix::scalar(std::log(s2)))));
            elbo = elbo_gauss_data_term(msg, Matrix::scalar(y), s2);
        }
        if (!(elbo - bethe > 0.0))
            return fail("no strict gap at v=" + num(v) + ": bethe=" + num(bethe) +
                        " elbo=" + num(elbo));
    }
    // equality at v = 0
    for (int rep = 0; rep < 100; ++rep) {
        const double mu = rng.uniform(-2.5, 2.5);
        const double y = rng.uniform() < 0.5 ? 1.0 : -1.0;
        ForwardMessage msg{Matrix::scalar(mu), Matrix::scalar(0.0)};
        Tape t;
        ForwardMessageVars mv{t.constant(msg.mu_f), t.constant(msg.v)};
        const double bethe = t.scalar_value(binary_data_term(t, mv, Matrix::scalar(y), 1.0));
        const double elbo = elbo_probit_data_term(msg, Matrix::scalar(y), 1.0);
        if (std::fabs(bethe - elbo) > 1e-9)
            return fail("v=0 gap " + num(std::fabs(bethe - elbo)));
    }
    return "";
}

std::string check_map_limit() {
    Rng rng(104);
    const std::size_t n = 12, h = 6;
    for (int rep = 0; rep < 20; ++rep) {
        LastLayerPosterior post = make_posterior(Variant::V2, h);
        post.mu = random_matrix(rng, h, 1, -1.5, 1.5);
        post.rho = Matrix::full(h, 1, -30.0);
        post.epsilon = 0.0;
        Matrix psi = random_matrix(rng, n, h, -1.5, 1.5);
        Matrix y_reg = random_matrix(rng, n, 1, -2.0, 2.0);
        Matrix y_pm(n, 1);
        std::vector<int> labels(n), labels3(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(rng.below(2));
            labels3[i] = static_cast<int>(rng.below(3));
            y_pm[i] = labels[i] == 1 ? 1.0 : -1.0;
        }
        const double s2 = rng.uniform(0.5, 2.0);

        Tape t;
        PosteriorVars pv = register_posterior(t, post, false);
        auto msg = forward_message(t, post, pv, t.constant(psi));
        const double reg = t.scalar_value(regression_data_term(
            t, msg, y_reg, t.constant(Matrix::scalar(std::log(s2)))));
        const double reg_map =
            t.scalar_value(map_regression_data_term(t, msg.mu_f, y_reg, s2));
        if (std::fabs(reg - reg_map) > 1e-6)
            return fail("regression gap " + num(std::fabs(reg - reg_map)));

        const double bin = t.scalar_value(binary_data_term(t, msg, y_pm, 1.0));
        const double bin_map = t.scalar_value(map_probit_data_term(t, msg.mu_f, y_pm, 1.0));
        if (std::fabs(bin - bin_map) > 1e-6)
            return fail("binary gap " + num(std::fabs(bin - bin_map)));

        // ordinal with three classes against the zero-variance probability path
        OrdinalThresholds th = make_thresholds(3);
        th.tau1 = Matrix::scalar(rng.uniform(-1.0, 0.0));
        OrdinalVars ov = register_thresholds(t, th, false);
        const double ord =
            t.scalar_value(ordinal_data_term(t, msg, labels3, 3, ov, 1.0));
        ForwardMessage flat{t.value(msg.mu_f), Matrix::zeros(n, 1)};
        auto probs = predictive_ordinal(flat, th, 1.0);
        double ord_map = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            ord_map -= std::log(probs.probs(i, static_cast<std::size_t>(labels3[i])));
        if (std::fabs(ord - ord_map) > 1e-6)
            return fail("ordinal gap " + num(std::fabs(ord - ord_map)));
    }
    return "";
}

std::string check_dv_identities() {
    Rng rng(105);
    for (int rep = 0; rep < 100; ++rep) {
        const double c = rng.uniform(0.7, 2.0);
        const double v = rng.uniform(0.01, 3.0);
        const double a = rng.uniform(-2.5, 2.5);
        const double h = 1e-6;
        auto probit_loss = [&](double vv) { return -sf::log_ndtr(a / std::sqrt(c * c + vv)); };
        const double fd_p = (probit_loss(v + h) - probit_loss(v - h)) / (2.0 * h);
        const double margin = a / std::sqrt(c * c + v);
        const double an_p = dloss_dv_probit(margin, c, v);
        if (std::fabs(an_p - fd_p) > 1e-9 + 1e-6 * std::fabs(fd_p))
            return fail("probit dL/dv: an=" + num(an_p) + " fd=" + num(fd_p));
        if ((an_p > 0.0) != (margin > 0.0)) return fail("probit dL/dv sign at t=" + num(margin));

        const double resid = rng.uniform(-3.0, 3.0);
        const double s2 = rng.uniform(0.2, 2.0);
        auto gauss_loss = [&](double vv) {
            const double V = s2 + vv;
            return resid * resid / (2.0 * V) + 0.5 * std::log(V);
        };
        const double fd_g = (gauss_loss(v + h) - gauss_loss(v - h)) / (2.0 * h);
        const double an_g = dloss_dv_gauss(resid, s2 + v);
        if (std::fabs(an_g - fd_g) > 1e-9 + 1e-6 * std::fabs(fd_g))
            return fail("gauss dL/dv: an=" + num(an_g) + " fd=" + num(fd_g));
        if ((an_g > 0.0) != (resid * resid < s2 + v))
            return fail("gauss dL/dv sign at resid=" + num(resid));
    }
    return "";
}

std::string check_ordinal_reduction() {
    Rng rng(106);
    const std::size_t n = 10, h = 5;
    for (int rep = 0; rep < 50; ++rep) {
        LastLayerPosterior post = make_posterior(rep % 2 == 0 ? Variant::V2 : Variant::V3, h);
        post.mu = random_matrix(rng, h, 1, -1.5, 1.5);
        if (post.variant == Variant::V2) post.rho = random_matrix(rng, h, 1, -3.0, 0.5);
        if (post.variant == Variant::V3) post.chol_raw = random_matrix(rng, h, h, -0.7, 0.7);
        Matrix psi = random_matrix(rng, n, h, -1.5, 1.5);
        const double tau1 = rng.uniform(-1.5, 1.5);
        std::vector<int> labels(n);
        Matrix y_pm(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(rng.below(2));
            y_pm[i] = labels[i] == 1 ? 1.0 : -1.0;
        }
        OrdinalThresholds th = make_thresholds(2);
        th.tau1 = Matrix::scalar(tau1);

        Tape t;
        PosteriorVars pv = register_posterior(t, post, false);
        auto msg = forward_message(t, post, pv, t.constant(psi));
        OrdinalVars ov = register_thresholds(t, th, false);
        const double ord = t.scalar_value(ordinal_data_term(t, msg, labels, 2, ov, 1.0));
        ForwardMessageVars shifted{
            t.sub(msg.mu_f, t.constant(Matrix::full(n, 1, tau1))), msg.v};
        const double bin = t.scalar_value(binary_data_term(t, shifted, y_pm, 1.0));
        if (std::fabs(ord - bin) > 1e-10)
            return fail("reduction gap " + num(std::fabs(ord - bin)));
    }
    return "";
}

std::string check_v1_fixed_point() {
    Rng rng(107);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t h = 4 + rng.below(20);
        LastLayerPosterior post = make_posterior(Variant::V1, h);
        post.mu = random_matrix(rng, h, 1, -2.0, 2.0);
        double norm_sq = 0.0;
        for (std::size_t k = 0; k < h; ++k) norm_sq += post.mu[k] * post.mu[k];
        if (norm_sq < 1e-6) continue;
        post.log_alpha = Matrix::scalar(std::log(closed_form_alpha_v1(post.mu)));

        Tape t;
        PosteriorVars pv = register_posterior(t, post, true);
        Gradient g = t.backward(prior_neg_log_z(t, post, pv));
        if (std::fabs(g.at(pv.log_alpha)[0]) > 1e-8)
            return fail("grad at alpha* = " + num(g.at(pv.log_alpha)[0]));
    }
    return "";
}

std::string check_special_function_tails() {
    struct Ref {
        double x, value;
    };
    const Ref log_ndtr_refs[] = {
        {-40.0, -804.6084420137537881666068329186099362002},
        {-30.0, -454.3212439563431971073557713376449656564},
        {-20.0, -203.9171553710972639368044586545269000525},
        {-10.0, -53.23128515051247057834702735413120987892},
        {-5.0, -15.06499839398872573608370479189672560507},
        {2.0, -0.02301290932896348846533617490850875927202},
    };
    for (const Ref& r : log_ndtr_refs)
        if (std::fabs(sf::log_ndtr(r.x) - r.value) > 1e-10 * std::fabs(r.value))
            return fail("log_ndtr(" + num(r.x) + ") = " + num(sf::log_ndtr(r.x)));
    if (std::fabs(sf::mills_ratio(-20.0) - 20.04975306852785054221) > 1e-10)
        return fail("mills_ratio(-20)");
    for (int i = 0; i <= 100; ++i) {
        const double x = -10.0 + 0.2 * i;
        const double h = 1e-6;
        const double fd = (sf::log_ndtr(x + h) - sf::log_ndtr(x - h)) / (2.0 * h);
        if (std::fabs(fd - sf::mills_ratio(x)) > 1e-6 * std::fmax(1.0, sf::mills_ratio(x)))
            return fail("d log_ndtr != mills at x=" + num(x));
    }
    return "";
}

std::string check_ordinal_prob_sums() {
    Rng rng(108);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t k = 2 + rng.below(5);
        OrdinalThresholds th = make_thresholds(k);
        th.tau1 = Matrix::scalar(rng.uniform(-2.0, 2.0));
        for (std::size_t j = 0; j < th.log_gaps.rows(); ++j)
            th.log_gaps[j] = rng.uniform(-1.5, 1.0);
        ForwardMessage msg{Matrix::scalar(rng.uniform(-3.0, 3.0)),
                           Matrix::scalar(rng.uniform(0.0, 4.0))};
        auto pred = predictive_ordinal(msg, th, 1.0);
        double total = 0.0;
        for (std::size_t cls = 0; cls < k; ++cls) total += pred.probs(0, cls);
        if (std::fabs(total - 1.0) > 1e-12) return fail("probability sum " + num(total));
    }
    return "";
}

std::string check_calib_err_self_consistency() {
    Rng rng(109);
    const std::size_t n = 100000;
    Matrix mean(n, 1), var(n, 1), y(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        mean[i] = rng.uniform(-2.0, 2.0);
        var[i] = rng.uniform(0.2, 2.0);
        y[i] = mean[i] + std::sqrt(var[i]) * rng.gaussian();
    }
    const double ce = calib_err({mean, var}, y);
    if (ce > 0.01) return fail("self-consistency CalibErr = " + num(ce));
    return "";
}

std::string check_gradcheck_sensitivity() {
    // the finite-difference harness must reject a sign-corrupted gradient
    Rng rng(110);
    TrainConfig cfg;
    cfg.head = HeadKind::Regression;
    cfg.variant = Variant::V2;
    cfg.depth = 1;
    cfg.width = 6;
    cfg.seed = 3;
    SyntheticBatch batch = make_batch(rng, 16, 4, 0);
    ModelState model = init_model(cfg, 4, 0, batch.y);
    perturb_trainables(model, cfg, rng, 0.5);

    auto params = trainable_parameters(model, cfg);
    BuiltLoss bl = build_training_loss(model, cfg, batch.x, batch.y);
    Gradient grad = bl.tape.backward(bl.terms.total);

    std::vector<Matrix> dir;
    double ad = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = grad.at(bl.param_vars[i]);
        Matrix d(g.rows(), g.cols());
        for (std::size_t k = 0; k < d.size(); ++k) {
            d[k] = rng.uniform(-1.0, 1.0);
            ad += -g[k] * d[k];  // injected sign error
        }
        dir.push_back(std::move(d));
    }
    auto shift = [&](double s) {
        for (std::size_t i = 0; i < params.size(); ++i)
            for (std::size_t k = 0; k < dir[i].size(); ++k)
                params[i].second->operator[](k) += s * dir[i][k];
    };
    auto value = [&]() {
        BuiltLoss b = build_training_loss(model, cfg, batch.x, batch.y);
        return read_breakdown(b.tape, b.terms).total;
    };
    const double h = 1e-5;
    shift(h);
    const double up = value();
    shift(-2.0 * h);
    const double down = value();
    shift(h);
    const double fd = (up - down) / (2.0 * h);
    const bool detected =
        std::fabs(ad - fd) > 1e-7 + 1e-4 * std::fmax(std::fabs(ad), std::fabs(fd));
    if (!detected) return fail("sign-corrupted gradient slipped through");
    return "";
}

std::vector<Check> all_checks() {
    return {
        {"convolution-exactness", check_convolution_exactness},
        {"gradient-integrity", check_gradient_integrity},
        {"jensen-ordering", check_jensen_ordering},
        {"map-limit", check_map_limit},
        {"dv-identities", check_dv_identities},
        {"ordinal-reduction", check_ordinal_reduction},
        {"v1-fixed-point", check_v1_fixed_point},
        {"special-function-tails", check_special_function_tails},
        {"ordinal-probability-sums", check_ordinal_prob_sums},
        {"calib-err-self-consistency", check_calib_err_self_consistency},
        {"gradcheck-sensitivity", check_gradcheck_sensitivity},
    };
}

int run_all(std::ostream& out) {
    int failures = 0;
    for (const Check& check : all_checks()) {
        std::string msg;
        try {
            msg = check.run();
        } catch (const std::exception& e) {
            msg = std::string("exception: ") + e.what();
        }
        if (msg.empty()) {
            out << "PASS " << check.name << "\n";
        } else {
            out << "FAIL " << check.name << ": " << msg << "\n";
            ++failures;
        }
    }
    return failures;
}

}  // namespace bethe::verify
