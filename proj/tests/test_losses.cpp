#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bethe/losses.hpp"
#include "bethe/quadrature.hpp"
#include "bethe/rng.hpp"
#include "bethe/special_functions.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace bethe;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.5, double hi = 1.5) {
    Matrix m(r, c);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = rng.uniform(lo, hi);
    return m;
}

LastLayerPosterior random_posterior(Rng& rng, Variant variant, std::size_t h) {
    LastLayerPosterior post = make_posterior(variant, h);
    post.mu = random_matrix(rng, h, 1);
    if (variant == Variant::V2) post.rho = random_matrix(rng, h, 1, -3.0, 0.5);
    if (variant == Variant::V3) post.chol_raw = random_matrix(rng, h, h, -0.8, 0.8);
    post.log_alpha = Matrix::scalar(rng.uniform(-1.0, 1.0));
    return post;
}

Matrix random_pm_labels(Rng& rng, std::size_t n) {
    Matrix y(n, 1);
    for (std::size_t i = 0; i < n; ++i) y[i] = rng.uniform() < 0.5 ? 1.0 : -1.0;
    return y;
}

double prior_value(const LastLayerPosterior& post) {
    Tape t;
    auto vars = register_posterior(t, post, false);
    return t.scalar_value(prior_neg_log_z(t, post, vars));
}

}  // namespace

TEST_CASE("prior term closed forms") {
    SUBCASE("zero mean, unit precision, H=2") {
        LastLayerPosterior post = make_posterior(Variant::V1, 2);
        CHECK(prior_value(post) == doctest::Approx(sf::kLog2Pi).epsilon(1e-14));
    }
    SUBCASE("V1 stationary point at alpha = H / ||mu||^2") {
        const std::size_t h = 6;
        LastLayerPosterior post = make_posterior(Variant::V1, h);
        for (std::size_t k = 0; k < h; ++k) post.mu[k] = 1.0;  // ||mu||^2 = H
        CHECK(prior_value(post) ==
              doctest::Approx(0.5 * h * (1.0 + sf::kLog2Pi)).epsilon(1e-14));

        // stationarity in log alpha, by tape gradient and by finite differences
        Tape t;
        auto vars = register_posterior(t, post, true);
        auto grad = t.backward(prior_neg_log_z(t, post, vars));
        CHECK(std::fabs(grad.at(vars.log_alpha)[0]) <= 1e-8);

        auto at_log_alpha = [&](double la) {
            LastLayerPosterior p = post;
            p.log_alpha = Matrix::scalar(la);
            return prior_value(p);
        };
        const double h_fd = 1e-5;
        CHECK(std::fabs(at_log_alpha(h_fd) - at_log_alpha(-h_fd)) / (2.0 * h_fd) <= 1e-8);
    }
    SUBCASE("random posteriors match the dense multivariate normal oracle") {
        Rng rng(21);
        for (Variant variant : {Variant::V1, Variant::V2, Variant::V3}) {
            for (int rep = 0; rep < 10; ++rep) {
                const std::size_t h = 5;
                LastLayerPosterior post = random_posterior(rng, variant, h);
                const double alpha = post.alpha();

                Matrix m(h, h);
                if (variant == Variant::V2)
                    for (std::size_t i = 0; i < h; ++i)
                        m(i, i) = std::exp(post.rho[i]) + post.epsilon + 1.0 / alpha;
                else if (variant == Variant::V3) {
                    Matrix l(h, h);
                    for (std::size_t i = 0; i < h; ++i) {
                        l(i, i) = std::exp(post.chol_raw(i, i));
                        for (std::size_t j = 0; j < i; ++j) l(i, j) = post.chol_raw(i, j);
                    }
                    m = matmul(l, transpose(l));
                    for (std::size_t i = 0; i < h; ++i) m(i, i) += post.epsilon + 1.0 / alpha;
                } else {
                    for (std::size_t i = 0; i < h; ++i) m(i, i) = 1.0 / alpha;
                }
                const double want = testsupport::mvn_neg_log_pdf_oracle(post.mu, m);
                CAPTURE(variant_name(variant));
                CHECK(std::fabs(prior_value(post) - want) <= 1e-10 * std::fmax(1.0, want));
            }
        }
    }
}

TEST_CASE("regression data term") {
    Rng rng(22);
    SUBCASE("single exact sample with unit variance") {
        Tape t;
        ForwardMessageVars msg{t.constant(Matrix::scalar(1.7)),
                               t.constant(Matrix::scalar(0.0))};
        Var data = regression_data_term(t, msg, Matrix::scalar(1.7),
                                        t.constant(Matrix::scalar(0.0)));
        CHECK(t.scalar_value(data) == doctest::Approx(sf::kHalfLog2Pi).epsilon(1e-14));
    }
    SUBCASE("per-sample terms equal quadrature marginals") {
        const std::size_t n = 10;
        for (int rep = 0; rep < 5; ++rep) {
            Matrix mu_f = random_matrix(rng, n, 1, -2.0, 2.0);
            Matrix v = random_matrix(rng, n, 1, 0.0, 2.0);
            Matrix y = random_matrix(rng, n, 1, -3.0, 3.0);
            const double log_s2 = rng.uniform(std::log(0.5), std::log(2.0));
            const double s2 = std::exp(log_s2);

            Tape t;
            ForwardMessageVars msg{t.constant(mu_f), t.constant(v)};
            Var data = regression_data_term(t, msg, y, t.constant(Matrix::scalar(log_s2)));

            double want = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double yi = y[i];
                const double marg = gauss_hermite_expectation(
                    [yi, s2](double f) {
                        const double r = yi - f;
                        return std::exp(-0.5 * r * r / s2) / std::sqrt(2.0 * M_PI * s2);
                    },
                    mu_f[i], v[i], 128);
                want += -std::log(marg);
            }
            CHECK(std::fabs(t.scalar_value(data) - want) <= 1e-8);
        }
    }
    SUBCASE("non-positive total variance is rejected") {
        Tape t;
        ForwardMessageVars msg{t.constant(Matrix::scalar(0.0)),
                               t.constant(Matrix::scalar(-1.0))};
        CHECK_THROWS_AS(
            regression_data_term(t, msg, Matrix::scalar(0.0), t.constant(Matrix::scalar(-1.0))),
            std::domain_error);
    }
}

TEST_CASE("binary data term") {
    Rng rng(23);
    SUBCASE("uninformative margins cost ln 2 per sample") {
        const std::size_t n = 7;
        Tape t;
        ForwardMessageVars msg{t.constant(Matrix::zeros(n, 1)),
                               t.constant(random_matrix(rng, n, 1, 0.0, 3.0))};
        Var data = binary_data_term(t, msg, random_pm_labels(rng, n), 1.0);
        CHECK(t.scalar_value(data) ==
              doctest::Approx(static_cast<double>(n) * std::log(2.0)).epsilon(1e-13));
    }
    SUBCASE("zero message variance recovers the plain probit margin") {
        const std::size_t n = 6;
        Matrix mu_f = random_matrix(rng, n, 1, -2.0, 2.0);
        Matrix y = random_pm_labels(rng, n);
        const double c = 1.3;
        Tape t;
        ForwardMessageVars msg{t.constant(mu_f), t.constant(Matrix::zeros(n, 1))};
        Var data = binary_data_term(t, msg, y, c);
        double want = 0.0;
        for (std::size_t i = 0; i < n; ++i) want -= sf::log_ndtr(y[i] * mu_f[i] / c);
        CHECK(t.scalar_value(data) == doctest::Approx(want).epsilon(1e-13));
    }
    SUBCASE("per-sample terms equal quadrature marginals") {
        const std::size_t n = 10;
        for (int rep = 0; rep < 5; ++rep) {
            Matrix mu_f = random_matrix(rng, n, 1, -2.5, 2.5);
            Matrix v = random_matrix(rng, n, 1, 0.0, 2.0);
            Matrix y = random_pm_labels(rng, n);
            const double c = rng.uniform(0.8, 2.0);
            Tape t;
            ForwardMessageVars msg{t.constant(mu_f), t.constant(v)};
            Var data = binary_data_term(t, msg, y, c);
            double want = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double yi = y[i];
                want -= std::log(gauss_hermite_expectation(
                    [yi, c](double f) { return sf::ndtr(yi * f / c); }, mu_f[i], v[i], 128));
            }
            CHECK(std::fabs(t.scalar_value(data) - want) <= 1e-8);
        }
    }
}

TEST_CASE("one-vs-all loss") {
    Rng rng(24);
    const std::size_t n = 8, h = 4, k = 3;

    SUBCASE("uninformative heads cost N K ln 2") {
        std::vector<LastLayerPosterior> posts;
        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(i % k));
        Tape t;
        std::vector<PosteriorVars> vars;
        std::vector<ForwardMessageVars> msgs;
        Matrix psi = random_matrix(rng, n, h);
        for (std::size_t head = 0; head < k; ++head) {
            posts.push_back(make_posterior(Variant::V2, h));
            vars.push_back(register_posterior(t, posts.back(), false));
            msgs.push_back(forward_message(t, posts.back(), vars.back(), t.constant(psi)));
            // mu is zero at initialization, so every margin is zero
        }
        auto terms = ova_terms(t, posts, vars, msgs, labels, 1.0);
        CHECK(t.scalar_value(terms.data) ==
              doctest::Approx(static_cast<double>(n * k) * std::log(2.0)).epsilon(1e-12));
    }

    SUBCASE("equals the sum of independent binary losses") {
        std::vector<LastLayerPosterior> posts;
        for (std::size_t head = 0; head < k; ++head)
            posts.push_back(random_posterior(rng, Variant::V3, h));
        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i)
            labels.push_back(static_cast<int>(rng.below(k)));
        Matrix psi = random_matrix(rng, n, h);

        Tape t;
        std::vector<PosteriorVars> vars;
        std::vector<ForwardMessageVars> msgs;
        for (std::size_t head = 0; head < k; ++head) {
            vars.push_back(register_posterior(t, posts[head], false));
            msgs.push_back(forward_message(t, posts[head], vars[head], t.constant(psi)));
        }
        auto terms = ova_terms(t, posts, vars, msgs, labels, 1.0);

        double want_data = 0.0, want_prior = 0.0;
        for (std::size_t head = 0; head < k; ++head) {
            Matrix y(n, 1);
            for (std::size_t i = 0; i < n; ++i)
                y[i] = static_cast<std::size_t>(labels[i]) == head ? 1.0 : -1.0;
            Tape tt;
            auto v2 = register_posterior(tt, posts[head], false);
            auto m2 = forward_message(tt, posts[head], v2, tt.constant(psi));
            want_data += tt.scalar_value(binary_data_term(tt, m2, y, 1.0));
            want_prior += prior_value(posts[head]);
        }
        CHECK(t.scalar_value(terms.data) == doctest::Approx(want_data).epsilon(1e-12));
        CHECK(t.scalar_value(terms.prior) == doctest::Approx(want_prior).epsilon(1e-12));
    }

    SUBCASE("mirrored heads contribute equal data terms on K=2") {
        LastLayerPosterior head0 = random_posterior(rng, Variant::V2, h);
        LastLayerPosterior head1 = head0;
        for (std::size_t i = 0; i < h; ++i) head1.mu[i] = -head0.mu[i];
        Matrix psi = random_matrix(rng, n, h);
        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(2)));

        auto head_data = [&](const LastLayerPosterior& post, std::size_t head_idx) {
            Matrix y(n, 1);
            for (std::size_t i = 0; i < n; ++i)
                y[i] = static_cast<std::size_t>(labels[i]) == head_idx ? 1.0 : -1.0;
            Tape t;
            auto vars = register_posterior(t, post, false);
            auto msg = forward_message(t, post, vars, t.constant(psi));
            return t.scalar_value(binary_data_term(t, msg, y, 1.0));
        };
        CHECK(head_data(head0, 0) == doctest::Approx(head_data(head1, 1)).epsilon(1e-12));
    }
}

TEST_CASE("ordinal loss") {
    Rng rng(25);
    SUBCASE("midway sample in a gap-2 interval") {
        // thresholds {-1, +1}, latent mean 0, v = 0, c = 1
        OrdinalThresholds th;
        th.tau1 = Matrix::scalar(-1.0);
        th.log_gaps = Matrix::full(1, 1, std::log(2.0));
        Tape t;
        auto tvars = register_thresholds(t, th, false);
        ForwardMessageVars msg{t.constant(Matrix::scalar(0.0)),
                               t.constant(Matrix::scalar(0.0))};
        Var data = ordinal_data_term(t, msg, {1}, 3, tvars, 1.0);
        CHECK(t.scalar_value(data) ==
              doctest::Approx(-std::log(0.6826894921370858971705)).epsilon(1e-12));
    }
    SUBCASE("class probabilities telescope to one") {
        for (int rep = 0; rep < 20; ++rep) {
            const std::size_t k = 2 + rng.below(4);
            OrdinalThresholds th = make_thresholds(k);
            th.tau1 = Matrix::scalar(rng.uniform(-2.0, 2.0));
            for (std::size_t j = 0; j < th.log_gaps.rows(); ++j)
                th.log_gaps[j] = rng.uniform(-1.5, 1.0);
            const double mu = rng.uniform(-3.0, 3.0), v = rng.uniform(0.0, 4.0);
            double total = 0.0;
            for (std::size_t cls = 0; cls < k; ++cls) {
                Tape t;
                auto tvars = register_thresholds(t, th, false);
                ForwardMessageVars msg{t.constant(Matrix::scalar(mu)),
                                       t.constant(Matrix::scalar(v))};
                Var data =
                    ordinal_data_term(t, msg, {static_cast<int>(cls)}, k, tvars, 1.0);
                total += std::exp(-t.scalar_value(data));
            }
            CHECK(std::fabs(total - 1.0) <= 1e-12);
        }
    }
    SUBCASE("K=2 with the threshold absorbed equals the binary loss") {
        const std::size_t n = 12, h = 5;
        for (int rep = 0; rep < 50; ++rep) {
            LastLayerPosterior post = random_posterior(rng, Variant::V2, h);
            Matrix psi = random_matrix(rng, n, h);
            const double tau1 = rng.uniform(-1.5, 1.5);
            std::vector<int> labels;
            Matrix y_pm(n, 1);
            for (std::size_t i = 0; i < n; ++i) {
                labels.push_back(static_cast<int>(rng.below(2)));
                y_pm[i] = labels[i] == 1 ? 1.0 : -1.0;
            }
            OrdinalThresholds th = make_thresholds(2);
            th.tau1 = Matrix::scalar(tau1);

            Tape t;
            auto pv = register_posterior(t, post, false);
            auto msg = forward_message(t, post, pv, t.constant(psi));
            auto tvars = register_thresholds(t, th, false);
            const double ord = t.scalar_value(ordinal_data_term(t, msg, labels, 2, tvars, 1.0));

            // same message with the threshold folded into the mean
            Var shifted = t.sub(msg.mu_f, t.constant(Matrix::full(n, 1, tau1)));
            ForwardMessageVars msg_shift{shifted, msg.v};
            const double bin = t.scalar_value(binary_data_term(t, msg_shift, y_pm, 1.0));
            CHECK(std::fabs(ord - bin) <= 1e-10);
        }
    }
    SUBCASE("reconstructed thresholds are strictly increasing") {
        OrdinalThresholds th = make_thresholds(5);
        auto taus = th.thresholds();
        for (std::size_t i = 1; i < taus.size(); ++i) CHECK(taus[i] > taus[i - 1]);
        CHECK_THROWS_AS(make_thresholds(1), std::invalid_argument);
    }
}

TEST_CASE("MAP baselines") {
    Rng rng(26);
    SUBCASE("zero residuals and zero weights") {
        const std::size_t n = 5;
        Tape t;
        Var preds = t.constant(Matrix::zeros(n, 1));
        Var data = map_regression_data_term(t, preds, Matrix::zeros(n, 1), 1.0);
        CHECK(t.scalar_value(data) ==
              doctest::Approx(static_cast<double>(n) * sf::kHalfLog2Pi).epsilon(1e-13));
        Var pen = ridge_penalty(t, t.constant(Matrix::zeros(3, 1)), 0.1);
        CHECK(t.scalar_value(pen) == 0.0);
    }
    SUBCASE("probit with zero logits") {
        const std::size_t n = 4;
        Tape t;
        Var logits = t.constant(Matrix::zeros(n, 1));
        Var data = map_probit_data_term(t, logits, random_pm_labels(rng, n), 1.0);
        CHECK(t.scalar_value(data) ==
              doctest::Approx(static_cast<double>(n) * std::log(2.0)).epsilon(1e-13));
    }
    SUBCASE("coincides with the Bethe binary data term at v = 0") {
        const std::size_t n = 9;
        Matrix mu_f = random_matrix(rng, n, 1, -2.0, 2.0);
        Matrix y = random_pm_labels(rng, n);
        Tape t;
        ForwardMessageVars msg{t.constant(mu_f), t.constant(Matrix::zeros(n, 1))};
        const double bethe = t.scalar_value(binary_data_term(t, msg, y, 1.0));
        const double map = t.scalar_value(map_probit_data_term(t, t.constant(mu_f), y, 1.0));
        CHECK(bethe == doctest::Approx(map).epsilon(1e-13));
    }
}

TEST_CASE("variational bound ordering") {
    Rng rng(27);
    const std::size_t n = 10;
    SUBCASE("Gaussian case") {
        for (int rep = 0; rep < 50; ++rep) {
            ForwardMessage msg{random_matrix(rng, n, 1, -2.0, 2.0),
                               random_matrix(rng, n, 1, 0.05, 3.0)};
            Matrix y = random_matrix(rng, n, 1, -3.0, 3.0);
            const double log_s2 = rng.uniform(std::log(0.3), std::log(2.0));
            Tape t;
            ForwardMessageVars mv{t.constant(msg.mu_f), t.constant(msg.v)};
            const double bethe =
                t.scalar_value(regression_data_term(t, mv, y, t.constant(Matrix::scalar(log_s2))));
            const double elbo = elbo_gauss_data_term(msg, y, std::exp(log_s2));
            CHECK(bethe < elbo);
        }
    }
    SUBCASE("probit case, with equality at zero variance") {
        for (int rep = 0; rep < 50; ++rep) {
            ForwardMessage msg{random_matrix(rng, n, 1, -2.0, 2.0),
                               random_matrix(rng, n, 1, 0.05, 3.0)};
            Matrix y = random_pm_labels(rng, n);
            Tape t;
            ForwardMessageVars mv{t.constant(msg.mu_f), t.constant(msg.v)};
            const double bethe = t.scalar_value(binary_data_term(t, mv, y, 1.0));
            const double elbo = elbo_probit_data_term(msg, y, 1.0);
            CHECK(bethe < elbo);

            ForwardMessage flat{msg.mu_f, Matrix::zeros(n, 1)};
            Tape t0;
            ForwardMessageVars mv0{t0.constant(flat.mu_f), t0.constant(flat.v)};
            const double bethe0 = t0.scalar_value(binary_data_term(t0, mv0, y, 1.0));
            CHECK(std::fabs(bethe0 - elbo_probit_data_term(flat, y, 1.0)) <= 1e-9);
        }
    }
}

TEST_CASE("point-mass limit of the covariance recovers the MAP data terms") {
    Rng rng(28);
    const std::size_t n = 8, h = 5;
    for (int rep = 0; rep < 10; ++rep) {
        LastLayerPosterior post = make_posterior(Variant::V2, h);
        post.mu = random_matrix(rng, h, 1);
        post.rho = Matrix::full(h, 1, -30.0);
        post.epsilon = 0.0;  // the jitter is part of Sigma_eff and must vanish too
        Matrix psi = random_matrix(rng, n, h);
        Matrix y_reg = random_matrix(rng, n, 1, -2.0, 2.0);
        Matrix y_pm = random_pm_labels(rng, n);

        Tape t;
        auto vars = register_posterior(t, post, false);
        auto msg = forward_message(t, post, vars, t.constant(psi));
        const double reg_bethe = t.scalar_value(
            regression_data_term(t, msg, y_reg, t.constant(Matrix::scalar(0.0))));
        const double reg_map =
            t.scalar_value(map_regression_data_term(t, msg.mu_f, y_reg, 1.0));
        CHECK(std::fabs(reg_bethe - reg_map) <= 1e-6);

        const double bin_bethe = t.scalar_value(binary_data_term(t, msg, y_pm, 1.0));
        const double bin_map = t.scalar_value(map_probit_data_term(t, msg.mu_f, y_pm, 1.0));
        CHECK(std::fabs(bin_bethe - bin_map) <= 1e-6);
    }
}

TEST_CASE("closed-form derivatives in the message variance") {
    Rng rng(29);
    SUBCASE("zero crossings") {
        CHECK(dloss_dv_probit(0.0, 1.0, 0.7) == 0.0);
        CHECK(dloss_dv_gauss(1.3, 1.3 * 1.3) == doctest::Approx(0.0));
    }
    SUBCASE("matches finite differences of the per-sample losses") {
        for (int rep = 0; rep < 100; ++rep) {
            const double c = rng.uniform(0.7, 2.0);
            const double v = rng.uniform(0.01, 3.0);
            const double a = rng.uniform(-2.5, 2.5);  // y * mu_f
            const double hstep = 1e-6;
            auto probit_loss = [&](double vv) {
                return -sf::log_ndtr(a / std::sqrt(c * c + vv));
            };
            const double fd_p = (probit_loss(v + hstep) - probit_loss(v - hstep)) / (2.0 * hstep);
            const double t_margin = a / std::sqrt(c * c + v);
            const double an_p = dloss_dv_probit(t_margin, c, v);
            CHECK(std::fabs(an_p - fd_p) <= 1e-9 + 1e-6 * std::fabs(fd_p));
            CHECK((an_p > 0.0) == (t_margin > 0.0));

            const double resid = rng.uniform(-3.0, 3.0);
            const double s2 = rng.uniform(0.2, 2.0);
            auto gauss_loss = [&](double vv) {
                const double V = s2 + vv;
                return resid * resid / (2.0 * V) + 0.5 * std::log(V);
            };
            const double fd_g = (gauss_loss(v + hstep) - gauss_loss(v - hstep)) / (2.0 * hstep);
            const double an_g = dloss_dv_gauss(resid, s2 + v);
            CHECK(std::fabs(an_g - fd_g) <= 1e-9 + 1e-6 * std::fabs(fd_g));
            CHECK((an_g > 0.0) == (resid * resid < s2 + v));
        }
    }
}

TEST_CASE("loss breakdown adds up exactly") {
    Rng rng(30);
    const std::size_t n = 6, h = 4;
    LastLayerPosterior post = random_posterior(rng, Variant::V3, h);
    Matrix psi = random_matrix(rng, n, h);
    Tape t;
    auto vars = register_posterior(t, post, false);
    auto msg = forward_message(t, post, vars, t.constant(psi));
    Var prior = prior_neg_log_z(t, post, vars);
    Var data = binary_data_term(t, msg, random_pm_labels(rng, n), 1.0);
    Var l2 = t.constant(Matrix::scalar(0.123));
    auto terms = assemble_loss(t, prior, data, l2);
    auto b = read_breakdown(t, terms);
    CHECK(std::fabs(b.total - (b.prior_term + b.data_term + b.backbone_l2)) <= 1e-12);
}

TEST_CASE("full loss gradients match finite differences") {
    Rng rng(31);
    const std::size_t n = 6, d = 3, h = 4;
    Matrix x = random_matrix(rng, n, d);
    Matrix y_reg = random_matrix(rng, n, 1, -2.0, 2.0);
    Matrix y_pm = random_pm_labels(rng, n);
    std::vector<int> labels3;
    for (std::size_t i = 0; i < n; ++i) labels3.push_back(static_cast<int>(rng.below(3)));

    // leaves: [w1, mu, rho-or-chol, log_alpha, log_sigma2]
    for (Variant variant : {Variant::V1, Variant::V2, Variant::V3}) {
        Backbone bb = make_backbone(1, d, h, rng);
        LastLayerPosterior post = random_posterior(rng, variant, h);
        Matrix sigma_leaf = Matrix::scalar(rng.uniform(-0.5, 0.5));
        std::vector<Matrix> leaves = {bb.weights[0], post.mu,
                                      variant == Variant::V1
                                          ? Matrix::scalar(0.0)  // placeholder, still checked
                                          : (variant == Variant::V2 ? post.rho : post.chol_raw),
                                      post.log_alpha, sigma_leaf};

        auto build = [&](Tape& t, const std::vector<Var>& ls, bool regression) {
            BackboneVars bv{{ls[0]}};
            PosteriorVars pv;
            pv.mu = ls[1];
            if (variant == Variant::V2) pv.rho = ls[2];
            if (variant == Variant::V3) pv.chol_raw = ls[2];
            pv.log_alpha = ls[3];
            Var psi = features(t, bv, t.constant(x));
            auto msg = forward_message(t, post, pv, psi);
            Var prior = prior_neg_log_z(t, post, pv);
            Var data = regression ? regression_data_term(t, msg, y_reg, ls[4])
                                  : binary_data_term(t, msg, y_pm, 1.0);
            Var l2 = backbone_l2(t, bv, 0.01);
            return assemble_loss(t, prior, data, l2).total;
        };

        for (bool regression : {true, false}) {
            auto res = testsupport::gradcheck(
                [&](Tape& t, const std::vector<Var>& ls) { return build(t, ls, regression); },
                leaves);
            CAPTURE(variant_name(variant));
            CAPTURE(regression);
            CAPTURE(res.detail);
            CHECK(res.ok);
        }
    }

    SUBCASE("ordinal loss gradients, including thresholds") {
        Backbone bb = make_backbone(1, d, h, rng);
        LastLayerPosterior post = random_posterior(rng, Variant::V2, h);
        OrdinalThresholds th = make_thresholds(3);
        std::vector<Matrix> leaves = {bb.weights[0], post.mu, post.rho, post.log_alpha,
                                      th.tau1,       th.log_gaps};
        auto res = testsupport::gradcheck(
            [&](Tape& t, const std::vector<Var>& ls) {
                BackboneVars bv{{ls[0]}};
                PosteriorVars pv;
                pv.mu = ls[1];
                pv.rho = ls[2];
                pv.log_alpha = ls[3];
                OrdinalVars ov{ls[4], ls[5]};
                Var psi = features(t, bv, t.constant(x));
                auto msg = forward_message(t, post, pv, psi);
                Var data = ordinal_data_term(t, msg, labels3, 3, ov, 1.0);
                return assemble_loss(t, prior_neg_log_z(t, post, pv), data,
                                     backbone_l2(t, bv, 0.01))
                    .total;
            },
            leaves);
        CAPTURE(res.detail);
        CHECK(res.ok);
    }

    SUBCASE("one-vs-all loss gradients across three heads") {
        Backbone bb = make_backbone(1, d, h, rng);
        std::vector<LastLayerPosterior> posts;
        std::vector<Matrix> leaves = {bb.weights[0]};
        for (int head = 0; head < 3; ++head) {
            posts.push_back(random_posterior(rng, Variant::V2, h));
            leaves.push_back(posts.back().mu);
            leaves.push_back(posts.back().rho);
            leaves.push_back(posts.back().log_alpha);
        }
        auto res = testsupport::gradcheck(
            [&](Tape& t, const std::vector<Var>& ls) {
                BackboneVars bv{{ls[0]}};
                Var psi = features(t, bv, t.constant(x));
                std::vector<PosteriorVars> pvs;
                std::vector<ForwardMessageVars> msgs;
                for (int head = 0; head < 3; ++head) {
                    PosteriorVars pv;
                    pv.mu = ls[1 + 3 * head];
                    pv.rho = ls[2 + 3 * head];
                    pv.log_alpha = ls[3 + 3 * head];
                    pvs.push_back(pv);
                    msgs.push_back(forward_message(t, posts[head], pv, psi));
                }
                auto terms = ova_terms(t, posts, pvs, msgs, labels3, 1.0);
                return assemble_loss(t, terms.prior, terms.data, backbone_l2(t, bv, 0.01)).total;
            },
            leaves);
        CAPTURE(res.detail);
        CHECK(res.ok);
    }

    SUBCASE("MAP loss gradients") {
        Backbone bb = make_backbone(1, d, h, rng);
        Matrix w_ll = random_matrix(rng, h, 1);
        auto res = testsupport::gradcheck(
            [&](Tape& t, const std::vector<Var>& ls) {
                BackboneVars bv{{ls[0]}};
                Var psi = features(t, bv, t.constant(x));
                Var preds = t.matmul(psi, ls[1]);
                Var data = map_regression_data_term(t, preds, y_reg, 1.0);
                Var pen = t.add(ridge_penalty(t, ls[1], 0.1), backbone_l2(t, bv, 0.01));
                return t.add(data, pen);
            },
            {bb.weights[0], w_ll});
        CHECK(res.ok);

        auto res2 = testsupport::gradcheck(
            [&](Tape& t, const std::vector<Var>& ls) {
                BackboneVars bv{{ls[0]}};
                Var psi = features(t, bv, t.constant(x));
                Var logits = t.matmul(psi, ls[1]);
                Var data = map_probit_data_term(t, logits, y_pm, 1.0);
                Var pen = t.add(ridge_penalty(t, ls[1], 0.1), backbone_l2(t, bv, 0.01));
                return t.add(data, pen);
            },
            {bb.weights[0], w_ll});
        CHECK(res2.ok);
    }
}
