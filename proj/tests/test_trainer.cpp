#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "bethe/trainer.hpp"

using namespace bethe;

namespace {

FoldedData synthetic_regression(std::size_t n = 400, std::size_t d = 6, double alpha = 1.0,
                                double sigma = 0.5, std::uint64_t seed = 5) {
    Dataset ds = gen_linear_gaussian(n, d, alpha, sigma, seed);
    auto idx = split(ds.size(), seed);
    return fold(preprocess(ds, idx), idx);
}

FoldedData synthetic_classification(std::size_t n = 400, std::size_t d = 5,
                                    std::uint64_t seed = 5) {
    Dataset ds = gen_probit_linear(n, d, 1.0, 1.0, seed);
    auto idx = split(ds.size(), seed);
    return fold(preprocess(ds, idx), idx);
}

TrainConfig linear_config(HeadKind head, Variant variant, std::uint64_t seed = 5) {
    TrainConfig cfg;
    cfg.head = head;
    cfg.variant = variant;
    cfg.depth = 0;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("adam_step") {
    SUBCASE("zero gradient leaves parameters untouched") {
        Matrix p = Matrix::column({1.0, -2.0});
        Matrix g = Matrix::zeros(2, 1);
        AdamState st;
        std::vector<Matrix*> params = {&p};
        st.init(params);
        adam_step(st, params, {&g}, 0.03);
        CHECK(p[0] == 1.0);
        CHECK(p[1] == -2.0);
    }
    SUBCASE("first step is a signed step of size ~lr") {
        Matrix p = Matrix::column({0.0, 0.0});
        Matrix g = Matrix::column({0.4, -0.002});
        AdamState st;
        std::vector<Matrix*> params = {&p};
        st.init(params);
        adam_step(st, params, {&g}, 0.03);
        // delta = -lr * g / (|g| + eps)
        CHECK(p[0] == doctest::Approx(-0.03 * 0.4 / (0.4 + 1e-8)).epsilon(1e-12));
        CHECK(p[1] == doctest::Approx(0.03 * 0.002 / (0.002 + 1e-8)).epsilon(1e-12));
    }
    SUBCASE("constant gradient converges to lr-sized steps") {
        Matrix p = Matrix::scalar(0.0);
        Matrix g = Matrix::scalar(0.7);
        AdamState st;
        std::vector<Matrix*> params = {&p};
        st.init(params);
        double prev = 0.0;
        double delta = 0.0;
        for (int i = 0; i < 500; ++i) {
            prev = p[0];
            adam_step(st, params, {&g}, 0.03);
            delta = prev - p[0];
        }
        CHECK(delta == doctest::Approx(0.03).epsilon(1e-6));
    }
}

TEST_CASE("training is deterministic per seed") {
    FoldedData data = synthetic_regression(200, 4);
    TrainConfig cfg = linear_config(HeadKind::Regression, Variant::V2, 9);
    cfg.max_steps = 60;
    TrainResult a = train(cfg, data);
    TrainResult b = train(cfg, data);
    REQUIRE(a.trajectory.size() == b.trajectory.size());
    for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
        CHECK(a.trajectory[i].train_total == b.trajectory[i].train_total);
        CHECK(a.trajectory[i].val_nll == b.trajectory[i].val_nll);
        CHECK(a.trajectory[i].test_nll == b.trajectory[i].test_nll);
        CHECK(a.trajectory[i].alpha == b.trajectory[i].alpha);
    }
    CHECK(a.best_step == b.best_step);
}

TEST_CASE("early stopping") {
    FoldedData data = synthetic_regression(100, 3);
    SUBCASE("a constant validation stream stops after exactly patience checks") {
        TrainConfig cfg = linear_config(HeadKind::Regression, Variant::V1, 3);
        cfg.lr = 1e-30;  // parameters barely move, so no check clears the threshold
        TrainResult res = train(cfg, data);
        CHECK(res.steps_run == 1 + cfg.patience);
        CHECK(res.trajectory.size() == 1 + cfg.patience);
        CHECK(res.best_step == 1);
    }
    SUBCASE("the returned checkpoint is never worse than any recorded validation NLL") {
        TrainConfig cfg = linear_config(HeadKind::Regression, Variant::V2, 4);
        cfg.max_steps = 300;
        TrainResult res = train(cfg, data);
        for (const auto& pt : res.trajectory) CHECK(res.best_val_nll <= pt.val_nll + 1e-12);
        CHECK(res.oracle_test_nll <=
              res.trajectory[res.trajectory.size() - 1].test_nll + 1e-12);
    }
}

TEST_CASE("empirical Bayes V1 settles at its own fixed point") {
    FoldedData data = synthetic_regression(2000, 10, 1.0, 0.5, 11);
    TrainConfig cfg = linear_config(HeadKind::Regression, Variant::V1, 11);
    TrainResult res = train(cfg, data);
    const double alpha_hat = res.model.heads[0].alpha();
    const double alpha_star = closed_form_alpha_v1(res.model.heads[0].mu);
    CHECK(std::fabs(alpha_hat - alpha_star) / alpha_star <= 0.2);
    // generator truth within a factor of two on this instance
    CHECK(alpha_hat >= 0.5);
    CHECK(alpha_hat <= 2.0);
}

TEST_CASE("convex point-estimate run reaches the closed-form ridge solution") {
    FoldedData data = synthetic_regression(600, 5, 1.0, 0.3, 7);
    TrainConfig cfg = linear_config(HeadKind::MapRegression, Variant::V1, 7);
    cfg.lr = 0.01;
    cfg.max_steps = 2000;
    TrainResult res = train(cfg, data);

    // closed-form ridge optimum: (X^T X + 2 sigma^2 lambda I) w = X^T y
    const Matrix& x = data.x_train;
    const Matrix& y = data.y_train;
    const std::size_t d = x.cols();
    Matrix gram = matmul(transpose(x), x);
    for (std::size_t i = 0; i < d; ++i)
        gram(i, i) += 2.0 * cfg.map_sigma_obs_sq * cfg.lambda_ll;
    Matrix rhs = matmul(transpose(x), y);
    // solve by gaussian elimination
    Matrix a = gram;
    Matrix w = rhs;
    for (std::size_t p = 0; p < d; ++p) {
        std::size_t best = p;
        for (std::size_t r = p + 1; r < d; ++r)
            if (std::fabs(a(r, p)) > std::fabs(a(best, p))) best = r;
        for (std::size_t c = 0; c < d; ++c) std::swap(a(p, c), a(best, c));
        std::swap(w[p], w[best]);
        for (std::size_t r = 0; r < d; ++r) {
            if (r == p) continue;
            const double f = a(r, p) / a(p, p);
            for (std::size_t c = 0; c < d; ++c) a(r, c) -= f * a(p, c);
            w[r] -= f * w[p];
        }
    }
    for (std::size_t i = 0; i < d; ++i) w[i] /= a(i, i);

    double loss_star = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double pred = 0.0;
        for (std::size_t j = 0; j < d; ++j) pred += x(i, j) * w[j];
        const double r = y[i] - pred;
        loss_star += 0.5 * r * r / cfg.map_sigma_obs_sq;
    }
    loss_star += static_cast<double>(x.rows()) *
                 (0.5 * std::log(2.0 * M_PI * cfg.map_sigma_obs_sq));
    double wnorm = 0.0;
    for (std::size_t j = 0; j < d; ++j) wnorm += w[j] * w[j];
    loss_star += cfg.lambda_ll * wnorm;

    double final_loss = res.trajectory[res.trajectory.size() - 1].train_total;
    CHECK(final_loss <= loss_star * 1.01 + 1e-6);
    CHECK(final_loss >= loss_star - 1e-9);  // optimum is a lower bound

    // after warm-up the loss descends monotonically on this convex problem
    std::size_t violations = 0;
    for (std::size_t i = 100; i + 1 < res.trajectory.size(); ++i)
        if (res.trajectory[i + 1].train_total > res.trajectory[i].train_total + 1e-9)
            ++violations;
    CHECK(violations == 0);
}

TEST_CASE("cv_select") {
    FoldedData data = synthetic_regression(500, 6, 1.0, 0.5, 13);
    TrainConfig cfg = linear_config(HeadKind::Regression, Variant::V1, 13);
    cfg.regime = RegimeKind::Cv;
    SUBCASE("single-point grid is the identity") {
        cfg.cv_grid = {0.7};
        CvResult res = cv_select(cfg, data);
        CHECK(res.best_alpha == 0.7);
        CHECK(res.result.model.heads[0].alpha() == doctest::Approx(0.7));
    }
    SUBCASE("selection matches independently trained grid points") {
        cfg.cv_grid = {0.01, 1.0, 100.0};
        CvResult res = cv_select(cfg, data);
        double best_val = HUGE_VAL, best_alpha = 0.0;
        for (double alpha : cfg.cv_grid) {
            TrainConfig point = cfg;
            point.regime = RegimeKind::Fixed;
            point.fixed_alpha = alpha;
            TrainResult r = train(point, data);
            if (r.best_val_nll < best_val) {
                best_val = r.best_val_nll;
                best_alpha = alpha;
            }
        }
        CHECK(res.best_alpha == best_alpha);
        CHECK(res.result.best_val_nll == doctest::Approx(best_val));
    }
    SUBCASE("a diverging grid point is excluded, not fatal") {
        cfg.cv_grid = {0.0, 1.0};  // alpha = 0 has an infinite prior term
        CvResult res = cv_select(cfg, data);
        CHECK(res.best_alpha == 1.0);
    }
    SUBCASE("a degenerate grid at the EB optimum matches EB") {
        TrainConfig eb = cfg;
        eb.regime = RegimeKind::Eb;
        TrainResult eb_res = train(eb, data);
        const double alpha_hat = eb_res.model.heads[0].alpha();
        TrainConfig deg = cfg;
        deg.cv_grid = {alpha_hat};
        CvResult cv_res = cv_select(deg, data);
        const double nll_eb = eval_nll(eb_res.model, data.x_test, data.y_test);
        const double nll_cv = eval_nll(cv_res.result.model, data.x_test, data.y_test);
        CHECK(std::fabs(nll_cv - nll_eb) <= 0.02);
    }
}

TEST_CASE("fixed regime never updates alpha, EB ignores lambda_ll") {
    FoldedData data = synthetic_regression(200, 4, 1.0, 0.5, 17);
    TrainConfig cfg = linear_config(HeadKind::Regression, Variant::V2, 17);
    cfg.regime = RegimeKind::Fixed;
    cfg.fixed_alpha = 2.5;
    cfg.max_steps = 50;
    TrainResult res = train(cfg, data);
    CHECK(res.model.heads[0].alpha() == doctest::Approx(2.5));
    for (const auto& pt : res.trajectory) CHECK(pt.alpha == doctest::Approx(2.5));

    // same data, EB: lambda_ll plays no role in the objective
    TrainConfig eb = cfg;
    eb.regime = RegimeKind::Eb;
    eb.lambda_ll = 123.0;
    TrainConfig eb2 = eb;
    eb2.lambda_ll = 0.0;
    TrainResult r1 = train(eb, data);
    TrainResult r2 = train(eb2, data);
    CHECK(r1.trajectory[5].train_total == r2.trajectory[5].train_total);
}

TEST_CASE("fs variant freezes the observation noise") {
    FoldedData data = synthetic_regression(300, 4, 1.0, 0.4, 19);
    TrainConfig cfg = linear_config(HeadKind::Regression, Variant::V2, 19);
    cfg.fs = true;
    cfg.fs_warm_steps = 100;
    cfg.max_steps = 120;
    TrainResult res = train(cfg, data);
    CHECK(res.model.sigma_frozen);
    const double frozen = res.trajectory[0].sigma_obs_sq;
    for (const auto& pt : res.trajectory) CHECK(pt.sigma_obs_sq == frozen);
    CHECK(frozen > 0.0);
}

TEST_CASE("classification heads train end to end") {
    FoldedData data = synthetic_classification(300, 4, 23);
    for (HeadKind head : {HeadKind::Binary, HeadKind::Ova, HeadKind::Ordinal,
                          HeadKind::MapClass}) {
        TrainConfig cfg = linear_config(head, Variant::V2, 23);
        cfg.max_steps = 150;
        TrainResult res = train(cfg, data);
        CAPTURE(head_name(head));
        CHECK(std::isfinite(res.best_val_nll));
        CHECK(res.best_val_nll < std::log(2.0));  // beats the uninformed model
        auto pred = predict_class(res.model, data.x_test);
        CHECK(accuracy(pred, data.labels_of(data.y_test)) > 0.6);
    }
}

TEST_CASE("deep ensemble") {
    SUBCASE("identical members collapse to one member") {
        FoldedData data = synthetic_regression(200, 3, 1.0, 0.5, 29);
        TrainConfig cfg = linear_config(HeadKind::MapRegression, Variant::V1, 29);
        cfg.max_steps = 100;
        TrainResult res = train(cfg, data);
        DeepEnsemble ens;
        ens.members = {res.model, res.model};
        ens.member_sigma_sq = {0.3, 0.3};
        auto single = predict_regression(res.model, data.x_test, 0.0, 0.3);
        auto joint = ens.predict_regression(data.x_test, 0.0);
        for (std::size_t i = 0; i < single.mean.size(); ++i) {
            CHECK(joint.mean[i] == doctest::Approx(single.mean[i]).epsilon(1e-12));
            CHECK(joint.variance[i] == doctest::Approx(single.variance[i]).epsilon(1e-9));
        }
    }
    SUBCASE("two members at +-1 with zero noise give unit variance") {
        DeepEnsemble ens;
        FoldedData data = synthetic_regression(100, 2, 1.0, 0.1, 31);
        TrainConfig cfg = linear_config(HeadKind::MapRegression, Variant::V1, 31);
        cfg.max_steps = 5;
        ModelState a = train(cfg, data).model;
        ModelState b = a;
        // force constant predictions +-1 through a zero backbone and bias trick:
        // depth 0 model predicts x * mu; use a handcrafted input of ones
        a.heads[0].mu = Matrix::full(a.heads[0].mu.rows(), 1, 0.0);
        b.heads[0].mu = Matrix::full(b.heads[0].mu.rows(), 1, 0.0);
        a.heads[0].mu[0] = 1.0;
        b.heads[0].mu[0] = -1.0;
        ens.members = {a, b};
        ens.member_sigma_sq = {1e-12, 1e-12};
        Matrix ones = Matrix::full(4, a.heads[0].mu.rows(), 0.0);
        for (std::size_t i = 0; i < 4; ++i) ones(i, 0) = 1.0;
        auto pred = ens.predict_regression(ones, 0.0);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(pred.mean[i] == doctest::Approx(0.0));
            CHECK(pred.variance[i] == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    SUBCASE("ensemble NLL does not exceed the worst member") {
        FoldedData data = synthetic_regression(400, 5, 1.0, 0.5, 37);
        TrainConfig cfg = linear_config(HeadKind::MapRegression, Variant::V1, 37);
        cfg.ensemble_size = 3;
        cfg.max_steps = 400;
        DeepEnsemble ens = deep_ensemble(cfg, data);
        auto pred = ens.predict_regression(data.x_test, 0.0);
        const double ens_nll = gaussian_nll(pred, data.y_test);
        double worst = -HUGE_VAL;
        for (std::size_t j = 0; j < ens.members.size(); ++j) {
            auto mp = predict_regression(ens.members[j], data.x_test, 0.0,
                                         ens.member_sigma_sq[j]);
            worst = std::fmax(worst, gaussian_nll(mp, data.y_test));
        }
        CHECK(ens_nll <= worst + 1e-9);
    }
}

TEST_CASE("closed_form_alpha_v1") {
    Matrix mu = Matrix::full(8, 1, 1.0);
    CHECK(closed_form_alpha_v1(mu) == doctest::Approx(1.0));
    for (std::size_t k = 0; k < 8; ++k) mu[k] = 2.0;
    CHECK(closed_form_alpha_v1(mu) == doctest::Approx(0.25));
    CHECK_THROWS_AS(closed_form_alpha_v1(Matrix::zeros(3, 1)), std::domain_error);
}

TEST_CASE("aborts carry diagnostics") {
    FoldedData data = synthetic_regression(100, 3, 1.0, 0.5, 41);
    for (std::size_t i = 0; i < data.y_train.size(); ++i) data.y_train[i] = 1e200;
    TrainConfig cfg = linear_config(HeadKind::Regression, Variant::V1, 41);
    try {
        train(cfg, data);
        FAIL("expected TrainAbort");
    } catch (const TrainAbort& e) {
        const std::string msg = e.what();
        CHECK(msg.find("alpha=") != std::string::npos);
        CHECK(msg.find("sigma_obs_sq=") != std::string::npos);
        CHECK(msg.find("mean_v=") != std::string::npos);
    }
}

TEST_CASE("model checkpoint round-trips through training state") {
    FoldedData data = synthetic_classification(200, 4, 43);
    TrainConfig cfg = linear_config(HeadKind::Ordinal, Variant::V3, 43);
    cfg.max_steps = 40;
    TrainResult res = train(cfg, data);
    const std::string path = "trainer_ckpt.txt";
    res.model.save_checkpoint(path);

    ModelState fresh = init_model(cfg, data.x_train.cols(), data.num_classes, data.y_train);
    fresh.load_checkpoint(path);
    auto want = predict_class(res.model, data.x_test);
    auto got = predict_class(fresh, data.x_test);
    for (std::size_t k = 0; k < want.probs.size(); ++k) CHECK(got.probs[k] == want.probs[k]);
    std::remove(path.c_str());
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.regime = RegimeKind::Cv;
    cfg.cv_grid.clear();
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.depth = 3;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    // head/task mismatches
    FoldedData reg = synthetic_regression(100, 3);
    TrainConfig bin = linear_config(HeadKind::Binary, Variant::V1);
    CHECK_THROWS_AS(train(bin, reg), std::invalid_argument);
}
