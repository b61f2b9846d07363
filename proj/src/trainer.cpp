#include "bethe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace bethe {

std::string head_name(HeadKind k) {
    switch (k) {
        case HeadKind::Regression: return "regression";
        case HeadKind::Binary: return "binary";
        case HeadKind::Ova: return "ova";
        case HeadKind::Ordinal: return "ordinal";
        case HeadKind::MapRegression: return "map-regression";
        case HeadKind::MapClass: return "map-class";
    }
    return "?";
}

bool is_map_head(HeadKind k) {
    return k == HeadKind::MapRegression || k == HeadKind::MapClass;
}

bool is_regression_head(HeadKind k) {
    return k == HeadKind::Regression || k == HeadKind::MapRegression;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (patience < 1) throw std::invalid_argument("config: patience must be >= 1");
    if (max_steps < 1) throw std::invalid_argument("config: max_steps must be >= 1");
    if (regime == RegimeKind::Cv && cv_grid.empty())
        throw std::invalid_argument("config: cv regime needs a non-empty grid");
    if (depth < 0 || depth > 2) throw std::invalid_argument("config: depth must be 0, 1 or 2");
    if (width < 1) throw std::invalid_argument("config: width must be >= 1");
    if (!(c > 0.0)) throw std::invalid_argument("config: probit scale must be positive");
    if (epsilon < 0.0) throw std::invalid_argument("config: epsilon must be >= 0");
    if (ensemble_size < 2) throw std::invalid_argument("config: ensemble needs >= 2 members");
}

double ModelState::sigma_obs_sq() const {
    return log_sigma_obs_sq.empty() ? map_sigma_obs_sq : std::exp(log_sigma_obs_sq.item());
}

double ModelState::alpha_summary() const {
    if (heads.empty() || is_map_head(head)) return std::nan("");
    double acc = 0.0;
    for (const auto& h : heads) acc += h.log_alpha.item();
    return std::exp(acc / static_cast<double>(heads.size()));
}

std::vector<std::pair<std::string, Matrix*>> ModelState::named_state() {
    std::vector<std::pair<std::string, Matrix*>> out;
    for (std::size_t l = 0; l < backbone.weights.size(); ++l)
        out.emplace_back("backbone.w" + std::to_string(l + 1), &backbone.weights[l]);
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const std::string prefix = "head" + std::to_string(h) + ".";
        out.emplace_back(prefix + "mu", &heads[h].mu);
        if (heads[h].variant == Variant::V2) out.emplace_back(prefix + "rho", &heads[h].rho);
        if (heads[h].variant == Variant::V3)
            out.emplace_back(prefix + "chol", &heads[h].chol_raw);
        out.emplace_back(prefix + "log_alpha", &heads[h].log_alpha);
    }
    if (!log_sigma_obs_sq.empty()) out.emplace_back("log_sigma_obs_sq", &log_sigma_obs_sq);
    if (head == HeadKind::Ordinal) {
        out.emplace_back("ordinal.tau1", &thresholds.tau1);
        if (thresholds.log_gaps.rows() > 0)
            out.emplace_back("ordinal.log_gaps", &thresholds.log_gaps);
    }
    return out;
}

void ModelState::save_checkpoint(const std::string& path) {
    std::vector<std::pair<std::string, const Matrix*>> entries;
    for (auto& [name, mat] : named_state()) entries.emplace_back(name, mat);
    save_matrix_map(path, entries);
}

void ModelState::load_checkpoint(const std::string& path) {
    auto loaded = load_matrix_map(path);
    for (auto& [name, mat] : named_state()) {
        auto it = loaded.find(name);
        if (it == loaded.end()) throw std::runtime_error("checkpoint is missing key " + name);
        if (it->second.rows() != mat->rows() || it->second.cols() != mat->cols())
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        *mat = it->second;
    }
}

ModelState init_model(const TrainConfig& config, std::size_t input_dim, std::size_t num_classes,
                      const Matrix& y_train) {
    config.validate();
    Rng rng(config.seed);
    ModelState m;
    m.head = config.head;
    m.num_classes = num_classes;
    m.c = config.c;
    m.epsilon = config.epsilon;
    m.lambda_bb = config.lambda_bb;
    m.lambda_ll = config.lambda_ll;
    m.map_sigma_obs_sq = config.map_sigma_obs_sq;
    m.backbone = make_backbone(config.depth, input_dim, config.width, rng);
    const std::size_t h = m.backbone.output_dim();

    std::size_t n_heads = 1;
    if (config.head == HeadKind::Ova) n_heads = num_classes;
    if (config.head == HeadKind::MapClass && num_classes > 2) n_heads = num_classes;

    const Variant variant = is_map_head(config.head) ? Variant::V1 : config.variant;
    const double log_alpha0 =
        config.regime == RegimeKind::Eb ? 0.0 : std::log(config.fixed_alpha);
    for (std::size_t i = 0; i < n_heads; ++i) {
        LastLayerPosterior post = make_posterior(variant, h);
        post.epsilon = config.epsilon;
        post.log_alpha = Matrix::scalar(log_alpha0);
        m.heads.push_back(std::move(post));
    }

    if (config.head == HeadKind::Regression) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < y_train.size(); ++i) mean += y_train[i];
        mean /= static_cast<double>(y_train.size());
        for (std::size_t i = 0; i < y_train.size(); ++i)
            var += (y_train[i] - mean) * (y_train[i] - mean);
        var /= static_cast<double>(y_train.size());
        m.log_sigma_obs_sq = Matrix::scalar(std::log(std::fmax(var, 1e-8)));
    }
    if (config.head == HeadKind::Ordinal) m.thresholds = make_thresholds(num_classes);
    return m;
}

void AdamState::init(const std::vector<Matrix*>& params) {
    t = 0;
    m.clear();
    v.clear();
    for (const Matrix* p : params) {
        m.push_back(Matrix::zeros(p->rows(), p->cols()));
        v.push_back(Matrix::zeros(p->rows(), p->cols()));
    }
}

void adam_step(AdamState& state, const std::vector<Matrix*>& params,
               const std::vector<const Matrix*>& grads, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state mismatch");
    state.t += 1;
    const double corr1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double corr2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g = *grads[i];
        if (!p.same_shape(g)) throw std::invalid_argument("adam_step: gradient shape mismatch");
        for (std::size_t k = 0; k < p.size(); ++k) {
            state.m[i][k] = state.beta1 * state.m[i][k] + (1.0 - state.beta1) * g[k];
            state.v[i][k] = state.beta2 * state.v[i][k] + (1.0 - state.beta2) * g[k] * g[k];
            const double mhat = state.m[i][k] / corr1;
            const double vhat = state.v[i][k] / corr2;
            p[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

namespace {

std::vector<std::pair<std::string, const Matrix*>> trainable_refs(const ModelState& m,
                                                                  const TrainConfig& cfg) {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (std::size_t l = 0; l < m.backbone.weights.size(); ++l)
        out.emplace_back("backbone.w" + std::to_string(l + 1), &m.backbone.weights[l]);
    const bool train_alpha = !is_map_head(m.head) && cfg.regime == RegimeKind::Eb;
    for (std::size_t h = 0; h < m.heads.size(); ++h) {
        const std::string prefix = "head" + std::to_string(h) + ".";
        out.emplace_back(prefix + "mu", &m.heads[h].mu);
        if (!is_map_head(m.head)) {
            if (m.heads[h].variant == Variant::V2)
                out.emplace_back(prefix + "rho", &m.heads[h].rho);
            if (m.heads[h].variant == Variant::V3)
                out.emplace_back(prefix + "chol", &m.heads[h].chol_raw);
            if (train_alpha) out.emplace_back(prefix + "log_alpha", &m.heads[h].log_alpha);
        }
    }
    if (m.head == HeadKind::Regression && !m.sigma_frozen)
        out.emplace_back("log_sigma_obs_sq", &m.log_sigma_obs_sq);
    if (m.head == HeadKind::Ordinal) {
        out.emplace_back("ordinal.tau1", &m.thresholds.tau1);
        if (m.thresholds.log_gaps.rows() > 0)
            out.emplace_back("ordinal.log_gaps", &m.thresholds.log_gaps);
    }
    return out;
}

Matrix pm_labels_from(const Matrix& y) {
    Matrix out(y.rows(), 1);
    for (std::size_t i = 0; i < y.rows(); ++i) out[i] = y[i] == 1.0 ? 1.0 : -1.0;
    return out;
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> trainable_parameters(ModelState& model,
                                                                  const TrainConfig& config) {
    std::vector<std::pair<std::string, Matrix*>> out;
    for (auto& [name, mat] : trainable_refs(model, config))
        out.emplace_back(name, const_cast<Matrix*>(mat));
    return out;
}

BuiltLoss build_training_loss(const ModelState& m, const TrainConfig& cfg, const Matrix& x,
                              const Matrix& y) {
    BuiltLoss lb;
    Tape& t = lb.tape;
    std::unordered_map<const Matrix*, Var> var_of;
    for (const auto& [name, mat] : trainable_refs(m, cfg)) {
        Var v = t.leaf(*mat);
        lb.param_vars.push_back(v);
        var_of[mat] = v;
    }
    auto var_for = [&](const Matrix& mat) {
        auto it = var_of.find(&mat);
        return it != var_of.end() ? it->second : t.constant(mat);
    };
    auto posterior_vars = [&](const LastLayerPosterior& p) {
        PosteriorVars pv;
        pv.mu = var_for(p.mu);
        if (p.variant == Variant::V2) pv.rho = var_for(p.rho);
        if (p.variant == Variant::V3) pv.chol_raw = var_for(p.chol_raw);
        pv.log_alpha = var_for(p.log_alpha);
        return pv;
    };

    BackboneVars bv;
    for (const Matrix& w : m.backbone.weights) bv.weights.push_back(var_for(w));
    Var psi = features(t, bv, t.constant(x));
    Var l2 = backbone_l2(t, bv, m.lambda_bb);

    Var prior, data;
    switch (m.head) {
        case HeadKind::Regression: {
            PosteriorVars pv = posterior_vars(m.heads[0]);
            auto msg = forward_message(t, m.heads[0], pv, psi);
            prior = prior_neg_log_z(t, m.heads[0], pv);
            data = regression_data_term(t, msg, y, var_for(m.log_sigma_obs_sq));
            break;
        }
        case HeadKind::Binary: {
            PosteriorVars pv = posterior_vars(m.heads[0]);
            auto msg = forward_message(t, m.heads[0], pv, psi);
            prior = prior_neg_log_z(t, m.heads[0], pv);
            data = binary_data_term(t, msg, pm_labels_from(y), m.c);
            break;
        }
        case HeadKind::Ova: {
            std::vector<PosteriorVars> pvs;
            std::vector<ForwardMessageVars> msgs;
            for (const auto& post : m.heads) {
                pvs.push_back(posterior_vars(post));
                msgs.push_back(forward_message(t, post, pvs.back(), psi));
            }
            std::vector<int> labels(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) labels[i] = static_cast<int>(y[i]);
            auto terms = ova_terms(t, m.heads, pvs, msgs, labels, m.c);
            prior = terms.prior;
            data = terms.data;
            break;
        }
        case HeadKind::Ordinal: {
            PosteriorVars pv = posterior_vars(m.heads[0]);
            auto msg = forward_message(t, m.heads[0], pv, psi);
            prior = prior_neg_log_z(t, m.heads[0], pv);
            OrdinalVars ov;
            ov.tau1 = var_for(m.thresholds.tau1);
            if (m.thresholds.log_gaps.rows() > 0) ov.log_gaps = var_for(m.thresholds.log_gaps);
            std::vector<int> labels(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) labels[i] = static_cast<int>(y[i]);
            data = ordinal_data_term(t, msg, labels, m.num_classes, ov, m.c);
            break;
        }
        case HeadKind::MapRegression: {
            Var mu = var_for(m.heads[0].mu);
            Var preds = t.matmul(psi, mu);
            data = map_regression_data_term(t, preds, y, m.map_sigma_obs_sq);
            prior = ridge_penalty(t, mu, m.lambda_ll);
            break;
        }
        case HeadKind::MapClass: {
            if (m.heads.size() == 1) {
                Var mu = var_for(m.heads[0].mu);
                data = map_probit_data_term(t, t.matmul(psi, mu), pm_labels_from(y), m.c);
                prior = ridge_penalty(t, mu, m.lambda_ll);
            } else {
                for (std::size_t head = 0; head < m.heads.size(); ++head) {
                    Matrix y_pm(y.size(), 1);
                    for (std::size_t i = 0; i < y.size(); ++i)
                        y_pm[i] = static_cast<std::size_t>(y[i]) == head ? 1.0 : -1.0;
                    Var mu = var_for(m.heads[head].mu);
                    Var d = map_probit_data_term(t, t.matmul(psi, mu), y_pm, m.c);
                    Var r = ridge_penalty(t, mu, m.lambda_ll);
                    data = data.valid() ? t.add(data, d) : d;
                    prior = prior.valid() ? t.add(prior, r) : r;
                }
            }
            break;
        }
    }
    lb.terms = assemble_loss(t, prior, data, l2);
    return lb;
}

namespace {

double mean_message_variance(const ModelState& m, const Matrix& x) {
    auto msgs = head_messages(m, x);
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& msg : msgs)
        for (std::size_t i = 0; i < msg.v.size(); ++i) {
            acc += msg.v[i];
            ++count;
        }
    return count == 0 ? 0.0 : acc / static_cast<double>(count);
}

[[noreturn]] void abort_training(const ModelState& m, const FoldedData& data, std::size_t step,
                                 const char* what) {
    std::ostringstream os;
    os << "training aborted at step " << step << ": " << what
       << " | alpha=" << m.alpha_summary() << " sigma_obs_sq=" << m.sigma_obs_sq()
       << " mean_v=" << mean_message_variance(m, data.x_train);
    throw TrainAbort(os.str());
}

struct LoopResult {
    ModelState best;
    double best_val = 0.0;
    std::size_t best_step = 0;
    std::size_t steps = 0;
};

LoopResult run_loop(ModelState& model, const TrainConfig& cfg, const FoldedData& data,
                    std::size_t max_steps, bool early_stop, Trajectory* trajectory) {
    std::vector<Matrix*> mats;
    for (auto& [name, mat] : trainable_parameters(model, cfg)) mats.push_back(mat);
    AdamState adam;
    adam.init(mats);

    LoopResult out;
    out.best = model;
    out.best_val = HUGE_VAL;
    std::size_t bad_checks = 0;

    for (std::size_t step = 1; step <= max_steps; ++step) {
        BuiltLoss lb = build_training_loss(model, cfg, data.x_train, data.y_train);
        const LossBreakdown breakdown = read_breakdown(lb.tape, lb.terms);
        if (!std::isfinite(breakdown.total))
            abort_training(model, data, step, "non-finite loss");
        const Gradient grad = lb.tape.backward(lb.terms.total);
        std::vector<const Matrix*> grads;
        for (std::size_t i = 0; i < mats.size(); ++i) {
            const Matrix& g = grad.at(lb.param_vars[i]);
            if (!g.all_finite()) abort_training(model, data, step, "non-finite gradient");
            grads.push_back(&g);
        }
        adam_step(adam, mats, grads, cfg.lr);

        const double val_nll = eval_nll(model, data.x_val, data.y_val);
        if (trajectory) {
            TrajectoryPoint pt;
            pt.step = step;
            pt.train_total = breakdown.total;
            pt.train_prior = breakdown.prior_term;
            pt.train_data = breakdown.data_term;
            pt.val_nll = val_nll;
            pt.test_nll = eval_nll(model, data.x_test, data.y_test);
            pt.alpha = model.alpha_summary();
            pt.sigma_obs_sq =
                is_regression_head(model.head) ? model.sigma_obs_sq() : std::nan("");
            trajectory->push_back(pt);
        }
        out.steps = step;
        if (!std::isfinite(val_nll)) abort_training(model, data, step, "non-finite val NLL");

        if (val_nll < out.best_val - cfg.min_improvement) {
            out.best_val = val_nll;
            out.best = model;
            out.best_step = step;
            bad_checks = 0;
        } else if (early_stop && ++bad_checks >= cfg.patience) {
            break;
        }
    }
    return out;
}

void check_compatibility(const TrainConfig& cfg, const FoldedData& data) {
    if (data.x_train.rows() == 0 || data.x_val.rows() == 0 || data.x_test.rows() == 0)
        throw std::invalid_argument("train: every fold must be non-empty");
    if (is_regression_head(cfg.head)) {
        if (data.task != TaskKind::Regression)
            throw std::invalid_argument("train: regression head on a classification dataset");
    } else {
        if (data.task != TaskKind::Classification)
            throw std::invalid_argument("train: classification head on a regression dataset");
        if (data.num_classes < 2) throw std::invalid_argument("train: need >= 2 classes");
        if (cfg.head == HeadKind::Binary && data.num_classes != 2)
            throw std::invalid_argument("train: binary head needs exactly 2 classes");
    }
}

}  // namespace

std::vector<ForwardMessage> head_messages(const ModelState& model, const Matrix& x) {
    std::vector<ForwardMessage> out;
    out.reserve(model.heads.size());
    for (const auto& post : model.heads)
        out.push_back(compute_forward_message(model.backbone, post, x));
    return out;
}

RegressionPredictive predict_regression(const ModelState& model, const Matrix& x,
                                        double target_mean, double sigma_sq_override) {
    if (!is_regression_head(model.head))
        throw std::invalid_argument("predict_regression: not a regression model");
    const double sigma_sq = sigma_sq_override > 0.0
                                ? sigma_sq_override
                                : (model.head == HeadKind::MapRegression ? model.map_sigma_obs_sq
                                                                         : model.sigma_obs_sq());
    ForwardMessage msg = compute_forward_message(model.backbone, model.heads[0], x);
    RegressionPredictive pred;
    pred.mean = msg.mu_f;
    for (std::size_t i = 0; i < pred.mean.size(); ++i) pred.mean[i] += target_mean;
    pred.variance = msg.v;
    for (std::size_t i = 0; i < pred.variance.size(); ++i) pred.variance[i] += sigma_sq;
    return pred;
}

ClassPredictive predict_class(const ModelState& model, const Matrix& x) {
    switch (model.head) {
        case HeadKind::Binary:
            return predictive_binary(head_messages(model, x)[0], model.c);
        case HeadKind::Ova:
            return predictive_ova(head_messages(model, x), model.c);
        case HeadKind::Ordinal:
            return predictive_ordinal(head_messages(model, x)[0], model.thresholds, model.c);
        case HeadKind::MapClass: {
            auto msgs = head_messages(model, x);
            if (msgs.size() == 1) return predictive_binary(msgs[0], model.c);
            return predictive_ova(msgs, model.c);
        }
        default:
            throw std::invalid_argument("predict_class: not a classification model");
    }
}

double eval_nll(const ModelState& model, const Matrix& x, const Matrix& y) {
    if (is_regression_head(model.head)) {
        return gaussian_nll(predict_regression(model, x, 0.0), y);
    }
    std::vector<int> labels(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) labels[i] = static_cast<int>(y[i]);
    return class_nll(predict_class(model, x), labels);
}

double mean_squared_error_value(const ModelState& model, const Matrix& x, const Matrix& y) {
    ForwardMessage msg = compute_forward_message(model.backbone, model.heads[0], x);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - msg.mu_f[i];
        acc += r * r;
    }
    return acc / static_cast<double>(y.size());
}

TrainResult train(const TrainConfig& config, const FoldedData& data) {
    config.validate();
    check_compatibility(config, data);
    ModelState model = init_model(config, data.x_train.cols(), data.num_classes, data.y_train);

    if (config.fs && config.head == HeadKind::Regression) {
        // warm phase: point-estimate fit, then freeze sigma_obs^2 at the
        // validation MSE before the main optimization
        model.head = HeadKind::MapRegression;
        run_loop(model, config, data, config.fs_warm_steps, false, nullptr);
        model.head = HeadKind::Regression;
        const double mse = mean_squared_error_value(model, data.x_val, data.y_val);
        model.log_sigma_obs_sq = Matrix::scalar(std::log(std::fmax(mse, 1e-12)));
        model.sigma_frozen = true;
    }

    TrainResult result;
    LoopResult loop = run_loop(model, config, data, config.max_steps, true, &result.trajectory);
    result.model = std::move(loop.best);
    result.best_val_nll = loop.best_val;
    result.best_step = loop.best_step;
    result.steps_run = loop.steps;

    result.oracle_test_nll = HUGE_VAL;
    for (const auto& pt : result.trajectory)
        result.oracle_test_nll = std::fmin(result.oracle_test_nll, pt.test_nll);

    if (!is_map_head(config.head)) {
        for (const auto& h : result.model.heads)
            if (h.alpha() > 1e4) result.alpha_runaway = true;
    }
    if (config.head == HeadKind::Regression) {
        const double sigma_init = std::exp(
            init_model(config, data.x_train.cols(), data.num_classes, data.y_train)
                .log_sigma_obs_sq.item());
        const double sigma_now = result.model.sigma_obs_sq();
        const double mean_v = mean_message_variance(result.model, data.x_train);
        if (sigma_now < 0.1 * sigma_init && mean_v < 0.01 * sigma_now)
            result.variance_starved = true;
    }
    return result;
}

CvResult cv_select(const TrainConfig& config, const FoldedData& data) {
    if (config.cv_grid.empty()) throw std::invalid_argument("cv_select: empty grid");
    CvResult out;
    bool have = false;
    std::string last_error = "no grid point trained";
    for (double alpha : config.cv_grid) {
        TrainConfig point = config;
        point.regime = RegimeKind::Fixed;
        point.fixed_alpha = alpha;
        try {
            TrainResult res = train(point, data);
            const bool better =
                !have || res.best_val_nll < out.result.best_val_nll ||
                (res.best_val_nll == out.result.best_val_nll && alpha > out.best_alpha);
            if (better) {
                out.best_alpha = alpha;
                out.result = std::move(res);
                have = true;
            }
        } catch (const TrainAbort& e) {
            last_error = e.what();  // a diverging grid point is skipped, not fatal
        }
    }
    if (!have) throw TrainAbort("cv_select: every grid point aborted; last: " + last_error);
    return out;
}

DeepEnsemble deep_ensemble(const TrainConfig& config, const FoldedData& data) {
    TrainConfig member_cfg = config;
    member_cfg.head =
        data.task == TaskKind::Regression ? HeadKind::MapRegression : HeadKind::MapClass;
    DeepEnsemble ens;
    for (std::size_t i = 0; i < config.ensemble_size; ++i) {
        member_cfg.seed = config.seed + i;
        TrainResult res = train(member_cfg, data);
        if (data.task == TaskKind::Regression)
            ens.member_sigma_sq.push_back(std::fmax(
                mean_squared_error_value(res.model, data.x_val, data.y_val), 1e-12));
        ens.members.push_back(std::move(res.model));
    }
    return ens;
}

RegressionPredictive DeepEnsemble::predict_regression(const Matrix& x, double target_mean) const {
    const std::size_t n = x.rows();
    const std::size_t m = members.size();
    std::vector<Matrix> means;
    means.reserve(m);
    for (const auto& member : members)
        means.push_back(compute_forward_message(member.backbone, member.heads[0], x).mu_f);
    RegressionPredictive pred;
    pred.mean = Matrix(n, 1);
    pred.variance = Matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0, second = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            mean += means[j][i];
            second += member_sigma_sq[j] + means[j][i] * means[j][i];
        }
        mean /= static_cast<double>(m);
        second /= static_cast<double>(m);
        pred.mean[i] = mean + target_mean;
        pred.variance[i] = std::fmax(second - mean * mean, 1e-12);
    }
    return pred;
}

ClassPredictive DeepEnsemble::predict_class(const Matrix& x) const {
    ClassPredictive acc;
    for (std::size_t j = 0; j < members.size(); ++j) {
        ClassPredictive p = bethe::predict_class(members[j], x);
        if (j == 0) {
            acc = std::move(p);
        } else {
            for (std::size_t k = 0; k < acc.probs.size(); ++k) acc.probs[k] += p.probs[k];
        }
    }
    for (std::size_t k = 0; k < acc.probs.size(); ++k)
        acc.probs[k] /= static_cast<double>(members.size());
    return acc;
}

double closed_form_alpha_v1(const Matrix& mu) {
    double norm_sq = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) norm_sq += mu[k] * mu[k];
    if (norm_sq == 0.0)
        throw std::domain_error("closed_form_alpha_v1: zero mean has no finite optimum");
    return static_cast<double>(mu.size()) / norm_sq;
}

}  // namespace bethe
