#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bethe/data.hpp"
#include "bethe/losses.hpp"
#include "bethe/metrics.hpp"
#include "bethe/model.hpp"

namespace bethe {

enum class HeadKind {
    Regression,     // Gaussian likelihood, Bethe objective
    Binary,         // single probit head
    Ova,            // K independent probit heads
    Ordinal,        // cumulative probit, shared latent
    MapRegression,  // squared-error point estimate
    MapClass,       // probit point estimate (one head for K=2, OvA heads otherwise)
};

enum class RegimeKind { Eb, Fixed, Cv };

std::string head_name(HeadKind k);
bool is_map_head(HeadKind k);
bool is_regression_head(HeadKind k);

struct TrainConfig {
    HeadKind head = HeadKind::Regression;
    Variant variant = Variant::V1;
    int depth = 1;  // 0 = identity features (linear model)
    std::size_t width = 50;
    double lr = 0.03;
    std::size_t max_steps = 5000;
    std::size_t patience = 50;
    double min_improvement = 1e-6;
    RegimeKind regime = RegimeKind::Eb;
    double fixed_alpha = 1.0;
    std::vector<double> cv_grid = {0.01, 0.1, 1.0, 10.0};
    bool fs = false;  // freeze sigma_obs^2 to the warm-phase validation MSE
    std::size_t fs_warm_steps = 500;
    double lambda_bb = 0.01;
    double lambda_ll = 0.1;
    double c = 1.0;
    double epsilon = 1e-4;
    double map_sigma_obs_sq = 1.0;
    std::uint64_t seed = 5;
    std::size_t ensemble_size = 5;

    void validate() const;
};

/// Everything trainable plus the fixed structure around it.
struct ModelState {
    HeadKind head = HeadKind::Regression;
    Backbone backbone;
    std::vector<LastLayerPosterior> heads;
    Matrix log_sigma_obs_sq;  // 1 x 1, regression family
    OrdinalThresholds thresholds;
    std::size_t num_classes = 0;
    double c = 1.0;
    double epsilon = 1e-4;
    double lambda_bb = 0.01;
    double lambda_ll = 0.1;
    double map_sigma_obs_sq = 1.0;
    bool sigma_frozen = false;

    double sigma_obs_sq() const;
    /// Geometric mean of the head prior precisions.
    double alpha_summary() const;

    std::vector<std::pair<std::string, Matrix*>> named_state();
    void save_checkpoint(const std::string& path);
    void load_checkpoint(const std::string& path);
};

ModelState init_model(const TrainConfig& config, std::size_t input_dim, std::size_t num_classes,
                      const Matrix& y_train);

/// First/second moment Adam state over a flat list of parameter matrices.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t t = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;

    void init(const std::vector<Matrix*>& params);
};

/// One bias-corrected Adam update, in place.
void adam_step(AdamState& state, const std::vector<Matrix*>& params,
               const std::vector<const Matrix*>& grads, double lr);

struct TrajectoryPoint {
    std::size_t step = 0;
    double train_total = 0.0;
    double train_prior = 0.0;
    double train_data = 0.0;
    double val_nll = 0.0;
    double test_nll = 0.0;
    double alpha = 0.0;
    double sigma_obs_sq = 0.0;
};

using Trajectory = std::vector<TrajectoryPoint>;

/// Raised when the loss or a gradient goes non-finite; the message carries
/// the diagnostic state (alpha, sigma_obs^2, message-variance statistics).
struct TrainAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    ModelState model;  // best-validation checkpoint
    Trajectory trajectory;
    double best_val_nll = 0.0;
    std::size_t best_step = 0;
    double oracle_test_nll = 0.0;  // minimum test NLL along the trajectory
    std::size_t steps_run = 0;
    bool alpha_runaway = false;     // any head alpha > 1e4 at the checkpoint
    bool variance_starved = false;  // sigma_obs^2 collapsed while v stayed tiny
};

/// Full-batch Adam with per-step validation-NLL early stopping (patience 50,
/// improvement threshold 1e-6); returns the best-validation checkpoint.
TrainResult train(const TrainConfig& config, const FoldedData& data);

struct CvResult {
    double best_alpha = 0.0;
    TrainResult result;
};

/// One fixed-alpha run per grid point, selected by validation NLL; grid
/// points that abort are skipped; ties go to the larger alpha.
CvResult cv_select(const TrainConfig& config, const FoldedData& data);

struct DeepEnsemble {
    std::vector<ModelState> members;
    std::vector<double> member_sigma_sq;  // regression: per-member validation MSE

    RegressionPredictive predict_regression(const Matrix& x, double target_mean) const;
    ClassPredictive predict_class(const Matrix& x) const;
};

/// M point-estimate models from consecutive seeds on the same folds;
/// moment-matched Gaussian mixture for regression, averaged probabilities
/// for classification.
DeepEnsemble deep_ensemble(const TrainConfig& config, const FoldedData& data);

double closed_form_alpha_v1(const Matrix& mu);

/// The set of matrices the optimizer updates for this configuration, in the
/// canonical registration order.
std::vector<std::pair<std::string, Matrix*>> trainable_parameters(ModelState& model,
                                                                  const TrainConfig& config);

/// The configured objective built on a fresh tape over the given batch.
/// param_vars aligns with trainable_parameters().
struct BuiltLoss {
    Tape tape;
    std::vector<Var> param_vars;
    LossTerms terms;
};

BuiltLoss build_training_loss(const ModelState& model, const TrainConfig& config, const Matrix& x,
                              const Matrix& y);

/// Per-head forward messages at the given inputs.
std::vector<ForwardMessage> head_messages(const ModelState& model, const Matrix& x);

RegressionPredictive predict_regression(const ModelState& model, const Matrix& x,
                                        double target_mean, double sigma_sq_override = -1.0);
ClassPredictive predict_class(const ModelState& model, const Matrix& x);

/// Validation/test NLL in the model's own metric (mean Gaussian NLL or mean
/// class NLL), evaluated in centered target space for regression.
double eval_nll(const ModelState& model, const Matrix& x, const Matrix& y);

double mean_squared_error_value(const ModelState& model, const Matrix& x, const Matrix& y);

}  // namespace bethe
