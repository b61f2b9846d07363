#pragma once

#include <vector>

#include "bethe/losses.hpp"
#include "bethe/matrix.hpp"
#include "bethe/model.hpp"

namespace bethe {

/// Gaussian predictive in original target units.
struct RegressionPredictive {
    Matrix mean;      // N x 1
    Matrix variance;  // N x 1, sigma_obs^2 + v_n
};

/// Normalized class probabilities, one row per sample.
struct ClassPredictive {
    Matrix probs;  // N x K
    std::size_t num_classes() const { return probs.cols(); }
};

/// Mean Gaussian NLL, including the 0.5 log 2pi constant.
double gaussian_nll(const RegressionPredictive& pred, const Matrix& y);

/// Root mean squared error in original units.
double rmse(const RegressionPredictive& pred, const Matrix& y);

/// Mean absolute deviation of empirical central-interval coverage from the
/// nominal level, averaged over the 19 levels 0.05 .. 0.95.
double calib_err(const RegressionPredictive& pred, const Matrix& y);

double accuracy(const ClassPredictive& pred, const std::vector<int>& labels);

/// Mean negative log probability assigned to the realized class, floored at
/// 1e-300 before the log.
double class_nll(const ClassPredictive& pred, const std::vector<int>& labels);

/// Expected calibration error: 10 equal-width bins on the max-probability
/// confidence, |accuracy - confidence| weighted by bin population.
double ece(const ClassPredictive& pred, const std::vector<int>& labels, std::size_t bins = 10);

/// Paired t statistic of (a - b), paired by index.
double paired_t_statistic(const std::vector<double>& a, const std::vector<double>& b);

/// Two-sided p-value of the paired t-test. Degenerate zero-variance
/// differences give p = 1 when the means agree and p = 0 otherwise.
double paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// One-sided p-value in the direction of the observed mean difference.
double paired_t_test_observed_direction(const std::vector<double>& a,
                                        const std::vector<double>& b);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Closed-form predictives: one deterministic forward pass each.
ClassPredictive predictive_binary(const ForwardMessage& msg, double c);
ClassPredictive predictive_ova(const std::vector<ForwardMessage>& head_msgs, double c);
ClassPredictive predictive_ordinal(const ForwardMessage& msg, const OrdinalThresholds& thresholds,
                                   double c);

}  // namespace bethe
