#include "bethe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bethe/special_functions.hpp"

namespace bethe {

namespace {

constexpr double kProbFloor = 1e-300;

void check_lengths(std::size_t n, std::size_t m, const char* what) {
    if (n != m) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

// Continued fraction for the incomplete beta function (Lentz's method).
double betacf(double a, double b, double x) {
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    const double tiny = 1e-300;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw std::domain_error("incomplete_beta: x outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double gaussian_nll(const RegressionPredictive& pred, const Matrix& y) {
    check_lengths(pred.mean.size(), y.size(), "gaussian_nll");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        acc += sf::gauss_conv_nll(y[i], pred.mean[i], pred.variance[i]);
    return acc / static_cast<double>(y.size());
}

double rmse(const RegressionPredictive& pred, const Matrix& y) {
    check_lengths(pred.mean.size(), y.size(), "rmse");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] - pred.mean[i];
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(y.size()));
}

double calib_err(const RegressionPredictive& pred, const Matrix& y) {
    check_lengths(pred.mean.size(), y.size(), "calib_err");
    const std::size_t n = y.size();
    double acc = 0.0;
    for (int level = 1; level <= 19; ++level) {
        const double nominal = 0.05 * level;
        const double z = sf::ndtri(0.5 * (1.0 + nominal));
        std::size_t covered = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double half_width = z * std::sqrt(pred.variance[i]);
            if (std::fabs(y[i] - pred.mean[i]) <= half_width) ++covered;
        }
        acc += std::fabs(static_cast<double>(covered) / static_cast<double>(n) - nominal);
    }
    return acc / 19.0;
}

double accuracy(const ClassPredictive& pred, const std::vector<int>& labels) {
    check_lengths(pred.probs.rows(), labels.size(), "accuracy");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < pred.num_classes(); ++k)
            if (pred.probs(i, k) > pred.probs(i, best)) best = k;
        if (static_cast<int>(best) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double class_nll(const ClassPredictive& pred, const std::vector<int>& labels) {
    check_lengths(pred.probs.rows(), labels.size(), "class_nll");
    double acc = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int lbl = labels[i];
        if (lbl < 0 || static_cast<std::size_t>(lbl) >= pred.num_classes())
            throw std::invalid_argument("class_nll: label out of range");
        acc -= std::log(std::fmax(pred.probs(i, static_cast<std::size_t>(lbl)), kProbFloor));
    }
    return acc / static_cast<double>(labels.size());
}

double ece(const ClassPredictive& pred, const std::vector<int>& labels, std::size_t bins) {
    check_lengths(pred.probs.rows(), labels.size(), "ece");
    const std::size_t n = labels.size();
    std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < pred.num_classes(); ++k)
            if (pred.probs(i, k) > pred.probs(i, best)) best = k;
        const double conf = pred.probs(i, best);
        auto bin = static_cast<std::size_t>(conf * static_cast<double>(bins));
        if (bin >= bins) bin = bins - 1;  // confidence exactly 1
        conf_sum[bin] += conf;
        acc_sum[bin] += (static_cast<int>(best) == labels[i]) ? 1.0 : 0.0;
        ++count[bin];
    }
    double out = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double w = static_cast<double>(count[b]) / static_cast<double>(n);
        out += w * std::fabs(acc_sum[b] / count[b] - conf_sum[b] / count[b]);
    }
    return out;
}

double paired_t_statistic(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("paired t-test needs two equal-length series, n >= 2");
    const auto n = static_cast<double>(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i] - mean;
        var += d * d;
    }
    var /= (n - 1.0);
    if (var == 0.0) return mean == 0.0 ? 0.0 : HUGE_VAL * (mean > 0.0 ? 1.0 : -1.0);
    return mean / std::sqrt(var / n);
}

double paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    const double t = paired_t_statistic(a, b);
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 1.0;
    const double dof = static_cast<double>(a.size()) - 1.0;
    return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

double paired_t_test_observed_direction(const std::vector<double>& a,
                                        const std::vector<double>& b) {
    const double t = paired_t_statistic(a, b);
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 0.5;
    return 0.5 * paired_t_test(a, b);
}

ClassPredictive predictive_binary(const ForwardMessage& msg, double c) {
    const std::size_t n = msg.mu_f.rows();
    ClassPredictive pred;
    pred.probs = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = sf::probit_gauss_conv(1.0, msg.mu_f[i], msg.v[i], c);
        pred.probs(i, 0) = 1.0 - p;
        pred.probs(i, 1) = p;
    }
    return pred;
}

ClassPredictive predictive_ova(const std::vector<ForwardMessage>& head_msgs, double c) {
    if (head_msgs.size() < 2) throw std::invalid_argument("predictive_ova: need >= 2 heads");
    const std::size_t n = head_msgs[0].mu_f.rows();
    const std::size_t k = head_msgs.size();
    ClassPredictive pred;
    pred.probs = Matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t head = 0; head < k; ++head) {
            const double p =
                sf::probit_gauss_conv(1.0, head_msgs[head].mu_f[i], head_msgs[head].v[i], c);
            pred.probs(i, head) = p;
            total += p;
        }
        if (total <= 0.0) {
            for (std::size_t head = 0; head < k; ++head)
                pred.probs(i, head) = 1.0 / static_cast<double>(k);
        } else {
            for (std::size_t head = 0; head < k; ++head) pred.probs(i, head) /= total;
        }
    }
    return pred;
}

ClassPredictive predictive_ordinal(const ForwardMessage& msg, const OrdinalThresholds& thresholds,
                                   double c) {
    const std::size_t n = msg.mu_f.rows();
    const std::size_t k = thresholds.num_classes();
    const std::vector<double> taus = thresholds.thresholds();
    ClassPredictive pred;
    pred.probs = Matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const double denom = std::sqrt(c * c + msg.v[i]);
        double lower_cdf = 0.0;
        for (std::size_t cls = 0; cls < k; ++cls) {
            const double upper_cdf =
                cls + 1 < k ? sf::ndtr((taus[cls] - msg.mu_f[i]) / denom) : 1.0;
            pred.probs(i, cls) = std::fmax(upper_cdf - lower_cdf, 0.0);
            lower_cdf = upper_cdf;
        }
    }
    return pred;
}

}  // namespace bethe
