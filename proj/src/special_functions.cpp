#include "bethe/special_functions.hpp"

#include <cmath>
#include <stdexcept>

namespace bethe::sf {

double npdf(double x) { return std::exp(-0.5 * x * x - kHalfLog2Pi); }

double ndtr(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

namespace {

// Asymptotic tail sum S(x) in ndtr(x) = npdf(x)/(-x) * S(x) for x << 0,
// Abramowitz & Stegun 26.2.12. Truncated where terms stop shrinking.
double tail_series(double x) {
    const double inv_x2 = 1.0 / (x * x);
    double term = 1.0, sum = 1.0, prev = HUGE_VAL;
    for (int k = 1; k <= 16; ++k) {
        term *= -(2.0 * k - 1.0) * inv_x2;
        if (std::fabs(term) >= prev) break;
        sum += term;
        prev = std::fabs(term);
    }
    return sum;
}

}  // namespace

double log_ndtr(double x) {
    if (x > 5.0) {
        // ndtr(-x) is tiny; log1p keeps full relative accuracy near 1.
        return std::log1p(-0.5 * std::erfc(x * M_SQRT1_2));
    }
    if (x > -37.0) {
        // erfc is accurate here and does not underflow until ~-37.5.
        return std::log(0.5 * std::erfc(-x * M_SQRT1_2));
    }
    // Deep tail: erfc underflows, switch to the asymptotic expansion.
    return -0.5 * x * x - kHalfLog2Pi - std::log(-x) + std::log(tail_series(x));
}

double mills_ratio(double x) {
    return std::exp(-0.5 * x * x - kHalfLog2Pi - log_ndtr(x));
}

double probit_gauss_conv(double y, double mu_f, double v_f, double c) {
    if (v_f < 0.0) throw std::domain_error("probit_gauss_conv: negative message variance");
    if (!(c > 0.0)) throw std::domain_error("probit_gauss_conv: probit scale must be positive");
    return ndtr(y * mu_f / std::sqrt(c * c + v_f));
}

double gauss_conv_nll(double y, double mu_f, double V) {
    if (!(V > 0.0)) throw std::domain_error("gauss_conv_nll: total variance must be positive");
    const double r = y - mu_f;
    return r * r / (2.0 * V) + 0.5 * std::log(V) + kHalfLog2Pi;
}

double ndtri(double p) {
    // Wichura, Algorithm AS241 (1988), the PPND16 double-precision branch.
    if (p <= 0.0 || p >= 1.0)
        throw std::domain_error("ndtri: p must lie strictly inside (0, 1)");
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double z;
    if (r <= 5.0) {
        r -= 1.6;
        z = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        z = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -z : z;
}

double softplus(double x) {
    return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace bethe::sf
