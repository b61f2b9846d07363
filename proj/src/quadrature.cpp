#include "bethe/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace bethe {

namespace {

// Orthonormal Hermite recurrence (weight exp(-x^2)): returns p_n(x) and
// p_{n-1}(x), from which the derivative follows as p_n' = sqrt(2n) p_{n-1}.
struct HermiteEval {
    double pn;
    double pn_1;
};

HermiteEval hermite_eval(std::size_t n, double x) {
    const double pim4 = 0.7511255444649425;  // pi^(-1/4)
    double p1 = pim4, p2 = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = x * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
    }
    return {p1, p2};
}

// Sturm count: number of eigenvalues of the Jacobi matrix (diag 0,
// off-diag b_k = sqrt(k/2)) strictly below x. Eigenvalues are the nodes.
std::size_t sturm_count(std::size_t n, double x) {
    std::size_t count = 0;
    double d = -x;
    if (d < 0.0) ++count;
    for (std::size_t k = 1; k < n; ++k) {
        const double b2 = 0.5 * static_cast<double>(k);
        if (d == 0.0) d = 1e-300;
        d = -x - b2 / d;
        if (d < 0.0) ++count;
    }
    return count;
}

}  // namespace

QuadratureRule QuadratureRule::gauss_hermite(std::size_t n) {
    if (n < 2) throw std::invalid_argument("gauss_hermite: need at least 2 nodes");
    QuadratureRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);

    const double bound = std::sqrt(2.0 * static_cast<double>(n) + 1.0) + 1.0;
    const std::size_t half = n / 2;

    // Bisection on the Sturm count brackets each node individually, then a
    // few Newton steps with the orthonormal recurrence polish it. Robust for
    // arbitrary n, unlike extrapolated initial guesses.
    for (std::size_t k = 0; k < half + (n % 2); ++k) {
        const std::size_t target = n - 1 - k;  // index when sorted ascending
        double lo = 0.0, hi = bound;
        if (n % 2 == 1 && k == half) {
            rule.nodes[k] = 0.0;
        } else {
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (sturm_count(n, mid) <= target)
                    lo = mid;
                else
                    hi = mid;
            }
            double z = 0.5 * (lo + hi);
            for (int it = 0; it < 8; ++it) {
                const HermiteEval h = hermite_eval(n, z);
                const double pp = std::sqrt(2.0 * n) * h.pn_1;
                const double dz = h.pn / pp;
                z -= dz;
                if (std::fabs(dz) <= 1e-15 * std::fmax(1.0, std::fabs(z))) break;
            }
            rule.nodes[k] = z;
        }
        const HermiteEval h = hermite_eval(n, rule.nodes[k]);
        const double pp = std::sqrt(2.0 * n) * h.pn_1;
        rule.weights[k] = 2.0 / (pp * pp);
        rule.nodes[n - 1 - k] = -rule.nodes[k];
        rule.weights[n - 1 - k] = rule.weights[k];
    }
    return rule;
}

namespace {

const QuadratureRule& cached_rule(std::size_t n) {
    static std::mutex mutex;
    static std::map<std::size_t, QuadratureRule> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, QuadratureRule::gauss_hermite(n)).first;
    return it->second;
}

}  // namespace

double gauss_hermite_expectation(const std::function<double(double)>& fn, double mu, double v,
                                 std::size_t nodes) {
    if (v < 0.0) throw std::domain_error("gauss_hermite_expectation: negative variance");
    if (v == 0.0) return fn(mu);
    const QuadratureRule& rule = cached_rule(nodes);
    const double scale = std::sqrt(2.0 * v);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights[i] * fn(mu + scale * rule.nodes[i]);
    return acc / std::sqrt(M_PI);
}

}  // namespace bethe
