#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace bethe {

/// Gauss-Hermite abscissae and weights for the weight function exp(-x^2).
/// Exact for polynomials of degree < 2n; weights sum to sqrt(pi).
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    static QuadratureRule gauss_hermite(std::size_t n);
};

/// E_{N(mu, v)}[fn] by Gauss-Hermite quadrature. Test/diagnostic oracle,
/// never on a training path.
double gauss_hermite_expectation(const std::function<double(double)>& fn, double mu, double v,
                                 std::size_t nodes = 128);

}  // namespace bethe
