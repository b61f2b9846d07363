#include "bethe/linalg.hpp"

#include <cmath>

namespace bethe {

Matrix cholesky(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("cholesky: matrix not square");
    const std::size_t n = m.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) throw std::domain_error("cholesky: matrix not positive definite");
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

double logdet_from_cholesky(const Matrix& chol) {
    double s = 0.0;
    for (std::size_t i = 0; i < chol.rows(); ++i) s += std::log(chol(i, i));
    return 2.0 * s;
}

Matrix spd_inverse(const Matrix& m) {
    const Matrix l = cholesky(m);
    const std::size_t n = m.rows();
    // Invert L by forward substitution on unit columns, then M^-1 = L^-T L^-1.
    Matrix linv(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = c; i < n; ++i) {
            double s = (i == c) ? 1.0 : 0.0;
            for (std::size_t k = c; k < i; ++k) s -= l(i, k) * linv(k, c);
            linv(i, c) = s / l(i, i);
        }
    }
    Matrix inv(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t k = i; k < n; ++k) s += linv(k, i) * linv(k, j);
            inv(i, j) = s;
            inv(j, i) = s;
        }
    return inv;
}

}  // namespace bethe
