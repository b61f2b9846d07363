#pragma once

#include "bethe/matrix.hpp"

namespace bethe {

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Throws std::domain_error when a pivot is not strictly positive.
Matrix cholesky(const Matrix& m);

/// log det(M) from an already-computed Cholesky factor.
double logdet_from_cholesky(const Matrix& chol);

/// Inverse of an SPD matrix via its Cholesky factor.
Matrix spd_inverse(const Matrix& m);

}  // namespace bethe
