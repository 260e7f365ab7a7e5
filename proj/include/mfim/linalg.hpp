#pragma once

#include <string>

#include <Eigen/Dense>
#include <lapacke.h>

#include "mfim/error.hpp"

namespace mfim {

/// Eigen-decomposition of a real symmetric matrix, ascending eigenvalues.
/// Uses LAPACK's divide-and-conquer driver; the input is consumed.
inline void symmetric_eigensolve(Eigen::MatrixXd& a_to_vectors, Eigen::VectorXd& values) {
    const lapack_int n = static_cast<lapack_int>(a_to_vectors.rows());
    if (a_to_vectors.cols() != n) throw InvalidArgument("eigensolver needs a square matrix");
    values.resize(n);
    const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a_to_vectors.data(), n, values.data());
    if (info != 0) throw std::runtime_error("dsyevd failed with info = " + std::to_string(info));
}

}  // namespace mfim
