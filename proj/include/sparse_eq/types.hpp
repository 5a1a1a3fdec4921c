#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sparse_eq {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised when a factorization or least-squares step meets a (numerically)
/// singular pivot. `index()` names the offending pivot, eigenvalue or column.
class NumericDegeneracy : public std::runtime_error {
public:
    NumericDegeneracy(const std::string& what, Index index)
        : std::runtime_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

    Index index() const noexcept { return index_; }

private:
    Index index_;
};

/// Relative Frobenius error ||a - b||_F / ||b||_F.
inline double relative_error(const CMatrix& a, const CMatrix& b) {
    const double ref = b.norm();
    return ref == 0.0 ? (a - b).norm() : (a - b).norm() / ref;
}

inline double relative_error(const CVector& a, const CVector& b) {
    const double ref = b.norm();
    return ref == 0.0 ? (a - b).norm() : (a - b).norm() / ref;
}

/// Replaces A by (A + A^H)/2; the result is Hermitian to the last bit.
inline void make_hermitian(CMatrix& a) {
    CMatrix h = (a + a.adjoint()) * 0.5;
    a = std::move(h);
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

}  // namespace sparse_eq
