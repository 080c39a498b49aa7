#include "ssn/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>

namespace ssn {

double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double max_abs(const SparseMatrix& m) {
    double result = 0.0;
    for (Index k = 0; k < m.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(m, k); it; ++it)
            result = std::max(result, std::abs(it.value()));
    return result;
}

bool is_symmetric(const Matrix& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    return max_abs(Matrix(m - m.transpose())) <= rel_tol * max_abs(m);
}

bool is_symmetric(const SparseMatrix& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    SparseMatrix diff = m - SparseMatrix(m.transpose());
    return max_abs(diff) <= rel_tol * max_abs(m);
}

bool is_positive_definite(const Matrix& m) {
    if (m.rows() != m.cols()) return false;
    Eigen::LLT<Matrix> llt(m);
    return llt.info() == Eigen::Success;
}

bool is_positive_definite(const SparseMatrix& m) {
    if (m.rows() != m.cols()) return false;
    Eigen::SimplicialLLT<SparseMatrix> llt(m);
    return llt.info() == Eigen::Success;
}

SingularValueRange singular_value_range(const Matrix& m) {
    if (m.size() == 0) return {};
    Eigen::BDCSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    return {s.minCoeff(), s.maxCoeff()};
}

double PivotedSparseLU::min_abs_pivot() const {
    // The diagonal blocks of U live in the supernodal L storage.
    double result = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < this->cols(); ++j) {
        bool found = false;
        for (SCMatrix::InnerIterator it(m_Lstore, j); it; ++it) {
            if (it.index() == j) {
                result = std::min(result, std::abs(it.value()));
                found = true;
                break;
            }
        }
        if (!found) return 0.0;
    }
    return result;
}

}  // namespace ssn
