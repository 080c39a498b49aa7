#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <stdexcept>

namespace ssn {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Thrown when operand sizes do not match.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a factorization required by a precondition fails.
class FactorizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

double max_abs(const Matrix& m);
double max_abs(const SparseMatrix& m);

/// max |M - M^T| <= rel_tol * max |M|.
bool is_symmetric(const Matrix& m, double rel_tol = 1e-12);
bool is_symmetric(const SparseMatrix& m, double rel_tol = 1e-12);

/// Positive definiteness via attempted Cholesky.
bool is_positive_definite(const Matrix& m);
bool is_positive_definite(const SparseMatrix& m);

/// Smallest and largest singular values of a dense matrix.
struct SingularValueRange {
    double smallest = 0.0;
    double largest = 0.0;
};
SingularValueRange singular_value_range(const Matrix& m);

/// Sparse LU with access to the diagonal of U, used for rank-deficiency
/// detection against a pivot threshold.
class PivotedSparseLU : public Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> {
public:
    double min_abs_pivot() const;
};

}  // namespace ssn
