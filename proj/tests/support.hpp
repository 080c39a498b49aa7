#pragma once

// Helpers shared by the unit tests and the acceptance suite.

#include "ssn/core_system.hpp"
#include "ssn/eigencomp.hpp"

#include <Eigen/QR>

#include <random>
#include <vector>

namespace ssn::testing {

using Rng = std::mt19937_64;

inline Matrix random_matrix(Index rows, Index cols, Rng& rng) {
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

inline Vector random_vector(Index n, Rng& rng) { return random_matrix(n, 1, rng); }

/// Haar-ish random orthogonal matrix from a QR factorization.
inline Matrix random_orthogonal(Index n, Rng& rng) {
    Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n, rng));
    Matrix Q = qr.householderQ();
    const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < n; ++j)
        if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
    return Q;
}

inline SparseMatrix to_sparse(const Matrix& m) { return m.sparseView(0.0, 0.0); }

/// Abstract-mode system from dense blocks.
inline BlockSystem make_system(const Matrix& A, const Matrix& B, const Matrix& C, const Vector& D,
                               const Vector& l, Index L) {
    BlockSystem sys;
    sys.A = to_sparse(A);
    sys.B = to_sparse(B);
    sys.C = to_sparse(C);
    sys.D = D;
    sys.l = l;
    sys.dims = Dimensions::abstract(A.rows(), L, C.rows() / L);
    return sys;
}

/// Random system with E = [A B; B^T C] symmetric positive definite and
/// node weights D_i in [0.5, 1.5].
inline BlockSystem random_system(Index n_a, Index L, Index N, Rng& rng) {
    const Index n = n_a + L * N;
    const Matrix M = random_matrix(n, n, rng);
    const Matrix E = M.transpose() * M / static_cast<double>(n) + Matrix::Identity(n, n);
    std::uniform_real_distribution<double> unif(0.5, 1.5);
    Vector D(L * N);
    for (Index i = 0; i < N; ++i) D.segment(i * L, L).setConstant(unif(rng));
    return make_system(E.topLeftCorner(n_a, n_a), E.topRightCorner(n_a, L * N),
                       E.bottomRightCorner(L * N, L * N), D, random_vector(n_a, rng), L);
}

inline StateVector random_state(const Dimensions& dims, Rng& rng) {
    return {random_vector(dims.displacement_size(), rng), random_vector(dims.block_size(), rng),
            random_vector(dims.block_size(), rng)};
}

/// Central finite-difference Jacobian of eval_F with step h.
inline Matrix fd_jacobian(const BlockSystem& sys, const BlockFamily& blocks, const StateVector& x, double h) {
    const Vector x0 = x.stacked();
    Matrix J(sys.dims.residual_size(), x0.size());
    for (Index j = 0; j < x0.size(); ++j) {
        Vector xp = x0, xm = x0;
        xp(j) += h;
        xm(j) -= h;
        J.col(j) = (eval_F(sys, blocks, StateVector::from_stacked(sys.dims, xp)) -
                    eval_F(sys, blocks, StateVector::from_stacked(sys.dims, xm))) /
                   (2.0 * h);
    }
    return J;
}

/// Eigencomplementary pair with a shared random basis: F eigenvalues in
/// [-5, -0.5] (regular) and G eigenvalues in [0, 5].
inline eigencomp::SymmetricPair random_regular_pair(Index L, Rng& rng, Matrix* basis = nullptr) {
    std::uniform_real_distribution<double> neg(-5.0, -0.5), pos(0.0, 5.0);
    const Matrix S = random_orthogonal(L, rng);
    Vector xi(L), eta(L);
    for (Index j = 0; j < L; ++j) {
        xi(j) = neg(rng);
        eta(j) = pos(rng);
    }
    if (basis) *basis = S;
    return {S * xi.asDiagonal() * S.transpose(), S * eta.asDiagonal() * S.transpose()};
}

/// Singular eigencomplementary pair: columns in J carry (xi < 0, eta = 0),
/// the others (xi = 0, eta > 0); J and its complement are both nonempty.
struct SingularPair {
    eigencomp::SymmetricPair pair;
    Matrix basis;
    std::vector<bool> in_J;
};

inline SingularPair random_singular_pair(Index L, Rng& rng) {
    std::uniform_real_distribution<double> mag(0.5, 5.0);
    std::uniform_int_distribution<Index> split(1, L - 1);
    SingularPair out;
    out.basis = random_orthogonal(L, rng);
    const Index nJ = split(rng);
    Vector xi = Vector::Zero(L), eta = Vector::Zero(L);
    out.in_J.assign(L, false);
    for (Index j = 0; j < L; ++j) {
        if (j < nJ) {
            out.in_J[j] = true;
            xi(j) = -mag(rng);
        } else {
            eta(j) = mag(rng);
        }
    }
    const Matrix& S = out.basis;
    out.pair = {S * xi.asDiagonal() * S.transpose(), S * eta.asDiagonal() * S.transpose()};
    return out;
}

}  // namespace ssn::testing
