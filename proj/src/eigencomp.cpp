#include "ssn/eigencomp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ssn::eigencomp {

namespace {

struct SymmetricEigen {
    Vector values;
    Matrix vectors;
};

SymmetricEigen eigen_symmetric(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
    if (solver.info() != Eigen::Success) throw std::runtime_error("symmetric eigensolver failed");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

double pair_scale(const SymmetricPair& pair) {
    const double s = std::max(max_abs(pair.F), max_abs(pair.G));
    return s > 0.0 ? s : 1.0;
}

void validate(const SymmetricPair& pair) {
    if (pair.F.rows() != pair.F.cols() || pair.G.rows() != pair.G.cols())
        throw std::invalid_argument("eigencomp: matrices must be square");
    if (pair.F.rows() != pair.G.rows()) throw std::invalid_argument("eigencomp: size mismatch");
    if (!(pair.tol >= 0.0)) throw std::invalid_argument("eigencomp: tol must be nonnegative");
    const double eps = pair.tol * pair_scale(pair);
    if (max_abs(Matrix(pair.F - pair.F.transpose())) > eps ||
        max_abs(Matrix(pair.G - pair.G.transpose())) > eps)
        throw std::invalid_argument("eigencomp: matrices must be symmetric");
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Joint diagonalization of commuting symmetric matrices: eigendecompose F,
// then diagonalize G inside every eigenspace (cluster) of F.
Matrix joint_basis(const Matrix& F, const Matrix& G, double cluster_tol) {
    const SymmetricEigen fe = eigen_symmetric(F);
    const Index n = F.rows();
    Matrix basis(n, n);
    Index start = 0;
    while (start < n) {
        Index end = start + 1;
        while (end < n && fe.values(end) - fe.values(end - 1) <= cluster_tol) ++end;
        const Index width = end - start;
        const Matrix Q = fe.vectors.middleCols(start, width);
        if (width == 1) {
            basis.col(start) = Q.col(0);
        } else {
            const SymmetricEigen ge = eigen_symmetric(symmetrized(Q.transpose() * G * Q));
            basis.middleCols(start, width) = Q * ge.vectors;
        }
        start = end;
    }
    return basis;
}

}  // namespace

std::string_view to_string(FailureReason reason) {
    switch (reason) {
        case FailureReason::F_not_neg_semidef: return "F_not_neg_semidef";
        case FailureReason::G_not_pos_semidef: return "G_not_pos_semidef";
        case FailureReason::no_common_basis: return "no_common_basis";
        case FailureReason::singular_sum_condition_violated: return "singular_sum_condition_violated";
    }
    return "unknown";
}

EigencompCertificate check_pair(const SymmetricPair& pair, const CheckOptions& options) {
    validate(pair);
    const Matrix F = symmetrized(pair.F);
    const Matrix G = symmetrized(pair.G);
    const double scale = pair_scale(pair);
    const double zero_tol = pair.tol * scale;

    EigencompCertificate cert;
    cert.eigF = eigen_symmetric(F).values;
    cert.eigG = eigen_symmetric(G).values;
    cert.F_singular = cert.eigF.cwiseAbs().minCoeff() <= zero_tol;
    cert.G_singular = cert.eigG.cwiseAbs().minCoeff() <= zero_tol;

    if (cert.eigF.maxCoeff() > zero_tol) {
        cert.failure_reason = FailureReason::F_not_neg_semidef;
        return cert;
    }
    if (cert.eigG.minCoeff() < -zero_tol) {
        cert.failure_reason = FailureReason::G_not_pos_semidef;
        return cert;
    }

    // Commuting is necessary for a common eigenbasis.
    const double product_scale = std::max(max_abs(F), 1e-300) * std::max(max_abs(G), 1e-300);
    if (max_abs(Matrix(F * G - G * F)) > pair.tol * product_scale) {
        cert.failure_reason = FailureReason::no_common_basis;
        return cert;
    }

    const Matrix S = joint_basis(F, G, zero_tol);
    const Matrix DF = S.transpose() * F * S;
    const Matrix DG = S.transpose() * G * S;
    const Vector dF = DF.diagonal();
    const Vector dG = DG.diagonal();
    const double off_F = max_abs(Matrix(DF - Matrix(dF.asDiagonal())));
    const double off_G = max_abs(Matrix(DG - Matrix(dG.asDiagonal())));
    if (off_F > 100.0 * zero_tol || off_G > 100.0 * zero_tol) {
        cert.failure_reason = FailureReason::no_common_basis;
        return cert;
    }

    cert.shared_basis = S;
    cert.eigF = dF;
    cert.eigG = dG;

    if (options.enforce_kernel_condition && cert.F_singular && cert.G_singular) {
        // Per column exactly one of the paired eigenvalues vanishes.
        for (Index j = 0; j < dF.size(); ++j) {
            const bool f_zero = std::abs(dF(j)) <= zero_tol;
            const bool g_zero = std::abs(dG(j)) <= zero_tol;
            if (f_zero == g_zero) {
                cert.failure_reason = FailureReason::singular_sum_condition_violated;
                return cert;
            }
        }
    }

    cert.is_eigencomplementary = true;
    return cert;
}

OrderedCertificate check_pair_any_order(const SymmetricPair& pair) {
    OrderedCertificate first{check_pair(pair), false};
    if (first.certificate.is_eigencomplementary) return first;
    OrderedCertificate second{check_pair({pair.G, pair.F, pair.tol}), true};
    return second.certificate.is_eigencomplementary ? second : first;
}

ProductVerdict neg_semidef_product(const SymmetricPair& pair) {
    const EigencompCertificate cert = check_pair(pair);
    if (!cert.is_eigencomplementary)
        throw PreconditionError("neg_semidef_product: pair is not eigencomplementary");

    ProductVerdict verdict;
    if (!cert.F_singular) {
        verdict.form = ProductVerdict::Form::F_inverse_G;
        verdict.product = Eigen::FullPivLU<Matrix>(pair.F).solve(pair.G);
    } else if (!cert.G_singular) {
        verdict.form = ProductVerdict::Form::F_G_inverse;
        verdict.product = Eigen::FullPivLU<Matrix>(pair.G.transpose()).solve(pair.F.transpose()).transpose();
    } else {
        throw LemmaInapplicable("neg_semidef_product: lemma inapplicable, F and G are both singular");
    }
    // x^T M x depends only on the symmetric part of M.
    verdict.max_eigenvalue = eigen_symmetric(symmetrized(verdict.product)).values.maxCoeff();
    const double tol = pair.tol * std::max(1.0, max_abs(verdict.product));
    verdict.negative_semidefinite = verdict.max_eigenvalue <= tol;
    return verdict;
}

double singular_orthogonality_witness(const SymmetricPair& pair, const Vector& u, const Vector& w) {
    if (u.size() != pair.F.rows() || w.size() != pair.F.rows())
        throw std::invalid_argument("singular_orthogonality_witness: vector length mismatch");
    const EigencompCertificate cert = check_pair(pair);
    if (!cert.is_eigencomplementary || !cert.F_singular || !cert.G_singular)
        throw PreconditionError("singular_orthogonality_witness: pair must be singular and eigencomplementary");
    const double scale = pair_scale(pair);
    const double mismatch = (pair.G * u - pair.F * w).norm();
    if (mismatch > pair.tol * scale * std::max({1.0, u.norm(), w.norm()}))
        throw PreconditionError("singular_orthogonality_witness: G u != F w");
    return u.dot(w);
}

}  // namespace ssn::eigencomp
