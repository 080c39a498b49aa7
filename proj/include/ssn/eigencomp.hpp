#pragma once

// Certificates for eigencomplementary pairs (F, G) of symmetric matrices:
// F negative semidefinite, G positive semidefinite, a common orthogonal
// eigenbasis, and, when both are singular, the span of the eigenvectors of F
// with negative eigenvalues equal to the kernel of G.

#include "ssn/linalg.hpp"

#include <optional>
#include <string_view>

namespace ssn::eigencomp {

/// tol is relative to the largest entry of F and G.
struct SymmetricPair {
    Matrix F;
    Matrix G;
    double tol = 1e-9;
};

enum class FailureReason {
    F_not_neg_semidef,
    G_not_pos_semidef,
    no_common_basis,
    singular_sum_condition_violated,
};

std::string_view to_string(FailureReason reason);

struct EigencompCertificate {
    bool is_eigencomplementary = false;
    /// Columns are the common orthonormal eigenvectors (set when certified).
    Matrix shared_basis;
    /// Eigenvalues of F and G paired per column of shared_basis. When
    /// certification fails before a joint basis is found these hold the
    /// separately computed spectra.
    Vector eigF;
    Vector eigG;
    std::optional<FailureReason> failure_reason;
    bool F_singular = false;
    bool G_singular = false;
};

struct CheckOptions {
    /// Disabling the kernel condition reduces the check to the first three
    /// conditions; only useful to show what that condition rejects.
    bool enforce_kernel_condition = true;
};

class LemmaInapplicable : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Throws std::invalid_argument on non-square, mismatched or non-symmetric
/// input and std::runtime_error if an eigensolver fails.
EigencompCertificate check_pair(const SymmetricPair& pair, const CheckOptions& options = {});

struct OrderedCertificate {
    EigencompCertificate certificate;
    /// True when (G, F) was certified instead of (F, G).
    bool swapped = false;
};

/// Tries (F, G), then (G, F).
OrderedCertificate check_pair_any_order(const SymmetricPair& pair);

struct ProductVerdict {
    enum class Form { F_inverse_G, F_G_inverse };
    Form form = Form::F_inverse_G;
    Matrix product;
    /// Largest eigenvalue of the symmetric part of the product.
    double max_eigenvalue = 0.0;
    bool negative_semidefinite = false;
};

/// F^{-1} G if F is regular, otherwise F G^{-1} if G is regular; both are
/// negative semidefinite for eigencomplementary pairs. Throws
/// LemmaInapplicable if neither is regular and PreconditionError if the pair
/// is not eigencomplementary.
ProductVerdict neg_semidef_product(const SymmetricPair& pair);

/// u^T w for a singular eigencomplementary pair with G u = F w; that product
/// vanishes. Throws PreconditionError when the pair is not singular and
/// eigencomplementary or G u != F w.
double singular_orthogonality_witness(const SymmetricPair& pair, const Vector& u, const Vector& w);

}  // namespace ssn::eigencomp
