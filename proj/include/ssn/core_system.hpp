#pragma once

// Block-structured nonsmooth systems
//
//   F(a, b, c) = ( [A B 0; B^T C D] (a, b, c) + (l, 0) ;  S_1(b_1, c_1) ; ... ; S_N(b_N, c_N) )
//
// with A, C symmetric positive definite, D diagonal and constant on each
// length-L node block, and semismooth node functions S_i that depend only on
// the i-th components of b and c.

#include "ssn/linalg.hpp"

#include <functional>
#include <vector>

namespace ssn {

/// Sizes of the unknown blocks. In mechanics mode d is the spatial dimension
/// and the displacement block holds d*M entries; in abstract mode (d == 0)
/// the displacement size and node length L are free.
struct Dimensions {
    int d = 0;
    Index M = 0;
    Index N = 0;
    Index L = 0;

    /// d in {2, 3}; L = (d - 1)(d + 2) / 2.
    static Dimensions mechanics(int d, Index M, Index N);
    /// Arbitrary displacement size for algebraic test systems.
    static Dimensions abstract(Index displacement_size, Index L, Index N);

    Index displacement_size() const { return d == 0 ? M : d * M; }
    Index block_size() const { return L * N; }
    /// K = dM + LN.
    Index affine_size() const { return displacement_size() + block_size(); }
    Index residual_size() const { return affine_size() + block_size(); }
    Index state_size() const { return displacement_size() + 2 * block_size(); }

    bool operator==(const Dimensions&) const = default;
};

/// Deviatoric dimension for spatial dimension d.
Index deviatoric_dimension(int d);

struct BlockSystem {
    SparseMatrix A;  ///< dM x dM, symmetric positive definite
    SparseMatrix B;  ///< dM x LN
    SparseMatrix C;  ///< LN x LN, symmetric positive definite
    Vector D;        ///< diagonal of D (length LN), constant per node block
    Vector l;        ///< dM
    Dimensions dims;

    /// Sizes, symmetry of A and C, and positivity/blockwise constancy of D.
    /// Throws DimensionError or std::invalid_argument.
    void validate() const;

    /// D_i for node i.
    double node_weight(Index i) const { return D(i * dims.L); }

    /// E = [A B; B^T C].
    SparseMatrix E() const;
};

struct DefinitenessReport {
    bool A = false;
    bool C = false;
    bool E = false;
    bool all() const { return A && C && E; }
};
DefinitenessReport check_definiteness(const BlockSystem& sys);

struct StateVector {
    Vector a;
    Vector b;
    Vector c;

    static StateVector zeros(const Dimensions& dims);
    static StateVector from_stacked(const Dimensions& dims, const Vector& x);
    Vector stacked() const;

    auto b_block(Index i, Index L) { return b.segment(i * L, L); }
    auto c_block(Index i, Index L) { return c.segment(i * L, L); }
    auto b_block(Index i, Index L) const { return b.segment(i * L, L); }
    auto c_block(Index i, Index L) const { return c.segment(i * L, L); }

    void check(const Dimensions& dims) const;
};

/// Convex combination weight tau in [0, 1] selecting the Clarke element at
/// points where a node function is not differentiable.
struct KinkPolicy {
    double tau = 1.0;

    static KinkPolicy plastic() { return {1.0}; }
    static KinkPolicy elastic() { return {0.0}; }
    void validate() const;
};

/// Clarke subgradient of one node function: dS_i/db_i = X_i, dS_i/dc_i = Y_i.
struct BlockJacobian {
    Matrix X;
    Matrix Y;
};

/// The family S_1..S_N. Each member may only look at its own (b_i, c_i).
class BlockFamily {
public:
    virtual ~BlockFamily() = default;

    virtual Index block_length() const = 0;
    virtual Index block_count() const = 0;
    virtual Vector evaluate(Index i, const Vector& b_i, const Vector& c_i) const = 0;
    virtual BlockJacobian subgradient(Index i, const Vector& b_i, const Vector& c_i,
                                      const KinkPolicy& kink) const = 0;
};

/// Family defined by callables shared by every node.
class FunctionBlockFamily final : public BlockFamily {
public:
    using EvalFn = std::function<Vector(Index, const Vector&, const Vector&)>;
    using JacFn = std::function<BlockJacobian(Index, const Vector&, const Vector&, const KinkPolicy&)>;

    FunctionBlockFamily(Index L, Index N, EvalFn eval, JacFn jac)
        : L_(L), N_(N), eval_(std::move(eval)), jac_(std::move(jac)) {}

    Index block_length() const override { return L_; }
    Index block_count() const override { return N_; }
    Vector evaluate(Index i, const Vector& b_i, const Vector& c_i) const override {
        return eval_(i, b_i, c_i);
    }
    BlockJacobian subgradient(Index i, const Vector& b_i, const Vector& c_i,
                              const KinkPolicy& kink) const override {
        return jac_(i, b_i, c_i, kink);
    }

    /// S_i = 0 for every node.
    static FunctionBlockFamily zero(Index L, Index N);
    /// S_i(b_i, c_i) = P b_i + Q c_i.
    static FunctionBlockFamily linear(Index L, Index N, Matrix P, Matrix Q);

private:
    Index L_;
    Index N_;
    EvalFn eval_;
    JacFn jac_;
};

/// One element H of the Clarke subdifferential, stored as the system plus the
/// node blocks of X and Y. The referenced system must outlive this object.
class SubgradientElement {
public:
    SubgradientElement(const BlockSystem& system, std::vector<Matrix> X_blocks,
                       std::vector<Matrix> Y_blocks);

    const BlockSystem& system() const { return *system_; }
    const std::vector<Matrix>& X_blocks() const { return X_; }
    const std::vector<Matrix>& Y_blocks() const { return Y_; }

    SparseMatrix X() const;
    SparseMatrix Y() const;

    /// H = [A B 0; B^T C D; 0 X Y].
    SparseMatrix H() const;

private:
    const BlockSystem* system_;
    std::vector<Matrix> X_;
    std::vector<Matrix> Y_;
};

/// [A B 0; B^T C D] (a, b, c) + (l, 0).
Vector eval_affine(const BlockSystem& sys, const StateVector& x);

/// (eval_affine, S_1(b_1, c_1), ..., S_N(b_N, c_N)).
Vector eval_F(const BlockSystem& sys, const BlockFamily& blocks, const StateVector& x);

SubgradientElement assemble_H(const BlockSystem& sys, const BlockFamily& blocks,
                              const StateVector& x, const KinkPolicy& kink = {});

/// S_E = C - B^T A^{-1} B (dense). Throws FactorizationError when A is not
/// positive definite.
Matrix schur_E(const BlockSystem& sys);

/// S_H = Y - X S_E^{-1} D (dense).
Matrix schur_H(const SubgradientElement& sub);
Matrix schur_H(const SubgradientElement& sub, const Matrix& S_E);

/// Solves H z = r by eliminating (a, b) through E and reducing to S_H.
/// Dense, diagnostic only.
Vector solve_by_schur(const SubgradientElement& sub, const Vector& r);

}  // namespace ssn
