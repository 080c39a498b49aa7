#include "ssn/core_system.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>

namespace ssn {

namespace {

void require(bool condition, const std::string& message) {
    if (!condition) throw DimensionError(message);
}

void append_triplets(std::vector<Triplet>& out, const SparseMatrix& m, Index row0, Index col0) {
    for (Index k = 0; k < m.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(m, k); it; ++it)
            out.emplace_back(row0 + it.row(), col0 + it.col(), it.value());
}

SparseMatrix block_diagonal(const std::vector<Matrix>& blocks, Index L) {
    const Index n = static_cast<Index>(blocks.size()) * L;
    std::vector<Triplet> triplets;
    triplets.reserve(blocks.size() * L * L);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const Index offset = static_cast<Index>(i) * L;
        for (Index col = 0; col < L; ++col)
            for (Index row = 0; row < L; ++row)
                if (blocks[i](row, col) != 0.0)
                    triplets.emplace_back(offset + row, offset + col, blocks[i](row, col));
    }
    SparseMatrix result(n, n);
    result.setFromTriplets(triplets.begin(), triplets.end());
    return result;
}

}  // namespace

Index deviatoric_dimension(int d) {
    if (d != 2 && d != 3) throw std::invalid_argument("spatial dimension must be 2 or 3");
    return (d - 1) * (d + 2) / 2;
}

Dimensions Dimensions::mechanics(int d, Index M, Index N) {
    const Index L = deviatoric_dimension(d);
    if (M <= 0 || N <= 0) throw std::invalid_argument("M and N must be positive");
    return Dimensions{d, M, N, L};
}

Dimensions Dimensions::abstract(Index displacement_size, Index L, Index N) {
    if (displacement_size <= 0 || L <= 0 || N <= 0)
        throw std::invalid_argument("dimensions must be positive");
    return Dimensions{0, displacement_size, N, L};
}

void BlockSystem::validate() const {
    const Index n_a = dims.displacement_size();
    const Index n_b = dims.block_size();
    require(A.rows() == n_a && A.cols() == n_a, "A must be dM x dM");
    require(B.rows() == n_a && B.cols() == n_b, "B must be dM x LN");
    require(C.rows() == n_b && C.cols() == n_b, "C must be LN x LN");
    require(D.size() == n_b, "D must have LN entries");
    require(l.size() == n_a, "l must have dM entries");
    if (!is_symmetric(A)) throw std::invalid_argument("A is not symmetric");
    if (!is_symmetric(C)) throw std::invalid_argument("C is not symmetric");
    for (Index i = 0; i < dims.N; ++i) {
        const double Di = D(i * dims.L);
        if (!(Di > 0.0)) throw std::invalid_argument("D_i must be positive");
        for (Index k = 1; k < dims.L; ++k)
            if (D(i * dims.L + k) != Di)
                throw std::invalid_argument("D must be constant on each node block");
    }
}

SparseMatrix BlockSystem::E() const {
    const Index n_a = dims.displacement_size();
    const Index n_b = dims.block_size();
    std::vector<Triplet> triplets;
    triplets.reserve(A.nonZeros() + 2 * B.nonZeros() + C.nonZeros());
    append_triplets(triplets, A, 0, 0);
    append_triplets(triplets, B, 0, n_a);
    append_triplets(triplets, SparseMatrix(B.transpose()), n_a, 0);
    append_triplets(triplets, C, n_a, n_a);
    SparseMatrix result(n_a + n_b, n_a + n_b);
    result.setFromTriplets(triplets.begin(), triplets.end());
    return result;
}

DefinitenessReport check_definiteness(const BlockSystem& sys) {
    return {is_positive_definite(sys.A), is_positive_definite(sys.C), is_positive_definite(sys.E())};
}

StateVector StateVector::zeros(const Dimensions& dims) {
    return {Vector::Zero(dims.displacement_size()), Vector::Zero(dims.block_size()),
            Vector::Zero(dims.block_size())};
}

StateVector StateVector::from_stacked(const Dimensions& dims, const Vector& x) {
    require(x.size() == dims.state_size(), "stacked state has wrong length");
    const Index n_a = dims.displacement_size();
    const Index n_b = dims.block_size();
    return {x.head(n_a), x.segment(n_a, n_b), x.tail(n_b)};
}

Vector StateVector::stacked() const {
    Vector x(a.size() + b.size() + c.size());
    x << a, b, c;
    return x;
}

void StateVector::check(const Dimensions& dims) const {
    require(a.size() == dims.displacement_size(), "state a has wrong length");
    require(b.size() == dims.block_size(), "state b has wrong length");
    require(c.size() == dims.block_size(), "state c has wrong length");
}

void KinkPolicy::validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("kink tau must lie in [0, 1]");
}

FunctionBlockFamily FunctionBlockFamily::zero(Index L, Index N) {
    return FunctionBlockFamily(
        L, N, [L](Index, const Vector&, const Vector&) { return Vector(Vector::Zero(L)); },
        [L](Index, const Vector&, const Vector&, const KinkPolicy&) {
            return BlockJacobian{Matrix::Zero(L, L), Matrix::Zero(L, L)};
        });
}

FunctionBlockFamily FunctionBlockFamily::linear(Index L, Index N, Matrix P, Matrix Q) {
    if (P.rows() != L || P.cols() != L || Q.rows() != L || Q.cols() != L)
        throw DimensionError("linear block family needs L x L matrices");
    return FunctionBlockFamily(
        L, N, [P, Q](Index, const Vector& b, const Vector& c) { return Vector(P * b + Q * c); },
        [P, Q](Index, const Vector&, const Vector&, const KinkPolicy&) {
            return BlockJacobian{P, Q};
        });
}

SubgradientElement::SubgradientElement(const BlockSystem& system, std::vector<Matrix> X_blocks,
                                       std::vector<Matrix> Y_blocks)
    : system_(&system), X_(std::move(X_blocks)), Y_(std::move(Y_blocks)) {
    const Index L = system.dims.L;
    require(static_cast<Index>(X_.size()) == system.dims.N, "need one X block per node");
    require(static_cast<Index>(Y_.size()) == system.dims.N, "need one Y block per node");
    for (std::size_t i = 0; i < X_.size(); ++i) {
        require(X_[i].rows() == L && X_[i].cols() == L, "X_i must be L x L");
        require(Y_[i].rows() == L && Y_[i].cols() == L, "Y_i must be L x L");
    }
}

SparseMatrix SubgradientElement::X() const { return block_diagonal(X_, system_->dims.L); }
SparseMatrix SubgradientElement::Y() const { return block_diagonal(Y_, system_->dims.L); }

SparseMatrix SubgradientElement::H() const {
    const BlockSystem& sys = *system_;
    const Index n_a = sys.dims.displacement_size();
    const Index n_b = sys.dims.block_size();
    const Index n = n_a + 2 * n_b;
    std::vector<Triplet> triplets;
    append_triplets(triplets, sys.A, 0, 0);
    append_triplets(triplets, sys.B, 0, n_a);
    append_triplets(triplets, SparseMatrix(sys.B.transpose()), n_a, 0);
    append_triplets(triplets, sys.C, n_a, n_a);
    for (Index j = 0; j < n_b; ++j) triplets.emplace_back(n_a + j, n_a + n_b + j, sys.D(j));
    append_triplets(triplets, X(), n_a + n_b, n_a);
    append_triplets(triplets, Y(), n_a + n_b, n_a + n_b);
    SparseMatrix result(n, n);
    result.setFromTriplets(triplets.begin(), triplets.end());
    return result;
}

Vector eval_affine(const BlockSystem& sys, const StateVector& x) {
    x.check(sys.dims);
    const Index n_a = sys.dims.displacement_size();
    Vector out(sys.dims.affine_size());
    out.head(n_a) = sys.A * x.a + sys.B * x.b + sys.l;
    out.tail(sys.dims.block_size()) = sys.B.transpose() * x.a + sys.C * x.b + sys.D.cwiseProduct(x.c);
    return out;
}

Vector eval_F(const BlockSystem& sys, const BlockFamily& blocks, const StateVector& x) {
    const Index L = sys.dims.L;
    require(blocks.block_length() == L && blocks.block_count() == sys.dims.N,
            "block family does not match system dimensions");
    Vector out(sys.dims.residual_size());
    out.head(sys.dims.affine_size()) = eval_affine(sys, x);
    const Index offset = sys.dims.affine_size();
    for (Index i = 0; i < sys.dims.N; ++i) {
        Vector s = blocks.evaluate(i, x.b_block(i, L), x.c_block(i, L));
        require(s.size() == L, "block function returned wrong length");
        out.segment(offset + i * L, L) = s;
    }
    return out;
}

SubgradientElement assemble_H(const BlockSystem& sys, const BlockFamily& blocks,
                              const StateVector& x, const KinkPolicy& kink) {
    x.check(sys.dims);
    const Index L = sys.dims.L;
    require(blocks.block_length() == L && blocks.block_count() == sys.dims.N,
            "block family does not match system dimensions");
    std::vector<Matrix> X(sys.dims.N), Y(sys.dims.N);
    for (Index i = 0; i < sys.dims.N; ++i) {
        BlockJacobian jac = blocks.subgradient(i, x.b_block(i, L), x.c_block(i, L), kink);
        X[i] = std::move(jac.X);
        Y[i] = std::move(jac.Y);
    }
    return SubgradientElement(sys, std::move(X), std::move(Y));
}

Matrix schur_E(const BlockSystem& sys) {
    Eigen::SimplicialLLT<SparseMatrix> llt(sys.A);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("schur_E: A is not positive definite");
    const Matrix AinvB = llt.solve(Matrix(sys.B));
    Matrix S = Matrix(sys.C) - Matrix(sys.B.transpose()) * AinvB;
    return 0.5 * (S + S.transpose());
}

Matrix schur_H(const SubgradientElement& sub) { return schur_H(sub, schur_E(sub.system())); }

Matrix schur_H(const SubgradientElement& sub, const Matrix& S_E) {
    Eigen::LLT<Matrix> llt(S_E);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("schur_H: S_E is not positive definite");
    const Matrix SinvD = llt.solve(Matrix(sub.system().D.asDiagonal()));
    return Matrix(sub.Y()) - sub.X() * SinvD;
}

Vector solve_by_schur(const SubgradientElement& sub, const Vector& r) {
    const BlockSystem& sys = sub.system();
    const Index n_a = sys.dims.displacement_size();
    const Index n_b = sys.dims.block_size();
    require(r.size() == n_a + 2 * n_b, "right-hand side has wrong length");

    // [E  G; 0 X  Y] with G = (0; D). Eliminate (a, b) = E^{-1}(r1 - G c).
    Eigen::LLT<Matrix> E(Matrix(sys.E()));
    if (E.info() != Eigen::Success) throw FactorizationError("solve_by_schur: E not positive definite");
    const Matrix S_H = schur_H(sub);

    const Vector r1 = r.head(n_a + n_b);
    const Vector r2 = r.tail(n_b);
    const Vector y = E.solve(r1);
    const SparseMatrix X = sub.X();
    // Last block row only sees the b-part of E^{-1} r1.
    const Vector rhs = r2 - X * y.tail(n_b);
    Eigen::FullPivLU<Matrix> lu(S_H);
    if (!lu.isInvertible()) throw FactorizationError("solve_by_schur: S_H is singular");
    const Vector c = lu.solve(rhs);

    Vector Gc = Vector::Zero(n_a + n_b);
    Gc.tail(n_b) = sys.D.cwiseProduct(c);
    const Vector ab = E.solve(r1 - Gc);

    Vector z(n_a + 2 * n_b);
    z << ab, c;
    return z;
}

}  // namespace ssn
