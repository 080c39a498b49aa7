#include "ssn/newton.hpp"

#include <cmath>
#include <stdexcept>

namespace ssn::newton {

namespace {

// Sparsity pattern of H with every entry of every X_i and Y_i block present,
// so the symbolic analysis of the LU is reused across iterations.
class JacobianAssembler {
public:
    explicit JacobianAssembler(const BlockSystem& sys) : sys_(sys) {
        const Index n_a = sys.dims.displacement_size();
        const Index n_b = sys.dims.block_size();
        const Index L = sys.dims.L;
        auto push = [this](const SparseMatrix& m, Index r0, Index c0) {
            for (Index k = 0; k < m.outerSize(); ++k)
                for (SparseMatrix::InnerIterator it(m, k); it; ++it)
                    static_.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
        };
        push(sys.A, 0, 0);
        push(sys.B, 0, n_a);
        push(SparseMatrix(sys.B.transpose()), n_a, 0);
        push(sys.C, n_a, n_a);
        for (Index j = 0; j < n_b; ++j) static_.emplace_back(n_a + j, n_a + n_b + j, sys.D(j));
        static_max_ = 0.0;
        for (const Triplet& t : static_) static_max_ = std::max(static_max_, std::abs(t.value()));
        size_ = n_a + 2 * n_b;
        block_row0_ = n_a + n_b;
        L_ = L;
    }

    SparseMatrix assemble(const std::vector<BlockJacobian>& jacs, double& max_entry) const {
        std::vector<Triplet> triplets(static_);
        triplets.reserve(static_.size() + 2 * jacs.size() * L_ * L_);
        max_entry = static_max_;
        const Index n_b = sys_.dims.block_size();
        const Index n_a = sys_.dims.displacement_size();
        for (std::size_t i = 0; i < jacs.size(); ++i) {
            const Index off = static_cast<Index>(i) * L_;
            for (Index col = 0; col < L_; ++col) {
                for (Index row = 0; row < L_; ++row) {
                    const double x = jacs[i].X(row, col);
                    const double y = jacs[i].Y(row, col);
                    triplets.emplace_back(block_row0_ + off + row, n_a + off + col, x);
                    triplets.emplace_back(block_row0_ + off + row, n_a + n_b + off + col, y);
                    max_entry = std::max({max_entry, std::abs(x), std::abs(y)});
                }
            }
        }
        SparseMatrix H(size_, size_);
        H.setFromTriplets(triplets.begin(), triplets.end());
        H.makeCompressed();
        return H;
    }

private:
    const BlockSystem& sys_;
    std::vector<Triplet> static_;
    double static_max_ = 0.0;
    Index size_ = 0;
    Index block_row0_ = 0;
    Index L_ = 0;
};

StateVector axpy(const StateVector& x, double t, const Vector& dx) {
    const Index na = x.a.size();
    const Index nb = x.b.size();
    return {x.a + t * dx.head(na), x.b + t * dx.segment(na, nb), x.c + t * dx.tail(nb)};
}

}  // namespace

void SolverConfig::validate() const {
    if (!(tol > 0.0)) throw std::invalid_argument("solver tol must be positive");
    if (max_iter <= 0) throw std::invalid_argument("max_iter must be positive");
    if (backtracking) {
        if (!(backtracking->contraction > 0.0 && backtracking->contraction < 1.0))
            throw std::invalid_argument("backtracking contraction must lie in (0, 1)");
        if (!(backtracking->min_step > 0.0 && backtracking->min_step <= 1.0))
            throw std::invalid_argument("backtracking min_step must lie in (0, 1]");
    }
    kink_policy.validate();
    if (!(pivot_tol > 0.0)) throw std::invalid_argument("pivot_tol must be positive");
}

std::string_view to_string(Status status) {
    switch (status) {
        case Status::converged: return "converged";
        case Status::max_iter: return "max_iter";
        case Status::singular_jacobian: return "singular_jacobian";
    }
    return "unknown";
}

std::string_view to_string(InvarianceVerdict verdict) {
    switch (verdict) {
        case InvarianceVerdict::holds: return "holds";
        case InvarianceVerdict::violated: return "violated";
        case InvarianceVerdict::not_applicable: return "not_applicable";
    }
    return "unknown";
}

SolveResult solve(const BlockSystem& sys, const BlockFamily& blocks, const StateVector& x0,
                  const SolverConfig& cfg) {
    cfg.validate();
    x0.check(sys.dims);
    const Index L = sys.dims.L;
    const Index K = sys.dims.affine_size();

    JacobianAssembler assembler(sys);
    PivotedSparseLU lu;
    bool analyzed = false;

    SolveResult result{x0, {}};
    StateVector& x = result.state;
    IterationTrace& trace = result.trace;

    Vector F = eval_F(sys, blocks, x);
    auto record = [&](int k) {
        IterationRecord rec;
        rec.k = k;
        rec.residual = F.norm();
        rec.merit = 0.5 * F.squaredNorm();
        rec.affine_residual = F.head(K).norm();
        trace.records.push_back(rec);
        if (cfg.record_iterates) trace.iterates.push_back(x);
    };
    record(0);

    for (int k = 0;; ++k) {
        if (trace.records.back().residual <= cfg.tol) {
            trace.status = Status::converged;
            break;
        }
        if (k >= cfg.max_iter) {
            trace.status = Status::max_iter;
            break;
        }

        std::vector<BlockJacobian> jacs(sys.dims.N);
        for (Index i = 0; i < sys.dims.N; ++i)
            jacs[i] = blocks.subgradient(i, x.b_block(i, L), x.c_block(i, L), cfg.kink_policy);
        double max_entry = 0.0;
        const SparseMatrix H = assembler.assemble(jacs, max_entry);

        if (!analyzed) {
            lu.analyzePattern(H);
            analyzed = true;
        }
        lu.factorize(H);
        if (lu.info() != Eigen::Success || lu.min_abs_pivot() <= cfg.pivot_tol * max_entry) {
            trace.records.back().linear_solve = LinearSolveStatus::singular;
            trace.status = Status::singular_jacobian;
            break;
        }
        const Vector dx = lu.solve(Vector(-F));
        if (lu.info() != Eigen::Success || !dx.allFinite()) {
            trace.records.back().linear_solve = LinearSolveStatus::singular;
            trace.status = Status::singular_jacobian;
            break;
        }

        double t = 1.0;
        if (cfg.backtracking) {
            const double merit_now = trace.records.back().merit;
            const StepChoice choice = backtrack(
                [&](double step) { return 0.5 * eval_F(sys, blocks, axpy(x, step, dx)).squaredNorm(); },
                merit_now, *cfg.backtracking);
            t = choice.t;
            trace.records.back().step_flagged = choice.flagged;
        }
        trace.records.back().step = t;

        x = axpy(x, t, dx);
        F = eval_F(sys, blocks, x);
        record(k + 1);
    }
    return result;
}

double affine_scale(const BlockSystem& sys) {
    double s = std::max({max_abs(sys.A), max_abs(sys.B), max_abs(sys.C)});
    if (sys.D.size() > 0) s = std::max(s, sys.D.cwiseAbs().maxCoeff());
    if (sys.l.size() > 0) s = std::max(s, sys.l.cwiseAbs().maxCoeff());
    return s > 0.0 ? s : 1.0;
}

InvarianceVerdict affine_invariance_check(const IterationTrace& trace, const BlockSystem& sys) {
    const double threshold = 1e-10 * affine_scale(sys);
    const auto& recs = trace.records;
    std::size_t first = recs.size();
    for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
        if (recs[k].step == 1.0) {
            first = k + 1;
            break;
        }
    }
    if (first >= recs.size()) return InvarianceVerdict::not_applicable;
    for (std::size_t k = first; k < recs.size(); ++k)
        if (recs[k].affine_residual > threshold) return InvarianceVerdict::violated;
    return InvarianceVerdict::holds;
}

RegularityReport regularity_report(const SubgradientElement& sub, double rel_tol) {
    RegularityReport report;
    const Matrix S_H = schur_H(sub);
    const SingularValueRange range = singular_value_range(S_H);
    report.sh_smallest_singular_value = range.smallest;
    report.sh_largest_singular_value = range.largest;
    report.sh_regular = range.largest > 0.0 && range.smallest > rel_tol * range.largest;

    const auto& X = sub.X_blocks();
    const auto& Y = sub.Y_blocks();
    report.block_certificates.reserve(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) {
        eigencomp::OrderedCertificate cert;
        try {
            cert = eigencomp::check_pair_any_order({X[i], Y[i]});
        } catch (const std::invalid_argument&) {
            // Non-symmetric blocks (away from a solution) are simply not certified.
            cert.certificate.is_eigencomplementary = false;
        }
        if (cert.certificate.is_eigencomplementary) ++report.certified_blocks;
        report.block_certificates.push_back(std::move(cert));
    }
    report.hypotheses_hold =
        report.sh_regular && report.certified_blocks == static_cast<Index>(X.size());
    return report;
}

}  // namespace ssn::newton
