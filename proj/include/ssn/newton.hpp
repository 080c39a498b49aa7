#pragma once

#include "ssn/core_system.hpp"
#include "ssn/eigencomp.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace ssn::newton {

struct Backtracking {
    double contraction = 0.5;
    double min_step = 1.0 / 1024.0;
};

struct SolverConfig {
    double tol = 1e-10;  ///< threshold on the Euclidean norm |F|
    int max_iter = 50;
    /// Unset: full steps (plain semismooth Newton).
    std::optional<Backtracking> backtracking;
    KinkPolicy kink_policy;
    /// Keep every iterate in the trace (needed for convergence quotients).
    bool record_iterates = false;
    /// Pivot threshold for rank-deficiency, relative to max |H_ij|.
    double pivot_tol = 1e-12;

    void validate() const;
};

enum class Status { converged, max_iter, singular_jacobian };
std::string_view to_string(Status status);

enum class LinearSolveStatus { ok, singular };

struct IterationRecord {
    int k = 0;
    double residual = 0.0;         ///< |F(x_k)|
    double merit = 0.0;            ///< |F(x_k)|^2 / 2
    double affine_residual = 0.0;  ///< |L(x_k)|
    /// Step length used to leave x_k; 0 for the final record.
    double step = 0.0;
    LinearSolveStatus linear_solve = LinearSolveStatus::ok;
    /// Backtracking ran into min_step without sufficient decrease.
    bool step_flagged = false;
};

struct IterationTrace {
    std::vector<IterationRecord> records;
    std::vector<StateVector> iterates;  ///< filled when record_iterates
    Status status = Status::max_iter;

    int iterations() const { return records.empty() ? 0 : static_cast<int>(records.size()) - 1; }
    double final_residual() const { return records.empty() ? 0.0 : records.back().residual; }
    double final_merit() const { return records.empty() ? 0.0 : records.back().merit; }
};

struct SolveResult {
    StateVector state;
    IterationTrace trace;
};

/// Semismooth Newton iteration: while |F(x)| > tol, pick H in the Clarke
/// subdifferential, solve H dx = -F(x) with a sparse LU of the monolithic H
/// and update x += t dx.
SolveResult solve(const BlockSystem& sys, const BlockFamily& blocks, const StateVector& x0,
                  const SolverConfig& cfg = {});

/// Largest t in {1, c, c^2, ...} with t >= min_step and
/// merit(x + t dx) <= (1 - 1e-4 t) merit(x). Falls back to min_step with
/// flagged = true.
struct StepChoice {
    double t = 1.0;
    bool flagged = false;
};
template <class MeritFn>
StepChoice backtrack(MeritFn&& merit_at, double merit_now, const Backtracking& params) {
    if (merit_now == 0.0) return {1.0, false};
    for (double t = 1.0; t >= params.min_step; t *= params.contraction)
        if (merit_at(t) <= (1.0 - 1e-4 * t) * merit_now) return {t, false};
    return {params.min_step, true};
}

enum class InvarianceVerdict { holds, violated, not_applicable };
std::string_view to_string(InvarianceVerdict verdict);

/// After the first full step the affine part L stays zero. Uses the affine
/// residuals recorded in the trace; threshold is 1e-10 * scale with
/// scale = max(max|A|, max|B|, max|C|, max D, |l|_inf).
InvarianceVerdict affine_invariance_check(const IterationTrace& trace, const BlockSystem& sys);
double affine_scale(const BlockSystem& sys);

struct RegularityReport {
    double sh_smallest_singular_value = 0.0;
    double sh_largest_singular_value = 0.0;
    bool sh_regular = false;
    std::vector<eigencomp::OrderedCertificate> block_certificates;
    Index certified_blocks = 0;
    /// All pairs certified and S_H regular.
    bool hypotheses_hold = false;
};

/// Dense diagnostic: S_H, its singular value range and a certificate per
/// node pair (X_i, Y_i). S_H counts as regular when its smallest singular
/// value exceeds rel_tol times the largest.
RegularityReport regularity_report(const SubgradientElement& sub, double rel_tol = 1e-10);

}  // namespace ssn::newton
