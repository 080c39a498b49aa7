#pragma once

// Benchmark driver: reference solutions, convergence quotients, rho sweeps
// and a brute-force minimization oracle for tiny meshes.

#include "ssn/elastoplasticity.hpp"
#include "ssn/newton.hpp"

#include "json.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ssn::experiments {

/// Malformed or invalid experiment configuration.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Newton (or the oracle) failed to converge.
struct SolverFailure : std::runtime_error {
    SolverFailure(const std::string& what, newton::IterationTrace t)
        : std::runtime_error(what), trace(std::move(t)) {}
    newton::IterationTrace trace;
};

enum class Mode { single_run, reference_then_quotients, rho_sweep, oracle_compare };
std::string_view to_string(Mode mode);
/// Throws ConfigError for unknown names.
Mode mode_from_string(std::string_view name);

struct ExperimentConfig {
    elastoplasticity::ProblemConfig problem;
    newton::SolverConfig solver;
    Mode mode = Mode::single_run;
    std::filesystem::path output = "out";
    std::vector<double> rho_list{10.0, 25.0, 50.0};

    void validate() const;
};

/// Layout: {"problem": {...}, "solver": {"tol", "max_iter", "kink_tau",
/// "pivot_tol", "backtracking": {"contraction", "min_step"}}, "mode",
/// "output", "rho_list"}. Problem keys may also sit at the top level.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Merit threshold for reference solutions.
inline constexpr double reference_merit = 1e-20;

struct Instance {
    elastoplasticity::DiscreteProblem problem;
    BlockSystem system;

    static Instance build(const elastoplasticity::ProblemConfig& cfg);
};

/// Newton from zero with every iterate recorded, run until merit <= 1e-20.
/// Throws SolverFailure (trace attached) if that is not reached.
newton::SolveResult make_reference(const Instance& inst, const newton::SolverConfig& solver);

struct QuotientRow {
    int k = 0;
    double error = 0.0;  ///< |e_k|
    double q1 = 0.0;     ///< |e_{k+1}| / |e_k|
    double q43 = 0.0;    ///< |e_{k+1}| / |e_k|^(4/3)
    double q2 = 0.0;     ///< |e_{k+1}| / |e_k|^2

    bool operator==(const QuotientRow&) const = default;
};

struct QuotientTable {
    std::vector<QuotientRow> rows;

    bool operator==(const QuotientTable&) const = default;
};

/// Rows for every k with |e_k| > 0 and |e_{k+1}| > 0; stops at the first
/// vanishing error.
QuotientTable quotients_from_errors(const std::vector<double>& errors);
/// |e_k| = |(a_k, b_k, c_k) - (a*, b*, c*)| in the Euclidean norm.
QuotientTable quotients(const std::vector<StateVector>& iterates, const StateVector& reference);

/// Columns k,error,q1,q43,q2 in %.17e, so reading back is exact.
void write_quotients_csv(const QuotientTable& table, const std::filesystem::path& path);
QuotientTable read_quotients_csv(const std::filesystem::path& path);

struct SweepRow {
    double rho = 0.0;
    int iterations = 0;
    newton::Status status = newton::Status::max_iter;
    double final_merit = 0.0;
};

/// Zero-start Newton for each rho; failures are recorded, not thrown. Throws
/// std::invalid_argument for rho <= 0.
std::vector<SweepRow> rho_sweep(const elastoplasticity::ProblemConfig& problem,
                                const newton::SolverConfig& solver, const std::vector<double>& rho_list);

struct OracleOptions {
    double stationarity_tol = 1e-12;  ///< relative to max(1, |l|)
    long max_sweeps = 2000000;
};

struct OracleResult {
    Vector a;
    Vector b;
    long sweeps = 0;
    double stationarity = 0.0;  ///< |A a + B b + l| after the last sweep
    bool converged = false;
};

/// Minimizes 1/2 a^T A a + a^T B b + 1/2 b^T C b + sum_i D_i sigma_i |b_i| + l^T a
/// by alternating an exact solve in a with nodewise soft thresholding in b.
/// Requires every diagonal node block of C to be a multiple of the identity
/// and no coupling between nodes in C.
OracleResult minimize_energy(const BlockSystem& sys, const Vector& node_yield,
                             const OracleOptions& options = {});

struct OracleReport {
    OracleResult oracle;
    newton::IterationTrace newton_trace;
    double du = 0.0;  ///< |a_newton - a_oracle|
    double dp = 0.0;  ///< |b_newton - b_oracle|
    bool agree = false;
};

inline constexpr double oracle_agreement_tol = 1e-6;

/// Throws std::invalid_argument for instances larger than 2 x 2 elements or p != 1.
OracleReport oracle_compare(const elastoplasticity::ProblemConfig& problem, const newton::SolverConfig& solver,
                            const OracleOptions& options = {});

struct RunSummary {
    bool ok = false;
    nlohmann::json summary;
};

/// Runs the selected mode, writing CSV files and summary.json into
/// cfg.output. Failures of the solver are reported through ok = false.
/// I/O errors throw std::runtime_error naming the path.
RunSummary run(const ExperimentConfig& cfg);

void write_trace_csv(const newton::IterationTrace& trace, const std::filesystem::path& path);

}  // namespace ssn::experiments
