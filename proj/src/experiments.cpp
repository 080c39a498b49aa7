#include "ssn/experiments.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ssn::experiments {

namespace ep = elastoplasticity;

namespace {

std::string sci(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17e", x);
    return buf;
}

std::ofstream open_for_writing(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

newton::SolverConfig solver_config_from_json(const nlohmann::json& j) {
    newton::SolverConfig cfg;
    if (!j.is_object()) throw ConfigError("solver config must be a JSON object");
    cfg.tol = j.value("tol", cfg.tol);
    cfg.max_iter = j.value("max_iter", cfg.max_iter);
    cfg.kink_policy.tau = j.value("kink_tau", cfg.kink_policy.tau);
    cfg.pivot_tol = j.value("pivot_tol", cfg.pivot_tol);
    if (j.contains("backtracking") && !j.at("backtracking").is_null()) {
        const auto& bt = j.at("backtracking");
        newton::Backtracking params;
        if (bt.is_boolean()) {
            if (bt.get<bool>()) cfg.backtracking = params;
        } else {
            params.contraction = bt.value("contraction", params.contraction);
            params.min_step = bt.value("min_step", params.min_step);
            cfg.backtracking = params;
        }
    }
    return cfg;
}

nlohmann::json residual_history(const newton::IterationTrace& trace) {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& r : trace.records) h.push_back(r.residual);
    return h;
}

nlohmann::json trace_summary(const newton::IterationTrace& trace) {
    return {{"status", std::string(newton::to_string(trace.status))},
            {"iterations", trace.iterations()},
            {"final_merit", trace.final_merit()},
            {"residual_history", residual_history(trace)}};
}

}  // namespace

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::single_run: return "single_run";
        case Mode::reference_then_quotients: return "reference_then_quotients";
        case Mode::rho_sweep: return "rho_sweep";
        case Mode::oracle_compare: return "oracle_compare";
    }
    return "unknown";
}

Mode mode_from_string(std::string_view name) {
    for (Mode m : {Mode::single_run, Mode::reference_then_quotients, Mode::rho_sweep, Mode::oracle_compare})
        if (to_string(m) == name) return m;
    throw ConfigError("unknown mode '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
    try {
        problem.validate();
        solver.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (output.empty()) throw ConfigError("output path is empty");
    for (double rho : rho_list)
        if (!(rho > 0.0)) throw ConfigError("rho_list entries must be positive");
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    ExperimentConfig cfg;
    try {
        cfg.problem = ep::problem_config_from_json(j.contains("problem") ? j.at("problem") : j);
        if (j.contains("solver")) cfg.solver = solver_config_from_json(j.at("solver"));
        if (j.contains("mode")) cfg.mode = mode_from_string(j.at("mode").get<std::string>());
        if (j.contains("output")) cfg.output = j.at("output").get<std::string>();
        if (j.contains("rho_list")) cfg.rho_list = j.at("rho_list").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return experiment_config_from_json(j);
}

Instance Instance::build(const ep::ProblemConfig& cfg) {
    Instance inst{ep::DiscreteProblem::build(cfg), {}};
    inst.system = ep::assemble(inst.problem);
    return inst;
}

newton::SolveResult make_reference(const Instance& inst, const newton::SolverConfig& solver) {
    newton::SolverConfig cfg = solver;
    cfg.tol = std::min(cfg.tol, std::sqrt(2.0 * reference_merit));
    cfg.record_iterates = true;
    const ep::ElastoplasticBlocks blocks(inst.problem);
    newton::SolveResult result = newton::solve(inst.system, blocks, StateVector::zeros(inst.system.dims), cfg);
    if (result.trace.status != newton::Status::converged || result.trace.final_merit() > reference_merit)
        throw SolverFailure("reference solve did not reach merit 1e-20 (status " +
                                std::string(newton::to_string(result.trace.status)) + ")",
                            result.trace);
    return result;
}

QuotientTable quotients_from_errors(const std::vector<double>& errors) {
    QuotientTable table;
    for (std::size_t k = 0; k + 1 < errors.size(); ++k) {
        const double e0 = errors[k];
        const double e1 = errors[k + 1];
        if (!(e0 > 0.0) || !(e1 > 0.0)) break;
        table.rows.push_back({static_cast<int>(k), e0, e1 / e0, e1 / std::pow(e0, 4.0 / 3.0), e1 / (e0 * e0)});
    }
    return table;
}

QuotientTable quotients(const std::vector<StateVector>& iterates, const StateVector& reference) {
    const Vector ref = reference.stacked();
    std::vector<double> errors;
    errors.reserve(iterates.size());
    for (const StateVector& x : iterates) {
        const Vector s = x.stacked();
        if (s.size() != ref.size()) throw std::invalid_argument("quotients: iterate size mismatch");
        errors.push_back((s - ref).norm());
    }
    return quotients_from_errors(errors);
}

void write_quotients_csv(const QuotientTable& table, const std::filesystem::path& path) {
    auto out = open_for_writing(path);
    out << "k,error,q1,q43,q2\n";
    for (const auto& r : table.rows)
        out << r.k << ',' << sci(r.error) << ',' << sci(r.q1) << ',' << sci(r.q43) << ',' << sci(r.q2) << '\n';
    finish(out, path);
}

QuotientTable read_quotients_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "k,error,q1,q43,q2")
        throw std::runtime_error(path.string() + ": unexpected header");
    QuotientTable table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field[5];
        for (auto& f : field)
            if (!std::getline(row, f, ',')) throw std::runtime_error(path.string() + ": short row");
        try {
            table.rows.push_back({std::stoi(field[0]), std::stod(field[1]), std::stod(field[2]),
                                  std::stod(field[3]), std::stod(field[4])});
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        }
    }
    return table;
}

std::vector<SweepRow> rho_sweep(const ep::ProblemConfig& problem, const newton::SolverConfig& solver,
                                const std::vector<double>& rho_list) {
    for (double rho : rho_list)
        if (!(rho > 0.0)) throw std::invalid_argument("rho_sweep: rho must be positive");
    // The assembled system does not depend on rho; only the node functions do.
    const Instance inst = Instance::build(problem);
    std::vector<SweepRow> rows;
    for (double rho : rho_list) {
        const ep::ElastoplasticBlocks blocks(inst.problem.node_yield, rho, inst.problem.L());
        const auto result = newton::solve(inst.system, blocks, StateVector::zeros(inst.system.dims), solver);
        rows.push_back({rho, result.trace.iterations(), result.trace.status, result.trace.final_merit()});
    }
    return rows;
}

OracleResult minimize_energy(const BlockSystem& sys, const Vector& node_yield, const OracleOptions& options) {
    sys.validate();
    const Index L = sys.dims.L;
    const Index N = sys.dims.N;
    if (node_yield.size() != N) throw std::invalid_argument("minimize_energy: node_yield length mismatch");

    // C must be block diagonal with node blocks m_i I.
    Vector m = Vector::Zero(N);
    const double cmax = max_abs(sys.C);
    for (Index col = 0; col < sys.C.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(sys.C, col); it; ++it) {
            if (it.row() == it.col()) continue;
            if (std::abs(it.value()) > 1e-12 * cmax)
                throw std::invalid_argument("minimize_energy: C node blocks are not multiples of the identity");
        }
    const Vector cdiag = sys.C.diagonal();
    for (Index i = 0; i < N; ++i) {
        m(i) = cdiag(i * L);
        if ((cdiag.segment(i * L, L).array() - m(i)).abs().maxCoeff() > 1e-12 * cmax || !(m(i) > 0.0))
            throw std::invalid_argument("minimize_energy: C node blocks are not multiples of the identity");
    }

    Eigen::SimplicialLLT<SparseMatrix> llt(sys.A);
    if (llt.info() != Eigen::Success) throw FactorizationError("minimize_energy: A is not positive definite");

    OracleResult res;
    res.b = Vector::Zero(sys.dims.block_size());
    res.a = llt.solve(Vector(-sys.l));
    const double tol = options.stationarity_tol * std::max(1.0, sys.l.norm());
    for (res.sweeps = 1; res.sweeps <= options.max_sweeps; ++res.sweeps) {
        const Vector r = sys.B.transpose() * res.a;
        for (Index i = 0; i < N; ++i) {
            const Vector ri = r.segment(i * L, L);
            const double nr = ri.norm();
            const double t = sys.D(i * L) * node_yield(i);
            res.b.segment(i * L, L) = nr > t ? Vector(-(1.0 - t / nr) / m(i) * ri) : Vector::Zero(L);
        }
        res.stationarity = (sys.A * res.a + sys.B * res.b + sys.l).norm();
        if (res.stationarity <= tol) {
            res.converged = true;
            break;
        }
        res.a = llt.solve(Vector(-sys.l - sys.B * res.b));
    }
    res.sweeps = std::min(res.sweeps, options.max_sweeps);
    return res;
}

OracleReport oracle_compare(const ep::ProblemConfig& problem, const newton::SolverConfig& solver,
                            const OracleOptions& options) {
    if (problem.h_exponent > 0 || problem.p != 1)
        throw std::invalid_argument("oracle_compare: needs at most 2 x 2 elements and p = 1");
    const Instance inst = Instance::build(problem);
    OracleReport report;
    const ep::ElastoplasticBlocks blocks(inst.problem);
    const auto newton_result = newton::solve(inst.system, blocks, StateVector::zeros(inst.system.dims), solver);
    report.newton_trace = newton_result.trace;
    report.oracle = minimize_energy(inst.system, inst.problem.node_yield, options);
    report.du = (newton_result.state.a - report.oracle.a).norm();
    report.dp = (newton_result.state.b - report.oracle.b).norm();
    report.agree = report.oracle.converged && newton_result.trace.status == newton::Status::converged &&
                   report.du + report.dp <= oracle_agreement_tol;
    return report;
}

void write_trace_csv(const newton::IterationTrace& trace, const std::filesystem::path& path) {
    auto out = open_for_writing(path);
    out << "k,residual,merit,affine_residual,step\n";
    for (const auto& r : trace.records)
        out << r.k << ',' << sci(r.residual) << ',' << sci(r.merit) << ',' << sci(r.affine_residual) << ','
            << sci(r.step) << '\n';
    finish(out, path);
}

RunSummary run(const ExperimentConfig& cfg) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(cfg.output, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + cfg.output.string() + ": " + ec.message());

    RunSummary out;
    nlohmann::json& s = out.summary;
    s["mode"] = std::string(to_string(cfg.mode));
    nlohmann::json problem_json;
    ep::to_json(problem_json, cfg.problem);
    s["problem"] = problem_json;

    switch (cfg.mode) {
        case Mode::single_run: {
            const Instance inst = Instance::build(cfg.problem);
            const ep::ElastoplasticBlocks blocks(inst.problem);
            const auto result = newton::solve(inst.system, blocks, StateVector::zeros(inst.system.dims), cfg.solver);
            write_trace_csv(result.trace, cfg.output / "trace.csv");
            ep::write_fields_csv(inst.problem, result.state, cfg.output / "fields.csv");
            s.update(trace_summary(result.trace));
            const auto cr = ep::complementarity_residuals(inst.problem, result.state.b, result.state.c);
            s["feasibility_residual"] = cr.feasibility;
            s["complementarity_residual"] = cr.complementarity;
            s["affine_invariance"] = std::string(newton::to_string(newton::affine_invariance_check(result.trace, inst.system)));
            out.ok = result.trace.status == newton::Status::converged;
            break;
        }
        case Mode::reference_then_quotients: {
            const Instance inst = Instance::build(cfg.problem);
            try {
                const auto ref = make_reference(inst, cfg.solver);
                write_trace_csv(ref.trace, cfg.output / "trace.csv");
                const QuotientTable table = quotients(ref.trace.iterates, ref.state);
                write_quotients_csv(table, cfg.output / "quotients.csv");
                s.update(trace_summary(ref.trace));
                s["quotient_rows"] = table.rows.size();
                out.ok = true;
            } catch (const SolverFailure& e) {
                write_trace_csv(e.trace, cfg.output / "trace.csv");
                s.update(trace_summary(e.trace));
                s["error"] = e.what();
            }
            break;
        }
        case Mode::rho_sweep: {
            const auto rows = rho_sweep(cfg.problem, cfg.solver, cfg.rho_list);
            const auto path = cfg.output / "rho_sweep.csv";
            auto csv = open_for_writing(path);
            csv << "rho,iterations,status,final_merit\n";
            nlohmann::json table = nlohmann::json::array();
            for (const auto& r : rows) {
                csv << sci(r.rho) << ',' << r.iterations << ',' << newton::to_string(r.status) << ','
                    << sci(r.final_merit) << '\n';
                table.push_back({{"rho", r.rho},
                                 {"iterations", r.iterations},
                                 {"status", std::string(newton::to_string(r.status))},
                                 {"final_merit", r.final_merit}});
            }
            finish(csv, path);
            s["status"] = "completed";
            s["sweep"] = table;
            out.ok = true;
            break;
        }
        case Mode::oracle_compare: {
            try {
                const auto report = oracle_compare(cfg.problem, cfg.solver);
                const auto path = cfg.output / "oracle.csv";
                auto csv = open_for_writing(path);
                csv << "du,dp,sweeps,stationarity,agree\n"
                    << sci(report.du) << ',' << sci(report.dp) << ',' << report.oracle.sweeps << ','
                    << sci(report.oracle.stationarity) << ',' << (report.agree ? 1 : 0) << '\n';
                finish(csv, path);
                s.update(trace_summary(report.newton_trace));
                s["oracle"] = {{"du", report.du},
                               {"dp", report.dp},
                               {"sweeps", report.oracle.sweeps},
                               {"stationarity", report.oracle.stationarity},
                               {"converged", report.oracle.converged},
                               {"agree", report.agree}};
                out.ok = report.oracle.converged && report.newton_trace.status == newton::Status::converged;
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
            break;
        }
    }

    const auto path = cfg.output / "summary.json";
    auto js = open_for_writing(path);
    js << s.dump(2) << '\n';
    finish(js, path);
    return out;
}

}  // namespace ssn::experiments
