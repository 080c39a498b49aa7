// ssn: command-line driver.
//
//   ssn run --config cfg.json --mode single_run --out results/
//   ssn certify-pair --in pair.txt
//
// Exit codes: 0 success, 1 validation error, 2 solver failure.

#include "ssn/eigencomp.hpp"
#include "ssn/experiments.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iostream>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 1;
constexpr int exit_solver = 2;

ssn::eigencomp::SymmetricPair read_pair(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read " + path);
    long L = 0;
    if (!(in >> L) || L <= 0 || L > 10000) throw std::invalid_argument(path + ": first entry must be a positive size L");
    ssn::eigencomp::SymmetricPair pair{ssn::Matrix(L, L), ssn::Matrix(L, L)};
    for (ssn::Matrix* m : {&pair.F, &pair.G})
        for (long i = 0; i < L; ++i)
            for (long j = 0; j < L; ++j)
                if (!(in >> (*m)(i, j))) throw std::invalid_argument(path + ": expected 2 L^2 matrix entries");
    std::string extra;
    if (in >> extra) throw std::invalid_argument(path + ": trailing content '" + extra + "'");
    return pair;
}

nlohmann::json to_json(const ssn::Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

int certify_pair(const std::string& path) {
    const auto pair = read_pair(path);
    const auto cert = ssn::eigencomp::check_pair(pair);
    nlohmann::json j{{"is_eigencomplementary", cert.is_eigencomplementary},
                     {"F_singular", cert.F_singular},
                     {"G_singular", cert.G_singular},
                     {"eigF", to_json(cert.eigF)},
                     {"eigG", to_json(cert.eigG)}};
    j["failure_reason"] = cert.failure_reason ? nlohmann::json(std::string(ssn::eigencomp::to_string(*cert.failure_reason)))
                                              : nlohmann::json(nullptr);
    if (cert.is_eigencomplementary) {
        nlohmann::json cols = nlohmann::json::array();
        for (ssn::Index c = 0; c < cert.shared_basis.cols(); ++c) cols.push_back(to_json(cert.shared_basis.col(c)));
        j["shared_basis_columns"] = cols;
    }
    std::cout << j.dump(2) << '\n';
    return exit_ok;
}

int run(const std::string& config_path, const std::string& mode, const std::string& out_dir) {
    auto cfg = ssn::experiments::load_experiment_config(config_path);
    if (!mode.empty()) cfg.mode = ssn::experiments::mode_from_string(mode);
    if (!out_dir.empty()) cfg.output = out_dir;
    const auto result = ssn::experiments::run(cfg);
    std::cout << result.summary.dump(2) << '\n';
    if (!result.ok) {
        std::cerr << "ssn: solver failure (see " << (cfg.output / "summary.json").string() << ")\n";
        return exit_solver;
    }
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semismooth Newton solver for block complementarity systems"};
    app.require_subcommand(1);

    std::string config_path, mode, out_dir;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment from a JSON config");
    run_cmd->add_option("--config", config_path, "JSON configuration file")->required();
    run_cmd->add_option("--mode", mode, "single_run | reference_then_quotients | rho_sweep | oracle_compare");
    run_cmd->add_option("--out", out_dir, "Output directory");

    std::string pair_path;
    auto* cert_cmd = app.add_subcommand("certify-pair", "Check whether (F, G) is an eigencomplementary pair");
    cert_cmd->add_option("--in", pair_path, "Text file: L, then L rows of F, then L rows of G")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_invalid;
    }

    try {
        if (*run_cmd) return run(config_path, mode, out_dir);
        return certify_pair(pair_path);
    } catch (const ssn::experiments::SolverFailure& e) {
        std::cerr << "ssn: " << e.what() << '\n';
        return exit_solver;
    } catch (const ssn::FactorizationError& e) {
        std::cerr << "ssn: " << e.what() << '\n';
        return exit_solver;
    } catch (const std::invalid_argument& e) {
        std::cerr << "ssn: invalid input: " << e.what() << '\n';
        return exit_invalid;
    } catch (const std::exception& e) {
        std::cerr << "ssn: " << e.what() << '\n';
        return exit_invalid;
    }
}
