#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ssn/elastoplasticity.hpp"
#include "ssn/newton.hpp"
#include "support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace ssn;
using namespace ssn::elastoplasticity;
using namespace ssn::testing;

namespace {

DiscreteProblem make_problem(int m, int p, double load_scale = 1.0) {
    ProblemConfig cfg;
    cfg.h_exponent = m;
    cfg.p = p;
    cfg.load_scale = load_scale;
    return DiscreteProblem::build(cfg);
}

// Coefficients of the interpolant of u on the free displacement nodes.
Vector interpolate(const DiscreteProblem& pr, const std::function<Point(const Point&)>& u) {
    Vector a = Vector::Zero(pr.dims().displacement_size());
    for (Index e = 0; e < pr.mesh.element_count(); ++e)
        for (int bb = 0; bb <= pr.config.p; ++bb)
            for (int aa = 0; aa <= pr.config.p; ++aa) {
                const Index node = pr.dofs.grid_node(pr.mesh, e, aa, bb);
                const Point x = pr.mesh.map_to_element(e, pr.displacement_nodes.points[aa],
                                                        pr.displacement_nodes.points[bb]);
                for (int k = 0; k < 2; ++k) {
                    const Index dof = pr.dofs.displacement_dof(node, k);
                    if (dof >= 0) a(dof) = u(x)(k);
                }
            }
    return a;
}

}  // namespace

TEST_CASE("Gauss rules") {
    const auto r1 = gauss_rule(1, 2);
    REQUIRE(r1.weights.size() == 1);
    CHECK(r1.points.col(0).norm() == 0.0);
    CHECK(r1.weights(0) == doctest::Approx(4.0));

    const auto g2 = gauss_legendre(2);
    CHECK(g2.points[0] == doctest::Approx(-1.0 / std::sqrt(3.0)));
    CHECK(g2.points[1] == doctest::Approx(1.0 / std::sqrt(3.0)));
    CHECK(g2.weights[0] == doctest::Approx(1.0));
    double x2 = 0.0;
    for (int i = 0; i < 2; ++i) x2 += g2.weights[i] * g2.points[i] * g2.points[i];
    CHECK(x2 == doctest::Approx(2.0 / 3.0));

    const auto r2 = gauss_rule(2, 2);
    double x2y2 = 0.0;
    for (Index q = 0; q < r2.weights.size(); ++q)
        x2y2 += r2.weights(q) * std::pow(r2.points(0, q), 2) * std::pow(r2.points(1, q), 2);
    CHECK(x2y2 == doctest::Approx(4.0 / 9.0).epsilon(1e-14));

    // Exactness up to degree 2n - 1.
    for (int n = 1; n <= 12; ++n) {
        const auto g = gauss_legendre(n);
        for (int deg = 0; deg <= 2 * n - 1; ++deg) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += g.weights[i] * std::pow(g.points[i], deg);
            const double exact = deg % 2 == 1 ? 0.0 : 2.0 / (deg + 1);
            CHECK(s == doctest::Approx(exact).epsilon(1e-13));
        }
    }
    CHECK_THROWS(gauss_rule(0, 2));
    CHECK_THROWS(gauss_rule(2, 4));
}

TEST_CASE("Gauss-Lobatto rules") {
    for (int n = 2; n <= 11; ++n) {
        const auto g = gauss_lobatto(n);
        CHECK(g.points.front() == -1.0);
        CHECK(g.points.back() == 1.0);
        for (int deg = 0; deg <= 2 * n - 3; ++deg) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += g.weights[i] * std::pow(g.points[i], deg);
            const double exact = deg % 2 == 1 ? 0.0 : 2.0 / (deg + 1);
            CHECK(s == doctest::Approx(exact).epsilon(1e-13));
        }
    }
    const auto g3 = gauss_lobatto(3);
    CHECK(g3.points[1] == 0.0);
    CHECK(g3.weights[1] == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("Lagrange basis") {
    const LagrangeBasis1D ell(gauss_lobatto(4).points);
    for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) CHECK(ell.value(j, ell.nodes()[k]) == doctest::Approx(j == k ? 1.0 : 0.0));
    double sum = 0.0, dsum = 0.0;
    for (int j = 0; j < 4; ++j) {
        sum += ell.value(j, 0.3);
        dsum += ell.derivative(j, 0.3);
    }
    CHECK(sum == doctest::Approx(1.0));
    CHECK(std::abs(dsum) <= 1e-13);
    const LagrangeBasis1D single({0.0});
    CHECK(single.value(0, 0.7) == 1.0);
    CHECK(single.derivative(0, 0.7) == 0.0);
}

TEST_CASE("deviatoric bases are orthonormal and trace-free") {
    for (int d : {2, 3}) {
        const auto basis = deviatoric_basis(d);
        CHECK(static_cast<Index>(basis.size()) == deviatoric_dimension(d));
        for (std::size_t i = 0; i < basis.size(); ++i) {
            CHECK(std::abs(basis[i].trace()) <= 1e-15);
            CHECK(is_symmetric(basis[i]));
            for (std::size_t j = 0; j < basis.size(); ++j)
                CHECK((basis[i].array() * basis[j].array()).sum() == doctest::Approx(i == j ? 1.0 : 0.0));
        }
    }
    CHECK_THROWS(deviatoric_basis(1));
}

TEST_CASE("degree-of-freedom counts") {
    const auto fine = count_dofs(8, 1);
    CHECK(fine.dM == 525312);
    CHECK(fine.LN == 524288);
    const auto pver = count_dofs(1, 25);
    CHECK(pver.dM == 20200);
    CHECK(pver.LN == 20000);
    for (auto [m, p] : {std::pair{-1, 1}, std::pair{0, 2}, std::pair{2, 1}, std::pair{1, 3}}) {
        const DiscreteProblem pr = make_problem(m, p);
        const auto counts = count_dofs(m, p);
        CHECK(pr.dims().displacement_size() == counts.dM);
        CHECK(pr.dims().block_size() == counts.LN);
    }
}

TEST_CASE("strain node numbering is a bijection") {
    const DiscreteProblem pr = make_problem(1, 3);
    std::set<Index> seen;
    for (Index e = 0; e < pr.mesh.element_count(); ++e)
        for (Index k = 0; k < pr.dofs.strain_nodes_per_element(); ++k) seen.insert(pr.dofs.strain_node(e, k));
    CHECK(static_cast<Index>(seen.size()) == pr.N());
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == pr.N() - 1);
}

TEST_CASE("node weights and yield values") {
    for (auto [m, p] : {std::pair{0, 1}, std::pair{1, 2}, std::pair{0, 4}}) {
        const DiscreteProblem pr = make_problem(m, p);
        CHECK((pr.node_weight.array() > 0.0).all());
        CHECK(pr.node_weight.sum() == doctest::Approx(4.0));
        CHECK((pr.node_yield.array() == pr.config.material.sigma_y).all());
    }
}

TEST_CASE("quad_Qhp and psi_hp") {
    for (auto [m, p] : {std::pair{0, 1}, std::pair{2, 1}, std::pair{1, 3}}) {
        const DiscreteProblem pr = make_problem(m, p);
        CHECK(quad_Qhp(pr.mesh, p, [](const Point&) { return 1.0; }) == doctest::Approx(4.0));
        CHECK(quad_Qhp(pr.mesh, p, [](const Point&) { return 5.0; }) == doctest::Approx(20.0));
        // Constant field q = Phi_1 has |q|_F = 1.
        Vector b = Vector::Zero(pr.dims().block_size());
        for (Index i = 0; i < pr.N(); ++i) b(i * 2) = 1.0;
        CHECK(psi_hp(pr, b) == doctest::Approx(4.0 * pr.config.material.sigma_y));
    }
}

TEST_CASE("single element: C = (2 mu + k_H) |T| I") {
    const DiscreteProblem pr = make_problem(-1, 1);
    const BlockSystem sys = assemble(pr);
    REQUIRE(sys.C.rows() == 2);
    const Matrix C(sys.C);
    CHECK(max_abs(Matrix(C - 2500.0 * 4.0 * Matrix::Identity(2, 2))) <= 1e-9);
    CHECK(sys.D(0) == doctest::Approx(4.0));
}

TEST_CASE("bilinear forms on fields with known values") {
    // u = (y + 1) (alpha, beta) vanishes on y = -1 and is in every Q_p.
    const double alpha = 0.3, beta = -0.7;
    const MaterialParams mat;
    for (auto [m, p] : {std::pair{-1, 1}, std::pair{1, 1}, std::pair{0, 2}, std::pair{0, 3}}) {
        const DiscreteProblem pr = make_problem(m, p);
        const BlockSystem sys = assemble(pr);
        const Vector a = interpolate(pr, [&](const Point& x) -> Point { return Point(alpha, beta) * (x.y() + 1.0); });
        const double energy = mat.lambda * beta * beta + 2.0 * mat.mu * (beta * beta + 0.5 * alpha * alpha);
        CHECK(a.dot(sys.A * a) == doctest::Approx(4.0 * energy).epsilon(1e-12));

        // Constant plastic strain Phi_2 (shear).
        Vector b = Vector::Zero(pr.dims().block_size());
        for (Index i = 0; i < pr.N(); ++i) b(i * 2 + 1) = 1.0;
        CHECK(a.dot(sys.B * b) == doctest::Approx(-4.0 * 2.0 * mat.mu * alpha / std::sqrt(2.0)).epsilon(1e-12));
        CHECK(b.dot(sys.C * b) == doctest::Approx(4.0 * (2.0 * mat.mu + mat.hardening)).epsilon(1e-12));
    }
}

TEST_CASE("top-edge load integrates the traction exactly") {
    // int_{-1/2}^{1/2} 400 (x^2 - 1/4)^2 dx = 40 / 3.
    for (auto [m, p] : {std::pair{-1, 1}, std::pair{0, 1}, std::pair{2, 1}, std::pair{0, 3}, std::pair{1, 2}}) {
        const DiscreteProblem pr = make_problem(m, p);
        const BlockSystem sys = assemble(pr);
        double fx = 0.0, fy = 0.0;
        for (Index f = 0; f < pr.dofs.free_nodes; ++f) {
            fx += sys.l(2 * f);
            fy += sys.l(2 * f + 1);
        }
        CHECK(fx == 0.0);
        CHECK(fy == doctest::Approx(40.0 / 3.0).epsilon(1e-13));
    }
    CHECK(top_traction(0.0, 1.0).y() == doctest::Approx(-25.0));
    CHECK(top_traction(0.75, 1.0).y() == 0.0);
}

TEST_CASE("node function chi") {
    Vector q(2), mu(2);
    q << 0.1, 0.0;
    mu << 1.0, 0.0;
    Vector r = chi(q, mu, 5.0, 25.0);
    CHECK(r(0) == doctest::Approx(-12.5));
    CHECK(r(1) == 0.0);

    q << 0.2, 0.0;
    mu << 3.0, 0.0;
    r = chi(q, mu, 5.0, 25.0);
    CHECK(r(0) == doctest::Approx(-16.0));
    CHECK(r(1) == 0.0);

    CHECK(chi(Vector::Zero(2), Vector::Zero(2), 5.0, 25.0).norm() == 0.0);
}

TEST_CASE("chi subgradient") {
    Vector q(2), mu(2);
    q << 0.01, -0.02;
    mu << 1.0, 0.5;
    const auto inside = chi_subgradient(q, mu, 5.0, 25.0);
    CHECK(max_abs(Matrix(inside.X + 125.0 * Matrix::Identity(2, 2))) == 0.0);
    CHECK(max_abs(inside.Y) == 0.0);

    q << 0.2, 0.0;
    mu << 3.0, 0.0;
    const auto outside = chi_subgradient(q, mu, 5.0, 25.0);
    Matrix X(2, 2), Y(2, 2);
    X << -50, 0, 0, -125;
    Y << 6, 0, 0, 3;
    CHECK(max_abs(Matrix(outside.X - X)) <= 1e-12);
    CHECK(max_abs(Matrix(outside.Y - Y)) <= 1e-12);

    Rng rng(8);
    const double sigma = 5.0, rho = 25.0, h = 1e-7;
    for (int trial = 0; trial < 50; ++trial) {
        const Vector qq = 0.3 * random_vector(2, rng);
        const Vector mm = 4.0 * random_vector(2, rng);
        if (std::abs((mm + rho * qq).norm() - sigma) < 1e-3) continue;
        const auto jac = chi_subgradient(qq, mm, sigma, rho);
        for (int j = 0; j < 2; ++j) {
            Vector e = Vector::Zero(2);
            e(j) = h;
            const Vector dq = (chi(qq + e, mm, sigma, rho) - chi(qq - e, mm, sigma, rho)) / (2 * h);
            const Vector dm = (chi(qq, mm + e, sigma, rho) - chi(qq, mm - e, sigma, rho)) / (2 * h);
            CHECK((dq - jac.X.col(j)).norm() <= 1e-6 * std::max(1.0, jac.X.norm()));
            CHECK((dm - jac.Y.col(j)).norm() <= 1e-6 * std::max(1.0, jac.Y.norm()));
        }
    }
}

TEST_CASE("complementarity residuals") {
    const DiscreteProblem pr = make_problem(-1, 1);
    const Index n = pr.dims().block_size();
    auto r = complementarity_residuals(pr, Vector::Zero(n), Vector::Zero(n));
    CHECK(r.feasibility <= 0.0);
    CHECK(r.complementarity == 0.0);
    Vector b(2), c(2);
    b << 2.0, 0.0;
    c << pr.config.material.sigma_y, 0.0;
    r = complementarity_residuals(pr, b, c);
    CHECK(r.complementarity == 0.0);
    CHECK(r.feasibility == 0.0);
}

TEST_CASE("multiplier recovery") {
    SUBCASE("zero state, zero load") {
        const DiscreteProblem pr = make_problem(0, 2, 0.0);
        const Index nb = pr.dims().block_size();
        CHECK(recover_multiplier(pr, Vector::Zero(pr.dims().displacement_size()), Vector::Zero(nb)).norm() == 0.0);
    }
    SUBCASE("converged benchmark") {
        const DiscreteProblem pr = make_problem(2, 1);
        const BlockSystem sys = assemble(pr);
        const ElastoplasticBlocks blocks(pr);
        const auto res = newton::solve(sys, blocks, StateVector::zeros(sys.dims));
        REQUIRE(res.trace.status == newton::Status::converged);
        const Vector lambda = recover_multiplier(pr, res.state.a, res.state.b);
        CHECK((lambda - res.state.c).cwiseAbs().maxCoeff() <= 1e-8);
        const auto r = complementarity_residuals(pr, res.state.b, res.state.c);
        CHECK(r.feasibility <= 1e-8);
        CHECK(r.complementarity <= 1e-8);
        for (Index i = 0; i < pr.N(); ++i)
            CHECK(blocks.evaluate(i, res.state.b_block(i, 2), res.state.c_block(i, 2)).norm() <= 1e-8);
    }
    SUBCASE("elastic state: lambda = dev(C eps(u)) at the nodes") {
        const DiscreteProblem pr = make_problem(0, 2);
        Rng rng(3);
        const Vector a = random_vector(pr.dims().displacement_size(), rng);
        const Vector lambda = recover_multiplier(pr, a, Vector::Zero(pr.dims().block_size()));
        const double h = 1e-6;
        for (Index i = 0; i < pr.N(); ++i) {
            const Point x = pr.strain_node_position(i);
            Tensor2 grad;
            for (int j = 0; j < 2; ++j) {
                Point e = Point::Zero();
                e(j) = h;
                grad.col(j) = (displacement_at(pr, a, x + e) - displacement_at(pr, a, x - e)) / (2 * h);
            }
            const Tensor2 eps = 0.5 * (grad + grad.transpose());
            const Tensor2 s = pr.config.material.elastic_stress(eps);
            const Tensor2 dev = s - 0.5 * s.trace() * Tensor2::Identity();
            for (Index l = 0; l < 2; ++l) {
                const double expect = (dev.array() * pr.basis[l].array()).sum();
                CHECK(lambda(i * 2 + l) == doctest::Approx(expect).epsilon(1e-6).scale(1.0));
            }
        }
    }
}

TEST_CASE("patch test: small loads stay elastic") {
    const DiscreteProblem pr = make_problem(2, 2, 1e-3);
    const BlockSystem sys = assemble(pr);
    const ElastoplasticBlocks blocks(pr);
    const auto res = newton::solve(sys, blocks, StateVector::zeros(sys.dims));
    REQUIRE(res.trace.status == newton::Status::converged);
    CHECK(res.state.b.norm() <= 1e-15);
    for (Index i = 0; i < pr.N(); ++i) CHECK(res.state.c_block(i, 2).norm() < pr.node_yield(i));
    const Vector u_el = linear_elastic_displacement(sys);
    CHECK((res.state.a - u_el).norm() <= 1e-8 * std::max(1.0, u_el.norm()));
}

TEST_CASE("problem config JSON") {
    const auto cfg = problem_config_from_json(
        nlohmann::json{{"h_exponent", 3}, {"p", 2}, {"rho", 10.0}, {"load_scale", 0.5}, {"sigma_y", 4.0}});
    CHECK(cfg.h_exponent == 3);
    CHECK(cfg.p == 2);
    CHECK(cfg.rho == 10.0);
    CHECK(cfg.load_scale == 0.5);
    CHECK(cfg.material.sigma_y == 4.0);
    CHECK(cfg.material.mu == 1000.0);

    nlohmann::json j;
    to_json(j, cfg);
    const auto back = problem_config_from_json(j);
    CHECK(back.h_exponent == cfg.h_exponent);
    CHECK(back.rho == cfg.rho);

    CHECK_THROWS_AS(problem_config_from_json(nlohmann::json{{"rho", -1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(problem_config_from_json(nlohmann::json{{"rho", 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(problem_config_from_json(nlohmann::json{{"p", "two"}}), std::invalid_argument);
    CHECK_THROWS_AS(problem_config_from_json(nlohmann::json{{"p", 11}}), std::invalid_argument);
    CHECK_THROWS_AS(problem_config_from_json(nlohmann::json::array()), std::invalid_argument);
    CHECK_THROWS_AS(ElastoplasticBlocks(Vector::Ones(2), 0.0, 2), std::invalid_argument);
}

TEST_CASE("field CSV export") {
    const DiscreteProblem pr = make_problem(0, 1);
    const BlockSystem sys = assemble(pr);
    const auto res = newton::solve(sys, ElastoplasticBlocks(pr), StateVector::zeros(sys.dims));
    const auto path = std::filesystem::temp_directory_path() / "ssn_fields_test.csv";
    write_fields_csv(pr, res.state, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,y,u_x,u_y,p_1,p_2,lambda_1,lambda_2");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == pr.N());
    std::filesystem::remove(path);
    CHECK_THROWS(write_fields_csv(pr, res.state, "/nonexistent-dir/x.csv"));
}
