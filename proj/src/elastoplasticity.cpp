#include "ssn/elastoplasticity.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <stdexcept>

namespace ssn::elastoplasticity {

// ---------------------------------------------------------------------------
// Quadrature

namespace {

// Legendre P_n and P_{n-1} at x by the three-term recurrence.
std::pair<double, double> legendre_pair(int n, double x) {
    double p_prev = 1.0;
    double p = x;
    if (n == 0) return {1.0, 0.0};
    for (int k = 2; k <= n; ++k) {
        const double next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
        p_prev = p;
        p = next;
    }
    return {p, p_prev};
}

}  // namespace

QuadratureRule1D gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one point");
    QuadratureRule1D rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            const auto [p, p_prev] = legendre_pair(n, x);
            dp = n * (x * p - p_prev) / (x * x - 1.0);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const auto [p, p_prev] = legendre_pair(n, x);
        dp = n * (x * p - p_prev) / (x * x - 1.0);
        // Ascending order.
        rule.points[n - 1 - i] = x;
        rule.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    if (n % 2 == 1) rule.points[n / 2] = 0.0;
    return rule;
}

QuadratureRule1D gauss_lobatto(int n) {
    if (n < 2) throw std::invalid_argument("gauss_lobatto: need at least two points");
    const int order = n - 1;
    QuadratureRule1D rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // Chebyshev-Gauss-Lobatto initial guess; interior nodes are roots of P'_{n-1}.
        double x = -std::cos(std::numbers::pi * i / order);
        if (i != 0 && i != order) {
            for (int it = 0; it < 100; ++it) {
                const auto [p, p_prev] = legendre_pair(order, x);
                const double x_old = x;
                x = x_old - (x * p - p_prev) / (n * p);
                if (std::abs(x - x_old) < 1e-16) break;
            }
        }
        const double p = legendre_pair(order, x).first;
        rule.points[i] = x;
        rule.weights[i] = 2.0 / (order * n * p * p);
    }
    if (n % 2 == 1) rule.points[n / 2] = 0.0;
    return rule;
}

QuadratureRule gauss_rule(int p, int d) {
    if (p < 1) throw std::invalid_argument("gauss_rule: degree p must be at least 1");
    if (d < 1 || d > 3) throw std::invalid_argument("gauss_rule: dimension must be 1, 2 or 3");
    const QuadratureRule1D base = gauss_legendre(p);
    Index count = 1;
    for (int k = 0; k < d; ++k) count *= p;
    QuadratureRule rule{d, Matrix(d, count), Vector(count)};
    for (Index q = 0; q < count; ++q) {
        Index rest = q;
        double w = 1.0;
        for (int k = 0; k < d; ++k) {
            const Index idx = rest % p;
            rest /= p;
            rule.points(k, q) = base.points[idx];
            w *= base.weights[idx];
        }
        rule.weights(q) = w;
    }
    return rule;
}

LagrangeBasis1D::LagrangeBasis1D(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw std::invalid_argument("LagrangeBasis1D: no nodes");
    denominators_.assign(nodes_.size(), 1.0);
    for (std::size_t j = 0; j < nodes_.size(); ++j)
        for (std::size_t m = 0; m < nodes_.size(); ++m)
            if (m != j) denominators_[j] *= nodes_[j] - nodes_[m];
}

double LagrangeBasis1D::value(int j, double x) const {
    double num = 1.0;
    for (int m = 0; m < size(); ++m)
        if (m != j) num *= x - nodes_[m];
    return num / denominators_[j];
}

double LagrangeBasis1D::derivative(int j, double x) const {
    double sum = 0.0;
    for (int r = 0; r < size(); ++r) {
        if (r == j) continue;
        double term = 1.0;
        for (int m = 0; m < size(); ++m)
            if (m != j && m != r) term *= x - nodes_[m];
        sum += term;
    }
    return sum / denominators_[j];
}

// ---------------------------------------------------------------------------
// Problem data

std::vector<Matrix> deviatoric_basis(int d) {
    const double s2 = 1.0 / std::sqrt(2.0);
    if (d == 2) {
        Matrix phi1(2, 2), phi2(2, 2);
        phi1 << s2, 0.0, 0.0, -s2;
        phi2 << 0.0, s2, s2, 0.0;
        return {phi1, phi2};
    }
    if (d == 3) {
        const double s6 = 1.0 / std::sqrt(6.0);
        std::vector<Matrix> basis(5, Matrix::Zero(3, 3));
        basis[0](0, 0) = s2;
        basis[0](1, 1) = -s2;
        basis[1](0, 0) = s6;
        basis[1](1, 1) = s6;
        basis[1](2, 2) = -2.0 * s6;
        basis[2](0, 1) = basis[2](1, 0) = s2;
        basis[3](0, 2) = basis[3](2, 0) = s2;
        basis[4](1, 2) = basis[4](2, 1) = s2;
        return basis;
    }
    throw std::invalid_argument("deviatoric_basis: dimension must be 2 or 3");
}

void MaterialParams::validate() const {
    if (!(mu > 0.0)) throw std::invalid_argument("material: mu must be positive");
    if (!(lambda >= 0.0)) throw std::invalid_argument("material: lambda must be nonnegative");
    if (!(hardening > 0.0)) throw std::invalid_argument("material: hardening must be positive");
    if (!(sigma_y > 0.0)) throw std::invalid_argument("material: sigma_y must be positive");
}

Tensor2 MaterialParams::elastic_stress(const Tensor2& strain) const {
    return lambda * strain.trace() * Tensor2::Identity() + 2.0 * mu * strain;
}

Mesh Mesh::uniform(int h_exponent) {
    if (h_exponent < -1 || h_exponent > 12) throw std::invalid_argument("mesh: h exponent out of range");
    Mesh mesh;
    mesh.h_exponent = h_exponent;
    mesh.cells_per_side = Index(1) << (h_exponent + 1);
    mesh.h = 2.0 / static_cast<double>(mesh.cells_per_side);
    const Index n = mesh.cells_per_side;
    const Index nv = n + 1;
    mesh.vertices.reserve(nv * nv);
    mesh.dirichlet_vertex.reserve(nv * nv);
    for (Index iy = 0; iy < nv; ++iy) {
        for (Index ix = 0; ix < nv; ++ix) {
            mesh.vertices.emplace_back(-1.0 + ix * mesh.h, -1.0 + iy * mesh.h);
            mesh.dirichlet_vertex.push_back(iy == 0);
        }
    }
    mesh.elements.reserve(n * n);
    for (Index ey = 0; ey < n; ++ey)
        for (Index ex = 0; ex < n; ++ex) {
            const Index v0 = ey * nv + ex;
            mesh.elements.push_back({v0, v0 + 1, v0 + nv + 1, v0 + nv});
        }
    return mesh;
}

Point Mesh::map_to_element(Index e, double xi, double eta) const {
    const Point origin = element_origin(e);
    return origin + 0.5 * h * Point(xi + 1.0, eta + 1.0);
}

Index Mesh::locate(const Point& x) const {
    auto cell = [this](double coord) {
        const auto idx = static_cast<Index>(std::floor((coord + 1.0) / h));
        return std::clamp<Index>(idx, 0, cells_per_side - 1);
    };
    return cell(x.y()) * cells_per_side + cell(x.x());
}

DofCounts count_dofs(int h_exponent, int p) {
    if (h_exponent < -1 || h_exponent > 30 || p < 1)
        throw std::invalid_argument("count_dofs: need -1 <= h_exponent <= 30 and p >= 1");
    const Index cells = Index(1) << (h_exponent + 1);  // 2 / h
    const Index side = cells * p + 1;            // 2p/h + 1
    return {2 * (side * side - side), 2 * cells * cells * p * p};
}

DofMap DofMap::build(const Mesh& mesh, int p) {
    if (p < 1) throw std::invalid_argument("dof map: p must be at least 1");
    DofMap map;
    map.p = p;
    map.nodes_per_side = mesh.cells_per_side * p + 1;
    map.free_index.assign(map.nodes_per_side * map.nodes_per_side, -1);
    Index next = 0;
    for (Index iy = 1; iy < map.nodes_per_side; ++iy)
        for (Index ix = 0; ix < map.nodes_per_side; ++ix)
            map.free_index[iy * map.nodes_per_side + ix] = next++;
    map.free_nodes = next;
    map.strain_nodes = mesh.element_count() * p * p;
    return map;
}

Index DofMap::grid_node(const Mesh& mesh, Index e, int a, int b) const {
    const Index ex = e % mesh.cells_per_side;
    const Index ey = e / mesh.cells_per_side;
    return (ey * p + b) * nodes_per_side + ex * p + a;
}

void ProblemConfig::validate() const {
    if (h_exponent < -1 || h_exponent > 10) throw std::invalid_argument("h_exponent must lie in [-1, 10]");
    if (p < 1 || p > 10) throw std::invalid_argument("p must lie in [1, 10]");
    material.validate();
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    if (!std::isfinite(load_scale)) throw std::invalid_argument("load_scale must be finite");
    if (!volume_force.allFinite()) throw std::invalid_argument("volume_force must be finite");
}

ProblemConfig problem_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("problem config must be a JSON object");
    ProblemConfig cfg;
    try {
        cfg.h_exponent = j.value("h_exponent", cfg.h_exponent);
        cfg.p = j.value("p", cfg.p);
        cfg.material.lambda = j.value("lambda", cfg.material.lambda);
        cfg.material.mu = j.value("mu", cfg.material.mu);
        cfg.material.hardening = j.value("hardening", cfg.material.hardening);
        cfg.material.sigma_y = j.value("sigma_y", cfg.material.sigma_y);
        cfg.rho = j.value("rho", cfg.rho);
        cfg.load_scale = j.value("load_scale", cfg.load_scale);
        if (j.contains("volume_force")) {
            const auto f = j.at("volume_force").get<std::vector<double>>();
            if (f.size() != 2) throw std::invalid_argument("volume_force must have two components");
            cfg.volume_force = Point(f[0], f[1]);
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("problem config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

void to_json(nlohmann::json& j, const ProblemConfig& cfg) {
    j = nlohmann::json{{"h_exponent", cfg.h_exponent},
                       {"p", cfg.p},
                       {"lambda", cfg.material.lambda},
                       {"mu", cfg.material.mu},
                       {"hardening", cfg.material.hardening},
                       {"sigma_y", cfg.material.sigma_y},
                       {"rho", cfg.rho},
                       {"load_scale", cfg.load_scale},
                       {"volume_force", {cfg.volume_force.x(), cfg.volume_force.y()}}};
}

Point top_traction(double x, double scale) {
    const double s = std::min(0.0, x * x - 0.25);
    return {0.0, -400.0 * s * s * scale};
}

DiscreteProblem DiscreteProblem::build(const ProblemConfig& cfg) {
    cfg.validate();
    DiscreteProblem problem;
    problem.config = cfg;
    problem.mesh = Mesh::uniform(cfg.h_exponent);
    problem.dofs = DofMap::build(problem.mesh, cfg.p);
    problem.basis = deviatoric_basis(2);
    problem.strain_rule = gauss_legendre(cfg.p);
    problem.displacement_nodes = gauss_lobatto(cfg.p + 1);

    // The strain basis is Lagrange on the p x p Gauss points, so the p-point
    // rule integrates phi_i exactly and sees phi_i(x_q) = delta_iq. Hence
    // D_i = w_s w_t |det| and sigma_i = sigma_y at the node.
    const Index N = problem.dofs.strain_nodes;
    const double det = 0.25 * problem.mesh.h * problem.mesh.h;
    const int p = cfg.p;
    problem.node_weight.resize(N);
    problem.node_yield.resize(N);
    for (Index e = 0; e < problem.mesh.element_count(); ++e) {
        for (int t = 0; t < p; ++t)
            for (int s = 0; s < p; ++s) {
                const Index i = problem.dofs.strain_node(e, t * p + s);
                problem.node_weight(i) = problem.strain_rule.weights[s] * problem.strain_rule.weights[t] * det;
                problem.node_yield(i) = cfg.material.sigma_y;
            }
    }
    return problem;
}

Point DiscreteProblem::strain_node_position(Index i) const {
    const Index per = dofs.strain_nodes_per_element();
    const Index e = i / per;
    const Index k = i % per;
    const int p = config.p;
    return mesh.map_to_element(e, strain_rule.points[k % p], strain_rule.points[k / p]);
}

double quad_Qhp(const Mesh& mesh, int p, const std::function<double(const Point&)>& f) {
    if (p < 1) throw std::invalid_argument("quad_Qhp: p must be at least 1");
    double total = 0.0;
    if (p == 1) {
        for (Index e = 0; e < mesh.element_count(); ++e)
            total += mesh.element_area() * f(mesh.map_to_element(e, 0.0, 0.0));
        return total;
    }
    const QuadratureRule rule = gauss_rule(p, 2);
    const double det = 0.25 * mesh.h * mesh.h;
    for (Index e = 0; e < mesh.element_count(); ++e)
        for (Index q = 0; q < rule.weights.size(); ++q)
            total += rule.weights(q) * det * f(mesh.map_to_element(e, rule.points(0, q), rule.points(1, q)));
    return total;
}

namespace {

Tensor2 to_tensor(const Matrix& m) { return Tensor2(m); }

// Reference coordinates of x inside element e.
std::pair<double, double> reference_coords(const Mesh& mesh, Index e, const Point& x) {
    const Point origin = mesh.element_origin(e);
    return {2.0 * (x.x() - origin.x()) / mesh.h - 1.0, 2.0 * (x.y() - origin.y()) / mesh.h - 1.0};
}

// Symmetric gradient of the vector field e_k N.
Tensor2 unit_strain(int k, double dNdx, double dNdy) {
    Tensor2 eps = Tensor2::Zero();
    const double grad[2] = {dNdx, dNdy};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            eps(i, j) = 0.5 * ((i == k ? grad[j] : 0.0) + (j == k ? grad[i] : 0.0));
    return eps;
}

double frobenius(const Tensor2& x, const Tensor2& y) { return (x.array() * y.array()).sum(); }

}  // namespace

Tensor2 plastic_strain_at(const DiscreteProblem& problem, const Vector& b, const Point& x) {
    const Index e = problem.mesh.locate(x);
    const auto [xi, eta] = reference_coords(problem.mesh, e, x);
    const LagrangeBasis1D g(problem.strain_rule.points);
    const int p = problem.config.p;
    const Index L = problem.L();
    Tensor2 out = Tensor2::Zero();
    for (int t = 0; t < p; ++t)
        for (int s = 0; s < p; ++s) {
            const double phi = g.value(s, xi) * g.value(t, eta);
            const Index i = problem.dofs.strain_node(e, t * p + s);
            for (Index l = 0; l < L; ++l) out += b(i * L + l) * phi * to_tensor(problem.basis[l]);
        }
    return out;
}

Point displacement_at(const DiscreteProblem& problem, const Vector& a, const Point& x) {
    const Index e = problem.mesh.locate(x);
    const auto [xi, eta] = reference_coords(problem.mesh, e, x);
    const LagrangeBasis1D ell(problem.displacement_nodes.points);
    const int p = problem.config.p;
    Point out = Point::Zero();
    for (int bb = 0; bb <= p; ++bb)
        for (int aa = 0; aa <= p; ++aa) {
            const Index node = problem.dofs.grid_node(problem.mesh, e, aa, bb);
            const double N = ell.value(aa, xi) * ell.value(bb, eta);
            for (int k = 0; k < 2; ++k) {
                const Index dof = problem.dofs.displacement_dof(node, k);
                if (dof >= 0) out(k) += a(dof) * N;
            }
        }
    return out;
}

double psi_hp(const DiscreteProblem& problem, const Vector& b) {
    const double sigma_y = problem.config.material.sigma_y;
    return quad_Qhp(problem.mesh, problem.config.p, [&](const Point& x) {
        return sigma_y * plastic_strain_at(problem, b, x).norm();
    });
}

BlockSystem assemble(const DiscreteProblem& problem) {
    const Mesh& mesh = problem.mesh;
    const DofMap& dofs = problem.dofs;
    const MaterialParams& mat = problem.config.material;
    const int p = problem.config.p;
    const Index L = problem.L();
    const Index n_loc = (p + 1) * (p + 1);   // displacement nodes per element
    const Index s_loc = Index(p) * p;        // strain nodes per element
    const double det = 0.25 * mesh.h * mesh.h;
    const double dref = 2.0 / mesh.h;        // d(xi)/dx

    const LagrangeBasis1D ell(problem.displacement_nodes.points);
    const LagrangeBasis1D g(problem.strain_rule.points);
    std::vector<Tensor2> Phi;
    for (const Matrix& m : problem.basis) Phi.push_back(to_tensor(m));

    // Every element is the same square, so the element matrices are shared.
    auto local_strain = [&](Index loc, int k, double xi, double eta) {
        const int aa = static_cast<int>(loc % (p + 1));
        const int bb = static_cast<int>(loc / (p + 1));
        return unit_strain(k, dref * ell.derivative(aa, xi) * ell.value(bb, eta),
                           dref * ell.value(aa, xi) * ell.derivative(bb, eta));
    };

    // A_e: strain-strain products are of degree 2p per coordinate.
    Matrix Ae = Matrix::Zero(2 * n_loc, 2 * n_loc);
    {
        const QuadratureRule rule = gauss_rule(p + 1, 2);
        std::vector<Tensor2> eps(2 * n_loc);
        for (Index q = 0; q < rule.weights.size(); ++q) {
            const double xi = rule.points(0, q), eta = rule.points(1, q);
            for (Index loc = 0; loc < n_loc; ++loc)
                for (int k = 0; k < 2; ++k) eps[2 * loc + k] = local_strain(loc, k, xi, eta);
            const double w = rule.weights(q) * det;
            for (Index j = 0; j < 2 * n_loc; ++j) {
                const Tensor2 sig = mat.elastic_stress(eps[j]);
                for (Index i = 0; i < 2 * n_loc; ++i) Ae(i, j) += w * frobenius(sig, eps[i]);
            }
        }
        Ae = 0.5 * (Ae + Ae.transpose()).eval();
    }

    // B_e and C_e: integrands of degree <= 2p - 1, so the p-point rule on the
    // strain nodes is exact and phi_t(x_q) = delta_tq.
    Matrix Be = Matrix::Zero(2 * n_loc, L * s_loc);
    Matrix Ce = Matrix::Zero(L * s_loc, L * s_loc);
    {
        const auto& pts = problem.strain_rule.points;
        const auto& wts = problem.strain_rule.weights;
        for (int t = 0; t < p; ++t)
            for (int s = 0; s < p; ++s) {
                const Index node = t * p + s;
                const double xi = pts[s], eta = pts[t];
                const double w = wts[s] * wts[t] * det;
                for (Index l = 0; l < L; ++l) {
                    // a((0, Phi_l phi), (v, 0)) = (C(0 - Phi_l phi), eps(v)).
                    const Tensor2 sig = -mat.elastic_stress(Phi[l]);
                    for (Index loc = 0; loc < n_loc; ++loc)
                        for (int k = 0; k < 2; ++k)
                            Be(2 * loc + k, node * L + l) += w * frobenius(sig, local_strain(loc, k, xi, eta));
                    const Tensor2 sig_c = mat.elastic_stress(Phi[l]) + mat.hardening * Phi[l];
                    for (Index kk = 0; kk < L; ++kk) Ce(node * L + kk, node * L + l) += w * frobenius(sig_c, Phi[kk]);
                }
            }
        Ce = 0.5 * (Ce + Ce.transpose()).eval();
    }

    const Dimensions dims = problem.dims();
    const Index n_a = dims.displacement_size();
    const Index n_b = dims.block_size();

    std::vector<Triplet> tA, tB, tC;
    tA.reserve(mesh.element_count() * Ae.size());
    tB.reserve(mesh.element_count() * Be.size());
    tC.reserve(mesh.element_count() * L * L * s_loc);
    Vector l = Vector::Zero(n_a);

    const QuadratureRule volume_rule = gauss_rule(p + 1, 2);
    std::vector<Index> disp_dof(2 * n_loc);
    for (Index e = 0; e < mesh.element_count(); ++e) {
        for (Index loc = 0; loc < n_loc; ++loc) {
            const Index node = dofs.grid_node(mesh, e, static_cast<int>(loc % (p + 1)), static_cast<int>(loc / (p + 1)));
            for (int k = 0; k < 2; ++k) disp_dof[2 * loc + k] = dofs.displacement_dof(node, k);
        }
        const Index strain0 = dofs.strain_node(e, 0) * L;

        for (Index j = 0; j < 2 * n_loc; ++j) {
            if (disp_dof[j] < 0) continue;
            for (Index i = 0; i < 2 * n_loc; ++i)
                if (disp_dof[i] >= 0 && Ae(i, j) != 0.0) tA.emplace_back(disp_dof[i], disp_dof[j], Ae(i, j));
        }
        for (Index j = 0; j < L * s_loc; ++j)
            for (Index i = 0; i < 2 * n_loc; ++i)
                if (disp_dof[i] >= 0 && Be(i, j) != 0.0) tB.emplace_back(disp_dof[i], strain0 + j, Be(i, j));
        for (Index j = 0; j < L * s_loc; ++j)
            for (Index i = 0; i < L * s_loc; ++i)
                if (Ce(i, j) != 0.0) tC.emplace_back(strain0 + i, strain0 + j, Ce(i, j));

        // l = -(f, v) - (g, v)_{Gamma_N}.
        const Point& f = problem.config.volume_force;
        if (f.x() != 0.0 || f.y() != 0.0) {
            for (Index q = 0; q < volume_rule.weights.size(); ++q) {
                const double xi = volume_rule.points(0, q), eta = volume_rule.points(1, q);
                const double w = volume_rule.weights(q) * det;
                for (Index loc = 0; loc < n_loc; ++loc) {
                    const double N = ell.value(static_cast<int>(loc % (p + 1)), xi) *
                                     ell.value(static_cast<int>(loc / (p + 1)), eta);
                    for (int k = 0; k < 2; ++k)
                        if (disp_dof[2 * loc + k] >= 0) l(disp_dof[2 * loc + k]) -= w * f(k) * N;
                }
            }
        }
        if (mesh.on_top_edge(e) && problem.config.load_scale != 0.0) {
            // The traction is a quartic on each side of |x| = 1/2; split there.
            const double x0 = mesh.element_origin(e).x();
            const double x1 = x0 + mesh.h;
            std::vector<double> cuts{x0};
            for (double kink : {-0.5, 0.5})
                if (kink > x0 && kink < x1) cuts.push_back(kink);
            cuts.push_back(x1);
            const QuadratureRule1D edge_rule = gauss_legendre(p + 4);
            for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
                const double half = 0.5 * (cuts[seg + 1] - cuts[seg]);
                const double mid = 0.5 * (cuts[seg + 1] + cuts[seg]);
                for (std::size_t q = 0; q < edge_rule.points.size(); ++q) {
                    const double x = mid + half * edge_rule.points[q];
                    const double w = half * edge_rule.weights[q];
                    const Point traction = top_traction(x, problem.config.load_scale);
                    const double xi = 2.0 * (x - x0) / mesh.h - 1.0;
                    for (int aa = 0; aa <= p; ++aa) {
                        const Index loc = Index(p) * (p + 1) + aa;  // top row, eta = 1
                        const double N = ell.value(aa, xi);
                        for (int k = 0; k < 2; ++k)
                            if (disp_dof[2 * loc + k] >= 0) l(disp_dof[2 * loc + k]) -= w * traction(k) * N;
                    }
                }
            }
        }
    }

    BlockSystem sys;
    sys.dims = dims;
    sys.A.resize(n_a, n_a);
    sys.A.setFromTriplets(tA.begin(), tA.end());
    sys.B.resize(n_a, n_b);
    sys.B.setFromTriplets(tB.begin(), tB.end());
    sys.C.resize(n_b, n_b);
    sys.C.setFromTriplets(tC.begin(), tC.end());
    sys.D.resize(n_b);
    for (Index i = 0; i < dims.N; ++i) sys.D.segment(i * L, L).setConstant(problem.node_weight(i));
    sys.l = l;
    return sys;
}

Vector linear_elastic_displacement(const BlockSystem& sys) {
    Eigen::SimplicialLDLT<SparseMatrix> ldlt(sys.A);
    if (ldlt.info() != Eigen::Success) throw FactorizationError("linear elastic solve: A factorization failed");
    return ldlt.solve(Vector(-sys.l));
}

// ---------------------------------------------------------------------------
// Node functions

Vector chi(const Vector& q, const Vector& mu, double sigma, double rho) {
    const Vector v = mu + rho * q;
    return std::max(sigma, v.norm()) * mu - sigma * v;
}

BlockJacobian chi_subgradient(const Vector& q, const Vector& mu, double sigma, double rho,
                              const KinkPolicy& kink) {
    const Index L = q.size();
    const Vector v = mu + rho * q;
    const double nv = v.norm();
    double tau = 0.0;
    if (std::abs(nv - sigma) <= kink_tol * sigma)
        tau = kink.tau;
    else if (nv > sigma)
        tau = 1.0;

    const Matrix I = Matrix::Identity(L, L);
    BlockJacobian jac{-rho * sigma * I, Matrix::Zero(L, L)};
    if (tau > 0.0) {
        const Matrix dyad = mu * (v / nv).transpose();
        jac.X += tau * rho * dyad;
        jac.Y = tau * (dyad + (nv - sigma) * I);
    }
    return jac;
}

ElastoplasticBlocks::ElastoplasticBlocks(Vector node_yield, double rho, Index L)
    : sigma_(std::move(node_yield)), rho_(rho), L_(L) {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
    if ((sigma_.array() <= 0.0).any()) throw std::invalid_argument("node yield values must be positive");
}

Vector ElastoplasticBlocks::evaluate(Index i, const Vector& b_i, const Vector& c_i) const {
    return chi(b_i, c_i, sigma_(i), rho_);
}

BlockJacobian ElastoplasticBlocks::subgradient(Index i, const Vector& b_i, const Vector& c_i,
                                               const KinkPolicy& kink) const {
    return chi_subgradient(b_i, c_i, sigma_(i), rho_, kink);
}

// ---------------------------------------------------------------------------
// Post-processing

Vector recover_multiplier(const DiscreteProblem& problem, const Vector& a, const Vector& b) {
    const Mesh& mesh = problem.mesh;
    const MaterialParams& mat = problem.config.material;
    const int p = problem.config.p;
    const Index L = problem.L();
    const double det = 0.25 * mesh.h * mesh.h;
    const double dref = 2.0 / mesh.h;
    const LagrangeBasis1D ell(problem.displacement_nodes.points);
    const LagrangeBasis1D g(problem.strain_rule.points);
    const QuadratureRule rule = gauss_rule(p + 1, 2);

    Vector lambda = Vector::Zero(problem.N() * L);
    for (Index e = 0; e < mesh.element_count(); ++e) {
        for (Index q = 0; q < rule.weights.size(); ++q) {
            const double xi = rule.points(0, q), eta = rule.points(1, q);
            const double w = rule.weights(q) * det;

            Tensor2 strain = Tensor2::Zero();
            for (int bb = 0; bb <= p; ++bb)
                for (int aa = 0; aa <= p; ++aa) {
                    const Index node = problem.dofs.grid_node(mesh, e, aa, bb);
                    const double dx = dref * ell.derivative(aa, xi) * ell.value(bb, eta);
                    const double dy = dref * ell.value(aa, xi) * ell.derivative(bb, eta);
                    for (int k = 0; k < 2; ++k) {
                        const Index dof = problem.dofs.displacement_dof(node, k);
                        if (dof >= 0) strain += a(dof) * unit_strain(k, dx, dy);
                    }
                }

            Tensor2 plastic = Tensor2::Zero();
            std::vector<double> phi(static_cast<std::size_t>(p) * p);
            for (int t = 0; t < p; ++t)
                for (int s = 0; s < p; ++s) {
                    phi[t * p + s] = g.value(s, xi) * g.value(t, eta);
                    const Index i = problem.dofs.strain_node(e, t * p + s);
                    for (Index l = 0; l < L; ++l) plastic += b(i * L + l) * phi[t * p + s] * to_tensor(problem.basis[l]);
                }

            const Tensor2 stress = mat.elastic_stress(strain - plastic) - mat.hardening * plastic;
            const Tensor2 dev = stress - 0.5 * stress.trace() * Tensor2::Identity();
            for (Index k = 0; k < p * p; ++k) {
                const Index i = problem.dofs.strain_node(e, k);
                for (Index l = 0; l < L; ++l)
                    lambda(i * L + l) += w * phi[k] * frobenius(dev, to_tensor(problem.basis[l]));
            }
        }
    }
    for (Index i = 0; i < problem.N(); ++i) lambda.segment(i * L, L) /= problem.node_weight(i);
    return lambda;
}

ComplementarityResiduals complementarity_residuals(const DiscreteProblem& problem, const Vector& b,
                                                   const Vector& c) {
    const Index L = problem.L();
    ComplementarityResiduals r;
    for (Index i = 0; i < problem.N(); ++i) {
        const Vector bi = b.segment(i * L, L);
        const Vector ci = c.segment(i * L, L);
        const double sigma = problem.node_yield(i);
        r.feasibility = std::max(r.feasibility, ci.norm() - sigma);
        r.complementarity = std::max(r.complementarity, std::abs(ci.dot(bi) - sigma * bi.norm()));
    }
    return r;
}

void write_fields_csv(const DiscreteProblem& problem, const StateVector& state,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const Index L = problem.L();
    out << "x,y,u_x,u_y";
    for (Index l = 0; l < L; ++l) out << ",p_" << l + 1;
    for (Index l = 0; l < L; ++l) out << ",lambda_" << l + 1;
    out << '\n' << std::scientific << std::setprecision(16);
    for (Index i = 0; i < problem.N(); ++i) {
        const Point x = problem.strain_node_position(i);
        const Point u = displacement_at(problem, state.a, x);
        out << x.x() << ',' << x.y() << ',' << u.x() << ',' << u.y();
        for (Index l = 0; l < L; ++l) out << ',' << state.b(i * L + l);
        for (Index l = 0; l < L; ++l) out << ',' << state.c(i * L + l);
        out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace ssn::elastoplasticity
