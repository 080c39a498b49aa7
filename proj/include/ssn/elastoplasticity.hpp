#pragma once

// Mixed hp-FEM discretization of 2D elastoplasticity with linear kinematic
// hardening on (-1, 1)^2, clamped along y = -1, cast as a block system
//
//   A a + B b + l = 0,   B^T a + C b + D c = 0,   chi_i(b_i, c_i) = 0,
//
// where a holds displacement coefficients, b the plastic strain p and c the
// multiplier lambda at the Gauss-point (strain) nodes, both in an
// orthonormal basis of trace-free symmetric matrices.

#include "ssn/core_system.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <vector>

namespace ssn::elastoplasticity {

using Point = Eigen::Vector2d;
using Tensor2 = Eigen::Matrix2d;

// ---------------------------------------------------------------------------
// Quadrature and 1D Lagrange bases

struct QuadratureRule1D {
    std::vector<double> points;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1].
QuadratureRule1D gauss_legendre(int n);
/// n-point Gauss-Lobatto rule on [-1, 1] (n >= 2), endpoints included.
QuadratureRule1D gauss_lobatto(int n);

/// Tensor-product rule; points are stored column-wise (dim x count).
struct QuadratureRule {
    int dim = 0;
    Matrix points;
    Vector weights;
};

/// Tensor product of the p-point Gauss-Legendre rule on [-1, 1]^d. Throws
/// std::invalid_argument for p < 1 or d not in {1, 2, 3}.
QuadratureRule gauss_rule(int p, int d = 2);

class LagrangeBasis1D {
public:
    explicit LagrangeBasis1D(std::vector<double> nodes);

    int size() const { return static_cast<int>(nodes_.size()); }
    const std::vector<double>& nodes() const { return nodes_; }
    double value(int j, double x) const;
    double derivative(int j, double x) const;

private:
    std::vector<double> nodes_;
    std::vector<double> denominators_;
};

// ---------------------------------------------------------------------------
// Problem data

/// Orthonormal (Frobenius) basis of trace-free symmetric d x d matrices.
std::vector<Matrix> deviatoric_basis(int d);

struct MaterialParams {
    double lambda = 1000.0;
    double mu = 1000.0;
    double hardening = 500.0;  ///< H tau = hardening * tau
    double sigma_y = 5.0;

    void validate() const;
    /// C tau = lambda tr(tau) I + 2 mu tau.
    Tensor2 elastic_stress(const Tensor2& strain) const;
};

/// Uniform mesh of (-1, 1)^2 by axis-aligned squares of size h = 2^-m, m >= -1.
struct Mesh {
    int h_exponent = 0;
    double h = 2.0;
    Index cells_per_side = 1;
    std::vector<Point> vertices;
    std::vector<std::array<Index, 4>> elements;  ///< counterclockwise from lower left
    std::vector<bool> dirichlet_vertex;          ///< on y = -1

    static Mesh uniform(int h_exponent);

    Index element_count() const { return static_cast<Index>(elements.size()); }
    Point element_origin(Index e) const { return vertices[elements[e][0]]; }
    double element_area() const { return h * h; }
    Point map_to_element(Index e, double xi, double eta) const;
    /// Element containing x (ties resolved towards the upper/right element).
    Index locate(const Point& x) const;
    bool on_top_edge(Index e) const { return e / cells_per_side == cells_per_side - 1; }
};

struct DofCounts {
    Index dM = 0;
    Index LN = 0;
};

/// Closed-form counts for the uniform (h = 2^-m, p) discretization in 2D:
/// dM = 2((2p/h + 1)^2 - (2p/h + 1)), LN = 2 (2/h)^2 p^2.
DofCounts count_dofs(int h_exponent, int p);

/// Displacement nodes form a global tensor grid with (p + 1)^2 Gauss-Lobatto
/// nodes per element; strain nodes are the p^2 Gauss points per element
/// numbered zeta(k, T) = T p^2 + k.
struct DofMap {
    int p = 1;
    Index nodes_per_side = 2;
    std::vector<Index> free_index;  ///< per grid node, -1 on the Dirichlet edge
    Index free_nodes = 0;           ///< M
    Index strain_nodes = 0;         ///< N

    static DofMap build(const Mesh& mesh, int p);

    Index grid_node(const Mesh& mesh, Index e, int a, int b) const;
    /// Global index of the displacement coefficient for direction k, or -1.
    Index displacement_dof(Index grid_node, int k) const {
        const Index f = free_index[grid_node];
        return f < 0 ? -1 : 2 * f + k;
    }
    Index strain_node(Index e, Index k) const { return e * p * p + k; }
    Index strain_nodes_per_element() const { return static_cast<Index>(p) * p; }
};

struct ProblemConfig {
    int h_exponent = 4;
    int p = 1;
    MaterialParams material;
    double rho = 25.0;
    double load_scale = 1.0;
    Point volume_force = Point::Zero();

    void validate() const;
};

/// Reads {"h_exponent", "p", "lambda", "mu", "hardening", "sigma_y", "rho",
/// "load_scale"}; missing keys keep their defaults. Throws
/// std::invalid_argument on malformed or invalid values.
ProblemConfig problem_config_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const ProblemConfig& cfg);

/// Traction on the top edge y = 1: (0, -400 min(0, x^2 - 1/4)^2), scaled.
Point top_traction(double x, double scale);

struct DiscreteProblem {
    ProblemConfig config;
    Mesh mesh;
    DofMap dofs;
    std::vector<Matrix> basis;  ///< Phi_1..Phi_L
    Vector node_weight;         ///< D_i = (phi_i, 1)
    Vector node_yield;          ///< sigma_i
    QuadratureRule1D strain_rule;
    QuadratureRule1D displacement_nodes;

    static DiscreteProblem build(const ProblemConfig& cfg);

    Index L() const { return static_cast<Index>(basis.size()); }
    Index N() const { return dofs.strain_nodes; }
    Dimensions dims() const { return Dimensions::mechanics(2, dofs.free_nodes, dofs.strain_nodes); }
    Point strain_node_position(Index i) const;
};

/// Mesh-dependent quadrature: |T| f(center) for p = 1, the p x p Gauss rule
/// mapped to each element otherwise.
double quad_Qhp(const Mesh& mesh, int p, const std::function<double(const Point&)>& f);

/// Plastic strain field at x from strain-node coefficients b (length LN).
Tensor2 plastic_strain_at(const DiscreteProblem& problem, const Vector& b, const Point& x);
/// Displacement field at x from coefficients a (length dM).
Point displacement_at(const DiscreteProblem& problem, const Vector& a, const Point& x);

/// Discrete plasticity functional Q_hp(sigma_y |q_hp|_F).
double psi_hp(const DiscreteProblem& problem, const Vector& b);

BlockSystem assemble(const DiscreteProblem& problem);

/// A a = -l: the linear-elastic displacement (b = 0).
Vector linear_elastic_displacement(const BlockSystem& sys);

// ---------------------------------------------------------------------------
// Node functions

/// max(sigma, |mu + rho q|) mu - sigma (mu + rho q).
Vector chi(const Vector& q, const Vector& mu, double sigma, double rho);

/// Relative width of the band | |v| - sigma | <= kink_tol * sigma in which
/// the kink policy selects tau.
inline constexpr double kink_tol = 1e-12;

/// X = tau rho mu (v/|v|)^T - rho sigma I, Y = tau (mu (v/|v|)^T + (|v| - sigma) I)
/// with v = mu + rho q; tau = 1 outside / 0 inside the yield ball.
BlockJacobian chi_subgradient(const Vector& q, const Vector& mu, double sigma, double rho,
                              const KinkPolicy& kink = {});

class ElastoplasticBlocks final : public BlockFamily {
public:
    ElastoplasticBlocks(Vector node_yield, double rho, Index L);
    explicit ElastoplasticBlocks(const DiscreteProblem& problem)
        : ElastoplasticBlocks(problem.node_yield, problem.config.rho, problem.L()) {}

    Index block_length() const override { return L_; }
    Index block_count() const override { return sigma_.size(); }
    Vector evaluate(Index i, const Vector& b_i, const Vector& c_i) const override;
    BlockJacobian subgradient(Index i, const Vector& b_i, const Vector& c_i,
                              const KinkPolicy& kink) const override;

    double rho() const { return rho_; }
    const Vector& node_yield() const { return sigma_; }

private:
    Vector sigma_;
    double rho_;
    Index L_;
};

// ---------------------------------------------------------------------------
// Post-processing

/// lambda_i = D_i^{-1} (dev(sigma(u, p) - H p), Phi_l phi_i), evaluated from
/// the displacement and plastic strain fields.
Vector recover_multiplier(const DiscreteProblem& problem, const Vector& a, const Vector& b);

struct ComplementarityResiduals {
    double feasibility = 0.0;      ///< max_i (|c_i| - sigma_i)_+
    double complementarity = 0.0;  ///< max_i |c_i^T b_i - sigma_i |b_i||
};
ComplementarityResiduals complementarity_residuals(const DiscreteProblem& problem, const Vector& b,
                                                   const Vector& c);

/// One row per strain node: x, y, u_x, u_y, p_1..p_L, lambda_1..lambda_L.
void write_fields_csv(const DiscreteProblem& problem, const StateVector& state,
                      const std::filesystem::path& path);

}  // namespace ssn::elastoplasticity
