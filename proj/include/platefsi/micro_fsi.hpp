#ifndef PLATEFSI_MICRO_FSI_HPP
#define PLATEFSI_MICRO_FSI_HPP

#include "platefsi/expr.hpp"
#include "platefsi/fem/constraints.hpp"
#include "platefsi/fem/solvers.hpp"
#include "platefsi/microcell.hpp"

#include <json.hpp>

#include <memory>
#include <vector>

namespace platefsi {

/// Epsilon-resolved linear FSI on the 2D vertical slice: Stokes in the bulk
/// rectangles, a periodically perforated elastic layer of thickness 2*eps
/// built from the 2D reference cell, with the printed 1/eps and 1/eps^3
/// scalings on the layer terms. Velocity is the primary unknown in both
/// phases (kinematic interface coupling by shared dofs); the solid
/// displacement is integrated from its velocity.
struct MicroConfig {
    int epsilon_inverse = 4; // eps = 1 / k
    MicrostructureSpec layer_cell; // 2D cell spec
    double H = 1.0;
    double L = 1.0; // must be an integer multiple of eps
    int nz_bulk = 8;         // graded bulk elements per side
    int cell_resolution = 1; // per-cell mesh refinement of the voxel grid
    double dt = 0.01;
    double T = 0.1;
    double theta = 1.0;

    Expression f_plus_x, f_plus_z;   // bulk forcing before the -eps e3 shift
    Expression f_minus_x, f_minus_z;
    Expression f_layer_x, f_layer_z; // layer fluid forcing f^M(t, x)
    Expression v0_plus_x, v0_plus_z; // initial bulk velocity
    Expression v0_minus_x, v0_minus_z;

    fem::SolveConfig solver;
    int snapshot_stride = 0;

    double eps() const { return 1.0 / epsilon_inverse; }
    void validate() const;
    static MicroConfig from_json(const nlohmann::json& j,
                                 const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const;
};

enum class MicroRegion { bulk_minus, layer_fluid, layer_solid, bulk_plus };

class MicroSystem {
public:
    explicit MicroSystem(const MicroConfig& cfg);

    const MicroConfig& config() const { return cfg_; }

    // mesh queries
    int columns() const { return nxe_; }
    int rows() const { return nze_; }
    int num_elements() const { return nxe_ * nze_; }
    int q2_nodes() const { return (2 * nxe_ + 1) * (2 * nze_ + 1); }
    int n_full() const { return n_full_; }
    int n_velocity() const { return 2 * q2_nodes(); }
    MicroRegion element_region(int e) const;
    bool element_is_solid(int e) const { return element_region(e) == MicroRegion::layer_solid; }
    /// Element box: corner (x0, z0) and sizes (hx, hz).
    Eigen::Vector4d element_box(int e) const;
    double node_z(int j) const { return zq2_[static_cast<std::size_t>(j)]; }
    int q2_node(int i, int j) const { return j * (2 * nxe_ + 1) + i; }
    const std::vector<double>& z_levels() const { return zlev_; }

    const fem::ConstraintMap& constraints() const { return map_; }

    // evaluation inside an element at local coordinates
    Eigen::Vector2d velocity_local(const Eigen::VectorXd& full, int e, double xi,
                                   double eta) const;
    Eigen::Vector2d displacement_local(const Eigen::VectorXd& u, int e, double xi,
                                       double eta) const;
    /// Engineering strain (e11, e22, 2 e12) of a velocity-layout field.
    Eigen::Vector3d strain_local(const Eigen::VectorXd& u, int e, double xi, double eta) const;
    /// Pressure of the element's own region (layer fluid is its own field).
    double pressure_local(const Eigen::VectorXd& full, int e, double xi, double eta) const;

    double energy(const Eigen::VectorXd& full, const Eigen::VectorXd& u) const;
    std::array<double, 2> divergence_residual(const Eigen::VectorXd& full) const;

    Eigen::VectorXd step_rhs(const Eigen::VectorXd& full, const Eigen::VectorXd& u,
                             double t_now) const;
    const fem::SparseFactorization& step_solver() const { return lu_; }
    const fem::SparseOperator& step_matrix_full() const { return step_full_; }
    Eigen::VectorXd reduce(const Eigen::VectorXd& v) const;
    Eigen::VectorXd expand(const Eigen::VectorXd& v) const;
    /// Mask of velocity dofs carrying solid displacement.
    const std::vector<char>& solid_vdof() const { return solid_vdof_; }

    Eigen::VectorXd initial_full() const;
    /// Stationary scaled Stokes preprocessing producing a compatible initial
    /// velocity from stationary force data (assumption-style construction).
    Eigen::VectorXd initial_from_stationary_forcing(const Expression& fpx, const Expression& fpz,
                                                    const Expression& fmx, const Expression& fmz,
                                                    const Expression& flx,
                                                    const Expression& flz) const;

    /// Instantaneous norm table entries (szenario norms, unscaled).
    struct Norms {
        double v_bulk, dv_bulk, p_bulk;
        double v_layer, dv_layer, p_layer;
        double w_solid, u_inplane, u_vertical, du_solid;
    };
    Norms norms(const Eigen::VectorXd& full, const Eigen::VectorXd& u) const;

private:
    void build_mesh();
    void build_constraints();
    void assemble();

    MicroConfig cfg_;
    int nxe_ = 0, nze_ = 0;       // element grid
    int cells_ = 0;               // layer cells along Sigma
    int c1_ = 0, c3_ = 0;         // per-cell element counts
    std::vector<double> zlev_;    // element row boundaries (ascending)
    std::vector<double> zq2_;     // Q2 node heights
    double hx_ = 0.0;
    int n_full_ = 0;
    int off_pp_ = 0, off_pm_ = 0, off_pl_ = 0;
    int n_pp_ = 0, n_pm_ = 0, n_pl_ = 0;
    std::vector<int> layer_pressure_index_; // local Q1 layer corner -> dof (-1 none)
    std::vector<char> solid_vdof_;

    fem::ConstraintMap map_;
    fem::SparseOperator mass_eff_;   // bulk + layer/eps + solid/eps velocity mass
    fem::SparseOperator visc_eff_;   // bulk + layer-fluid/eps viscous operator
    fem::SparseOperator elast_;      // solid elasticity (unscaled)
    fem::SparseOperator div_;        // pressure rows (region-weighted)
    // region norm operators
    fem::SparseOperator mass_bulk_, mass_layer_f_, mass_solid_, mass_solid_x_, mass_solid_z_;
    fem::SparseOperator dd_bulk_, dd_layer_f_, dd_solid_;
    fem::SparseOperator pmass_bulk_, pmass_layer_;
    fem::SparseOperator step_full_;
    fem::SparseFactorization lu_;
};

struct MicroState {
    double t = 0.0;
    Eigen::VectorXd full; // [V, P+, P-, P_layer]
    Eigen::VectorXd u;    // displacement in velocity layout (solid dofs active)
};

MicroSystem build_micro_system(const MicroConfig& cfg);
MicroState advance_micro(const MicroSystem& sys, const MicroState& state);

struct MicroRunResult {
    std::shared_ptr<MicroSystem> system;
    std::vector<MicroState> snapshots;
    std::vector<std::array<double, 4>> series; // t, energy, div bulk, div layer
    MicroSystem::Norms sup_norms{};            // time-sup of the spatial norms
};

MicroRunResult run_micro(const MicroConfig& cfg);

/// The a priori estimate table: pre-scaled quantities (sup over time).
struct AprioriReport {
    double eps;
    std::vector<std::pair<std::string, double>> rows;
    nlohmann::json to_json() const;
};
AprioriReport apriori_report(const MicroRunResult& run);

void write_micro_run(const MicroRunResult& run, const std::filesystem::path& dir);
MicroRunResult read_micro_run(const std::filesystem::path& dir);

} // namespace platefsi

#endif
