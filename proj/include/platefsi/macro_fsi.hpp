#ifndef PLATEFSI_MACRO_FSI_HPP
#define PLATEFSI_MACRO_FSI_HPP

#include "platefsi/effective_tensors.hpp"
#include "platefsi/expr.hpp"
#include "platefsi/fem/constraints.hpp"
#include "platefsi/fem/solvers.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <vector>

namespace platefsi {

/// Effective interface model on the 2D vertical slice: Stokes in the two
/// rectangles Omega+- = (0,L) x (0,H) / (-H,0), an Euler-Bernoulli plate and a
/// quasi-static membrane on Sigma = (0,L) x {0}. Coefficients are the slice
/// reductions a*, b*, c* of the homogenized tensors.
struct MacroConfig {
    double H = 1.0;
    double L = 1.0;
    int nx = 16;      // bulk elements along Sigma
    int nz = 8;       // bulk elements across each half
    int n_plate = 32; // plate / membrane elements
    double dt = 0.01;
    double T = 0.1;
    double theta = 1.0; // 1 = implicit Euler, 0.5 = trapezoid

    double a_star = 1.0;
    double b_star = 0.0;
    double c_star = 1.0;
    double viscosity = 1.0;
    double m_inertia = 1.0;  // plate inertia coefficient
    double m_stiffness = 1.0; // tensor-block coefficient

    Expression f_plus_x, f_plus_z;   // bulk forcing f0+(t, x, z)
    Expression f_minus_x, f_minus_z; // bulk forcing f0-(t, x, z)
    Expression plate_forcing;        // g(t, x) = integral of the vertical layer forcing
    Expression v0_plus_x, v0_plus_z; // initial bulk velocity v^{0,+}
    Expression v0_minus_x, v0_minus_z;

    int snapshot_stride = 0; // 0 disables VTK field snapshots
    fem::SolveConfig solver;

    void validate() const;
    /// Slice tensors as a 2D-analogue tensor set (for the assembly audit).
    EffectivePlateTensors slice_tensors() const;

    static MacroConfig from_json(const nlohmann::json& j,
                                 const std::filesystem::path& base_dir = {});
    nlohmann::json to_json() const; // forcing echoed as source strings
};

/// Dof layout of the monolithic unknown X = [V+, V-, P+, P-, W, U1]:
/// biquadratic velocities per side, bilinear pressures per side, Hermite plate
/// velocity, P1 membrane displacement. The transverse displacement u3 is a
/// dependent state integrated from W.
class MacroSystem {
public:
    explicit MacroSystem(const MacroConfig& cfg);

    const MacroConfig& config() const { return cfg_; }

    // layout
    int q2_nodes_per_side() const { return (2 * cfg_.nx + 1) * (2 * cfg_.nz + 1); }
    int q1_nodes_per_side() const { return (cfg_.nx + 1) * (cfg_.nz + 1); }
    int plate_nodes() const { return cfg_.n_plate + 1; }
    int n_full() const { return n_full_; }
    int off_v(int side) const { return side == 0 ? 0 : 2 * q2_nodes_per_side(); }
    int off_p(int side) const {
        return 4 * q2_nodes_per_side() + (side == 0 ? 0 : q1_nodes_per_side());
    }
    int off_w() const { return 4 * q2_nodes_per_side() + 2 * q1_nodes_per_side(); }
    int off_u1() const { return off_w() + 2 * plate_nodes(); }

    int q2_node(int i, int j) const { return j * (2 * cfg_.nx + 1) + i; }
    /// Physical position of a Q2 node; side 0 is Omega+, side 1 is Omega-.
    Eigen::Vector2d q2_position(int side, int i, int j) const;

    const fem::ConstraintMap& constraints() const { return map_; }

    // field evaluation on the slice (used by the corrector module)
    Eigen::Vector2d bulk_velocity(const Eigen::VectorXd& full, int side, double x,
                                  double z) const;
    double bulk_pressure(const Eigen::VectorXd& full, int side, double x, double z) const;
    /// Hermite evaluation of a plate dof vector: value and first/second derivative.
    Eigen::Vector3d plate_eval(const Eigen::VectorXd& plate_dofs, double x) const;
    /// Plate dof slice of the monolithic vector (W block).
    Eigen::VectorXd plate_velocity_dofs(const Eigen::VectorXd& full) const;
    /// Membrane value and derivative.
    Eigen::Vector2d membrane_eval(const Eigen::VectorXd& full, double x) const;

    double energy(const Eigen::VectorXd& full, const Eigen::VectorXd& u3) const;
    /// ||B v|| / (1 + ||v||) per side.
    std::array<double, 2> divergence_residual(const Eigen::VectorXd& full) const;

    // step machinery
    Eigen::VectorXd step_rhs(const Eigen::VectorXd& full, const Eigen::VectorXd& u3,
                             double t_now) const;
    const fem::SparseFactorization& step_solver() const { return lu_; }
    const fem::SparseOperator& step_matrix_reduced() const { return step_reduced_; }
    Eigen::VectorXd reduce(const Eigen::VectorXd& full_rhs) const;
    Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const;

    /// Projected initial state: velocity expressions sampled, compatibility
    /// checked (zero trace on walls and Sigma), then L2-projected onto the
    /// discretely divergence-free subspace.
    Eigen::VectorXd initial_full() const;

private:
    void build_layout();
    void build_constraints();
    void assemble_blocks();
    void assemble_step_matrix();

    MacroConfig cfg_;
    int n_full_ = 0;
    double hx_ = 0, hz_ = 0, hp_ = 0;
    fem::ConstraintMap map_;
    fem::SparseOperator mass_v_, visc_, div_, plate_mass_, plate_bend_, membrane_stiff_,
        coupling_bw_; // coupling rows W, cols U1
    fem::SparseOperator step_full_;
    fem::SparseOperator step_reduced_;
    fem::SparseFactorization lu_;
};

struct MacroState {
    double t = 0.0;
    Eigen::VectorXd full; // [V+, V-, P+, P-, W, U1]
    Eigen::VectorXd u3;   // Hermite displacement dofs
};

/// Spec operations.
MacroSystem assemble_macro_system(const MacroConfig& cfg);
MacroState advance(const MacroSystem& sys, const MacroState& state);
double energy(const MacroSystem& sys, const MacroState& state);

struct MacroRunResult {
    std::shared_ptr<MacroSystem> system;
    std::vector<MacroState> snapshots; // every step including t = 0
    std::vector<std::array<double, 6>> series; // t, energy, u3 mid, dt u3 mid, div+, div-
};

MacroRunResult run_macro(const MacroConfig& cfg);

/// Writes series.csv, states.bin, run.json (and VTK snapshots at the stride)
/// into the directory.
void write_macro_run(const MacroRunResult& run, const std::filesystem::path& dir);
/// Rebuilds the system from run.json and reloads the trajectory.
MacroRunResult read_macro_run(const std::filesystem::path& dir);

} // namespace platefsi

#endif
