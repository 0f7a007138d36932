#ifndef PLATEFSI_CORRECTORS_HPP
#define PLATEFSI_CORRECTORS_HPP

#include "platefsi/cell_problems.hpp"
#include "platefsi/macro_fsi.hpp"
#include "platefsi/micro_fsi.hpp"

#include <map>

namespace platefsi {

/// Second-order corrector on the cell: u2 = sum_ij [ membrane_strain_ij
/// chi_ij + hessian_ij chi^B_ij ], evaluated nodewise on the cell mesh.
/// Strain inputs are (dim-1) x (dim-1) symmetric matrices (scalars in the 2D
/// analogue).
Eigen::VectorXd reconstruct_u2(const CellMesh& cell, const std::vector<CellSolution>& solutions,
                               const Eigen::MatrixXd& membrane_strain,
                               const Eigen::MatrixXd& hessian_u3);

/// Point evaluation of a nodal cell field (Q1 interpolation) and its strain.
Eigen::VectorXd cell_field_value(const CellMesh& cell, const Eigen::VectorXd& nodal, double y1,
                                 double y3);
Eigen::VectorXd cell_field_strain(const CellMesh& cell, const Eigen::VectorXd& nodal, double y1,
                                  double y3);

/// Approximation fields of the two-scale expansion, bound to a macro run and
/// the cell data, sampled anywhere on the epsilon geometry.
/// Discrete time derivatives use the scheme-consistent combination
/// theta*W^n + (1-theta)*W^{n-1}, which reproduces the backward difference of
/// the integrated displacement exactly.
class ReconstructedFields {
public:
    ReconstructedFields(std::shared_ptr<const MacroRunResult> macro, const CellMesh* cell,
                        const std::vector<CellSolution>* cell_solutions, double eps);

    double eps() const { return eps_; }
    std::size_t steps() const;
    bool has_cell_data() const { return cell_ != nullptr && solutions_ != nullptr; }

    /// v_app^{+-}(t, x) = v0^{+-}(t, x -+ eps e3); side 0 is the upper bulk.
    Eigen::Vector2d bulk_velocity(std::size_t n, int side, double x, double z) const;
    double bulk_pressure(std::size_t n, int side, double x, double z) const;

    /// v_app^M = dt_u3 e3 + eps [dt_u1 - (z/eps) dx dt_u3] e1.
    Eigen::Vector2d layer_fluid_velocity(std::size_t n, double x, double z) const;
    /// p_app^M = 0 (the layer pressure two-scale limit).
    double layer_pressure(std::size_t /*n*/, double /*x*/, double /*z*/) const { return 0.0; }

    /// Kirchhoff-Love orders of the solid displacement:
    /// u3 e3 + eps [u1 - (z/eps) dx u3] e1.
    Eigen::Vector2d solid_displacement_leading(std::size_t n, double x, double z) const;
    /// Leading orders plus eps^2 u2(t, x, x/eps); needs cell data.
    Eigen::Vector2d solid_displacement(std::size_t n, double x, double z) const;
    /// Two-scale limit of eps^{-1} D(u): engineering Voigt (e11, e22, 2 e12);
    /// needs cell data.
    Eigen::Vector3d solid_scaled_strain(std::size_t n, double x, double z) const;

    // plate data at a step (value, dx, dxx)
    Eigen::Vector3d u3_eval(std::size_t n, double x) const;
    Eigen::Vector3d dt_u3_eval(std::size_t n, double x) const;
    Eigen::Vector2d u1_eval(std::size_t n, double x) const;  // value, dx
    Eigen::Vector2d dt_u1_eval(std::size_t n, double x) const;

private:
    Eigen::VectorXd dt_u3_dofs(std::size_t n) const;
    std::pair<double, double> cell_point(double x, double z) const; // (y1, y3)

    std::shared_ptr<const MacroRunResult> macro_;
    const CellMesh* cell_ = nullptr;
    const std::vector<CellSolution>* solutions_ = nullptr;
    const CellSolution* chi_std_ = nullptr;  // slice pair (1,1)
    const CellSolution* chi_bend_ = nullptr;
    double eps_ = 0.0;
};

ReconstructedFields reconstruct_fields(std::shared_ptr<const MacroRunResult> macro,
                                       const CellMesh* cell,
                                       const std::vector<CellSolution>* cell_solutions,
                                       double eps);

/// Relative space-time L2 error table between micro runs and the
/// reconstruction, with log-log slope fits over the epsilon values.
struct CompareReport {
    std::vector<double> epsilons;
    std::vector<std::string> quantities;
    std::map<std::string, std::vector<double>> values; // per quantity, by run order
    std::map<std::string, double> slopes;              // vs eps (only if >= 2 runs)
    bool slopes_available = false;
    std::string notice;

    double value(const std::string& quantity, std::size_t run) const;
    std::string to_csv() const;
    nlohmann::json to_json() const;
};

/// Error metrics per micro run: bulk velocities per side, layer vertical
/// displacement vs u3, order-eps in-plane displacement, scaled strain (when
/// cell data is present), layer fluid velocity vs (0, dt_u3), the first-order
/// corrected variant, and the layer pressure norm.
CompareReport compare_runs(std::shared_ptr<const MacroRunResult> macro, const CellMesh* cell,
                           const std::vector<CellSolution>* cell_solutions,
                           const std::vector<const MicroRunResult*>& micro_runs);

/// Largest pointwise defect of the built-in identity: v_app^M minus the
/// backward time difference of the leading displacement orders, over all
/// layer samples of the micro mesh at all steps.
double corrector_identity_defect(const ReconstructedFields& recon, const MicroSystem& micro);

} // namespace platefsi

#endif
