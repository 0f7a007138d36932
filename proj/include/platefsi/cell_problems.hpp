#ifndef PLATEFSI_CELL_PROBLEMS_HPP
#define PLATEFSI_CELL_PROBLEMS_HPP

#include "platefsi/fem/constraints.hpp"
#include "platefsi/fem/solvers.hpp"
#include "platefsi/microcell.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace platefsi {

/// One periodic cell load: unit in-plane strain M_ab ("standard") or the
/// bending load -y3 M_ab. Indices are 1-based and normalized to a <= b.
struct CellLoadCase {
    enum class Kind { standard, bending };
    int alpha = 1;
    int beta = 1;
    Kind kind = Kind::standard;

    std::string name() const;
    bool operator==(const CellLoadCase& o) const = default;
};

/// The minimal set consumed by the effective tensors: pairs (1,1), (2,2),
/// (1,2) in 3D, the single pair (1,1) in the 2D analogue, each in both kinds.
std::vector<CellLoadCase> cell_load_cases(int dim);

/// In-plane pair index of a load case: 3D order (11, 22, 12); 2D only (11).
int pair_index(int dim, int alpha, int beta);
int num_pairs(int dim);

/// Stiffness operator of the periodic solid, assembled once and shared by all
/// load cases. Dof layout: node * dim + component over all mesh nodes;
/// non-solid nodes fixed, lateral slaves folded onto masters.
struct CellOperator {
    int dim = 3;
    fem::SparseOperator stiffness_full;    // symmetric, full dof space
    fem::ConstraintMap constraints;        // periodic + fluid-node elimination
    fem::SparseOperator stiffness_reduced; // R^T K R
    std::vector<Eigen::VectorXd> kernel;   // orthonormal translations (reduced)
    std::vector<Eigen::VectorXd> mean_functionals; // reduced volume weights per component
};

CellOperator assemble_cell_operator(const CellMesh& mesh, const MaterialModel& material);

/// rhs_v = -int_{Z^s} A G : D(v) with G the load-case strain at quadrature
/// points. Full dof space layout as in CellOperator.
Eigen::VectorXd assemble_cell_load(const CellMesh& mesh, const MaterialModel& material,
                                   const CellLoadCase& load_case);

struct CellSolution {
    CellLoadCase load_case;
    /// Nodal displacement over all mesh nodes (node * dim + component);
    /// meaningful on the solid subdomain, zero elsewhere.
    Eigen::VectorXd displacement;
    double residual = 0.0;
    int iterations = 0;
    std::array<int, 3> mesh_resolution{0, 0, 0};
    int dim = 3;
};

/// Solves one cell problem to cfg.tolerance. Periodicity is exact by
/// elimination; the per-component mean over Z^s is shifted to zero exactly.
/// Requires a connected solid (checked through validate_geometry).
CellSolution solve_cell_problem(const CellMesh& mesh, const CellOperator& op,
                                const MaterialModel& material, const CellLoadCase& load_case,
                                const fem::SolveConfig& cfg = {});

/// All load cases of the cell dimension; the independent solves run
/// concurrently on up to `jobs` threads sharing the assembled operator.
std::vector<CellSolution> solve_all_cell_problems(const CellMesh& mesh,
                                                  const MaterialModel& material,
                                                  const fem::SolveConfig& cfg = {}, int jobs = 1);

struct CellResidualDiagnostics {
    double interior_residual = 0.0; // relative to the load norm
    double traction_residual = 0.0; // residual entries of dofs on Gamma and S+-
    double periodicity_mismatch = 0.0;
    std::vector<double> component_means;
};

CellResidualDiagnostics residual_check(const CellMesh& mesh, const CellOperator& op,
                                       const MaterialModel& material, const CellSolution& sol);

/// Discrete energy int_{Z^s} A (D(u)+G) : (D(u)+G) of a nodal field for a
/// load case; the cell solution is its minimizer over periodic mean-zero
/// fields.
double cell_case_energy(const CellMesh& mesh, const MaterialModel& material,
                        const CellLoadCase& load_case, const Eigen::VectorXd& displacement);

/// Strain (engineering Voigt) of a nodal field plus load-case offset at the
/// quadrature points of a solid element.
std::vector<Eigen::VectorXd> element_case_strains(const CellMesh& mesh, int elem,
                                                  const CellLoadCase& load_case,
                                                  const Eigen::VectorXd& displacement);

// Binary snapshot with solver metadata; round-trips exactly.
void write_cell_solution(const CellSolution& sol, const std::string& geometry_hash,
                         double tolerance, const std::filesystem::path& path);
CellSolution read_cell_solution(const std::filesystem::path& path, std::string* geometry_hash = nullptr,
                                double* tolerance = nullptr);

} // namespace platefsi

#endif
