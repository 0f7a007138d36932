#ifndef PLATEFSI_EFFECTIVE_TENSORS_HPP
#define PLATEFSI_EFFECTIVE_TENSORS_HPP

#include "platefsi/cell_problems.hpp"

#include <json.hpp>

namespace platefsi {

/// Homogenized plate tensors over the in-plane symmetric pairs.
/// 3D cells give 2x2x2x2 tensors stored on the pair basis (11, 22, 12); the
/// 2D analogue reduces every tensor to a scalar. b couples bending (rows) to
/// membrane strain (columns).
struct EffectivePlateTensors {
    int dim = 3; // cell dimension
    Eigen::MatrixXd a; // membrane x membrane
    Eigen::MatrixXd b; // bending x membrane
    Eigen::MatrixXd c; // bending x bending
    double solid_volume = 0.0;

    struct Provenance {
        std::string geometry_hash;
        std::array<int, 3> resolution{0, 0, 0};
        double solver_tolerance = 0.0;
    } provenance;

    double a_entry(int al, int be, int ga, int de) const;
    double b_entry(int al, int be, int ga, int de) const;
    double c_entry(int al, int be, int ga, int de) const;

    /// Slice-mode scalar reductions (the 1111 entries).
    double a_scalar() const { return a(0, 0); }
    double b_scalar() const { return b(0, 0); }
    double c_scalar() const { return c(0, 0); }

    /// Gram matrix of the combined quadratic form (E, H) -> aE:E + 2bH:E +
    /// cH:H in Mandel pair coordinates; 6x6 for 3D cells, 2x2 for 2D.
    Eigen::MatrixXd block_gram() const;

    nlohmann::json to_json() const;
    static EffectivePlateTensors from_json(const nlohmann::json& j);
};

/// Quadrature evaluation of the three homogenized-tensor formulas from the
/// full set of converged cell solutions (six in 3D, two in 2D).
EffectivePlateTensors compute_tensors(const CellMesh& mesh, const MaterialModel& material,
                                      const std::vector<CellSolution>& solutions,
                                      const EffectivePlateTensors::Provenance& provenance = {});

struct TensorAuditReport {
    double symmetry_defect = 0.0; // relative, major symmetry of a and c
    double min_eigenvalue = 0.0;  // of the combined block Gram matrix
    bool symmetry_pass = false;
    bool coercivity_pass = false;
    bool pass() const { return symmetry_pass && coercivity_pass; }
    nlohmann::json to_json() const;
};

/// Symmetry and coercivity audit; always returns a report.
TensorAuditReport audit_tensors(const EffectivePlateTensors& t,
                                double symmetry_threshold = 1e-10);

void write_tensors(const EffectivePlateTensors& t, const std::filesystem::path& path);
EffectivePlateTensors read_tensors(const std::filesystem::path& path);

} // namespace platefsi

#endif
