#ifndef PLATEFSI_MICROCELL_HPP
#define PLATEFSI_MICROCELL_HPP

#include "platefsi/fem/elastic_tensor.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace platefsi {

/// Elastic material attached to the solid voxels: a uniform or per-voxel
/// Lame pair, or a uniform/per-voxel Voigt tensor.
struct MaterialModel {
    enum class Kind { uniform_lame, per_voxel_lame, uniform_voigt, per_voxel_voigt };

    Kind kind = Kind::uniform_lame;
    std::array<double, 2> lame{1.0, 1.0};
    std::vector<std::array<double, 2>> lame_per_voxel;
    Eigen::MatrixXd voigt;
    std::vector<Eigen::MatrixXd> voigt_per_voxel;

    fem::ElasticTensor tensor_for_voxel(int dim, int voxel) const;
    bool operator==(const MaterialModel& o) const;
};

/// Voxel description of the reference cell Z = Y x (-1,1): per-voxel
/// solid/fluid indicator plus the elasticity data on the solid part.
/// The last axis spans (-1,1); the in-plane axes span (0,1).
struct MicrostructureSpec {
    int dimension = 3;
    std::array<int, 3> resolution{2, 2, 2}; // n1, n2 (unused in 2D), n3
    std::vector<std::uint8_t> indicator;    // flat row-major, 1 = solid
    MaterialModel material;
    bool allow_uniform = false; // permits all-solid / all-fluid cells

    int n1() const { return resolution[0]; }
    int n2() const { return dimension == 3 ? resolution[1] : 1; }
    int n3() const { return dimension == 3 ? resolution[2] : resolution[1]; }
    int num_voxels() const { return n1() * n2() * n3(); }
    int num_lateral_axes() const { return dimension - 1; }

    /// Flat index with the last axis fastest; j ignored in 2D.
    int voxel_index(int i, int j, int k) const;
    bool is_solid(int i, int j, int k) const;
    int num_solid() const;

    /// Checks the type invariants; throws ParseError / DimensionError.
    void validate() const;

    static MicrostructureSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    bool operator==(const MicrostructureSpec& o) const;
};

MicrostructureSpec parse_microstructure(const std::filesystem::path& path);
void write_microstructure(const MicrostructureSpec& spec, const std::filesystem::path& path);

/// Deterministic random mixed cell: connected solid and fluid phases,
/// laterally periodic indicator, clear of the top/bottom faces.
MicrostructureSpec random_microstructure(int dim, int resolution, std::uint64_t seed);

/// Structured voxel mesh of the reference cell with periodic identification
/// of the lateral faces.
struct CellMesh {
    int dim = 3;
    std::array<int, 3> res{0, 0, 0}; // n1, n2 (=1 in 2D), n3
    Eigen::Vector3d h = Eigen::Vector3d::Zero();

    std::vector<std::uint8_t> elem_solid;
    std::vector<int> solid_elements;
    std::vector<int> fluid_elements;

    struct GammaFacet {
        int solid_elem;
        int fluid_elem;
        int axis;
    };
    std::vector<GammaFacet> gamma_facets;
    std::vector<int> s_plus_elements;  // elements owning a facet on S+
    std::vector<int> s_minus_elements; // elements owning a facet on S-

    std::vector<std::pair<int, int>> periodic_pairs; // (slave node, resolved master)
    std::vector<int> master_of_node;

    // master nodes adjacent to each phase, with compact dof indices
    std::vector<int> solid_nodes;
    std::vector<int> fluid_nodes;
    std::vector<int> solid_node_index; // node -> compact solid index (-1 elsewhere)
    std::vector<int> fluid_node_index;
    std::vector<double> solid_node_weight; // lumped volume of the Q1 hat functions

    double solid_volume = 0.0;
    double fluid_volume = 0.0;
    double total_volume = 0.0;

    /// Element box sizes packed for the element kernels: 2D cells place the
    /// vertical spacing in slot 1.
    Eigen::Vector3d packed_h() const {
        return dim == 2 ? Eigen::Vector3d(h(0), h(2), 0.0) : h;
    }
    /// Vertical offset slot of a packed quadrature point.
    int vertical_slot() const { return dim - 1; }

    int nodes_per_axis(int axis) const;
    int num_nodes() const;
    int num_elements() const;
    int node_id(int i, int j, int k) const;
    std::array<int, 3> node_coords_index(int node) const;
    Eigen::Vector3d node_position(int node) const;
    int elem_id(int i, int j, int k) const;
    std::array<int, 3> elem_coords_index(int e) const;
    /// Corner of the element box in physical coordinates.
    Eigen::Vector3d elem_origin(int e) const;
    /// Element corner nodes, local bit ordering a1 + 2*a2 (+ 4*a3).
    std::vector<int> elem_nodes(int e) const;
};

CellMesh build_cell_mesh(const MicrostructureSpec& spec);

enum class CheckStatus { pass, warn, fail };

struct ValidationCheck {
    std::string name;
    CheckStatus status = CheckStatus::pass;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    bool ok() const;
    bool has_warnings() const;
    const ValidationCheck* find(const std::string& name) const;
    nlohmann::json to_json() const;
};

/// Geometry admissibility checks from the layer construction: phase
/// connectivity under periodic identification, S+- clearance, lateral
/// periodicity of the indicator, and connectivity of the assembled layer.
ValidationReport validate_geometry(const CellMesh& mesh);

/// Same checks, raising ValidationError when any hard check fails.
ValidationReport validate_geometry_or_throw(const CellMesh& mesh);

} // namespace platefsi

#endif
