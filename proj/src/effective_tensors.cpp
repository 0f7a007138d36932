#include "platefsi/effective_tensors.hpp"

#include "platefsi/errors.hpp"
#include "platefsi/fem/elements.hpp"

#include <cmath>
#include <fstream>

namespace platefsi {

namespace {

int pair_of(int dim, int al, int be) { return pair_index(dim, al, be); }

nlohmann::json nested_tensor_json(const EffectivePlateTensors& t, char which) {
    auto entry = [&](int al, int be, int ga, int de) {
        switch (which) {
        case 'a':
            return t.a_entry(al, be, ga, de);
        case 'b':
            return t.b_entry(al, be, ga, de);
        default:
            return t.c_entry(al, be, ga, de);
        }
    };
    if (t.dim == 2) {
        // scalars in the 2D analogue
        return nlohmann::json(entry(1, 1, 1, 1));
    }
    nlohmann::json out = nlohmann::json::array();
    for (int al = 1; al <= 2; ++al) {
        nlohmann::json l1 = nlohmann::json::array();
        for (int be = 1; be <= 2; ++be) {
            nlohmann::json l2 = nlohmann::json::array();
            for (int ga = 1; ga <= 2; ++ga) {
                nlohmann::json l3 = nlohmann::json::array();
                for (int de = 1; de <= 2; ++de)
                    l3.push_back(entry(al, be, ga, de));
                l2.push_back(l3);
            }
            l1.push_back(l2);
        }
        out.push_back(l1);
    }
    return out;
}

Eigen::MatrixXd pair_matrix_from_nested(const nlohmann::json& j, int dim, bool bending_rows) {
    const int np = num_pairs(dim);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(np, np);
    if (dim == 2) {
        m(0, 0) = j.get<double>();
        return m;
    }
    static const int pair_rep[3][2] = {{1, 1}, {2, 2}, {1, 2}};
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) {
            const int al = pair_rep[p][0], be = pair_rep[p][1];
            const int ga = pair_rep[q][0], de = pair_rep[q][1];
            m(p, q) = j.at(static_cast<std::size_t>(al - 1))
                          .at(static_cast<std::size_t>(be - 1))
                          .at(static_cast<std::size_t>(ga - 1))
                          .at(static_cast<std::size_t>(de - 1))
                          .get<double>();
        }
    (void)bending_rows;
    return m;
}

} // namespace

double EffectivePlateTensors::a_entry(int al, int be, int ga, int de) const {
    return a(pair_of(dim, al, be), pair_of(dim, ga, de));
}
double EffectivePlateTensors::b_entry(int al, int be, int ga, int de) const {
    return b(pair_of(dim, al, be), pair_of(dim, ga, de));
}
double EffectivePlateTensors::c_entry(int al, int be, int ga, int de) const {
    return c(pair_of(dim, al, be), pair_of(dim, ga, de));
}

Eigen::MatrixXd EffectivePlateTensors::block_gram() const {
    const int np = num_pairs(dim);
    Eigen::VectorXd s(np);
    for (int i = 0; i < np; ++i)
        s(i) = (dim == 3 && i == 2) ? std::sqrt(2.0) : 1.0;
    Eigen::MatrixXd g(2 * np, 2 * np);
    const Eigen::MatrixXd ah = s.asDiagonal() * a * s.asDiagonal();
    const Eigen::MatrixXd bh = s.asDiagonal() * b * s.asDiagonal();
    const Eigen::MatrixXd ch = s.asDiagonal() * c * s.asDiagonal();
    g.topLeftCorner(np, np) = ah;
    g.topRightCorner(np, np) = bh.transpose();
    g.bottomLeftCorner(np, np) = bh;
    g.bottomRightCorner(np, np) = ch;
    return g;
}

nlohmann::json EffectivePlateTensors::to_json() const {
    nlohmann::json j;
    j["dimension"] = dim;
    j["a_star"] = nested_tensor_json(*this, 'a');
    j["b_star"] = nested_tensor_json(*this, 'b');
    j["c_star"] = nested_tensor_json(*this, 'c');
    j["solid_volume"] = solid_volume;
    nlohmann::json prov;
    prov["geometry_hash"] = provenance.geometry_hash;
    nlohmann::json res = nlohmann::json::array();
    for (int d = 0; d < (dim == 3 ? 3 : 2); ++d)
        res.push_back(provenance.resolution[static_cast<std::size_t>(d)]);
    prov["resolution"] = res;
    prov["solver_tolerance"] = provenance.solver_tolerance;
    j["provenance"] = prov;
    return j;
}

EffectivePlateTensors EffectivePlateTensors::from_json(const nlohmann::json& j) {
    EffectivePlateTensors t;
    try {
        t.dim = j.at("dimension").get<int>();
        t.a = pair_matrix_from_nested(j.at("a_star"), t.dim, false);
        t.b = pair_matrix_from_nested(j.at("b_star"), t.dim, true);
        t.c = pair_matrix_from_nested(j.at("c_star"), t.dim, true);
        t.solid_volume = j.at("solid_volume").get<double>();
        if (j.contains("provenance")) {
            const auto& p = j.at("provenance");
            t.provenance.geometry_hash = p.value("geometry_hash", std::string{});
            if (p.contains("resolution")) {
                const auto& r = p.at("resolution");
                for (std::size_t d = 0; d < r.size() && d < 3; ++d)
                    t.provenance.resolution[d] = r.at(d).get<int>();
            }
            t.provenance.solver_tolerance = p.value("solver_tolerance", 0.0);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("tensors: ") + e.what());
    }
    return t;
}

EffectivePlateTensors compute_tensors(const CellMesh& mesh, const MaterialModel& material,
                                      const std::vector<CellSolution>& solutions,
                                      const EffectivePlateTensors::Provenance& provenance) {
    const int dim = mesh.dim;
    const auto cases = cell_load_cases(dim);
    if (solutions.size() != cases.size())
        throw DimensionError("compute_tensors: expected " + std::to_string(cases.size()) +
                             " cell solutions, got " + std::to_string(solutions.size()));
    const int np = num_pairs(dim);

    // index solutions by (kind, pair); reject mismatched meshes
    std::vector<const CellSolution*> standard(static_cast<std::size_t>(np), nullptr);
    std::vector<const CellSolution*> bending(static_cast<std::size_t>(np), nullptr);
    for (const auto& sol : solutions) {
        if (sol.dim != dim || sol.mesh_resolution != mesh.res)
            throw DimensionError("compute_tensors: solution " + sol.load_case.name() +
                                 " was computed on a different mesh");
        const int p = pair_of(dim, sol.load_case.alpha, sol.load_case.beta);
        auto& slot = sol.load_case.kind == CellLoadCase::Kind::standard
                         ? standard[static_cast<std::size_t>(p)]
                         : bending[static_cast<std::size_t>(p)];
        if (slot)
            throw DimensionError("compute_tensors: duplicate load case " + sol.load_case.name());
        slot = &sol;
    }
    for (int p = 0; p < np; ++p)
        if (!standard[static_cast<std::size_t>(p)] || !bending[static_cast<std::size_t>(p)])
            throw DimensionError("compute_tensors: missing load case for pair " +
                                 std::to_string(p));

    EffectivePlateTensors t;
    t.dim = dim;
    t.a = Eigen::MatrixXd::Zero(np, np);
    t.b = Eigen::MatrixXd::Zero(np, np);
    t.c = Eigen::MatrixXd::Zero(np, np);
    t.solid_volume = mesh.solid_volume;
    t.provenance = provenance;

    const auto qps = fem::q1_elasticity_points(dim, mesh.packed_h());
    std::vector<std::vector<Eigen::VectorXd>> std_strain(static_cast<std::size_t>(np));
    std::vector<std::vector<Eigen::VectorXd>> bend_strain(static_cast<std::size_t>(np));
    for (int e : mesh.solid_elements) {
        const auto coords = mesh.elem_coords_index(e);
        const int voxel = dim == 2 ? coords[0] * mesh.res[2] + coords[2]
                                   : (coords[0] * mesh.res[1] + coords[1]) * mesh.res[2] + coords[2];
        const auto a_tensor = material.tensor_for_voxel(dim, voxel);
        for (int p = 0; p < np; ++p) {
            std_strain[static_cast<std::size_t>(p)] = element_case_strains(
                mesh, e, standard[static_cast<std::size_t>(p)]->load_case,
                standard[static_cast<std::size_t>(p)]->displacement);
            bend_strain[static_cast<std::size_t>(p)] = element_case_strains(
                mesh, e, bending[static_cast<std::size_t>(p)]->load_case,
                bending[static_cast<std::size_t>(p)]->displacement);
        }
        for (std::size_t q = 0; q < qps.size(); ++q) {
            const double w = qps[q].weight;
            for (int p = 0; p < np; ++p) {
                const Eigen::VectorXd sp =
                    a_tensor.voigt() * std_strain[static_cast<std::size_t>(p)][q];
                const Eigen::VectorXd bp =
                    a_tensor.voigt() * bend_strain[static_cast<std::size_t>(p)][q];
                for (int r = 0; r < np; ++r) {
                    t.a(p, r) += w * sp.dot(std_strain[static_cast<std::size_t>(r)][q]);
                    t.b(p, r) += w * bp.dot(std_strain[static_cast<std::size_t>(r)][q]);
                    t.c(p, r) += w * bp.dot(bend_strain[static_cast<std::size_t>(r)][q]);
                }
            }
        }
    }
    t.a /= mesh.solid_volume;
    t.b /= mesh.solid_volume;
    t.c /= mesh.solid_volume;
    return t;
}

TensorAuditReport audit_tensors(const EffectivePlateTensors& t, double symmetry_threshold) {
    TensorAuditReport rep;
    const double scale =
        std::max({t.a.cwiseAbs().maxCoeff(), t.c.cwiseAbs().maxCoeff(), 1e-300});
    const double da = (t.a - t.a.transpose()).cwiseAbs().maxCoeff();
    const double dc = (t.c - t.c.transpose()).cwiseAbs().maxCoeff();
    rep.symmetry_defect = std::max(da, dc) / scale;
    rep.symmetry_pass = rep.symmetry_defect <= symmetry_threshold;
    Eigen::MatrixXd g = t.block_gram();
    g = 0.5 * (g + g.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    rep.min_eigenvalue = es.eigenvalues().minCoeff();
    rep.coercivity_pass = rep.min_eigenvalue > 0.0;
    return rep;
}

nlohmann::json TensorAuditReport::to_json() const {
    nlohmann::json j;
    j["symmetry_defect"] = symmetry_defect;
    j["min_eigenvalue"] = min_eigenvalue;
    j["symmetry_pass"] = symmetry_pass;
    j["coercivity_pass"] = coercivity_pass;
    j["pass"] = pass();
    return j;
}

void write_tensors(const EffectivePlateTensors& t, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write tensors file: " + path.string());
    out << t.to_json().dump(2) << "\n";
}

EffectivePlateTensors read_tensors(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open tensors file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("tensors " + path.string() + ": " + e.what());
    }
    return EffectivePlateTensors::from_json(j);
}

} // namespace platefsi
