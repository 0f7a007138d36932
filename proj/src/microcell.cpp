#include "platefsi/microcell.hpp"

#include "platefsi/errors.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace platefsi {

// ---------------------------------------------------------------------------
// MaterialModel
// ---------------------------------------------------------------------------

fem::ElasticTensor MaterialModel::tensor_for_voxel(int dim, int voxel) const {
    switch (kind) {
    case Kind::uniform_lame:
        return fem::ElasticTensor::isotropic(dim, lame[0], lame[1]);
    case Kind::per_voxel_lame: {
        const auto& lm = lame_per_voxel.at(static_cast<std::size_t>(voxel));
        return fem::ElasticTensor::isotropic(dim, lm[0], lm[1]);
    }
    case Kind::uniform_voigt:
        return fem::ElasticTensor::from_voigt(dim, voigt);
    case Kind::per_voxel_voigt:
        return fem::ElasticTensor::from_voigt(dim,
                                              voigt_per_voxel.at(static_cast<std::size_t>(voxel)));
    }
    throw ParseError("MaterialModel: unknown kind");
}

bool MaterialModel::operator==(const MaterialModel& o) const {
    if (kind != o.kind)
        return false;
    switch (kind) {
    case Kind::uniform_lame:
        return lame == o.lame;
    case Kind::per_voxel_lame:
        return lame_per_voxel == o.lame_per_voxel;
    case Kind::uniform_voigt:
        return voigt == o.voigt;
    case Kind::per_voxel_voigt:
        if (voigt_per_voxel.size() != o.voigt_per_voxel.size())
            return false;
        for (std::size_t i = 0; i < voigt_per_voxel.size(); ++i)
            if (voigt_per_voxel[i] != o.voigt_per_voxel[i])
                return false;
        return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// MicrostructureSpec
// ---------------------------------------------------------------------------

int MicrostructureSpec::voxel_index(int i, int j, int k) const {
    if (dimension == 2)
        return i * n3() + k;
    return (i * n2() + j) * n3() + k;
}

bool MicrostructureSpec::is_solid(int i, int j, int k) const {
    return indicator[static_cast<std::size_t>(voxel_index(i, j, k))] != 0;
}

int MicrostructureSpec::num_solid() const {
    return static_cast<int>(std::count_if(indicator.begin(), indicator.end(),
                                          [](std::uint8_t v) { return v != 0; }));
}

void MicrostructureSpec::validate() const {
    if (dimension != 2 && dimension != 3)
        throw DimensionError("microstructure: dimension must be 2 or 3");
    const int axes = dimension;
    for (int d = 0; d < axes; ++d)
        if (resolution[static_cast<std::size_t>(d)] < 2)
            throw DimensionError("microstructure: every axis count must be >= 2");
    if (static_cast<int>(indicator.size()) != num_voxels())
        throw ParseError("microstructure: indicator length " + std::to_string(indicator.size()) +
                         " does not match voxel count " + std::to_string(num_voxels()));
    const int solid = num_solid();
    if (!allow_uniform && (solid == 0 || solid == num_voxels()))
        throw ParseError("microstructure: needs both phases unless allow_uniform is set");
    switch (material.kind) {
    case MaterialModel::Kind::per_voxel_lame:
        if (static_cast<int>(material.lame_per_voxel.size()) != num_voxels())
            throw ParseError("microstructure: lame_per_voxel length mismatch");
        break;
    case MaterialModel::Kind::per_voxel_voigt:
        if (static_cast<int>(material.voigt_per_voxel.size()) != num_voxels())
            throw ParseError("microstructure: voigt_per_voxel length mismatch");
        break;
    default:
        break;
    }
    // material must be constructible (and coercive) on every solid voxel
    for (int v = 0; v < num_voxels(); ++v) {
        if (indicator[static_cast<std::size_t>(v)] == 0)
            continue;
        const auto t = material.tensor_for_voxel(dimension, v);
        if (!(t.coercivity_constant() > 0.0))
            throw ParseError("microstructure: material on voxel " + std::to_string(v) +
                             " is not coercive");
    }
}

namespace {

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty())
        throw ParseError("microstructure: expected a matrix (array of arrays)");
    const auto rows = j.size();
    const auto cols = j.at(0).size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (j.at(r).size() != cols)
            throw ParseError("microstructure: ragged matrix rows");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                j.at(r).at(c).get<double>();
    }
    return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        j.push_back(row);
    }
    return j;
}

} // namespace

MicrostructureSpec MicrostructureSpec::from_json(const nlohmann::json& j) {
    MicrostructureSpec spec;
    try {
        spec.dimension = j.at("dimension").get<int>();
        const auto& res = j.at("resolution");
        if (!res.is_array() || static_cast<int>(res.size()) != spec.dimension)
            throw ParseError("microstructure: field 'resolution' must have one entry per axis");
        spec.resolution = {0, 0, 0};
        for (std::size_t d = 0; d < res.size(); ++d)
            spec.resolution[d] = res.at(d).get<int>();
        const auto& ind = j.at("indicator");
        spec.indicator.clear();
        spec.indicator.reserve(ind.size());
        for (const auto& v : ind) {
            const int x = v.get<int>();
            if (x != 0 && x != 1)
                throw ParseError("microstructure: field 'indicator' entries must be 0 or 1");
            spec.indicator.push_back(static_cast<std::uint8_t>(x));
        }
        const auto& mat = j.at("material");
        if (mat.contains("lame")) {
            spec.material.kind = MaterialModel::Kind::uniform_lame;
            spec.material.lame = {mat.at("lame").at(0).get<double>(),
                                  mat.at("lame").at(1).get<double>()};
        } else if (mat.contains("lame_per_voxel")) {
            spec.material.kind = MaterialModel::Kind::per_voxel_lame;
            for (const auto& lm : mat.at("lame_per_voxel"))
                spec.material.lame_per_voxel.push_back(
                    {lm.at(0).get<double>(), lm.at(1).get<double>()});
        } else if (mat.contains("voigt")) {
            spec.material.kind = MaterialModel::Kind::uniform_voigt;
            spec.material.voigt = matrix_from_json(mat.at("voigt"));
        } else if (mat.contains("voigt_per_voxel")) {
            spec.material.kind = MaterialModel::Kind::per_voxel_voigt;
            for (const auto& m : mat.at("voigt_per_voxel"))
                spec.material.voigt_per_voxel.push_back(matrix_from_json(m));
        } else {
            throw ParseError("microstructure: field 'material' needs one of lame, "
                             "lame_per_voxel, voigt, voigt_per_voxel");
        }
        spec.allow_uniform = j.value("allow_uniform", false);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("microstructure: ") + e.what());
    }
    spec.validate();
    return spec;
}

nlohmann::json MicrostructureSpec::to_json() const {
    nlohmann::json j;
    j["dimension"] = dimension;
    nlohmann::json res = nlohmann::json::array();
    for (int d = 0; d < dimension; ++d)
        res.push_back(resolution[static_cast<std::size_t>(d)]);
    j["resolution"] = res;
    nlohmann::json ind = nlohmann::json::array();
    for (auto v : indicator)
        ind.push_back(static_cast<int>(v));
    j["indicator"] = ind;
    nlohmann::json mat;
    switch (material.kind) {
    case MaterialModel::Kind::uniform_lame:
        mat["lame"] = {material.lame[0], material.lame[1]};
        break;
    case MaterialModel::Kind::per_voxel_lame: {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& lm : material.lame_per_voxel)
            arr.push_back({lm[0], lm[1]});
        mat["lame_per_voxel"] = arr;
        break;
    }
    case MaterialModel::Kind::uniform_voigt:
        mat["voigt"] = matrix_to_json(material.voigt);
        break;
    case MaterialModel::Kind::per_voxel_voigt: {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& m : material.voigt_per_voxel)
            arr.push_back(matrix_to_json(m));
        mat["voigt_per_voxel"] = arr;
        break;
    }
    }
    j["material"] = mat;
    if (allow_uniform)
        j["allow_uniform"] = true;
    return j;
}

bool MicrostructureSpec::operator==(const MicrostructureSpec& o) const {
    return dimension == o.dimension && resolution == o.resolution && indicator == o.indicator &&
           material == o.material && allow_uniform == o.allow_uniform;
}

MicrostructureSpec parse_microstructure(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open microstructure file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("microstructure " + path.string() + ": " + e.what());
    }
    return MicrostructureSpec::from_json(j);
}

void write_microstructure(const MicrostructureSpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write microstructure file: " + path.string());
    out << spec.to_json().dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// CellMesh
// ---------------------------------------------------------------------------

int CellMesh::nodes_per_axis(int axis) const {
    return res[static_cast<std::size_t>(axis)] + 1;
}

int CellMesh::num_nodes() const {
    if (dim == 2)
        return (res[0] + 1) * (res[2] + 1);
    return (res[0] + 1) * (res[1] + 1) * (res[2] + 1);
}

int CellMesh::num_elements() const { return res[0] * res[1] * res[2]; }

int CellMesh::node_id(int i, int j, int k) const {
    if (dim == 2)
        return i * (res[2] + 1) + k;
    return (i * (res[1] + 1) + j) * (res[2] + 1) + k;
}

std::array<int, 3> CellMesh::node_coords_index(int node) const {
    if (dim == 2) {
        const int nk = res[2] + 1;
        return {node / nk, 0, node % nk};
    }
    const int nk = res[2] + 1;
    const int nj = res[1] + 1;
    return {node / (nj * nk), (node / nk) % nj, node % nk};
}

Eigen::Vector3d CellMesh::node_position(int node) const {
    const auto c = node_coords_index(node);
    return {c[0] * h(0), dim == 3 ? c[1] * h(1) : 0.0, -1.0 + c[2] * h(2)};
}

int CellMesh::elem_id(int i, int j, int k) const {
    if (dim == 2)
        return i * res[2] + k;
    return (i * res[1] + j) * res[2] + k;
}

std::array<int, 3> CellMesh::elem_coords_index(int e) const {
    if (dim == 2)
        return {e / res[2], 0, e % res[2]};
    return {e / (res[1] * res[2]), (e / res[2]) % res[1], e % res[2]};
}

Eigen::Vector3d CellMesh::elem_origin(int e) const {
    const auto c = elem_coords_index(e);
    return {c[0] * h(0), dim == 3 ? c[1] * h(1) : 0.0, -1.0 + c[2] * h(2)};
}

std::vector<int> CellMesh::elem_nodes(int e) const {
    const auto c = elem_coords_index(e);
    std::vector<int> nodes;
    if (dim == 2) {
        nodes = {node_id(c[0], 0, c[2]), node_id(c[0] + 1, 0, c[2]), node_id(c[0], 0, c[2] + 1),
                 node_id(c[0] + 1, 0, c[2] + 1)};
    } else {
        nodes.reserve(8);
        for (int a3 = 0; a3 < 2; ++a3)
            for (int a2 = 0; a2 < 2; ++a2)
                for (int a1 = 0; a1 < 2; ++a1)
                    nodes.push_back(node_id(c[0] + a1, c[1] + a2, c[2] + a3));
        // reorder into bit pattern a1 + 2*a2 + 4*a3
        std::vector<int> ordered(8);
        int idx = 0;
        for (int a3 = 0; a3 < 2; ++a3)
            for (int a2 = 0; a2 < 2; ++a2)
                for (int a1 = 0; a1 < 2; ++a1)
                    ordered[static_cast<std::size_t>(a1 + 2 * a2 + 4 * a3)] =
                        nodes[static_cast<std::size_t>(idx++)];
        nodes = ordered;
    }
    return nodes;
}

CellMesh build_cell_mesh(const MicrostructureSpec& spec) {
    spec.validate();
    CellMesh m;
    m.dim = spec.dimension;
    m.res = {spec.n1(), spec.dimension == 3 ? spec.n2() : 1, spec.n3()};
    m.h = Eigen::Vector3d(1.0 / spec.n1(), spec.dimension == 3 ? 1.0 / spec.n2() : 1.0,
                          2.0 / spec.n3());

    const int ne = m.num_elements();
    m.elem_solid.assign(static_cast<std::size_t>(ne), 0);
    const double evol = m.h(0) * m.h(2) * (m.dim == 3 ? m.h(1) : 1.0);
    for (int e = 0; e < ne; ++e) {
        const auto c = m.elem_coords_index(e);
        const bool solid = spec.is_solid(c[0], c[1], c[2]);
        m.elem_solid[static_cast<std::size_t>(e)] = solid ? 1 : 0;
        (solid ? m.solid_elements : m.fluid_elements).push_back(e);
        (solid ? m.solid_volume : m.fluid_volume) += evol;
    }
    m.total_volume = m.solid_volume + m.fluid_volume;

    // interior interface facets (solid vs fluid neighbors); lateral wrap pairs
    // never generate facets -- mismatched wrap indicators are rejected by
    // validate_geometry instead
    const int n1 = m.res[0], n2 = m.res[1], n3 = m.res[2];
    auto add_facet = [&](int ea, int eb, int axis) {
        const bool sa = m.elem_solid[static_cast<std::size_t>(ea)] != 0;
        const bool sb = m.elem_solid[static_cast<std::size_t>(eb)] != 0;
        if (sa != sb)
            m.gamma_facets.push_back(sa ? CellMesh::GammaFacet{ea, eb, axis}
                                        : CellMesh::GammaFacet{eb, ea, axis});
    };
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                const int e = m.elem_id(i, j, k);
                if (i + 1 < n1)
                    add_facet(e, m.elem_id(i + 1, j, k), 0);
                if (m.dim == 3 && j + 1 < n2)
                    add_facet(e, m.elem_id(i, j + 1, k), 1);
                if (k + 1 < n3)
                    add_facet(e, m.elem_id(i, j, k + 1), 2);
                if (k == n3 - 1)
                    m.s_plus_elements.push_back(e);
                if (k == 0)
                    m.s_minus_elements.push_back(e);
            }

    // periodic identification of lateral faces (nodes at i = n1 / j = n2)
    const int nn = m.num_nodes();
    m.master_of_node.resize(static_cast<std::size_t>(nn));
    std::iota(m.master_of_node.begin(), m.master_of_node.end(), 0);
    for (int node = 0; node < nn; ++node) {
        auto c = m.node_coords_index(node);
        const bool wrap_i = c[0] == n1;
        const bool wrap_j = m.dim == 3 && c[1] == n2;
        if (wrap_i || wrap_j) {
            const int master = m.node_id(wrap_i ? 0 : c[0], wrap_j ? 0 : c[1], c[2]);
            m.master_of_node[static_cast<std::size_t>(node)] = master;
            m.periodic_pairs.emplace_back(node, master);
        }
    }

    // phase node sets on master nodes, with lumped volume weights for the
    // solid mean-zero functional
    std::vector<char> solid_mark(static_cast<std::size_t>(nn), 0);
    std::vector<char> fluid_mark(static_cast<std::size_t>(nn), 0);
    std::vector<double> weight(static_cast<std::size_t>(nn), 0.0);
    const int corners = m.dim == 3 ? 8 : 4;
    for (int e = 0; e < ne; ++e) {
        const bool solid = m.elem_solid[static_cast<std::size_t>(e)] != 0;
        for (int node : m.elem_nodes(e)) {
            const int master = m.master_of_node[static_cast<std::size_t>(node)];
            if (solid) {
                solid_mark[static_cast<std::size_t>(master)] = 1;
                weight[static_cast<std::size_t>(master)] += evol / corners;
            } else {
                fluid_mark[static_cast<std::size_t>(master)] = 1;
            }
        }
    }
    m.solid_node_index.assign(static_cast<std::size_t>(nn), -1);
    m.fluid_node_index.assign(static_cast<std::size_t>(nn), -1);
    for (int node = 0; node < nn; ++node) {
        if (solid_mark[static_cast<std::size_t>(node)]) {
            m.solid_node_index[static_cast<std::size_t>(node)] =
                static_cast<int>(m.solid_nodes.size());
            m.solid_nodes.push_back(node);
            m.solid_node_weight.push_back(weight[static_cast<std::size_t>(node)]);
        }
        if (fluid_mark[static_cast<std::size_t>(node)]) {
            m.fluid_node_index[static_cast<std::size_t>(node)] =
                static_cast<int>(m.fluid_nodes.size());
            m.fluid_nodes.push_back(node);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// validate_geometry
// ---------------------------------------------------------------------------

namespace {

/// Union-find over elements with integer lattice offsets, used to decide
/// connectivity of the periodically repeated structure.
class OffsetUnionFind {
public:
    explicit OffsetUnionFind(int n)
        : parent_(static_cast<std::size_t>(n)), offset_(static_cast<std::size_t>(n), {0, 0}) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }

    std::pair<int, std::array<long, 2>> find(int a) {
        if (parent_[static_cast<std::size_t>(a)] == a)
            return {a, {0, 0}};
        auto [root, off] = find(parent_[static_cast<std::size_t>(a)]);
        auto& mine = offset_[static_cast<std::size_t>(a)];
        mine = {mine[0] + off[0], mine[1] + off[1]};
        parent_[static_cast<std::size_t>(a)] = root;
        return {root, mine};
    }

    /// Join with pos(b) = pos(a) + delta; closed cycles record generators.
    void unite(int a, int b, std::array<long, 2> delta) {
        auto [ra, da] = find(a);
        auto [rb, db] = find(b);
        const std::array<long, 2> want{da[0] + delta[0], da[1] + delta[1]};
        if (ra == rb) {
            const std::array<long, 2> cycle{want[0] - db[0], want[1] - db[1]};
            if (cycle[0] != 0 || cycle[1] != 0)
                generators_.push_back(cycle);
            return;
        }
        parent_[static_cast<std::size_t>(rb)] = ra;
        offset_[static_cast<std::size_t>(rb)] = {want[0] - db[0], want[1] - db[1]};
    }

    int components(const std::vector<int>& members) {
        std::set<int> roots;
        for (int e : members)
            roots.insert(find(e).first);
        return static_cast<int>(roots.size());
    }

    const std::vector<std::array<long, 2>>& generators() const { return generators_; }

private:
    std::vector<int> parent_;
    std::vector<std::array<long, 2>> offset_;
    std::vector<std::array<long, 2>> generators_;
};

long gcd_l(long a, long b) { return std::gcd(a, b); }

/// True iff the integer span of the vectors is the full lattice Z^d.
bool spans_full_lattice(int d, std::vector<std::array<long, 2>> vs) {
    if (d == 1) {
        long g = 0;
        for (const auto& v : vs)
            g = gcd_l(g, v[0]);
        return g == 1;
    }
    // integer elimination on the first component
    std::array<long, 2> pivot{0, 0};
    for (auto& v : vs) {
        while (v[0] != 0) {
            if (pivot[0] == 0) {
                pivot = v;
                v = {0, 0};
                break;
            }
            if (std::labs(v[0]) < std::labs(pivot[0]))
                std::swap(pivot, v);
            const long q = v[0] / pivot[0];
            v = {v[0] - q * pivot[0], v[1] - q * pivot[1]};
        }
    }
    if (pivot[0] == 0)
        return false;
    long g2 = 0;
    for (const auto& v : vs)
        g2 = gcd_l(g2, v[1]);
    if (g2 == 0)
        return false;
    return std::labs(pivot[0]) == 1 && std::labs(g2) == 1;
}

struct PhaseConnectivity {
    int components = 0;       // under periodic identification
    bool tiling_connected = false; // the assembled layer
};

PhaseConnectivity phase_connectivity(const CellMesh& m, bool solid) {
    const auto& members = solid ? m.solid_elements : m.fluid_elements;
    PhaseConnectivity out;
    if (members.empty()) {
        out.components = 0;
        out.tiling_connected = true; // vacuous
        return out;
    }
    OffsetUnionFind uf(m.num_elements());
    const int n1 = m.res[0], n2 = m.res[1], n3 = m.res[2];
    auto same_phase = [&](int e) { return (m.elem_solid[static_cast<std::size_t>(e)] != 0) == solid; };
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k) {
                const int e = m.elem_id(i, j, k);
                if (!same_phase(e))
                    continue;
                auto try_join = [&](int ii, int jj, int kk, std::array<long, 2> delta) {
                    const int o = m.elem_id(ii, jj, kk);
                    if (same_phase(o))
                        uf.unite(e, o, delta);
                };
                if (i + 1 < n1)
                    try_join(i + 1, j, k, {0, 0});
                else
                    try_join(0, j, k, {1, 0}); // wrap in y1
                if (m.dim == 3) {
                    if (j + 1 < n2)
                        try_join(i, j + 1, k, {0, 0});
                    else
                        try_join(i, 0, k, {0, 1}); // wrap in y2
                }
                if (k + 1 < n3)
                    try_join(i, j, k + 1, {0, 0});
            }
    out.components = uf.components(members);
    out.tiling_connected =
        out.components == 1 && spans_full_lattice(m.dim - 1, uf.generators());
    return out;
}

} // namespace

bool ValidationReport::ok() const {
    return std::none_of(checks.begin(), checks.end(),
                        [](const auto& c) { return c.status == CheckStatus::fail; });
}

bool ValidationReport::has_warnings() const {
    return std::any_of(checks.begin(), checks.end(),
                       [](const auto& c) { return c.status == CheckStatus::warn; });
}

const ValidationCheck* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name)
            return &c;
    return nullptr;
}

nlohmann::json ValidationReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json e;
        e["name"] = c.name;
        e["status"] = c.status == CheckStatus::pass ? "pass"
                      : c.status == CheckStatus::warn ? "warn"
                                                      : "fail";
        e["detail"] = c.detail;
        arr.push_back(e);
    }
    nlohmann::json j;
    j["checks"] = arr;
    j["ok"] = ok();
    return j;
}

ValidationReport validate_geometry(const CellMesh& m) {
    ValidationReport rep;
    const int n1 = m.res[0], n2 = m.res[1], n3 = m.res[2];

    const auto solid = phase_connectivity(m, true);
    const auto fluid = phase_connectivity(m, false);

    rep.checks.push_back(
        {"solid_connected",
         solid.components <= 1 ? CheckStatus::pass : CheckStatus::fail,
         solid.components <= 1 ? (m.solid_elements.empty() ? "no solid voxels" : "connected")
                               : std::to_string(solid.components) + " components"});
    rep.checks.push_back(
        {"fluid_connected",
         fluid.components <= 1 ? CheckStatus::pass : CheckStatus::fail,
         fluid.components <= 1 ? (m.fluid_elements.empty() ? "no fluid voxels" : "connected")
                               : std::to_string(fluid.components) + " components"});

    // S+- clearance: the solid must stay away from the top and bottom faces
    bool touches = false;
    for (int e : m.s_plus_elements)
        touches = touches || m.elem_solid[static_cast<std::size_t>(e)] != 0;
    for (int e : m.s_minus_elements)
        touches = touches || m.elem_solid[static_cast<std::size_t>(e)] != 0;
    rep.checks.push_back({"s_clearance", touches ? CheckStatus::warn : CheckStatus::pass,
                          touches ? "solid touches S+ or S- (coupled theory hypothesis fails; "
                                    "cell solves remain well-posed)"
                                  : "clear"});

    // indicator periodicity across lateral face pairs
    std::string mismatch;
    for (int j = 0; j < n2 && mismatch.empty(); ++j)
        for (int k = 0; k < n3 && mismatch.empty(); ++k)
            if (m.elem_solid[static_cast<std::size_t>(m.elem_id(0, j, k))] !=
                m.elem_solid[static_cast<std::size_t>(m.elem_id(n1 - 1, j, k))])
                mismatch = "axis 1 at (j,k)=(" + std::to_string(j) + "," + std::to_string(k) + ")";
    if (m.dim == 3)
        for (int i = 0; i < n1 && mismatch.empty(); ++i)
            for (int k = 0; k < n3 && mismatch.empty(); ++k)
                if (m.elem_solid[static_cast<std::size_t>(m.elem_id(i, 0, k))] !=
                    m.elem_solid[static_cast<std::size_t>(m.elem_id(i, n2 - 1, k))])
                    mismatch =
                        "axis 2 at (i,k)=(" + std::to_string(i) + "," + std::to_string(k) + ")";
    rep.checks.push_back({"lateral_periodicity",
                          mismatch.empty() ? CheckStatus::pass : CheckStatus::fail,
                          mismatch.empty() ? "periodic" : "indicator mismatch across " + mismatch});

    rep.checks.push_back(
        {"layer_connected",
         solid.tiling_connected ? CheckStatus::pass : CheckStatus::fail,
         solid.tiling_connected
             ? (m.solid_elements.empty() ? "no solid voxels" : "assembled layer is connected")
             : "solid does not connect across the lateral faces; the assembled layer "
               "falls apart"});

    return rep;
}

ValidationReport validate_geometry_or_throw(const CellMesh& mesh) {
    auto rep = validate_geometry(mesh);
    if (!rep.ok()) {
        std::string msg = "geometry validation failed:";
        for (const auto& c : rep.checks)
            if (c.status == CheckStatus::fail)
                msg += " [" + c.name + ": " + c.detail + "]";
        throw ValidationError(msg);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// random microstructures
// ---------------------------------------------------------------------------

MicrostructureSpec random_microstructure(int dim, int resolution, std::uint64_t seed) {
    if (resolution < 4)
        throw DimensionError("random_microstructure: resolution must be >= 4");
    for (std::uint64_t attempt = 0; attempt < 256; ++attempt) {
        std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + attempt);
        std::uniform_real_distribution<double> uni(0.0, 1.0);

        MicrostructureSpec spec;
        spec.dimension = dim;
        if (dim == 3)
            spec.resolution = {resolution, resolution, resolution};
        else
            spec.resolution = {resolution, resolution, 0};
        const int n1 = spec.n1(), n2 = spec.n2(), n3 = spec.n3();

        // smooth periodic noise field, thresholded near the median
        std::vector<double> field(static_cast<std::size_t>(spec.num_voxels()));
        for (auto& v : field)
            v = uni(rng);
        auto idx = [&](int i, int j, int k) {
            return static_cast<std::size_t>(spec.voxel_index(((i % n1) + n1) % n1,
                                                             ((j % n2) + n2) % n2,
                                                             std::clamp(k, 0, n3 - 1)));
        };
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<double> next(field.size(), 0.0);
            for (int i = 0; i < n1; ++i)
                for (int j = 0; j < n2; ++j)
                    for (int k = 0; k < n3; ++k) {
                        double acc = field[idx(i, j, k)] * 2.0;
                        acc += field[idx(i - 1, j, k)] + field[idx(i + 1, j, k)];
                        if (dim == 3)
                            acc += field[idx(i, j - 1, k)] + field[idx(i, j + 1, k)];
                        acc += field[idx(i, j, k - 1)] + field[idx(i, j, k + 1)];
                        next[idx(i, j, k)] = acc / (dim == 3 ? 8.0 : 6.0);
                    }
            field = next;
        }
        std::vector<double> sorted = field;
        std::sort(sorted.begin(), sorted.end());
        const double threshold = sorted[sorted.size() / 2];

        spec.indicator.assign(static_cast<std::size_t>(spec.num_voxels()), 0);
        for (int i = 0; i < n1; ++i)
            for (int j = 0; j < n2; ++j)
                for (int k = 0; k < n3; ++k)
                    spec.indicator[static_cast<std::size_t>(spec.voxel_index(i, j, k))] =
                        field[idx(i, j, k)] >= threshold ? 1 : 0;

        // enforce lateral periodicity of the indicator and S+- clearance
        for (int j = 0; j < n2; ++j)
            for (int k = 0; k < n3; ++k)
                spec.indicator[static_cast<std::size_t>(spec.voxel_index(n1 - 1, j, k))] =
                    spec.indicator[static_cast<std::size_t>(spec.voxel_index(0, j, k))];
        if (dim == 3)
            for (int i = 0; i < n1; ++i)
                for (int k = 0; k < n3; ++k)
                    spec.indicator[static_cast<std::size_t>(spec.voxel_index(i, n2 - 1, k))] =
                        spec.indicator[static_cast<std::size_t>(spec.voxel_index(i, 0, k))];
        for (int i = 0; i < n1; ++i)
            for (int j = 0; j < n2; ++j) {
                spec.indicator[static_cast<std::size_t>(spec.voxel_index(i, j, 0))] = 0;
                spec.indicator[static_cast<std::size_t>(spec.voxel_index(i, j, n3 - 1))] = 0;
            }

        std::uniform_real_distribution<double> lam(0.5, 2.0);
        spec.material.kind = MaterialModel::Kind::uniform_lame;
        spec.material.lame = {lam(rng), lam(rng)};

        if (spec.num_solid() == 0 || spec.num_solid() == spec.num_voxels())
            continue;
        const auto mesh = build_cell_mesh(spec);
        const auto rep = validate_geometry(mesh);
        if (rep.ok())
            return spec;
    }
    throw ValidationError("random_microstructure: no admissible sample found for seed " +
                          std::to_string(seed));
}

} // namespace platefsi
