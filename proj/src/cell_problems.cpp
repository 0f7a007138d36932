#include "platefsi/cell_problems.hpp"

#include "platefsi/errors.hpp"
#include "platefsi/fem/elements.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace platefsi {

std::string CellLoadCase::name() const {
    return (kind == Kind::standard ? std::string("std_") : std::string("bend_")) +
           std::to_string(alpha) + std::to_string(beta);
}

std::vector<CellLoadCase> cell_load_cases(int dim) {
    std::vector<CellLoadCase> cases;
    const std::vector<std::pair<int, int>> pairs =
        dim == 3 ? std::vector<std::pair<int, int>>{{1, 1}, {2, 2}, {1, 2}}
                 : std::vector<std::pair<int, int>>{{1, 1}};
    for (auto kind : {CellLoadCase::Kind::standard, CellLoadCase::Kind::bending})
        for (auto [a, b] : pairs)
            cases.push_back({a, b, kind});
    return cases;
}

int pair_index(int dim, int alpha, int beta) {
    const int a = std::min(alpha, beta), b = std::max(alpha, beta);
    if (dim == 2) {
        if (a == 1 && b == 1)
            return 0;
        throw DimensionError("pair_index: 2D analogue has only the pair (1,1)");
    }
    if (a == 1 && b == 1)
        return 0;
    if (a == 2 && b == 2)
        return 1;
    if (a == 1 && b == 2)
        return 2;
    throw DimensionError("pair_index: indices must be in-plane (1 or 2)");
}

int num_pairs(int dim) { return dim == 3 ? 3 : 1; }

namespace {

int cell_dofs(const CellMesh& mesh) { return mesh.num_nodes() * mesh.dim; }

/// Load strain scale: +1 for standard, -y3 for bending.
double load_scale(const CellLoadCase& c, double y3) {
    return c.kind == CellLoadCase::Kind::standard ? 1.0 : -y3;
}

void check_solid_admissible(const CellMesh& mesh) {
    if (mesh.solid_elements.empty())
        throw ValidationError("cell problem: the cell has no solid voxels");
    const auto rep = validate_geometry(mesh);
    for (const char* name : {"solid_connected", "lateral_periodicity", "layer_connected"}) {
        const auto* c = rep.find(name);
        if (c && c->status == CheckStatus::fail)
            throw ValidationError(std::string("cell problem: geometry check failed [") + name +
                                  ": " + c->detail + "] (solution kernel exceeds the constants)");
    }
}

} // namespace

CellOperator assemble_cell_operator(const CellMesh& mesh, const MaterialModel& material) {
    check_solid_admissible(mesh);
    const int dim = mesh.dim;
    const int ndof = cell_dofs(mesh);

    std::vector<fem::Triplet> trips;
    trips.reserve(static_cast<std::size_t>(mesh.solid_elements.size()) * 64);
    for (int e : mesh.solid_elements) {
        const auto c = mesh.elem_coords_index(e);
        const auto a = material.tensor_for_voxel(
            dim, dim == 2 ? c[0] * mesh.res[2] + c[2] : (c[0] * mesh.res[1] + c[1]) * mesh.res[2] + c[2]);
        const Eigen::MatrixXd ke = fem::element_stiffness_elasticity(dim, mesh.packed_h(), a);
        const auto nodes = mesh.elem_nodes(e);
        const int nn = static_cast<int>(nodes.size());
        for (int p = 0; p < nn; ++p)
            for (int q = 0; q < nn; ++q)
                for (int cp = 0; cp < dim; ++cp)
                    for (int cq = 0; cq < dim; ++cq)
                        trips.emplace_back(nodes[static_cast<std::size_t>(p)] * dim + cp,
                                           nodes[static_cast<std::size_t>(q)] * dim + cq,
                                           ke(p * dim + cp, q * dim + cq));
    }

    CellOperator op;
    op.dim = dim;
    op.stiffness_full = fem::SparseOperator::from_triplets(ndof, ndof, trips, true);

    fem::ConstraintMap map(ndof);
    std::vector<char> is_slave(static_cast<std::size_t>(mesh.num_nodes()), 0);
    for (const auto& [slave, master] : mesh.periodic_pairs) {
        is_slave[static_cast<std::size_t>(slave)] = 1;
        const bool master_solid = mesh.solid_node_index[static_cast<std::size_t>(master)] >= 0;
        for (int c = 0; c < dim; ++c) {
            if (master_solid)
                map.periodic_pair(slave * dim + c, master * dim + c);
            else
                map.fix(slave * dim + c);
        }
    }
    for (int node = 0; node < mesh.num_nodes(); ++node) {
        if (is_slave[static_cast<std::size_t>(node)])
            continue;
        if (mesh.solid_node_index[static_cast<std::size_t>(node)] < 0)
            for (int c = 0; c < dim; ++c)
                map.fix(node * dim + c);
    }
    for (int c = 0; c < dim; ++c) {
        std::vector<std::pair<int, double>> weights;
        for (std::size_t i = 0; i < mesh.solid_nodes.size(); ++i)
            weights.emplace_back(mesh.solid_nodes[i] * dim + c, mesh.solid_node_weight[i]);
        map.add_mean_zero(std::move(weights));
    }
    map.finalize();

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(ndof);
    auto [reduced, rhs0] = fem::apply_constraints(op.stiffness_full, zero, map);
    op.stiffness_reduced = std::move(reduced);

    // translation kernel: expansion is constant on the solid subdomain
    for (int c = 0; c < dim; ++c) {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(ndof);
        for (int node = 0; node < mesh.num_nodes(); ++node)
            full(node * dim + c) = 1.0;
        op.kernel.push_back(map.restrict_kept(full));
    }
    fem::orthonormalize(op.kernel);
    op.mean_functionals = map.reduced_mean_zero();
    op.constraints = std::move(map);
    return op;
}

Eigen::VectorXd assemble_cell_load(const CellMesh& mesh, const MaterialModel& material,
                                   const CellLoadCase& load_case) {
    const int dim = mesh.dim;
    if ((dim == 2 && (load_case.alpha != 1 || load_case.beta != 1)) ||
        (dim == 3 && (load_case.alpha > 2 || load_case.beta > 2)))
        throw DimensionError("assemble_cell_load: invalid in-plane index pair");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(cell_dofs(mesh));
    const Eigen::VectorXd m_voigt = fem::unit_load_voigt(dim, load_case.alpha, load_case.beta);
    for (int e : mesh.solid_elements) {
        const auto c = mesh.elem_coords_index(e);
        const int voxel =
            dim == 2 ? c[0] * mesh.res[2] + c[2] : (c[0] * mesh.res[1] + c[1]) * mesh.res[2] + c[2];
        const auto a = material.tensor_for_voxel(dim, voxel);
        const Eigen::Vector3d origin = mesh.elem_origin(e);
        const auto nodes = mesh.elem_nodes(e);
        Eigen::VectorXd fe = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes.size()) * dim);
        for (const auto& qp : fem::q1_elasticity_points(dim, mesh.packed_h())) {
            const double y3 = origin(2) + qp.offset(mesh.vertical_slot());
            const Eigen::VectorXd sigma = a.stress(load_scale(load_case, y3) * m_voigt);
            fe -= qp.weight * (qp.b.transpose() * sigma);
        }
        for (std::size_t p = 0; p < nodes.size(); ++p)
            for (int comp = 0; comp < dim; ++comp)
                rhs(nodes[p] * dim + comp) += fe(static_cast<Eigen::Index>(p) * dim + comp);
    }
    return rhs;
}

CellSolution solve_cell_problem(const CellMesh& mesh, const CellOperator& op,
                                const MaterialModel& material, const CellLoadCase& load_case,
                                const fem::SolveConfig& cfg) {
    Eigen::VectorXd rhs = assemble_cell_load(mesh, material, load_case);
    Eigen::VectorXd rhs_red = op.constraints.reduction_matrix().transpose() * rhs;

    auto result = fem::solve_spd(op.stiffness_reduced, rhs_red, cfg, op.kernel);
    if (!result.converged)
        throw SolverError("cell problem " + load_case.name() + " did not converge: residual " +
                          std::to_string(result.rel_residual) + " after " +
                          std::to_string(result.iterations) + " iterations");
    fem::enforce_gauge(result.x, op.kernel, op.mean_functionals);

    CellSolution sol;
    sol.load_case = load_case;
    sol.displacement = op.constraints.expand(result.x);
    sol.residual = result.rel_residual;
    sol.iterations = result.iterations;
    sol.mesh_resolution = mesh.res;
    sol.dim = mesh.dim;
    return sol;
}

std::vector<CellSolution> solve_all_cell_problems(const CellMesh& mesh,
                                                  const MaterialModel& material,
                                                  const fem::SolveConfig& cfg, int jobs) {
    const auto op = assemble_cell_operator(mesh, material);
    const auto cases = cell_load_cases(mesh.dim);
    std::vector<CellSolution> out(cases.size());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cases.size())
                return;
            try {
                out[i] = solve_cell_problem(mesh, op, material, cases[i], cfg);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    const int nthreads = std::clamp(jobs, 1, static_cast<int>(cases.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
    return out;
}

std::vector<Eigen::VectorXd> element_case_strains(const CellMesh& mesh, int elem,
                                                  const CellLoadCase& load_case,
                                                  const Eigen::VectorXd& displacement) {
    const int dim = mesh.dim;
    const auto nodes = mesh.elem_nodes(elem);
    Eigen::VectorXd ue(static_cast<Eigen::Index>(nodes.size()) * dim);
    for (std::size_t p = 0; p < nodes.size(); ++p)
        for (int c = 0; c < dim; ++c)
            ue(static_cast<Eigen::Index>(p) * dim + c) = displacement(nodes[p] * dim + c);
    const Eigen::Vector3d origin = mesh.elem_origin(elem);
    const Eigen::VectorXd m_voigt = fem::unit_load_voigt(dim, load_case.alpha, load_case.beta);
    std::vector<Eigen::VectorXd> strains;
    for (const auto& qp : fem::q1_elasticity_points(dim, mesh.packed_h())) {
        const double y3 = origin(2) + qp.offset(mesh.vertical_slot());
        strains.push_back(qp.b * ue + load_scale(load_case, y3) * m_voigt);
    }
    return strains;
}

double cell_case_energy(const CellMesh& mesh, const MaterialModel& material,
                        const CellLoadCase& load_case, const Eigen::VectorXd& displacement) {
    double energy = 0.0;
    const auto qps = fem::q1_elasticity_points(mesh.dim, mesh.packed_h());
    for (int e : mesh.solid_elements) {
        const auto c = mesh.elem_coords_index(e);
        const int voxel = mesh.dim == 2 ? c[0] * mesh.res[2] + c[2]
                                        : (c[0] * mesh.res[1] + c[1]) * mesh.res[2] + c[2];
        const auto a = material.tensor_for_voxel(mesh.dim, voxel);
        const auto strains = element_case_strains(mesh, e, load_case, displacement);
        for (std::size_t q = 0; q < qps.size(); ++q)
            energy += qps[q].weight * strains[q].dot(a.voigt() * strains[q]);
    }
    return energy;
}

CellResidualDiagnostics residual_check(const CellMesh& mesh, const CellOperator& op,
                                       const MaterialModel& material, const CellSolution& sol) {
    const int dim = mesh.dim;
    Eigen::VectorXd rhs = assemble_cell_load(mesh, material, sol.load_case);
    const auto& r_matrix = op.constraints.reduction_matrix();
    Eigen::VectorXd rhs_red = r_matrix.transpose() * rhs;
    Eigen::VectorXd x_red = op.constraints.restrict_kept(sol.displacement);
    Eigen::VectorXd residual = op.stiffness_reduced.apply(x_red) - rhs_red;
    // the consistent load has no component on the translations
    fem::enforce_gauge(residual, op.kernel, op.kernel);

    // nodes carrying weak traction tests: solid faces on Gamma and on S+-
    std::set<int> boundary_nodes;
    auto mark_face = [&](int elem, int axis, bool high) {
        const auto nodes = mesh.elem_nodes(elem);
        const int nn = static_cast<int>(nodes.size());
        for (int a = 0; a < nn; ++a) {
            const int local_axis = (dim == 2 && axis == 2) ? 1 : axis;
            const bool on_face = ((a >> local_axis) & 1) == (high ? 1 : 0);
            if (on_face)
                boundary_nodes.insert(
                    mesh.master_of_node[static_cast<std::size_t>(nodes[static_cast<std::size_t>(a)])]);
        }
    };
    for (const auto& f : mesh.gamma_facets) {
        const auto cs = mesh.elem_coords_index(f.solid_elem);
        const auto cf = mesh.elem_coords_index(f.fluid_elem);
        const int axis = f.axis;
        const int ds = axis == 0 ? cf[0] - cs[0] : axis == 1 ? cf[1] - cs[1] : cf[2] - cs[2];
        mark_face(f.solid_elem, axis, ds > 0);
    }
    for (int e : mesh.s_plus_elements)
        if (mesh.elem_solid[static_cast<std::size_t>(e)])
            mark_face(e, 2, true);
    for (int e : mesh.s_minus_elements)
        if (mesh.elem_solid[static_cast<std::size_t>(e)])
            mark_face(e, 2, false);

    CellResidualDiagnostics diag;
    const double scale = std::max(rhs_red.norm(), 1e-300);
    double interior2 = 0.0, traction2 = 0.0;
    for (int node = 0; node < mesh.num_nodes(); ++node)
        for (int c = 0; c < dim; ++c) {
            const int red = op.constraints.reduced_index(node * dim + c);
            if (red < 0)
                continue;
            const double v = residual(red) * residual(red);
            if (boundary_nodes.count(node))
                traction2 += v;
            else
                interior2 += v;
        }
    diag.interior_residual = std::sqrt(interior2) / scale;
    diag.traction_residual = std::sqrt(traction2) / scale;

    for (const auto& [slave, master] : mesh.periodic_pairs)
        for (int c = 0; c < dim; ++c)
            diag.periodicity_mismatch =
                std::max(diag.periodicity_mismatch, std::abs(sol.displacement(slave * dim + c) -
                                                             sol.displacement(master * dim + c)));

    diag.component_means.assign(static_cast<std::size_t>(dim), 0.0);
    double total_weight = 0.0;
    for (std::size_t i = 0; i < mesh.solid_nodes.size(); ++i)
        total_weight += mesh.solid_node_weight[i];
    for (int c = 0; c < dim; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < mesh.solid_nodes.size(); ++i)
            acc += mesh.solid_node_weight[i] * sol.displacement(mesh.solid_nodes[i] * dim + c);
        diag.component_means[static_cast<std::size_t>(c)] = acc / total_weight;
    }
    return diag;
}

// ---------------------------------------------------------------------------
// binary snapshot
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'P', 'F', 'C', 'S'};
}

void write_cell_solution(const CellSolution& sol, const std::string& geometry_hash,
                         double tolerance, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write cell solution: " + path.string());
    out.write(kMagic, 4);
    auto put_i32 = [&](std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    put_i32(1); // version
    put_i32(sol.dim);
    put_i32(sol.mesh_resolution[0]);
    put_i32(sol.mesh_resolution[1]);
    put_i32(sol.mesh_resolution[2]);
    put_i32(sol.load_case.alpha);
    put_i32(sol.load_case.beta);
    put_i32(sol.load_case.kind == CellLoadCase::Kind::standard ? 0 : 1);
    put_i32(sol.iterations);
    put_f64(sol.residual);
    put_f64(tolerance);
    put_i32(static_cast<std::int32_t>(geometry_hash.size()));
    out.write(geometry_hash.data(), static_cast<std::streamsize>(geometry_hash.size()));
    put_i32(static_cast<std::int32_t>(sol.displacement.size()));
    out.write(reinterpret_cast<const char*>(sol.displacement.data()),
              static_cast<std::streamsize>(sol.displacement.size() * 8));
    if (!out)
        throw IoError("write failed: " + path.string());
}

CellSolution read_cell_solution(const std::filesystem::path& path, std::string* geometry_hash,
                                double* tolerance) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read cell solution: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("not a cell solution file: " + path.string());
    auto get_i32 = [&]() {
        std::int32_t v;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto get_f64 = [&]() {
        double v;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    if (get_i32() != 1)
        throw ParseError("unsupported cell solution version: " + path.string());
    CellSolution sol;
    sol.dim = get_i32();
    sol.mesh_resolution = {get_i32(), get_i32(), get_i32()};
    sol.load_case.alpha = get_i32();
    sol.load_case.beta = get_i32();
    sol.load_case.kind = get_i32() == 0 ? CellLoadCase::Kind::standard : CellLoadCase::Kind::bending;
    sol.iterations = get_i32();
    sol.residual = get_f64();
    const double tol = get_f64();
    if (tolerance)
        *tolerance = tol;
    const auto hash_len = get_i32();
    std::string hash(static_cast<std::size_t>(hash_len), '\0');
    in.read(hash.data(), hash_len);
    if (geometry_hash)
        *geometry_hash = hash;
    const auto n = get_i32();
    sol.displacement.resize(n);
    in.read(reinterpret_cast<char*>(sol.displacement.data()), static_cast<std::streamsize>(n) * 8);
    if (!in)
        throw ParseError("truncated cell solution file: " + path.string());
    return sol;
}

} // namespace platefsi
