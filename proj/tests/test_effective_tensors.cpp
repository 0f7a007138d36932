#include "platefsi/effective_tensors.hpp"
#include "platefsi/errors.hpp"

#include <doctest.h>

#include <filesystem>

using namespace platefsi;

namespace {

MicrostructureSpec full_solid3(int n, double lambda = 1.0, double mu = 1.0) {
    MicrostructureSpec spec;
    spec.dimension = 3;
    spec.resolution = {n, n, n};
    spec.indicator.assign(static_cast<std::size_t>(spec.num_voxels()), 1);
    spec.material.kind = MaterialModel::Kind::uniform_lame;
    spec.material.lame = {lambda, mu};
    spec.allow_uniform = true;
    return spec;
}

fem::SolveConfig tight() {
    fem::SolveConfig cfg;
    cfg.tolerance = 1e-12;
    cfg.max_iterations = 20000;
    return cfg;
}

EffectivePlateTensors tensors_of(const MicrostructureSpec& spec) {
    auto mesh = build_cell_mesh(spec);
    auto sols = solve_all_cell_problems(mesh, spec.material, tight(), 2);
    return compute_tensors(mesh, spec.material, sols);
}

} // namespace

TEST_CASE("full-solid isotropic tensors hit the closed forms") {
    auto spec = full_solid3(4);
    auto t = tensors_of(spec);
    // a*_1111 = 4 mu (lambda+mu)/(lambda+2mu) = 8/3, a*_1122 = 2 lambda mu/(lambda+2mu) = 2/3
    CHECK(t.a_entry(1, 1, 1, 1) == doctest::Approx(8.0 / 3.0).epsilon(1e-9));
    CHECK(t.a_entry(1, 1, 2, 2) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(t.a_entry(2, 2, 2, 2) == doctest::Approx(8.0 / 3.0).epsilon(1e-9));
    CHECK(t.b.cwiseAbs().maxCoeff() < 1e-10); // y3-symmetric cell
    CHECK(t.solid_volume == doctest::Approx(2.0));

    auto audit = audit_tensors(t);
    CHECK(audit.symmetry_pass);
    CHECK(audit.symmetry_defect < 1e-12);
    CHECK(audit.coercivity_pass);
    CHECK(audit.min_eigenvalue > 0.0);
}

TEST_CASE("c*_1111 tends to a*/3 = 8/9 under y3 refinement") {
    std::vector<double> errors;
    for (int n3 : {4, 8, 16}) {
        auto spec = full_solid3(4);
        spec.resolution = {2, 2, n3};
        spec.indicator.assign(static_cast<std::size_t>(spec.num_voxels()), 1);
        auto t = tensors_of(spec);
        errors.push_back(std::abs(t.c_entry(1, 1, 1, 1) - 8.0 / 9.0));
    }
    CHECK(errors[1] < errors[0]);
    CHECK(errors[2] < errors[1]);
}

TEST_CASE("energy consistency ties the tensors to the minimal cell energies") {
    auto spec = full_solid3(3);
    spec.allow_uniform = false;
    spec.indicator[static_cast<std::size_t>(spec.voxel_index(1, 1, 1))] = 0;
    auto mesh = build_cell_mesh(spec);
    auto sols = solve_all_cell_problems(mesh, spec.material, tight(), 2);
    auto t = compute_tensors(mesh, spec.material, sols);
    for (const auto& sol : sols) {
        const double energy =
            cell_case_energy(mesh, spec.material, sol.load_case, sol.displacement);
        const int p = pair_index(3, sol.load_case.alpha, sol.load_case.beta);
        const double entry =
            sol.load_case.kind == CellLoadCase::Kind::standard ? t.a(p, p) : t.c(p, p);
        CHECK(entry * mesh.solid_volume == doctest::Approx(energy).epsilon(1e-11));
    }
}

TEST_CASE("b* vanishes for any y3-even microstructure") {
    auto spec = random_microstructure(3, 6, 17);
    // symmetrize in y3
    const int n3 = spec.n3();
    for (int i = 0; i < spec.n1(); ++i)
        for (int j = 0; j < spec.n2(); ++j)
            for (int k = 0; k < n3 / 2; ++k)
                spec.indicator[static_cast<std::size_t>(spec.voxel_index(i, j, n3 - 1 - k))] =
                    spec.indicator[static_cast<std::size_t>(spec.voxel_index(i, j, k))];
    auto mesh = build_cell_mesh(spec);
    REQUIRE(validate_geometry(mesh).ok());
    auto sols = solve_all_cell_problems(mesh, spec.material, tight(), 2);
    auto t = compute_tensors(mesh, spec.material, sols);
    const double scale = t.a.cwiseAbs().maxCoeff();
    CHECK(t.b.cwiseAbs().maxCoeff() < 1e-10 * scale);
}

TEST_CASE("monotone refinement: tensor entries form a Cauchy sequence") {
    // fixed 2D microstructure refined by voxel subdivision
    MicrostructureSpec base;
    base.dimension = 2;
    base.resolution = {8, 8, 0};
    base.indicator.assign(64, 1);
    base.material.kind = MaterialModel::Kind::uniform_lame;
    base.material.lame = {1.0, 1.0};
    for (int i = 2; i < 6; ++i)
        for (int k = 3; k < 5; ++k)
            base.indicator[static_cast<std::size_t>(base.voxel_index(i, 0, k))] = 0;

    auto refine = [](const MicrostructureSpec& s) {
        MicrostructureSpec r = s;
        r.resolution = {2 * s.n1(), 2 * s.n3(), 0};
        r.indicator.assign(static_cast<std::size_t>(r.num_voxels()), 0);
        for (int i = 0; i < r.n1(); ++i)
            for (int k = 0; k < r.n3(); ++k)
                r.indicator[static_cast<std::size_t>(r.voxel_index(i, 0, k))] =
                    s.indicator[static_cast<std::size_t>(s.voxel_index(i / 2, 0, k / 2))];
        return r;
    };
    auto l1 = refine(base);
    auto l2 = refine(l1);
    auto t0 = tensors_of(base), t1 = tensors_of(l1), t2 = tensors_of(l2);
    const double d01 = std::abs(t1.a_scalar() - t0.a_scalar()) +
                       std::abs(t1.c_scalar() - t0.c_scalar());
    const double d12 = std::abs(t2.a_scalar() - t1.a_scalar()) +
                       std::abs(t2.c_scalar() - t1.c_scalar());
    CHECK(d12 < d01);
}

TEST_CASE("audit reports injected asymmetry and rejects zero tensors") {
    auto spec = full_solid3(3);
    auto t = tensors_of(spec);
    SUBCASE("hand-built asymmetry is reported at its size") {
        auto broken = t;
        const double bump = 1e-3 * broken.a.cwiseAbs().maxCoeff();
        broken.a(0, 1) += bump;
        auto audit = audit_tensors(broken);
        CHECK_FALSE(audit.symmetry_pass);
        CHECK(audit.symmetry_defect ==
              doctest::Approx(bump / broken.a.cwiseAbs().maxCoeff()).epsilon(1e-6));
    }
    SUBCASE("zero tensors fail coercivity with min eigenvalue 0") {
        EffectivePlateTensors zero;
        zero.dim = 3;
        zero.a = Eigen::MatrixXd::Zero(3, 3);
        zero.b = Eigen::MatrixXd::Zero(3, 3);
        zero.c = Eigen::MatrixXd::Zero(3, 3);
        auto audit = audit_tensors(zero);
        CHECK_FALSE(audit.coercivity_pass);
        CHECK(audit.min_eigenvalue == 0.0);
    }
}

TEST_CASE("mixed meshes across solutions are rejected") {
    auto spec_a = full_solid3(3);
    auto spec_b = full_solid3(4);
    auto mesh_a = build_cell_mesh(spec_a);
    auto mesh_b = build_cell_mesh(spec_b);
    auto sols = solve_all_cell_problems(mesh_a, spec_a.material, tight(), 1);
    auto other = solve_all_cell_problems(mesh_b, spec_b.material, tight(), 1);
    sols[0] = other[0];
    CHECK_THROWS_AS(compute_tensors(mesh_a, spec_a.material, sols), DimensionError);
}

TEST_CASE("tensor json round-trip preserves entries and provenance") {
    auto spec = full_solid3(3);
    auto mesh = build_cell_mesh(spec);
    auto sols = solve_all_cell_problems(mesh, spec.material, tight(), 1);
    EffectivePlateTensors::Provenance prov;
    prov.geometry_hash = "cafe";
    prov.resolution = {3, 3, 3};
    prov.solver_tolerance = 1e-12;
    auto t = compute_tensors(mesh, spec.material, sols, prov);
    const auto path = std::filesystem::temp_directory_path() / "platefsi_tensors.json";
    write_tensors(t, path);
    auto back = read_tensors(path);
    CHECK(back.dim == t.dim);
    CHECK((back.a - t.a).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.b - t.b).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.c - t.c).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.solid_volume == t.solid_volume);
    CHECK(back.provenance.geometry_hash == "cafe");
    std::filesystem::remove(path);

    // 2D analogue writes scalars
    MicrostructureSpec s2;
    s2.dimension = 2;
    s2.resolution = {2, 4, 0};
    s2.indicator.assign(8, 1);
    s2.material.kind = MaterialModel::Kind::uniform_lame;
    s2.material.lame = {1.0, 1.0};
    s2.allow_uniform = true;
    auto mesh2 = build_cell_mesh(s2);
    auto sols2 = solve_all_cell_problems(mesh2, s2.material, tight(), 1);
    auto t2 = compute_tensors(mesh2, s2.material, sols2);
    auto j2 = t2.to_json();
    CHECK(j2.at("a_star").is_number());
    CHECK(EffectivePlateTensors::from_json(j2).a_scalar() == t2.a_scalar());
}
