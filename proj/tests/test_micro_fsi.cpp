#include "platefsi/errors.hpp"
#include "platefsi/micro_fsi.hpp"

#include <doctest.h>

#include <filesystem>

using namespace platefsi;

namespace {

/// 2D full-width slab cell: solid for |y3| <= 0.5, fluid channels above and
/// below. Admissible for the layer (the fluid halves connect through the bulk).
MicrostructureSpec slab_cell(int n1 = 4, int n3 = 8) {
    MicrostructureSpec spec;
    spec.dimension = 2;
    spec.resolution = {n1, n3, 0};
    spec.indicator.assign(static_cast<std::size_t>(n1 * n3), 0);
    for (int i = 0; i < n1; ++i)
        for (int k = n3 / 4; k < 3 * n3 / 4; ++k)
            spec.indicator[static_cast<std::size_t>(spec.voxel_index(i, 0, k))] = 1;
    spec.material.kind = MaterialModel::Kind::uniform_lame;
    spec.material.lame = {1.0, 1.0};
    return spec;
}

MicrostructureSpec uniform_cell(int n1, int n3, bool solid) {
    MicrostructureSpec spec;
    spec.dimension = 2;
    spec.resolution = {n1, n3, 0};
    spec.indicator.assign(static_cast<std::size_t>(n1 * n3), solid ? 1 : 0);
    spec.material.kind = MaterialModel::Kind::uniform_lame;
    spec.material.lame = {1.0, 1.0};
    spec.allow_uniform = true;
    return spec;
}

MicroConfig tiny_config() {
    MicroConfig cfg;
    cfg.epsilon_inverse = 2;
    cfg.layer_cell = slab_cell(4, 8);
    cfg.H = 1.0;
    cfg.L = 1.0;
    cfg.nz_bulk = 4;
    cfg.dt = 0.02;
    cfg.T = 0.06;
    return cfg;
}

void set_streamfunction_initial(MicroConfig& cfg) {
    const std::string sin2 = "sin(pi*x)^2";
    const std::string dsin2 = "pi*sin(2*pi*x)";
    cfg.v0_plus_x = Expression::parse(sin2 + "*(2*z*(1-z)^2 - 2*z^2*(1-z))");
    cfg.v0_plus_z = Expression::parse("-(" + dsin2 + ")*z^2*(1-z)^2");
    cfg.v0_minus_x = Expression::parse(sin2 + "*(2*z*(1+z)^2 + 2*z^2*(1+z))");
    cfg.v0_minus_z = Expression::parse("-(" + dsin2 + ")*z^2*(1+z)^2");
}

} // namespace

TEST_CASE("mesh construction: regions, counts, interfaces") {
    auto cfg = tiny_config();
    cfg.layer_cell = uniform_cell(4, 8, true); // full-solid layer
    auto sys = build_micro_system(cfg);
    CHECK(sys.columns() == 8); // 2 cells x 4
    CHECK(sys.rows() == 2 * cfg.nz_bulk + 8);
    int solid = 0, layer_fluid = 0;
    for (int e = 0; e < sys.num_elements(); ++e) {
        if (sys.element_region(e) == MicroRegion::layer_solid)
            ++solid;
        if (sys.element_region(e) == MicroRegion::layer_fluid)
            ++layer_fluid;
    }
    CHECK(solid == 2 * 32); // two cells of 4x8 voxels
    CHECK(layer_fluid == 0);
    // interface rows sit exactly at +- eps and the outer boundary at H + eps
    const double eps = cfg.eps();
    bool found_minus = false, found_plus = false;
    for (int e = 0; e < sys.num_elements(); ++e) {
        const auto box = sys.element_box(e);
        if (std::abs(box(1) - (-eps)) < 1e-15 &&
            sys.element_region(e) == MicroRegion::layer_solid)
            found_minus = true;
        if (std::abs(box(1) + box(3) - eps) < 1e-15 &&
            sys.element_region(e) == MicroRegion::layer_solid)
            found_plus = true;
    }
    CHECK(found_minus);
    CHECK(found_plus);
}

TEST_CASE("layer interface facet count is the periodic tiling of the cell count") {
    auto cell = slab_cell(4, 8);
    auto cell_mesh = build_cell_mesh(cell);
    for (int k : {2, 3}) {
        auto cfg = tiny_config();
        cfg.epsilon_inverse = k;
        cfg.L = 1.0 * k / k; // keep L = 1: k cells
        auto sys = build_micro_system(cfg);
        int facets = 0;
        for (int e = 0; e < sys.num_elements(); ++e) {
            if (sys.element_region(e) != MicroRegion::layer_solid &&
                sys.element_region(e) != MicroRegion::layer_fluid)
                continue;
            const int col = e % sys.columns(), row = e / sys.columns();
            auto solid = [&](int ee) { return sys.element_is_solid(ee); };
            if (col + 1 < sys.columns()) {
                const int o = row * sys.columns() + col + 1;
                if (sys.element_region(o) == MicroRegion::layer_solid ||
                    sys.element_region(o) == MicroRegion::layer_fluid)
                    if (solid(e) != solid(o))
                        ++facets;
            }
            const int above = (row + 1) * sys.columns() + col;
            if (row + 1 < sys.rows() &&
                (sys.element_region(above) == MicroRegion::layer_solid ||
                 sys.element_region(above) == MicroRegion::layer_fluid))
                if (solid(e) != solid(above))
                    ++facets;
        }
        CHECK(facets == k * static_cast<int>(cell_mesh.gamma_facets.size()));
    }
}

TEST_CASE("cell_resolution refines the per-cell mesh without changing regions") {
    auto cfg = tiny_config();
    cfg.cell_resolution = 2;
    auto sys = build_micro_system(cfg);
    CHECK(sys.columns() == 2 * 4 * 2); // cells x voxels x refinement
    int solid = 0;
    for (int e = 0; e < sys.num_elements(); ++e)
        if (sys.element_is_solid(e))
            ++solid;
    // refinement quadruples the solid element count of the k=2 layer
    CHECK(solid == 4 * 2 * 16);
}

TEST_CASE("fluid-only layer degenerates to pure Stokes and still runs") {
    auto cfg = tiny_config();
    cfg.layer_cell = uniform_cell(4, 4, false);
    cfg.T = 0.04;
    set_streamfunction_initial(cfg);
    auto run = run_micro(cfg);
    CHECK(run.snapshots.back().u.norm() == 0.0); // no solid anywhere
    CHECK(run.series.back()[1] < run.series.front()[1]);
}

TEST_CASE("L must be an integer multiple of eps") {
    auto cfg = tiny_config();
    cfg.L = 0.75;
    CHECK_THROWS_AS(cfg.validate(), DimensionError);
}

TEST_CASE("zero data stays zero") {
    auto cfg = tiny_config();
    auto run = run_micro(cfg);
    for (const auto& s : run.snapshots) {
        CHECK(s.full.norm() == 0.0);
        CHECK(s.u.norm() == 0.0);
    }
}

TEST_CASE("implicit step dissipates the scaled energy") {
    auto cfg = tiny_config();
    cfg.epsilon_inverse = 4;
    cfg.T = 0.2;
    cfg.dt = 0.01;
    set_streamfunction_initial(cfg);
    auto run = run_micro(cfg);
    CHECK(run.series.front()[1] > 1e-8);
    for (std::size_t n = 1; n < run.series.size(); ++n) {
        CHECK(run.series[n][1] <= run.series[n - 1][1] * (1.0 + 1e-10));
        CHECK(run.series[n][2] <= 1e-9);
        CHECK(run.series[n][3] <= 1e-9);
    }
    // the layer actually deforms
    CHECK(run.snapshots.back().u.cwiseAbs().maxCoeff() > 1e-12);
}

TEST_CASE("monolithic step matches the dense oracle") {
    auto cfg = tiny_config();
    cfg.f_layer_z = Expression::parse("sin(pi*x)");
    auto sys = build_micro_system(cfg);
    MicroState state;
    state.t = 0;
    state.full = Eigen::VectorXd::Zero(sys.n_full());
    state.u = Eigen::VectorXd::Zero(sys.n_full());
    // one warm-up step to get a generic state
    state = advance_micro(sys, state);
    // oracle for the next step
    const auto& r = sys.constraints().reduction_matrix();
    fem::SparseOperator::Mat reduced_mat =
        r.transpose() * sys.step_matrix_full().matrix() * r;
    auto reduced = fem::SparseOperator::from_matrix(std::move(reduced_mat), true);
    REQUIRE(reduced.rows() < 5000);
    Eigen::VectorXd rhs_red = sys.reduce(sys.step_rhs(state.full, state.u, state.t));
    Eigen::VectorXd oracle = sys.expand(fem::dense_oracle_solve(reduced, rhs_red));
    auto next = advance_micro(sys, state);
    CHECK((next.full - oracle).norm() / oracle.norm() < 1e-8);
}

TEST_CASE("evolution map is linear in the forcing") {
    auto base = tiny_config();
    base.T = 0.04;
    auto cfg_f = base;
    cfg_f.f_layer_z = Expression::parse("sin(pi*x)");
    auto cfg_g = base;
    cfg_g.f_plus_z = Expression::parse("-cos(pi*x)*z");
    auto cfg_sum = base;
    cfg_sum.f_layer_z = cfg_f.f_layer_z;
    cfg_sum.f_plus_z = cfg_g.f_plus_z;
    auto run_f = run_micro(cfg_f);
    auto run_g = run_micro(cfg_g);
    auto run_sum = run_micro(cfg_sum);
    const auto& a = run_f.snapshots.back();
    const auto& b = run_g.snapshots.back();
    const auto& s = run_sum.snapshots.back();
    CHECK((s.full - a.full - b.full).cwiseAbs().maxCoeff() < 1e-11);
    CHECK((s.u - a.u - b.u).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("evolution map is linear in the initial data") {
    auto base = tiny_config();
    base.T = 0.04;
    set_streamfunction_initial(base);
    auto run1 = run_micro(base);
    auto scaled = base;
    scaled.v0_plus_x = Expression::parse("2*(" + base.v0_plus_x.source() + ")");
    scaled.v0_plus_z = Expression::parse("2*(" + base.v0_plus_z.source() + ")");
    scaled.v0_minus_x = Expression::parse("2*(" + base.v0_minus_x.source() + ")");
    scaled.v0_minus_z = Expression::parse("2*(" + base.v0_minus_z.source() + ")");
    auto run2 = run_micro(scaled);
    const auto& a = run1.snapshots.back();
    const auto& b = run2.snapshots.back();
    CHECK((b.full - 2.0 * a.full).cwiseAbs().maxCoeff() < 1e-11);
    CHECK((b.u - 2.0 * a.u).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("displacement lives only on solid dofs and follows the shared velocity") {
    auto cfg = tiny_config();
    cfg.f_layer_z = Expression::constant(1.0);
    cfg.T = 0.06;
    auto run = run_micro(cfg);
    const auto& sys = *run.system;
    const auto& mask = sys.solid_vdof();
    const auto& last = run.snapshots.back();
    for (int d = 0; d < sys.n_velocity(); ++d)
        if (!mask[static_cast<std::size_t>(d)])
            CHECK(last.u(d) == 0.0);
    // trapezoid consistency: u^{n+1} - u^n = dt (theta w^{n+1} + (1-theta) w^n)
    const auto& s0 = run.snapshots[run.snapshots.size() - 2];
    const auto& s1 = last;
    double defect = 0.0;
    for (int d = 0; d < sys.n_velocity(); ++d)
        if (mask[static_cast<std::size_t>(d)])
            defect = std::max(defect, std::abs(s1.u(d) - s0.u(d) -
                                               cfg.dt * (cfg.theta * s1.full(d) +
                                                         (1 - cfg.theta) * s0.full(d))));
    CHECK(defect < 1e-15);
}

TEST_CASE("stationary preprocessing produces a divergence-free compatible field") {
    auto cfg = tiny_config();
    auto sys = build_micro_system(cfg);
    Eigen::VectorXd v0 = sys.initial_from_stationary_forcing(
        Expression::constant(0.0), Expression::parse("sin(pi*x)"), Expression::constant(0.0),
        Expression::parse("sin(pi*x)"), Expression(), Expression());
    CHECK(v0.head(sys.n_velocity()).cwiseAbs().maxCoeff() > 1e-8);
    const auto div = sys.divergence_residual(v0);
    CHECK(div[0] < 1e-10);
    CHECK(div[1] < 1e-10);
}

TEST_CASE("apriori report carries the printed scalings") {
    auto cfg = tiny_config();
    cfg.T = 0.04;
    cfg.f_layer_z = Expression::constant(1.0);
    auto run = run_micro(cfg);
    auto rep = apriori_report(run);
    CHECK(rep.eps == doctest::Approx(0.5));
    // zero-data run gives all-zero rows
    auto zero_run = run_micro(tiny_config());
    for (const auto& [k, v] : apriori_report(zero_run).rows)
        CHECK(v == 0.0);
    // the forced run has nonzero solid scalings
    double du = 0.0;
    for (const auto& [k, v] : rep.rows)
        if (k == "D_u_scaled")
            du = v;
    CHECK(du > 0.0);
}

TEST_CASE("micro run directory round-trip") {
    auto cfg = tiny_config();
    cfg.T = 0.04;
    cfg.f_layer_z = Expression::parse("sin(pi*x)");
    auto run = run_micro(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "platefsi_micro_run";
    std::filesystem::remove_all(dir);
    write_micro_run(run, dir);
    auto back = read_micro_run(dir);
    REQUIRE(back.snapshots.size() == run.snapshots.size());
    for (std::size_t i = 0; i < run.snapshots.size(); ++i) {
        CHECK((back.snapshots[i].full - run.snapshots[i].full).norm() == 0.0);
        CHECK((back.snapshots[i].u - run.snapshots[i].u).norm() == 0.0);
    }
    CHECK(back.sup_norms.du_solid == doctest::Approx(run.sup_norms.du_solid));
    std::filesystem::remove_all(dir);
}
