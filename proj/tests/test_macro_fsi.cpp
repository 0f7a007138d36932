#include "platefsi/errors.hpp"
#include "platefsi/fem/elements.hpp"
#include "platefsi/macro_fsi.hpp"

#include <doctest.h>

#include <filesystem>

using namespace platefsi;

namespace {

MacroConfig small_config() {
    MacroConfig cfg;
    cfg.H = 1.0;
    cfg.L = 2.0;
    cfg.nx = 8;
    cfg.nz = 4;
    cfg.n_plate = 16;
    cfg.dt = 0.02;
    cfg.T = 0.1;
    cfg.a_star = 8.0 / 3.0;
    cfg.b_star = 0.0;
    cfg.c_star = 8.0 / 9.0;
    return cfg;
}

/// Stream-function initial velocity: divergence free, zero on the walls and
/// on Sigma, mirrored between the halves.
void set_streamfunction_initial(MacroConfig& cfg) {
    // psi = sin(pi x / L)^2 * z^2 (H - z)^2, v = (dz psi, -dx psi)
    const std::string sin2 = "sin(pi*x/2)^2";
    const std::string dsin2 = "pi*sin(pi*x)/2"; // d/dx of sin^2(pi x / L), L = 2
    cfg.v0_plus_x = Expression::parse(sin2 + "*(2*z*(1-z)^2 - 2*z^2*(1-z))");
    cfg.v0_plus_z = Expression::parse("-(" + dsin2 + ")*z^2*(1-z)^2");
    cfg.v0_minus_x = Expression::parse(sin2 + "*(2*z*(1+z)^2 + 2*z^2*(1+z))");
    cfg.v0_minus_z = Expression::parse("-(" + dsin2 + ")*z^2*(1+z)^2");
}

} // namespace

TEST_CASE("hermite plate stiffness matches the hand-assembled biharmonic matrix") {
    // two clamped elements of length h: one free node (w, w') in the middle
    const double h = 0.5;
    Eigen::Matrix4d ke = fem::hermite_bending_stiffness(h);
    // assemble the middle node block: contributions from the right end of
    // element 0 and the left end of element 1
    Eigen::Matrix2d mid;
    mid(0, 0) = ke(2, 2) + ke(0, 0);
    mid(0, 1) = ke(2, 3) + ke(0, 1);
    mid(1, 0) = ke(3, 2) + ke(1, 0);
    mid(1, 1) = ke(3, 3) + ke(1, 1);
    // classic beam element: k22 = 12/h^3, k24 = -6/h^2 pattern
    CHECK(mid(0, 0) == doctest::Approx(24.0 / (h * h * h)));
    CHECK(mid(0, 1) == doctest::Approx(0.0));
    CHECK(mid(1, 1) == doctest::Approx(8.0 / h));
}

TEST_CASE("zero forcing and zero initial state stay zero") {
    auto cfg = small_config();
    auto run = run_macro(cfg);
    for (const auto& s : run.snapshots) {
        CHECK(s.full.norm() == 0.0);
        CHECK(s.u3.norm() == 0.0);
    }
}

TEST_CASE("implicit Euler dissipates the discrete energy") {
    auto cfg = small_config();
    cfg.dt = 0.01;
    cfg.T = 0.3;
    set_streamfunction_initial(cfg);
    auto run = run_macro(cfg);
    REQUIRE(run.snapshots.size() > 10);
    CHECK(run.series.front()[1] > 1e-6); // projected initial state carries energy
    for (std::size_t n = 1; n < run.series.size(); ++n) {
        CHECK(run.series[n][1] <= run.series[n - 1][1] * (1.0 + 1e-10));
        CHECK(run.series[n][4] <= 1e-9);
        CHECK(run.series[n][5] <= 1e-9);
    }
}

TEST_CASE("trapezoid scheme also dissipates (physical rate only)") {
    auto cfg = small_config();
    cfg.theta = 0.5;
    cfg.dt = 0.01;
    cfg.T = 0.2;
    set_streamfunction_initial(cfg);
    auto run = run_macro(cfg);
    for (std::size_t n = 1; n < run.series.size(); ++n)
        CHECK(run.series[n][1] <= run.series[n - 1][1] * (1.0 + 1e-10));
    // trapezoid loses less energy than implicit Euler on the same data
    auto cfg_be = cfg;
    cfg_be.theta = 1.0;
    auto run_be = run_macro(cfg_be);
    CHECK(run.series.back()[1] > run_be.series.back()[1]);
}

TEST_CASE("trace identity: bulk Sigma dofs equal the plate velocity samples") {
    auto cfg = small_config();
    cfg.plate_forcing = Expression::parse("sin(pi*x/2)");
    auto sys = assemble_macro_system(cfg);
    MacroState state;
    state.t = 0;
    state.full = Eigen::VectorXd::Zero(sys.n_full());
    state.u3 = Eigen::VectorXd::Zero(2 * sys.plate_nodes());
    for (int n = 0; n < 3; ++n)
        state = advance(sys, state);
    const Eigen::VectorXd w = sys.plate_velocity_dofs(state.full);
    for (int side = 0; side < 2; ++side) {
        const int sigma_j = side == 0 ? 0 : 2 * cfg.nz;
        for (int i = 0; i <= 2 * cfg.nx; ++i) {
            const int dof = sys.off_v(side) + 2 * sys.q2_node(i, sigma_j);
            CHECK(state.full(dof) == 0.0); // tangential exactly zero
            const double x = sys.q2_position(side, i, sigma_j)(0);
            const double wx = sys.plate_eval(w, x)(0);
            CHECK(state.full(dof + 1) == doctest::Approx(wx).epsilon(1e-13));
        }
    }
    // the plate actually moved
    CHECK(w.cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("static clamped-plate limit matches the closed form") {
    auto cfg = small_config();
    cfg.nx = 8;
    cfg.nz = 4;
    cfg.n_plate = 128;
    cfg.dt = 0.5;
    cfg.T = 40.0;
    cfg.c_star = 8.0 / 9.0;
    const double q = 0.3;
    cfg.plate_forcing = Expression::constant(q);
    auto run = run_macro(cfg);
    const double mid = run.series.back()[2];
    const double exact = q * std::pow(cfg.L, 4) / (384.0 * cfg.c_star);
    CHECK(mid == doctest::Approx(exact).epsilon(1e-3));
    // late-time velocity is negligible: steady state reached
    CHECK(std::abs(run.series.back()[3]) < 1e-8 * std::abs(mid));
}

TEST_CASE("b* = 0 decouples the membrane") {
    auto cfg = small_config();
    cfg.plate_forcing = Expression::constant(1.0);
    auto run = run_macro(cfg);
    const auto& sys = *run.system;
    for (const auto& s : run.snapshots)
        CHECK(s.full.segment(sys.off_u1(), sys.plate_nodes()).norm() == 0.0);
    // nonzero b* drives the membrane through the bending coupling
    cfg.b_star = 0.5;
    auto run2 = run_macro(cfg);
    const auto& sys2 = *run2.system;
    CHECK(run2.snapshots.back().full.segment(sys2.off_u1(), sys2.plate_nodes()).norm() > 1e-10);
}

TEST_CASE("zero tensors are accepted and reduce the plate row to inertia") {
    auto cfg = small_config();
    cfg.a_star = cfg.b_star = cfg.c_star = 0.0;
    cfg.plate_forcing = Expression::constant(1.0);
    cfg.T = 0.1;
    auto run = run_macro(cfg);
    // the plate accelerates freely (no elastic restoring force)
    CHECK(run.series.back()[3] > 1e-4);
}

TEST_CASE("indefinite tensor block refuses to assemble") {
    auto cfg = small_config();
    cfg.a_star = 1.0;
    cfg.c_star = 1.0;
    cfg.b_star = 3.0; // b^2 > a c
    CHECK_THROWS_AS(assemble_macro_system(cfg), ValidationError);
}

TEST_CASE("mirrored data produce the mirrored solution") {
    auto cfg_a = small_config();
    cfg_a.dt = 0.02;
    cfg_a.T = 0.08;
    cfg_a.f_plus_x = Expression::parse("sin(pi*x/2)*z*(1-z)");
    cfg_a.f_plus_z = Expression::parse("-cos(pi*x)*z^2");
    auto cfg_b = cfg_a;
    cfg_b.f_plus_x = Expression();
    cfg_b.f_plus_z = Expression();
    cfg_b.f_minus_x = Expression::parse("sin(pi*x/2)*(-z)*(1+z)");
    cfg_b.f_minus_z = Expression::parse("cos(pi*x)*z^2");
    auto run_a = run_macro(cfg_a);
    auto run_b = run_macro(cfg_b);
    const auto& sys = *run_a.system;
    const auto& sa = run_a.snapshots.back();
    const auto& sb = run_b.snapshots.back();
    // v_b^-(x, -z) = (vx_a^+(x, z), -vz_a^+(x, z)) at matching nodes
    double defect = 0.0;
    for (int i = 0; i <= 2 * cfg_a.nx; ++i)
        for (int j = 0; j <= 2 * cfg_a.nz; ++j) {
            const int node_plus = sys.q2_node(i, j);
            const int node_minus = sys.q2_node(i, 2 * cfg_a.nz - j);
            const double vxa = sa.full(sys.off_v(0) + 2 * node_plus);
            const double vza = sa.full(sys.off_v(0) + 2 * node_plus + 1);
            const double vxb = sb.full(sys.off_v(1) + 2 * node_minus);
            const double vzb = sb.full(sys.off_v(1) + 2 * node_minus + 1);
            defect = std::max({defect, std::abs(vxb - vxa), std::abs(vzb + vza)});
        }
    CHECK(defect < 1e-11);
    // plate displacement flips sign
    CHECK((sb.u3 + sa.u3).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("energy of superposed independent bulk and plate states adds") {
    auto cfg = small_config();
    auto sys = assemble_macro_system(cfg);
    MacroState bulk;
    bulk.t = 0;
    bulk.full = sys.initial_full();
    bulk.u3 = Eigen::VectorXd::Zero(2 * sys.plate_nodes());
    // pure interior bulk state (nothing on Sigma): craft via initial projection
    auto cfg2 = cfg;
    set_streamfunction_initial(cfg2);
    auto sys2 = assemble_macro_system(cfg2);
    Eigen::VectorXd vb = sys2.initial_full();

    MacroState plate;
    plate.t = 0;
    plate.full = Eigen::VectorXd::Zero(sys.n_full());
    plate.u3 = Eigen::VectorXd::Zero(2 * sys.plate_nodes());
    for (int i = 1; i < sys.plate_nodes() - 1; ++i)
        plate.u3(2 * i) = std::sin(M_PI * i / (sys.plate_nodes() - 1.0));

    MacroState combined;
    combined.t = 0;
    combined.full = vb + plate.full;
    combined.u3 = plate.u3;
    MacroState only_bulk;
    only_bulk.t = 0;
    only_bulk.full = vb;
    only_bulk.u3 = Eigen::VectorXd::Zero(2 * sys.plate_nodes());
    CHECK(energy(sys2, combined) ==
          doctest::Approx(energy(sys2, only_bulk) + energy(sys2, plate)).epsilon(1e-12));
    // pure plate displacement with b*=0 gives (1/2) c* m_S |u3''|^2
    double bend = 0.0;
    const double hp = cfg.L / cfg.n_plate;
    for (int e = 0; e < cfg.n_plate; ++e) {
        Eigen::Vector4d ue(plate.u3(2 * e), plate.u3(2 * e + 1), plate.u3(2 * e + 2),
                           plate.u3(2 * e + 3));
        bend += ue.dot(fem::hermite_bending_stiffness(hp) * ue);
    }
    CHECK(energy(sys, plate) == doctest::Approx(0.5 * cfg.c_star * bend).epsilon(1e-12));
}

TEST_CASE("incompatible initial data is rejected with the violated constraint") {
    auto cfg = small_config();
    cfg.v0_plus_x = Expression::constant(1.0); // nonzero on walls and Sigma
    auto sys = assemble_macro_system(cfg);
    CHECK_THROWS_WITH_AS(static_cast<void>(sys.initial_full()),
                         doctest::Contains("no-slip wall"), ValidationError);
    auto cfg2 = small_config();
    // vanishes on the walls but slips tangentially along Sigma
    cfg2.v0_plus_x = Expression::parse("sin(pi*x/2)^2");
    auto sys2 = assemble_macro_system(cfg2);
    CHECK_THROWS_WITH_AS(static_cast<void>(sys2.initial_full()),
                         doctest::Contains("tangential trace on Sigma"), ValidationError);
}

TEST_CASE("T = 0 returns the projected initial snapshot only") {
    auto cfg = small_config();
    cfg.T = 0.0;
    set_streamfunction_initial(cfg);
    auto run = run_macro(cfg);
    CHECK(run.snapshots.size() == 1);
    CHECK(run.series.front()[4] < 1e-10);
}

TEST_CASE("implicit Euler self-convergence has order about one") {
    auto base = small_config();
    base.T = 0.2;
    base.plate_forcing = Expression::parse("sin(pi*x/2)*sin(2*t)");
    std::vector<double> mids;
    for (double dt : {0.02, 0.01, 0.005}) {
        auto cfg = base;
        cfg.dt = dt;
        auto run = run_macro(cfg);
        mids.push_back(run.series.back()[2]);
    }
    const double e1 = std::abs(mids[0] - mids[2]);
    const double e2 = std::abs(mids[1] - mids[2]);
    const double order = std::log2(e1 / e2) - 1.0; // Richardson-style estimate
    CHECK(order > 0.6);
    CHECK(order < 1.5);
}

TEST_CASE("macro run round-trip through a directory") {
    auto cfg = small_config();
    cfg.T = 0.04;
    // tabulated plate load: exercised through the config echo round-trip
    cfg.plate_forcing = Expression::tabulated({0.0, 1.0, 2.0}, {0.0, 0.5, 0.0});
    auto run = run_macro(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "platefsi_macro_run";
    std::filesystem::remove_all(dir);
    write_macro_run(run, dir);
    auto back = read_macro_run(dir);
    REQUIRE(back.snapshots.size() == run.snapshots.size());
    for (std::size_t i = 0; i < run.snapshots.size(); ++i) {
        CHECK((back.snapshots[i].full - run.snapshots[i].full).norm() == 0.0);
        CHECK((back.snapshots[i].u3 - run.snapshots[i].u3).norm() == 0.0);
    }
    std::filesystem::remove_all(dir);
}
