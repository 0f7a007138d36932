// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Every tolerance is pinned here, in code.

#include "platefsi/correctors.hpp"
#include "platefsi/errors.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

using namespace platefsi;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok)
            pass = false;
        if (!detail.empty())
            detail += "; ";
        detail += what + (ok ? " ok" : " FAIL");
    }
};

double wall_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

fem::SolveConfig tight_solver() {
    fem::SolveConfig cfg;
    cfg.tolerance = 1e-12;
    cfg.max_iterations = 200000;
    return cfg;
}

MicrostructureSpec full_solid_3d(int n_inplane, int n3) {
    MicrostructureSpec spec;
    spec.dimension = 3;
    spec.resolution = {n_inplane, n_inplane, n3};
    spec.indicator.assign(static_cast<std::size_t>(spec.num_voxels()), 1);
    spec.material.kind = MaterialModel::Kind::uniform_lame;
    spec.material.lame = {1.0, 1.0};
    spec.allow_uniform = true;
    return spec;
}

/// The 2D study cell: solid slab |y3| <= 0.5 with fluid channels above and
/// below, lambda = mu = 1.
MicrostructureSpec study_cell() {
    MicrostructureSpec cell;
    cell.dimension = 2;
    cell.resolution = {4, 8, 0};
    cell.indicator.assign(32, 0);
    for (int i = 0; i < 4; ++i)
        for (int k = 2; k < 6; ++k)
            cell.indicator[static_cast<std::size_t>(cell.voxel_index(i, 0, k))] = 1;
    cell.material.kind = MaterialModel::Kind::uniform_lame;
    cell.material.lame = {1.0, 1.0};
    return cell;
}

MicroConfig study_micro(const MicrostructureSpec& cell, int k, double H, double L, double dt,
                        double T) {
    MicroConfig cfg;
    cfg.epsilon_inverse = k;
    cfg.layer_cell = cell;
    cfg.H = H;
    cfg.L = L;
    cfg.nz_bulk = 8;
    cfg.dt = dt;
    cfg.T = T;
    cfg.f_layer_z = Expression::parse("sin(pi*x/2)*sin(2*t)");
    cfg.f_layer_x = Expression::parse("0.5*cos(pi*x/2)*sin(2*t)");
    return cfg;
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(x.size());
    for (int i = 0; i < n; ++i) {
        sx += std::log(x[static_cast<std::size_t>(i)]);
        sy += std::log(y[static_cast<std::size_t>(i)]);
        sxx += std::log(x[static_cast<std::size_t>(i)]) * std::log(x[static_cast<std::size_t>(i)]);
        sxy += std::log(x[static_cast<std::size_t>(i)]) * std::log(y[static_cast<std::size_t>(i)]);
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// --------------------------------------------------------------------------
// criteria
// --------------------------------------------------------------------------

Outcome criterion1_full_solid_tensors() {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    auto spec = full_solid_3d(8, 8);
    auto mesh = build_cell_mesh(spec);
    auto sols = solve_all_cell_problems(mesh, spec.material, tight_solver(), 2);
    auto t = compute_tensors(mesh, spec.material, sols);
    const double a1111 = t.a_entry(1, 1, 1, 1);
    const double a1122 = t.a_entry(1, 1, 2, 2);
    out.require(std::abs(a1111 - 8.0 / 3.0) <= 1e-8 * (8.0 / 3.0),
                "a*_1111 = " + fmt(a1111) + " vs 8/3");
    out.require(std::abs(a1122 - 2.0 / 3.0) <= 1e-8 * (2.0 / 3.0),
                "a*_1122 = " + fmt(a1122) + " vs 2/3");
    out.require(t.b.cwiseAbs().maxCoeff() <= 1e-10,
                "max |b*| = " + fmt(t.b.cwiseAbs().maxCoeff()));
    const double secs = wall_seconds(t0);
    out.require(secs < 60.0, "runtime " + fmt(secs) + " s < 60 s");
    return out;
}

Outcome criterion2_bending_refinement() {
    Outcome out;
    std::vector<double> hs, errors;
    for (int n3 : {4, 8, 16, 32}) {
        auto spec = full_solid_3d(8, n3);
        auto mesh = build_cell_mesh(spec);
        auto sols = solve_all_cell_problems(mesh, spec.material, tight_solver(), 2);
        auto t = compute_tensors(mesh, spec.material, sols);
        hs.push_back(2.0 / n3);
        errors.push_back(std::abs(t.c_entry(1, 1, 1, 1) - 8.0 / 9.0));
    }
    for (std::size_t i = 1; i < errors.size(); ++i)
        out.require(errors[i] < errors[i - 1], "error decreases at level " + std::to_string(i));
    const double slope = least_squares_slope(hs, errors);
    out.require(slope >= 1.7, "c*_1111 error slope " + fmt(slope) + " >= 1.7");
    return out;
}

Outcome criterion3_random_cell_audits() {
    Outcome out;
    double worst_defect = 0.0, worst_eig = 1e300;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto spec = random_microstructure(3, 6, seed);
        auto mesh = build_cell_mesh(spec);
        auto sols = solve_all_cell_problems(mesh, spec.material, tight_solver(), 2);
        auto t = compute_tensors(mesh, spec.material, sols);
        auto audit = audit_tensors(t);
        worst_defect = std::max(worst_defect, audit.symmetry_defect);
        worst_eig = std::min(worst_eig, audit.min_eigenvalue);
    }
    out.require(worst_defect <= 1e-10, "max symmetry defect " + fmt(worst_defect));
    out.require(worst_eig > 0.0, "min block-form eigenvalue " + fmt(worst_eig) + " > 0");
    return out;
}

Outcome criterion4_oracle_equivalence() {
    Outcome out;
    // cell solve on a 4^3 cell vs the dense oracle with mean-zero multipliers
    auto spec = full_solid_3d(4, 4);
    spec.allow_uniform = false;
    spec.indicator[static_cast<std::size_t>(spec.voxel_index(1, 2, 1))] = 0;
    auto mesh = build_cell_mesh(spec);
    auto op = assemble_cell_operator(mesh, spec.material);
    CellLoadCase lc{1, 2, CellLoadCase::Kind::bending};
    auto sol = solve_cell_problem(mesh, op, spec.material, lc, tight_solver());

    const int n = op.stiffness_reduced.rows();
    const int m = static_cast<int>(op.mean_functionals.size());
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = Eigen::MatrixXd(op.stiffness_reduced.matrix());
    for (int c = 0; c < m; ++c) {
        aug.block(0, n + c, n, 1) = op.mean_functionals[static_cast<std::size_t>(c)];
        aug.block(n + c, 0, 1, n) =
            op.mean_functionals[static_cast<std::size_t>(c)].transpose();
    }
    Eigen::VectorXd rhs_full = assemble_cell_load(mesh, spec.material, lc);
    Eigen::VectorXd rhs(n + m);
    rhs << op.constraints.reduction_matrix().transpose() * rhs_full, Eigen::VectorXd::Zero(m);
    Eigen::VectorXd oracle = fem::dense_oracle_solve(aug, rhs);
    Eigen::VectorXd oracle_full = op.constraints.expand(oracle.head(n));
    const double cell_err =
        (oracle_full - sol.displacement).norm() / std::max(oracle_full.norm(), 1e-300);
    out.require(cell_err <= 1e-8, "cell solve vs dense oracle: rel " + fmt(cell_err));

    // one micro FSI step on a k = 2 coarse mesh vs the dense oracle
    auto cell = study_cell();
    MicroConfig ucfg;
    ucfg.epsilon_inverse = 2;
    ucfg.layer_cell = cell;
    ucfg.H = 1.0;
    ucfg.L = 1.0;
    ucfg.nz_bulk = 3;
    ucfg.dt = 0.02;
    ucfg.T = 0.02;
    ucfg.f_layer_z = Expression::parse("sin(pi*x)");
    auto sys = build_micro_system(ucfg);
    MicroState state;
    state.t = 0;
    state.full = Eigen::VectorXd::Zero(sys.n_full());
    state.u = Eigen::VectorXd::Zero(sys.n_full());
    state = advance_micro(sys, state); // generic state
    const auto& r = sys.constraints().reduction_matrix();
    fem::SparseOperator::Mat red_mat = r.transpose() * sys.step_matrix_full().matrix() * r;
    auto reduced = fem::SparseOperator::from_matrix(std::move(red_mat), true);
    Eigen::VectorXd rhs_red = sys.reduce(sys.step_rhs(state.full, state.u, state.t));
    Eigen::VectorXd micro_oracle = sys.expand(fem::dense_oracle_solve(reduced, rhs_red));
    auto next = advance_micro(sys, state);
    const double micro_err = (next.full - micro_oracle).norm() / micro_oracle.norm();
    out.require(micro_err <= 1e-8, "micro step vs dense oracle: rel " + fmt(micro_err));
    return out;
}

Outcome criterion5_macro_energy_law() {
    Outcome out;
    MacroConfig cfg;
    cfg.H = 1.0;
    cfg.L = 2.0;
    cfg.nx = 16;
    cfg.nz = 8;
    cfg.n_plate = 16;
    cfg.dt = 0.01;
    cfg.T = 2.0; // 200 steps
    cfg.theta = 1.0;
    cfg.a_star = 8.0 / 3.0;
    cfg.b_star = 0.0;
    cfg.c_star = 8.0 / 9.0;
    cfg.v0_plus_x = Expression::parse("sin(pi*x/2)^2*(2*z*(1-z)^2 - 2*z^2*(1-z))");
    cfg.v0_plus_z = Expression::parse("-(pi*sin(pi*x)/2)*z^2*(1-z)^2");
    cfg.v0_minus_x = Expression::parse("sin(pi*x/2)^2*(2*z*(1+z)^2 + 2*z^2*(1+z))");
    cfg.v0_minus_z = Expression::parse("-(pi*sin(pi*x)/2)*z^2*(1+z)^2");
    auto run = run_macro(cfg);
    const std::size_t steps = run.series.size() - 1;
    bool energy_ok = run.series.front()[1] > 0.0;
    double worst_div = 0.0;
    for (std::size_t n = 1; n < run.series.size(); ++n) {
        if (run.series[n][1] > run.series[n - 1][1] * (1.0 + 1e-10))
            energy_ok = false;
        worst_div = std::max({worst_div, run.series[n][4], run.series[n][5]});
    }
    out.require(steps == 200, "200 steps");
    out.require(energy_ok, "energy nonincreasing each step (1e-10 relative)");
    out.require(worst_div <= 1e-9, "divergence residual " + fmt(worst_div) + " <= 1e-9");
    return out;
}

Outcome criterion6_static_plate() {
    Outcome out;
    MacroConfig cfg;
    cfg.H = 1.0;
    cfg.L = 2.0;
    cfg.nx = 8;
    cfg.nz = 4;
    cfg.n_plate = 128;
    cfg.dt = 0.5;
    cfg.T = 40.0;
    cfg.a_star = 8.0 / 3.0;
    cfg.b_star = 0.0;
    cfg.c_star = 8.0 / 9.0;
    const double q = 0.3;
    cfg.plate_forcing = Expression::constant(q);
    auto run = run_macro(cfg);
    const auto& last = run.snapshots.back();
    double worst = 0.0;
    const double scale = q * std::pow(cfg.L, 4) / (384.0 * cfg.c_star); // midpoint value
    for (int i = 1; i < 16; ++i) {
        const double x = cfg.L * i / 16.0;
        const double exact = q * x * x * (cfg.L - x) * (cfg.L - x) / (24.0 * cfg.c_star);
        const double got = run.system->plate_eval(last.u3, x)(0);
        worst = std::max(worst, std::abs(got - exact) / scale);
    }
    out.require(worst <= 1e-3, "max profile deviation " + fmt(worst) + " <= 0.1%");
    return out;
}

Outcome criterion7_apriori_scalings() {
    Outcome out;
    const auto cell = study_cell();
    std::map<std::string, std::vector<double>> rows;
    std::vector<double> epsilons;
    for (int k : {4, 8, 16}) {
        const auto t0 = std::chrono::steady_clock::now();
        auto run = run_micro(study_micro(cell, k, 0.25, 2.0, 0.02, 0.4));
        const double secs = wall_seconds(t0);
        out.require(secs < 900.0, "k=" + std::to_string(k) + " runtime " + fmt(secs) + " s");
        epsilons.push_back(run.system->config().eps());
        for (const auto& [name, v] : apriori_report(run).rows)
            rows[name].push_back(v);
    }
    for (const auto& [name, v] : rows) {
        if (name == "D_u_unscaled")
            continue; // slope row below
        const double mx = *std::max_element(v.begin(), v.end());
        const double mn = *std::min_element(v.begin(), v.end());
        const double ratio = mn > 0.0 ? mx / mn : 1.0;
        out.require(ratio <= 3.0, name + " ratio " + fmt(ratio));
    }
    const double slope = least_squares_slope(epsilons, rows.at("D_u_unscaled"));
    out.require(std::abs(slope - 1.5) <= 0.35, "|D(u)| slope " + fmt(slope) + " in 1.5 +- 0.35");
    return out;
}

struct StudyData {
    std::shared_ptr<MacroRunResult> macro;
    CellMesh mesh;
    std::vector<CellSolution> sols;
    std::vector<MicroRunResult> micros;
};

StudyData convergence_study() {
    StudyData s;
    const auto cell = study_cell();
    s.mesh = build_cell_mesh(cell);
    s.sols = solve_all_cell_problems(s.mesh, cell.material, tight_solver(), 2);
    auto tensors = compute_tensors(s.mesh, cell.material, s.sols);

    const double L = 2.0, H = 1.0, dt = 0.02, T = 0.4;
    MacroConfig mc;
    mc.H = H;
    mc.L = L;
    mc.nx = 64;
    mc.nz = 16;
    mc.n_plate = 64;
    mc.dt = dt;
    mc.T = T;
    mc.a_star = tensors.a_scalar();
    mc.b_star = tensors.b_scalar();
    mc.c_star = tensors.c_scalar();
    // volume-consistent preset: the derivation carries |Z| on the inertia and
    // |Z^s| on the normalized tensors
    mc.m_inertia = s.mesh.total_volume;
    mc.m_stiffness = s.mesh.solid_volume;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.17g*sin(pi*x/2)*sin(2*t)", s.mesh.fluid_volume);
    mc.plate_forcing = Expression::parse(buf);
    s.macro = std::make_shared<MacroRunResult>(run_macro(mc));

    for (int k : {8, 16, 32})
        s.micros.push_back(run_micro(study_micro(cell, k, H, L, dt, T)));
    return s;
}

Outcome criterion8_convergence(const StudyData& s) {
    Outcome out;
    std::vector<const MicroRunResult*> ptrs;
    for (const auto& m : s.micros)
        ptrs.push_back(&m);
    auto rep = compare_runs(s.macro, &s.mesh, &s.sols, ptrs);
    for (const auto& q : rep.quantities) {
        bool monotone = true;
        // runs ordered by decreasing eps: errors must decrease along the list
        for (std::size_t r = 1; r < rep.epsilons.size(); ++r)
            monotone = monotone && rep.value(q, r) < rep.value(q, r - 1);
        out.require(monotone, q + " decreasing (" + fmt(rep.value(q, 0)) + " -> " +
                                  fmt(rep.value(q, rep.epsilons.size() - 1)) + ")");
    }
    return out;
}

Outcome criterion9_corrector_identities(const StudyData& s) {
    Outcome out;
    // built-in identity on the finest micro mesh
    const auto& finest = s.micros.back();
    ReconstructedFields recon(s.macro, &s.mesh, &s.sols,
                              finest.system->config().eps());
    const double defect = corrector_identity_defect(recon, *finest.system);
    out.require(defect <= 1e-14, "v_app^M identity defect " + fmt(defect) + " <= 1e-14");

    // u2 single-coefficient case and linearity, exact
    const CellSolution* chi = nullptr;
    const CellSolution* chi_b = nullptr;
    for (const auto& sol : s.sols)
        (sol.load_case.kind == CellLoadCase::Kind::standard ? chi : chi_b) = &sol;
    Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1);
    auto u2 = reconstruct_u2(s.mesh, s.sols, one, zero);
    out.require((u2 - chi->displacement).cwiseAbs().maxCoeff() == 0.0,
                "u2 = chi_11 single-coefficient case exact");
    Eigen::MatrixXd a = Eigen::MatrixXd::Constant(1, 1, 2.0);
    Eigen::MatrixXd b = Eigen::MatrixXd::Constant(1, 1, -3.0);
    auto combo = reconstruct_u2(s.mesh, s.sols, a, b);
    Eigen::VectorXd expect = 2.0 * chi->displacement - 3.0 * chi_b->displacement;
    out.require((combo - expect).cwiseAbs().maxCoeff() <= 1e-14 * expect.cwiseAbs().maxCoeff(),
                "u2 linearity exact");
    return out;
}

} // namespace

int main() {
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
    criteria.emplace_back("1 full-solid tensors (a* = 8/3, 2/3; b* = 0)",
                          criterion1_full_solid_tensors);
    criteria.emplace_back("2 c*_1111 -> 8/9 under y3 refinement, slope >= 1.7",
                          criterion2_bending_refinement);
    criteria.emplace_back("3 tensor audit on 10 random microstructures",
                          criterion3_random_cell_audits);
    criteria.emplace_back("4 oracle equivalence (cell solve, micro step)",
                          criterion4_oracle_equivalence);
    criteria.emplace_back("5 macro energy law over 200 steps", criterion5_macro_energy_law);
    criteria.emplace_back("6 static clamped-plate profile within 0.1%", criterion6_static_plate);
    criteria.emplace_back("7 micro a priori scalings at k = 4, 8, 16",
                          criterion7_apriori_scalings);

    StudyData study;
    bool study_built = false;
    std::string study_error;
    auto ensure_study = [&]() -> StudyData& {
        if (!study_built) {
            study = convergence_study();
            study_built = true;
        }
        return study;
    };
    criteria.emplace_back("8 micro-to-macro errors decrease at k = 8, 16, 32",
                          [&]() { return criterion8_convergence(ensure_study()); });
    criteria.emplace_back("9 corrector identities",
                          [&]() { return criterion9_corrector_identities(ensure_study()); });

    int failures = 0;
    for (auto& [name, fn] : criteria) {
        Outcome out;
        try {
            out = fn();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] %s: %s\n", out.pass ? "PASS" : "FAIL", name.c_str(),
                    out.detail.c_str());
        std::fflush(stdout);
        if (!out.pass)
            ++failures;
    }
    if (failures)
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    else
        std::printf("all %zu criteria passed\n", criteria.size());
    return failures == 0 ? 0 : 1;
}
