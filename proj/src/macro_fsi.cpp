#include "platefsi/macro_fsi.hpp"

#include "platefsi/errors.hpp"
#include "platefsi/fem/elements.hpp"
#include "platefsi/fem/quadrature.hpp"
#include "platefsi/io.hpp"

#include <cmath>

namespace platefsi {

namespace {

Expression expr_from_json(const nlohmann::json& j) { return Expression::from_spec(j); }

} // namespace

void MacroConfig::validate() const {
    if (!(H > 0 && L > 0 && dt > 0 && T >= 0))
        throw ParseError("macro config: H, L, dt must be positive and T nonnegative");
    if (nx < 1 || nz < 1 || n_plate < 2)
        throw ParseError("macro config: need nx, nz >= 1 and n_plate >= 2");
    if (!(theta > 0.0 && theta <= 1.0))
        throw ParseError("macro config: theta must lie in (0, 1]");
    if (!(m_inertia > 0.0) || m_stiffness < 0.0)
        throw ParseError("macro config: m_inertia must be positive, m_stiffness nonnegative");
    if (!(viscosity > 0.0))
        throw ParseError("macro config: viscosity must be positive");
    // the assembly gate: symmetric and positive semidefinite tensor block
    auto audit = audit_tensors(slice_tensors());
    if (!audit.symmetry_pass || audit.min_eigenvalue < -1e-12)
        throw ValidationError("macro config: effective tensors fail the audit (defect " +
                              std::to_string(audit.symmetry_defect) + ", min eigenvalue " +
                              std::to_string(audit.min_eigenvalue) + ")");
}

EffectivePlateTensors MacroConfig::slice_tensors() const {
    EffectivePlateTensors t;
    t.dim = 2;
    t.a = Eigen::MatrixXd::Constant(1, 1, a_star);
    t.b = Eigen::MatrixXd::Constant(1, 1, b_star);
    t.c = Eigen::MatrixXd::Constant(1, 1, c_star);
    t.solid_volume = 0.0;
    return t;
}

MacroConfig MacroConfig::from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir) {
    MacroConfig cfg;
    try {
        cfg.H = j.value("H", cfg.H);
        cfg.L = j.value("L", cfg.L);
        cfg.nx = j.value("nx", cfg.nx);
        cfg.nz = j.value("nz", cfg.nz);
        cfg.n_plate = j.value("n_plate", cfg.n_plate);
        cfg.dt = j.value("dt", cfg.dt);
        cfg.T = j.value("T", cfg.T);
        cfg.theta = j.value("theta", cfg.theta);
        cfg.viscosity = j.value("viscosity", cfg.viscosity);
        cfg.m_inertia = j.value("m_inertia", cfg.m_inertia);
        cfg.m_stiffness = j.value("m_stiffness", cfg.m_stiffness);
        cfg.snapshot_stride = j.value("snapshot_stride", cfg.snapshot_stride);
        if (j.contains("tensors_file")) {
            auto path = std::filesystem::path(j.at("tensors_file").get<std::string>());
            if (path.is_relative() && !base_dir.empty())
                path = base_dir / path;
            const auto t = read_tensors(path);
            cfg.a_star = t.a_scalar();
            cfg.b_star = t.b_scalar();
            cfg.c_star = t.c_scalar();
        }
        cfg.a_star = j.value("a_star", cfg.a_star);
        cfg.b_star = j.value("b_star", cfg.b_star);
        cfg.c_star = j.value("c_star", cfg.c_star);
        if (j.contains("forcing")) {
            const auto& f = j.at("forcing");
            if (f.contains("f_plus")) {
                cfg.f_plus_x = expr_from_json(f.at("f_plus").at(0));
                cfg.f_plus_z = expr_from_json(f.at("f_plus").at(1));
            }
            if (f.contains("f_minus")) {
                cfg.f_minus_x = expr_from_json(f.at("f_minus").at(0));
                cfg.f_minus_z = expr_from_json(f.at("f_minus").at(1));
            }
            if (f.contains("g"))
                cfg.plate_forcing = expr_from_json(f.at("g"));
        }
        if (j.contains("initial_velocity")) {
            const auto& v = j.at("initial_velocity");
            if (v.contains("v_plus")) {
                cfg.v0_plus_x = expr_from_json(v.at("v_plus").at(0));
                cfg.v0_plus_z = expr_from_json(v.at("v_plus").at(1));
            }
            if (v.contains("v_minus")) {
                cfg.v0_minus_x = expr_from_json(v.at("v_minus").at(0));
                cfg.v0_minus_z = expr_from_json(v.at("v_minus").at(1));
            }
        }
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            cfg.solver.tolerance = s.value("tolerance", cfg.solver.tolerance);
            cfg.solver.max_iterations = s.value("max_iterations", cfg.solver.max_iterations);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("macro config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

nlohmann::json MacroConfig::to_json() const {
    nlohmann::json j;
    j["H"] = H;
    j["L"] = L;
    j["nx"] = nx;
    j["nz"] = nz;
    j["n_plate"] = n_plate;
    j["dt"] = dt;
    j["T"] = T;
    j["theta"] = theta;
    j["viscosity"] = viscosity;
    j["m_inertia"] = m_inertia;
    j["m_stiffness"] = m_stiffness;
    j["a_star"] = a_star;
    j["b_star"] = b_star;
    j["c_star"] = c_star;
    j["snapshot_stride"] = snapshot_stride;
    j["forcing"] = {{"f_plus", {f_plus_x.spec_json(), f_plus_z.spec_json()}},
                    {"f_minus", {f_minus_x.spec_json(), f_minus_z.spec_json()}},
                    {"g", plate_forcing.spec_json()}};
    j["initial_velocity"] = {{"v_plus", {v0_plus_x.spec_json(), v0_plus_z.spec_json()}},
                             {"v_minus", {v0_minus_x.spec_json(), v0_minus_z.spec_json()}}};
    j["solver"] = {{"tolerance", solver.tolerance}, {"max_iterations", solver.max_iterations}};
    return j;
}

// ---------------------------------------------------------------------------
// MacroSystem
// ---------------------------------------------------------------------------

MacroSystem::MacroSystem(const MacroConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build_layout();
    build_constraints();
    assemble_blocks();
    assemble_step_matrix();
}

void MacroSystem::build_layout() {
    hx_ = cfg_.L / cfg_.nx;
    hz_ = cfg_.H / cfg_.nz;
    hp_ = cfg_.L / cfg_.n_plate;
    n_full_ = off_u1() + plate_nodes();
}

Eigen::Vector2d MacroSystem::q2_position(int side, int i, int j) const {
    const double x = 0.5 * hx_ * i;
    const double z = side == 0 ? 0.5 * hz_ * j : -cfg_.H + 0.5 * hz_ * j;
    return {x, z};
}

void MacroSystem::build_constraints() {
    map_ = fem::ConstraintMap(n_full_);
    const int nxq = 2 * cfg_.nx, nzq = 2 * cfg_.nz;
    for (int side = 0; side < 2; ++side) {
        const int sigma_j = side == 0 ? 0 : nzq;
        for (int j = 0; j <= nzq; ++j)
            for (int i = 0; i <= nxq; ++i) {
                const int dof = off_v(side) + 2 * q2_node(i, j);
                const bool lateral = i == 0 || i == nxq;
                if (lateral) {
                    map_.fix(dof);
                    map_.fix(dof + 1);
                    continue;
                }
                if (j == sigma_j) {
                    // Sigma trace: tangential zero, vertical slaved to the
                    // plate velocity evaluated at the node position
                    map_.fix(dof);
                    const double x = 0.5 * hx_ * i;
                    const int e = std::clamp(static_cast<int>(x / hp_), 0, cfg_.n_plate - 1);
                    const double s = (x - e * hp_) / hp_;
                    const auto hv = fem::hermite_values(s, hp_);
                    std::vector<std::pair<int, double>> masters;
                    for (int d = 0; d < 4; ++d) {
                        const double c = hv[static_cast<std::size_t>(d)];
                        if (std::abs(c) > 1e-15)
                            masters.emplace_back(off_w() + 2 * e + d, c);
                    }
                    map_.slave(dof + 1, std::move(masters));
                }
            }
    }
    // clamped plate and membrane ends
    map_.fix(off_w() + 0);
    map_.fix(off_w() + 1);
    map_.fix(off_w() + 2 * cfg_.n_plate);
    map_.fix(off_w() + 2 * cfg_.n_plate + 1);
    if (cfg_.m_stiffness * cfg_.a_star > 0.0) {
        map_.fix(off_u1() + 0);
        map_.fix(off_u1() + cfg_.n_plate);
    } else {
        // degenerate membrane: no elliptic equation remains, pin it entirely
        for (int i = 0; i <= cfg_.n_plate; ++i)
            map_.fix(off_u1() + i);
    }
    map_.finalize();
}

void MacroSystem::assemble_blocks() {
    const auto el = fem::stokes_element_matrices(hx_, hz_);
    std::vector<fem::Triplet> tm, tk, tb;
    for (int side = 0; side < 2; ++side) {
        for (int ez = 0; ez < cfg_.nz; ++ez)
            for (int ex = 0; ex < cfg_.nx; ++ex) {
                int vdof[18];
                for (int a2 = 0; a2 < 3; ++a2)
                    for (int a1 = 0; a1 < 3; ++a1)
                        for (int c = 0; c < 2; ++c)
                            vdof[2 * (3 * a2 + a1) + c] =
                                off_v(side) + 2 * q2_node(2 * ex + a1, 2 * ez + a2) + c;
                int pdof[4];
                for (int b2 = 0; b2 < 2; ++b2)
                    for (int b1 = 0; b1 < 2; ++b1)
                        pdof[2 * b2 + b1] =
                            off_p(side) + (ez + b2) * (cfg_.nx + 1) + (ex + b1);
                for (int a = 0; a < 18; ++a)
                    for (int b = 0; b < 18; ++b) {
                        if (el.mass(a, b) != 0.0)
                            tm.emplace_back(vdof[a], vdof[b], el.mass(a, b));
                        if (el.viscous(a, b) != 0.0)
                            tk.emplace_back(vdof[a], vdof[b], cfg_.viscosity * el.viscous(a, b));
                    }
                for (int q = 0; q < 4; ++q)
                    for (int b = 0; b < 18; ++b)
                        if (el.divergence(q, b) != 0.0)
                            tb.emplace_back(pdof[q], vdof[b], el.divergence(q, b));
            }
    }
    mass_v_ = fem::SparseOperator::from_triplets(n_full_, n_full_, tm, true);
    visc_ = fem::SparseOperator::from_triplets(n_full_, n_full_, tk, true);
    div_ = fem::SparseOperator::from_triplets(n_full_, n_full_, tb, false);

    std::vector<fem::Triplet> tpm, tpk, tms, tbw;
    const Eigen::Matrix4d hm = fem::hermite_mass(hp_);
    const Eigen::Matrix4d hk = fem::hermite_bending_stiffness(hp_);
    const Eigen::MatrixXd hc = fem::hermite_p1_coupling(hp_);
    const Eigen::Matrix2d pk = fem::p1_stiffness(hp_);
    for (int e = 0; e < cfg_.n_plate; ++e) {
        int wdof[4] = {off_w() + 2 * e, off_w() + 2 * e + 1, off_w() + 2 * e + 2,
                       off_w() + 2 * e + 3};
        int udof[2] = {off_u1() + e, off_u1() + e + 1};
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                tpm.emplace_back(wdof[a], wdof[b], hm(a, b));
                tpk.emplace_back(wdof[a], wdof[b], hk(a, b));
            }
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 2; ++b)
                tbw.emplace_back(wdof[a], udof[b], hc(a, b));
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                tms.emplace_back(udof[a], udof[b], pk(a, b));
    }
    plate_mass_ = fem::SparseOperator::from_triplets(n_full_, n_full_, tpm, true);
    plate_bend_ = fem::SparseOperator::from_triplets(n_full_, n_full_, tpk, true);
    membrane_stiff_ = fem::SparseOperator::from_triplets(n_full_, n_full_, tms, true);
    coupling_bw_ = fem::SparseOperator::from_triplets(n_full_, n_full_, tbw, false);
}

void MacroSystem::assemble_step_matrix() {
    const double dt = cfg_.dt, th = cfg_.theta;
    const double ms = cfg_.m_stiffness, mi = cfg_.m_inertia;
    using Mat = fem::SparseOperator::Mat;
    Mat a = (1.0 / dt) * mass_v_.matrix() + th * visc_.matrix();
    a += Mat(div_.matrix().transpose()) + div_.matrix();
    a += (mi / dt) * plate_mass_.matrix() + (ms * cfg_.c_star * th * th * dt) * plate_bend_.matrix();
    a += (ms * cfg_.b_star * th) * coupling_bw_.matrix() +
         (ms * cfg_.b_star * th) * Mat(coupling_bw_.matrix().transpose());
    a += (ms * cfg_.a_star / dt) * membrane_stiff_.matrix();
    step_full_ = fem::SparseOperator::from_matrix(std::move(a), true);

    const auto& r = map_.reduction_matrix();
    Mat reduced = r.transpose() * step_full_.matrix() * r;
    step_reduced_ = fem::SparseOperator::from_matrix(std::move(reduced), true);
    lu_.factor(step_reduced_);
}

Eigen::VectorXd MacroSystem::reduce(const Eigen::VectorXd& full_rhs) const {
    return map_.reduction_matrix().transpose() * full_rhs;
}

Eigen::VectorXd MacroSystem::expand(const Eigen::VectorXd& reduced) const {
    return map_.expand(reduced);
}

namespace {

/// Bulk load vector at a fixed time into the V blocks.
void add_bulk_forcing(const MacroSystem& sys, const MacroConfig& cfg, double t, double weight,
                      Eigen::VectorXd& rhs) {
    const int nx = cfg.nx, nz = cfg.nz;
    const double hx = cfg.L / nx, hz = cfg.H / nz;
    const auto& gp = fem::Gauss1d<3>::points;
    const auto& gw = fem::Gauss1d<3>::weights;
    for (int side = 0; side < 2; ++side) {
        const Expression& fx = side == 0 ? cfg.f_plus_x : cfg.f_minus_x;
        const Expression& fz = side == 0 ? cfg.f_plus_z : cfg.f_minus_z;
        if (fx.is_constant_zero() && fz.is_constant_zero())
            continue;
        for (int ez = 0; ez < nz; ++ez)
            for (int ex = 0; ex < nx; ++ex) {
                const double x0 = ex * hx;
                const double z0 = side == 0 ? ez * hz : -cfg.H + ez * hz;
                for (std::size_t qi = 0; qi < 3; ++qi)
                    for (std::size_t qj = 0; qj < 3; ++qj) {
                        const double x = x0 + gp[qi] * hx;
                        const double z = z0 + gp[qj] * hz;
                        const double w = gw[qi] * gw[qj] * hx * hz * weight;
                        const double vx = fx.eval(t, x, z);
                        const double vz = fz.eval(t, x, z);
                        if (vx == 0.0 && vz == 0.0)
                            continue;
                        const auto n = fem::q2_shape_values(gp[qi], gp[qj]);
                        for (int a2 = 0; a2 < 3; ++a2)
                            for (int a1 = 0; a1 < 3; ++a1) {
                                const int node = sys.q2_node(2 * ex + a1, 2 * ez + a2);
                                const double nv = n[static_cast<std::size_t>(3 * a2 + a1)];
                                rhs(sys.off_v(side) + 2 * node) += w * nv * vx;
                                rhs(sys.off_v(side) + 2 * node + 1) += w * nv * vz;
                            }
                    }
            }
    }
}

void add_plate_forcing(const MacroSystem& sys, const MacroConfig& cfg, double t, double weight,
                       Eigen::VectorXd& rhs) {
    if (cfg.plate_forcing.is_constant_zero())
        return;
    const double hp = cfg.L / cfg.n_plate;
    const auto& gp = fem::Gauss1d<4>::points;
    const auto& gw = fem::Gauss1d<4>::weights;
    for (int e = 0; e < cfg.n_plate; ++e)
        for (std::size_t q = 0; q < 4; ++q) {
            const double x = (e + gp[q]) * hp;
            const double g = cfg.plate_forcing.eval(t, x);
            if (g == 0.0)
                continue;
            const auto hv = fem::hermite_values(gp[q], hp);
            for (int d = 0; d < 4; ++d)
                rhs(sys.off_w() + 2 * e + d) += weight * gw[q] * hp * g *
                                                hv[static_cast<std::size_t>(d)];
        }
}

} // namespace

Eigen::VectorXd MacroSystem::step_rhs(const Eigen::VectorXd& full, const Eigen::VectorXd& u3,
                                      double t_now) const {
    const double dt = cfg_.dt, th = cfg_.theta;
    const double ms = cfg_.m_stiffness, mi = cfg_.m_inertia;

    Eigen::VectorXd u3f = Eigen::VectorXd::Zero(n_full_);
    u3f.segment(off_w(), 2 * plate_nodes()) = u3;

    Eigen::VectorXd rhs = (1.0 / dt) * mass_v_.apply(full) - (1.0 - th) * visc_.apply(full);
    rhs += (mi / dt) * plate_mass_.apply(full);
    rhs -= ms * cfg_.c_star * (plate_bend_.apply(u3f) + th * (1.0 - th) * dt * plate_bend_.apply(full));
    rhs -= ms * cfg_.b_star * (1.0 - th) * coupling_bw_.apply(full);
    rhs -= (ms / dt) * cfg_.b_star *
           (coupling_bw_.apply_transpose(u3f) + dt * (1.0 - th) * coupling_bw_.apply_transpose(full));

    add_bulk_forcing(*this, cfg_, t_now + dt, th, rhs);
    add_plate_forcing(*this, cfg_, t_now + dt, th, rhs);
    if (th < 1.0) {
        add_bulk_forcing(*this, cfg_, t_now, 1.0 - th, rhs);
        add_plate_forcing(*this, cfg_, t_now, 1.0 - th, rhs);
    }
    return rhs;
}

Eigen::Vector2d MacroSystem::bulk_velocity(const Eigen::VectorXd& full, int side, double x,
                                           double z) const {
    const int ex = std::clamp(static_cast<int>(x / hx_), 0, cfg_.nx - 1);
    const double zl = side == 0 ? z : z + cfg_.H;
    const int ez = std::clamp(static_cast<int>(zl / hz_), 0, cfg_.nz - 1);
    const double xi = (x - ex * hx_) / hx_;
    const double eta = (zl - ez * hz_) / hz_;
    const auto n = fem::q2_shape_values(xi, eta);
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    for (int a2 = 0; a2 < 3; ++a2)
        for (int a1 = 0; a1 < 3; ++a1) {
            const int dof = off_v(side) + 2 * q2_node(2 * ex + a1, 2 * ez + a2);
            const double nv = n[static_cast<std::size_t>(3 * a2 + a1)];
            v(0) += nv * full(dof);
            v(1) += nv * full(dof + 1);
        }
    return v;
}

double MacroSystem::bulk_pressure(const Eigen::VectorXd& full, int side, double x,
                                  double z) const {
    const int ex = std::clamp(static_cast<int>(x / hx_), 0, cfg_.nx - 1);
    const double zl = side == 0 ? z : z + cfg_.H;
    const int ez = std::clamp(static_cast<int>(zl / hz_), 0, cfg_.nz - 1);
    const double xi = (x - ex * hx_) / hx_;
    const double eta = (zl - ez * hz_) / hz_;
    const auto n = fem::q1quad_shape_values(xi, eta);
    double p = 0.0;
    for (int b2 = 0; b2 < 2; ++b2)
        for (int b1 = 0; b1 < 2; ++b1)
            p += n[static_cast<std::size_t>(2 * b2 + b1)] *
                 full(off_p(side) + (ez + b2) * (cfg_.nx + 1) + (ex + b1));
    return p;
}

Eigen::Vector3d MacroSystem::plate_eval(const Eigen::VectorXd& plate_dofs, double x) const {
    const int e = std::clamp(static_cast<int>(x / hp_), 0, cfg_.n_plate - 1);
    const double s = (x - e * hp_) / hp_;
    const auto v = fem::hermite_values(s, hp_);
    const auto d1 = fem::hermite_first_derivatives(s, hp_);
    const auto d2 = fem::hermite_second_derivatives(s, hp_);
    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (int d = 0; d < 4; ++d) {
        const double dof = plate_dofs(2 * e + d);
        out(0) += v[static_cast<std::size_t>(d)] * dof;
        out(1) += d1[static_cast<std::size_t>(d)] * dof;
        out(2) += d2[static_cast<std::size_t>(d)] * dof;
    }
    return out;
}

Eigen::VectorXd MacroSystem::plate_velocity_dofs(const Eigen::VectorXd& full) const {
    return full.segment(off_w(), 2 * plate_nodes());
}

Eigen::Vector2d MacroSystem::membrane_eval(const Eigen::VectorXd& full, double x) const {
    const int e = std::clamp(static_cast<int>(x / hp_), 0, cfg_.n_plate - 1);
    const double s = (x - e * hp_) / hp_;
    const double u0 = full(off_u1() + e), u1 = full(off_u1() + e + 1);
    return {u0 * (1 - s) + u1 * s, (u1 - u0) / hp_};
}

double MacroSystem::energy(const Eigen::VectorXd& full, const Eigen::VectorXd& u3) const {
    Eigen::VectorXd u3f = Eigen::VectorXd::Zero(n_full_);
    u3f.segment(off_w(), 2 * plate_nodes()) = u3;
    double e = 0.5 * full.dot(mass_v_.apply(full));
    e += 0.5 * cfg_.m_inertia * full.dot(plate_mass_.apply(full));
    e += 0.5 * cfg_.m_stiffness *
         (cfg_.a_star * full.dot(membrane_stiff_.apply(full)) +
          2.0 * cfg_.b_star * u3f.dot(coupling_bw_.apply(full)) +
          cfg_.c_star * u3f.dot(plate_bend_.apply(u3f)));
    return e;
}

std::array<double, 2> MacroSystem::divergence_residual(const Eigen::VectorXd& full) const {
    const Eigen::VectorXd bv = div_.apply(full);
    std::array<double, 2> out{};
    for (int side = 0; side < 2; ++side) {
        const double vn = full.segment(off_v(side), 2 * q2_nodes_per_side()).norm();
        out[static_cast<std::size_t>(side)] =
            bv.segment(off_p(side), q1_nodes_per_side()).norm() / (1.0 + vn);
    }
    return out;
}

Eigen::VectorXd MacroSystem::initial_full() const {
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(n_full_);
    const int nxq = 2 * cfg_.nx, nzq = 2 * cfg_.nz;
    double scale = 0.0;
    for (int side = 0; side < 2; ++side) {
        const Expression& vx = side == 0 ? cfg_.v0_plus_x : cfg_.v0_minus_x;
        const Expression& vz = side == 0 ? cfg_.v0_plus_z : cfg_.v0_minus_z;
        for (int j = 0; j <= nzq; ++j)
            for (int i = 0; i <= nxq; ++i) {
                const auto pos = q2_position(side, i, j);
                const int dof = off_v(side) + 2 * q2_node(i, j);
                raw(dof) = vx.eval(0.0, pos(0), pos(1));
                raw(dof + 1) = vz.eval(0.0, pos(0), pos(1));
                scale = std::max({scale, std::abs(raw(dof)), std::abs(raw(dof + 1))});
            }
    }
    // compatibility with the constrained space
    const double tol = 1e-10 * std::max(scale, 1.0);
    for (int side = 0; side < 2; ++side) {
        const int sigma_j = side == 0 ? 0 : nzq;
        for (int j = 0; j <= nzq; ++j)
            for (int i = 0; i <= nxq; ++i) {
                const int dof = off_v(side) + 2 * q2_node(i, j);
                const bool lateral = i == 0 || i == nxq;
                if (lateral && (std::abs(raw(dof)) > tol || std::abs(raw(dof + 1)) > tol))
                    throw ValidationError(
                        "initial bulk velocity violates the no-slip wall at x = " +
                        std::to_string(0.5 * hx_ * i));
                if (j == sigma_j) {
                    if (std::abs(raw(dof)) > tol)
                        throw ValidationError(
                            "initial bulk velocity has a nonzero tangential trace on Sigma at x = " +
                            std::to_string(0.5 * hx_ * i));
                    if (std::abs(raw(dof + 1)) > tol)
                        throw ValidationError(
                            "initial bulk velocity is incompatible with dt u3(0) = 0 on Sigma at x = " +
                            std::to_string(0.5 * hx_ * i));
                }
            }
    }

    // L2 projection onto the discretely divergence-free constrained space
    using Mat = fem::SparseOperator::Mat;
    Mat a = mass_v_.matrix() + cfg_.m_inertia * plate_mass_.matrix();
    a += Mat(div_.matrix().transpose()) + div_.matrix();
    std::vector<fem::Triplet> ident;
    for (int i = 0; i < plate_nodes(); ++i)
        ident.emplace_back(off_u1() + i, off_u1() + i, 1.0);
    Mat iu(n_full_, n_full_);
    iu.setFromTriplets(ident.begin(), ident.end());
    a += iu;
    auto proj = fem::SparseOperator::from_matrix(std::move(a), true);
    const auto& r = map_.reduction_matrix();
    Mat reduced = r.transpose() * proj.matrix() * r;
    fem::SparseFactorization plu;
    plu.factor(fem::SparseOperator::from_matrix(std::move(reduced), true));
    Eigen::VectorXd rhs = mass_v_.apply(raw);
    Eigen::VectorXd x = plu.solve(reduce(rhs));
    return expand(x);
}

MacroSystem assemble_macro_system(const MacroConfig& cfg) { return MacroSystem(cfg); }

MacroState advance(const MacroSystem& sys, const MacroState& state) {
    const auto& cfg = sys.config();
    Eigen::VectorXd rhs = sys.step_rhs(state.full, state.u3, state.t);
    Eigen::VectorXd x = sys.step_solver().solve(sys.reduce(rhs));
    MacroState next;
    next.t = state.t + cfg.dt;
    next.full = sys.expand(x);
    const Eigen::VectorXd w_new = sys.plate_velocity_dofs(next.full);
    const Eigen::VectorXd w_old = sys.plate_velocity_dofs(state.full);
    next.u3 = state.u3 + cfg.dt * (cfg.theta * w_new + (1.0 - cfg.theta) * w_old);
    return next;
}

double energy(const MacroSystem& sys, const MacroState& state) {
    return sys.energy(state.full, state.u3);
}

MacroRunResult run_macro(const MacroConfig& cfg) {
    MacroRunResult run;
    run.system = std::make_shared<MacroSystem>(cfg);
    MacroState state;
    state.t = 0.0;
    state.full = run.system->initial_full();
    state.u3 = Eigen::VectorXd::Zero(2 * run.system->plate_nodes());

    auto record = [&](const MacroState& s) {
        run.snapshots.push_back(s);
        const double e = run.system->energy(s.full, s.u3);
        const auto divres = run.system->divergence_residual(s.full);
        const double mid = run.system->plate_eval(s.u3, cfg.L / 2)(0);
        const double midv =
            run.system->plate_eval(run.system->plate_velocity_dofs(s.full), cfg.L / 2)(0);
        run.series.push_back({s.t, e, mid, midv, divres[0], divres[1]});
    };
    record(state);
    const int steps = static_cast<int>(std::llround(cfg.T / cfg.dt));
    for (int n = 0; n < steps; ++n) {
        state = advance(*run.system, state);
        record(state);
    }
    return run;
}

void write_macro_run(const MacroRunResult& run, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto& sys = *run.system;
    nlohmann::json meta;
    meta["kind"] = "macro_run";
    meta["config"] = sys.config().to_json();
    write_json_file(dir / "run.json", meta);

    CsvWriter csv({"t", "energy", "u3_mid", "dt_u3_mid", "div_residual_plus",
                   "div_residual_minus"});
    for (const auto& row : run.series)
        csv.add_row({row[0], row[1], row[2], row[3], row[4], row[5]});
    csv.write(dir / "series.csv");

    RunStates states;
    for (const auto& s : run.snapshots) {
        states.times.push_back(s.t);
        Eigen::VectorXd rec(s.full.size() + s.u3.size());
        rec << s.full, s.u3;
        states.states.push_back(std::move(rec));
    }
    states.write(dir / "states.bin");

    const auto& cfg = sys.config();
    if (cfg.snapshot_stride > 0) {
        for (std::size_t n = 0; n < run.snapshots.size();
             n += static_cast<std::size_t>(cfg.snapshot_stride)) {
            const auto& s = run.snapshots[n];
            for (int side = 0; side < 2; ++side) {
                VtkStructuredGrid grid;
                for (int i = 0; i <= cfg.nx; ++i)
                    grid.xs.push_back(i * cfg.L / cfg.nx);
                for (int j = 0; j <= cfg.nz; ++j)
                    grid.zs.push_back(side == 0 ? j * cfg.H / cfg.nz : -cfg.H + j * cfg.H / cfg.nz);
                VtkStructuredGrid::PointField vel{"velocity", 3, {}};
                VtkStructuredGrid::PointField prs{"pressure", 1, {}};
                for (int j = 0; j <= cfg.nz; ++j)
                    for (int i = 0; i <= cfg.nx; ++i) {
                        const int node = sys.q2_node(2 * i, 2 * j);
                        vel.values.push_back(s.full(sys.off_v(side) + 2 * node));
                        vel.values.push_back(0.0);
                        vel.values.push_back(s.full(sys.off_v(side) + 2 * node + 1));
                        prs.values.push_back(s.full(sys.off_p(side) + j * (cfg.nx + 1) + i));
                    }
                grid.point_fields = {vel, prs};
                char name[64];
                std::snprintf(name, sizeof name, "snap_%s_%05zu.vtk",
                              side == 0 ? "plus" : "minus", n);
                grid.write(dir / name);
            }
        }
    }
}

MacroRunResult read_macro_run(const std::filesystem::path& dir) {
    const auto meta = read_json_file(dir / "run.json");
    if (meta.value("kind", std::string{}) != "macro_run")
        throw ParseError(dir.string() + ": not a macro run directory");
    MacroRunResult run;
    run.system = std::make_shared<MacroSystem>(
        MacroConfig::from_json(meta.at("config"), dir));
    const auto states = RunStates::read(dir / "states.bin");
    const int n_full = run.system->n_full();
    const int n_u3 = 2 * run.system->plate_nodes();
    for (std::size_t i = 0; i < states.times.size(); ++i) {
        if (states.states[i].size() != n_full + n_u3)
            throw ParseError(dir.string() + ": states.bin does not match the configuration");
        MacroState s;
        s.t = states.times[i];
        s.full = states.states[i].head(n_full);
        s.u3 = states.states[i].tail(n_u3);
        run.series.push_back({s.t, 0, 0, 0, 0, 0});
        run.snapshots.push_back(std::move(s));
    }
    return run;
}

} // namespace platefsi
