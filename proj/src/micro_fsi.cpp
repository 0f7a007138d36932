#include "platefsi/micro_fsi.hpp"

#include "platefsi/errors.hpp"
#include "platefsi/fem/elements.hpp"
#include "platefsi/fem/quadrature.hpp"
#include "platefsi/io.hpp"

#include <cmath>

namespace platefsi {

namespace {

Expression expr_from_json(const nlohmann::json& j) { return Expression::from_spec(j); }

/// Geometric grading ratio r with h0 * (r^n - 1)/(r - 1) = H.
double grading_ratio(double h0, int n, double H) {
    auto total = [&](double r) {
        if (std::abs(r - 1.0) < 1e-12)
            return h0 * n;
        return h0 * (std::pow(r, n) - 1.0) / (r - 1.0);
    };
    if (std::abs(total(1.0) - H) < 1e-12 * H)
        return 1.0;
    double lo = 1e-3, hi = 1e3;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (total(mid) < H)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

void MicroConfig::validate() const {
    if (epsilon_inverse < 2)
        throw ParseError("micro config: epsilon_inverse must be >= 2");
    if (layer_cell.dimension != 2)
        throw ParseError("micro config: the layer cell must be a 2D microstructure");
    layer_cell.validate();
    if (!(H > 0 && L > 0 && dt > 0 && T >= 0))
        throw ParseError("micro config: H, L, dt must be positive and T nonnegative");
    if (!(theta > 0.0 && theta <= 1.0))
        throw ParseError("micro config: theta must lie in (0, 1]");
    if (nz_bulk < 2)
        throw ParseError("micro config: nz_bulk must be >= 2");
    if (cell_resolution < 1)
        throw ParseError("micro config: cell_resolution must be >= 1");
    const double cells = L * epsilon_inverse;
    if (std::abs(cells - std::llround(cells)) > 1e-9)
        throw DimensionError("micro config: L must be an integer multiple of eps = 1/" +
                             std::to_string(epsilon_inverse));
}

MicroConfig MicroConfig::from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir) {
    MicroConfig cfg;
    try {
        cfg.epsilon_inverse = j.at("epsilon_inverse").get<int>();
        if (j.contains("layer_cell")) {
            cfg.layer_cell = MicrostructureSpec::from_json(j.at("layer_cell"));
        } else {
            auto path = std::filesystem::path(j.at("layer_cell_file").get<std::string>());
            if (path.is_relative() && !base_dir.empty())
                path = base_dir / path;
            cfg.layer_cell = parse_microstructure(path);
        }
        cfg.H = j.value("H", cfg.H);
        cfg.L = j.value("L", cfg.L);
        cfg.nz_bulk = j.value("nz_bulk", cfg.nz_bulk);
        cfg.cell_resolution = j.value("cell_resolution", cfg.cell_resolution);
        cfg.dt = j.value("dt", cfg.dt);
        cfg.T = j.value("T", cfg.T);
        cfg.theta = j.value("theta", cfg.theta);
        cfg.snapshot_stride = j.value("snapshot_stride", cfg.snapshot_stride);
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
            if (f.contains("f_layer")) {
                cfg.f_layer_x = expr_from_json(f.at("f_layer").at(0));
                cfg.f_layer_z = expr_from_json(f.at("f_layer").at(1));
            }
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
        throw ParseError(std::string("micro config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

nlohmann::json MicroConfig::to_json() const {
    nlohmann::json j;
    j["epsilon_inverse"] = epsilon_inverse;
    j["layer_cell"] = layer_cell.to_json();
    j["H"] = H;
    j["L"] = L;
    j["nz_bulk"] = nz_bulk;
    j["cell_resolution"] = cell_resolution;
    j["dt"] = dt;
    j["T"] = T;
    j["theta"] = theta;
    j["snapshot_stride"] = snapshot_stride;
    j["forcing"] = {{"f_plus", {f_plus_x.spec_json(), f_plus_z.spec_json()}},
                    {"f_minus", {f_minus_x.spec_json(), f_minus_z.spec_json()}},
                    {"f_layer", {f_layer_x.spec_json(), f_layer_z.spec_json()}}};
    j["initial_velocity"] = {{"v_plus", {v0_plus_x.spec_json(), v0_plus_z.spec_json()}},
                             {"v_minus", {v0_minus_x.spec_json(), v0_minus_z.spec_json()}}};
    j["solver"] = {{"tolerance", solver.tolerance}, {"max_iterations", solver.max_iterations}};
    return j;
}

// ---------------------------------------------------------------------------

MicroSystem::MicroSystem(const MicroConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build_mesh();
    build_constraints();
    assemble();
}

void MicroSystem::build_mesh() {
    const double eps = cfg_.eps();
    cells_ = static_cast<int>(std::llround(cfg_.L * cfg_.epsilon_inverse));
    c1_ = cfg_.layer_cell.n1() * cfg_.cell_resolution;
    c3_ = cfg_.layer_cell.n3() * cfg_.cell_resolution;
    nxe_ = cells_ * c1_;
    nze_ = 2 * cfg_.nz_bulk + c3_;
    hx_ = cfg_.L / nxe_;

    const double hz_layer = 2.0 * eps / c3_;
    const double r = grading_ratio(hz_layer, cfg_.nz_bulk, cfg_.H);
    std::vector<double> bulk_sizes(static_cast<std::size_t>(cfg_.nz_bulk));
    for (int i = 0; i < cfg_.nz_bulk; ++i)
        bulk_sizes[static_cast<std::size_t>(i)] = hz_layer * std::pow(r, i);
    // normalize rounding so the column ends exactly at H + eps
    double sum = 0.0;
    for (double s : bulk_sizes)
        sum += s;
    for (double& s : bulk_sizes)
        s *= cfg_.H / sum;

    zlev_.clear();
    zlev_.push_back(-(cfg_.H + eps));
    for (int i = cfg_.nz_bulk - 1; i >= 0; --i)
        zlev_.push_back(zlev_.back() + bulk_sizes[static_cast<std::size_t>(i)]);
    zlev_.back() = -eps; // exact interface
    for (int i = 1; i <= c3_; ++i)
        zlev_.push_back(-eps + i * hz_layer);
    zlev_[static_cast<std::size_t>(cfg_.nz_bulk + c3_)] = eps;
    for (int i = 0; i < cfg_.nz_bulk; ++i)
        zlev_.push_back(zlev_.back() + bulk_sizes[static_cast<std::size_t>(i)]);
    zlev_.back() = cfg_.H + eps;

    zq2_.assign(static_cast<std::size_t>(2 * nze_ + 1), 0.0);
    for (int rrow = 0; rrow < nze_; ++rrow) {
        zq2_[static_cast<std::size_t>(2 * rrow)] = zlev_[static_cast<std::size_t>(rrow)];
        zq2_[static_cast<std::size_t>(2 * rrow + 1)] =
            0.5 * (zlev_[static_cast<std::size_t>(rrow)] + zlev_[static_cast<std::size_t>(rrow + 1)]);
    }
    zq2_.back() = zlev_.back();

    // pressure spaces: bulk sides plus a separate layer-fluid field
    n_pp_ = (nxe_ + 1) * (cfg_.nz_bulk + 1);
    n_pm_ = n_pp_;
    layer_pressure_index_.assign(static_cast<std::size_t>((nxe_ + 1) * (c3_ + 1)), -1);
    int next = 0;
    for (int row = 0; row < c3_; ++row)
        for (int col = 0; col < nxe_; ++col) {
            const int e = (cfg_.nz_bulk + row) * nxe_ + col;
            if (element_region(e) != MicroRegion::layer_fluid)
                continue;
            for (int b2 = 0; b2 < 2; ++b2)
                for (int b1 = 0; b1 < 2; ++b1) {
                    auto& slot = layer_pressure_index_[static_cast<std::size_t>(
                        (row + b2) * (nxe_ + 1) + (col + b1))];
                    if (slot < 0)
                        slot = next++;
                }
        }
    n_pl_ = next;

    off_pp_ = n_velocity();
    off_pm_ = off_pp_ + n_pp_;
    off_pl_ = off_pm_ + n_pm_;
    n_full_ = off_pl_ + n_pl_;

    solid_vdof_.assign(static_cast<std::size_t>(n_velocity()), 0);
    for (int e = 0; e < num_elements(); ++e) {
        if (!element_is_solid(e))
            continue;
        const int col = e % nxe_, row = e / nxe_;
        for (int a2 = 0; a2 < 3; ++a2)
            for (int a1 = 0; a1 < 3; ++a1) {
                const int node = q2_node(2 * col + a1, 2 * row + a2);
                solid_vdof_[static_cast<std::size_t>(2 * node)] = 1;
                solid_vdof_[static_cast<std::size_t>(2 * node + 1)] = 1;
            }
    }
}

MicroRegion MicroSystem::element_region(int e) const {
    const int row = e / nxe_;
    if (row < cfg_.nz_bulk)
        return MicroRegion::bulk_minus;
    if (row >= cfg_.nz_bulk + c3_)
        return MicroRegion::bulk_plus;
    const int col = e % nxe_;
    const int vi = (col % c1_) / cfg_.cell_resolution;
    const int vk = (row - cfg_.nz_bulk) / cfg_.cell_resolution;
    return cfg_.layer_cell.is_solid(vi, 0, vk) ? MicroRegion::layer_solid
                                               : MicroRegion::layer_fluid;
}

Eigen::Vector4d MicroSystem::element_box(int e) const {
    const int col = e % nxe_, row = e / nxe_;
    const double z0 = zlev_[static_cast<std::size_t>(row)];
    const double z1 = zlev_[static_cast<std::size_t>(row + 1)];
    return {col * hx_, z0, hx_, z1 - z0};
}

void MicroSystem::build_constraints() {
    map_ = fem::ConstraintMap(n_full_);
    for (int j = 0; j <= 2 * nze_; ++j) {
        map_.fix(2 * q2_node(0, j));
        map_.fix(2 * q2_node(0, j) + 1);
        map_.fix(2 * q2_node(2 * nxe_, j));
        map_.fix(2 * q2_node(2 * nxe_, j) + 1);
    }
    map_.finalize();
}

void MicroSystem::assemble() {
    const double eps = cfg_.eps();
    // per-row Stokes element matrices (columns share sizes)
    std::vector<fem::StokesElementMatrices> row_el(static_cast<std::size_t>(nze_));
    for (int row = 0; row < nze_; ++row) {
        const double hz = zlev_[static_cast<std::size_t>(row + 1)] - zlev_[static_cast<std::size_t>(row)];
        row_el[static_cast<std::size_t>(row)] = fem::stokes_element_matrices(hx_, hz);
    }

    std::vector<fem::Triplet> t_meff, t_keff, t_el, t_div;
    std::vector<fem::Triplet> t_mb, t_mlf, t_ms, t_msx, t_msz, t_db, t_dlf, t_ds, t_pb, t_pl;
    const double hz_layer = 2.0 * eps / c3_;

    for (int e = 0; e < num_elements(); ++e) {
        const int col = e % nxe_, row = e / nxe_;
        const auto region = element_region(e);
        const auto& el = row_el[static_cast<std::size_t>(row)];
        int vdof[18];
        for (int a2 = 0; a2 < 3; ++a2)
            for (int a1 = 0; a1 < 3; ++a1)
                for (int c = 0; c < 2; ++c)
                    vdof[2 * (3 * a2 + a1) + c] = 2 * q2_node(2 * col + a1, 2 * row + a2) + c;

        const bool is_bulk = region == MicroRegion::bulk_minus || region == MicroRegion::bulk_plus;
        const bool is_lf = region == MicroRegion::layer_fluid;
        const bool is_solid = region == MicroRegion::layer_solid;
        const double mass_w = is_bulk ? 1.0 : 1.0 / eps;
        const double visc_w = is_bulk ? 1.0 : (is_lf ? 1.0 / eps : 0.0);

        for (int a = 0; a < 18; ++a)
            for (int b = 0; b < 18; ++b) {
                const double mv = el.mass(a, b);
                if (mv != 0.0) {
                    t_meff.emplace_back(vdof[a], vdof[b], mass_w * mv);
                    if (is_bulk)
                        t_mb.emplace_back(vdof[a], vdof[b], mv);
                    if (is_lf)
                        t_mlf.emplace_back(vdof[a], vdof[b], mv);
                    if (is_solid) {
                        t_ms.emplace_back(vdof[a], vdof[b], mv);
                        if (a % 2 == 0 && b % 2 == 0)
                            t_msx.emplace_back(vdof[a], vdof[b], mv);
                        if (a % 2 == 1 && b % 2 == 1)
                            t_msz.emplace_back(vdof[a], vdof[b], mv);
                    }
                }
                const double kv = el.viscous(a, b);
                if (kv != 0.0) {
                    if (visc_w != 0.0)
                        t_keff.emplace_back(vdof[a], vdof[b], visc_w * kv);
                    if (is_bulk)
                        t_db.emplace_back(vdof[a], vdof[b], kv);
                    if (is_lf)
                        t_dlf.emplace_back(vdof[a], vdof[b], kv);
                    if (is_solid)
                        t_ds.emplace_back(vdof[a], vdof[b], kv);
                }
            }

        if (is_solid) {
            const int voxel =
                cfg_.layer_cell.voxel_index((col % c1_) / cfg_.cell_resolution, 0,
                                            (row - cfg_.nz_bulk) / cfg_.cell_resolution);
            const auto a_tensor = cfg_.layer_cell.material.tensor_for_voxel(2, voxel);
            const Eigen::MatrixXd ke = fem::q2_elasticity_stiffness(hx_, hz_layer, a_tensor);
            for (int a = 0; a < 18; ++a)
                for (int b = 0; b < 18; ++b)
                    if (ke(a, b) != 0.0)
                        t_el.emplace_back(vdof[a], vdof[b], ke(a, b));
            continue;
        }

        // pressure dofs of the element's region
        int pdof[4];
        if (region == MicroRegion::bulk_plus) {
            const int r2 = row - (cfg_.nz_bulk + c3_);
            for (int b2 = 0; b2 < 2; ++b2)
                for (int b1 = 0; b1 < 2; ++b1)
                    pdof[2 * b2 + b1] = off_pp_ + (r2 + b2) * (nxe_ + 1) + (col + b1);
        } else if (region == MicroRegion::bulk_minus) {
            for (int b2 = 0; b2 < 2; ++b2)
                for (int b1 = 0; b1 < 2; ++b1)
                    pdof[2 * b2 + b1] = off_pm_ + (row + b2) * (nxe_ + 1) + (col + b1);
        } else {
            const int r2 = row - cfg_.nz_bulk;
            for (int b2 = 0; b2 < 2; ++b2)
                for (int b1 = 0; b1 < 2; ++b1) {
                    const int idx = layer_pressure_index_[static_cast<std::size_t>(
                        (r2 + b2) * (nxe_ + 1) + (col + b1))];
                    pdof[2 * b2 + b1] = off_pl_ + idx;
                }
        }
        const double div_w = is_bulk ? 1.0 : 1.0 / eps;
        for (int q = 0; q < 4; ++q)
            for (int b = 0; b < 18; ++b)
                if (el.divergence(q, b) != 0.0)
                    t_div.emplace_back(pdof[q], vdof[b], div_w * el.divergence(q, b));
        for (int q = 0; q < 4; ++q)
            for (int rr = 0; rr < 4; ++rr)
                if (el.pressure_mass(q, rr) != 0.0)
                    (is_bulk ? t_pb : t_pl).emplace_back(pdof[q], pdof[rr], el.pressure_mass(q, rr));
    }

    mass_eff_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_meff, true);
    visc_eff_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_keff, true);
    elast_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_el, true);
    div_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_div, false);
    mass_bulk_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_mb, true);
    mass_layer_f_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_mlf, true);
    mass_solid_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_ms, true);
    mass_solid_x_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_msx, true);
    mass_solid_z_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_msz, true);
    dd_bulk_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_db, true);
    dd_layer_f_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_dlf, true);
    dd_solid_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_ds, true);
    pmass_bulk_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_pb, true);
    pmass_layer_ = fem::SparseOperator::from_triplets(n_full_, n_full_, t_pl, true);

    const double dt = cfg_.dt, th = cfg_.theta;
    using Mat = fem::SparseOperator::Mat;
    Mat a = (1.0 / dt) * mass_eff_.matrix() + th * visc_eff_.matrix() +
            (th * th * dt / (eps * eps * eps)) * elast_.matrix();
    a += Mat(div_.matrix().transpose()) + div_.matrix();
    step_full_ = fem::SparseOperator::from_matrix(std::move(a), true);
    const auto& r = map_.reduction_matrix();
    Mat reduced = r.transpose() * step_full_.matrix() * r;
    lu_.factor(fem::SparseOperator::from_matrix(std::move(reduced), true));
}

Eigen::VectorXd MicroSystem::reduce(const Eigen::VectorXd& v) const {
    return map_.reduction_matrix().transpose() * v;
}

Eigen::VectorXd MicroSystem::expand(const Eigen::VectorXd& v) const { return map_.expand(v); }

namespace {

void add_micro_forcing(const MicroSystem& sys, const MicroConfig& cfg, double t, double weight,
                       Eigen::VectorXd& rhs) {
    const double eps = cfg.eps();
    const auto& gp = fem::Gauss1d<3>::points;
    const auto& gw = fem::Gauss1d<3>::weights;
    for (int e = 0; e < sys.num_elements(); ++e) {
        const auto region = sys.element_region(e);
        if (region == MicroRegion::layer_solid)
            continue;
        const Expression* fx = nullptr;
        const Expression* fz = nullptr;
        double shift = 0.0, w_region = 1.0;
        switch (region) {
        case MicroRegion::bulk_plus:
            fx = &cfg.f_plus_x;
            fz = &cfg.f_plus_z;
            shift = -eps; // f_eps = f(. - eps e3) in the upper bulk
            break;
        case MicroRegion::bulk_minus:
            fx = &cfg.f_minus_x;
            fz = &cfg.f_minus_z;
            shift = eps;
            break;
        default:
            fx = &cfg.f_layer_x;
            fz = &cfg.f_layer_z;
            w_region = 1.0 / eps;
            break;
        }
        if (fx->is_constant_zero() && fz->is_constant_zero())
            continue;
        const auto box = sys.element_box(e);
        const int col = e % sys.columns(), row = e / sys.columns();
        for (std::size_t qi = 0; qi < 3; ++qi)
            for (std::size_t qj = 0; qj < 3; ++qj) {
                const double x = box(0) + gp[qi] * box(2);
                const double z = box(1) + gp[qj] * box(3);
                const double vx = fx->eval(t, x, z + shift);
                const double vz = fz->eval(t, x, z + shift);
                if (vx == 0.0 && vz == 0.0)
                    continue;
                const double w = gw[qi] * gw[qj] * box(2) * box(3) * weight * w_region;
                const auto n = fem::q2_shape_values(gp[qi], gp[qj]);
                for (int a2 = 0; a2 < 3; ++a2)
                    for (int a1 = 0; a1 < 3; ++a1) {
                        const int node = sys.q2_node(2 * col + a1, 2 * row + a2);
                        const double nv = n[static_cast<std::size_t>(3 * a2 + a1)];
                        rhs(2 * node) += w * nv * vx;
                        rhs(2 * node + 1) += w * nv * vz;
                    }
            }
    }
}

} // namespace

Eigen::VectorXd MicroSystem::step_rhs(const Eigen::VectorXd& full, const Eigen::VectorXd& u,
                                      double t_now) const {
    const double dt = cfg_.dt, th = cfg_.theta;
    const double ie3 = 1.0 / std::pow(cfg_.eps(), 3);
    Eigen::VectorXd rhs = (1.0 / dt) * mass_eff_.apply(full) - (1.0 - th) * visc_eff_.apply(full);
    rhs -= ie3 * (elast_.apply(u) + th * (1.0 - th) * dt * elast_.apply(full));
    add_micro_forcing(*this, cfg_, t_now + dt, th, rhs);
    if (th < 1.0)
        add_micro_forcing(*this, cfg_, t_now, 1.0 - th, rhs);
    return rhs;
}

Eigen::Vector2d MicroSystem::velocity_local(const Eigen::VectorXd& full, int e, double xi,
                                            double eta) const {
    const int col = e % nxe_, row = e / nxe_;
    const auto n = fem::q2_shape_values(xi, eta);
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    for (int a2 = 0; a2 < 3; ++a2)
        for (int a1 = 0; a1 < 3; ++a1) {
            const int node = q2_node(2 * col + a1, 2 * row + a2);
            const double nv = n[static_cast<std::size_t>(3 * a2 + a1)];
            v(0) += nv * full(2 * node);
            v(1) += nv * full(2 * node + 1);
        }
    return v;
}

Eigen::Vector2d MicroSystem::displacement_local(const Eigen::VectorXd& u, int e, double xi,
                                                double eta) const {
    return velocity_local(u, e, xi, eta);
}

Eigen::Vector3d MicroSystem::strain_local(const Eigen::VectorXd& u, int e, double xi,
                                          double eta) const {
    const int col = e % nxe_, row = e / nxe_;
    const auto box = element_box(e);
    const auto g = fem::q2_shape_gradients(xi, eta);
    Eigen::Vector3d s = Eigen::Vector3d::Zero();
    for (int a2 = 0; a2 < 3; ++a2)
        for (int a1 = 0; a1 < 3; ++a1) {
            const int node = q2_node(2 * col + a1, 2 * row + a2);
            const double gx = g[static_cast<std::size_t>(3 * a2 + a1)][0] / box(2);
            const double gz = g[static_cast<std::size_t>(3 * a2 + a1)][1] / box(3);
            s(0) += gx * u(2 * node);
            s(1) += gz * u(2 * node + 1);
            s(2) += gz * u(2 * node) + gx * u(2 * node + 1);
        }
    return s;
}

double MicroSystem::pressure_local(const Eigen::VectorXd& full, int e, double xi,
                                   double eta) const {
    const int col = e % nxe_, row = e / nxe_;
    const auto region = element_region(e);
    const auto n = fem::q1quad_shape_values(xi, eta);
    double p = 0.0;
    for (int b2 = 0; b2 < 2; ++b2)
        for (int b1 = 0; b1 < 2; ++b1) {
            int dof = -1;
            if (region == MicroRegion::bulk_plus)
                dof = off_pp_ + (row - (cfg_.nz_bulk + c3_) + b2) * (nxe_ + 1) + (col + b1);
            else if (region == MicroRegion::bulk_minus)
                dof = off_pm_ + (row + b2) * (nxe_ + 1) + (col + b1);
            else if (region == MicroRegion::layer_fluid)
                dof = off_pl_ + layer_pressure_index_[static_cast<std::size_t>(
                                    (row - cfg_.nz_bulk + b2) * (nxe_ + 1) + (col + b1))];
            else
                throw DimensionError("pressure_local: element is solid");
            p += n[static_cast<std::size_t>(2 * b2 + b1)] * full(dof);
        }
    return p;
}

double MicroSystem::energy(const Eigen::VectorXd& full, const Eigen::VectorXd& u) const {
    const double ie3 = 1.0 / std::pow(cfg_.eps(), 3);
    return 0.5 * full.dot(mass_eff_.apply(full)) + 0.5 * ie3 * u.dot(elast_.apply(u));
}

std::array<double, 2> MicroSystem::divergence_residual(const Eigen::VectorXd& full) const {
    const Eigen::VectorXd bv = div_.apply(full);
    const double vn = 1.0 + full.head(n_velocity()).norm();
    const double bulk = bv.segment(off_pp_, n_pp_ + n_pm_).norm();
    const double layer = n_pl_ > 0 ? bv.segment(off_pl_, n_pl_).norm() : 0.0;
    return {bulk / vn, layer / vn};
}

MicroSystem::Norms MicroSystem::norms(const Eigen::VectorXd& full, const Eigen::VectorXd& u) const {
    auto q = [&](const fem::SparseOperator& op, const Eigen::VectorXd& v) {
        return std::sqrt(std::max(0.0, v.dot(op.apply(v))));
    };
    Norms n;
    n.v_bulk = q(mass_bulk_, full);
    n.dv_bulk = q(dd_bulk_, full);
    n.p_bulk = q(pmass_bulk_, full);
    n.v_layer = q(mass_layer_f_, full);
    n.dv_layer = q(dd_layer_f_, full);
    n.p_layer = q(pmass_layer_, full);
    n.w_solid = q(mass_solid_, full);
    n.u_inplane = q(mass_solid_x_, u);
    n.u_vertical = q(mass_solid_z_, u);
    n.du_solid = q(dd_solid_, u);
    return n;
}

Eigen::VectorXd MicroSystem::initial_full() const {
    const double eps = cfg_.eps();
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(n_full_);
    const bool any = !(cfg_.v0_plus_x.is_constant_zero() && cfg_.v0_plus_z.is_constant_zero() &&
                       cfg_.v0_minus_x.is_constant_zero() && cfg_.v0_minus_z.is_constant_zero());
    if (!any)
        return raw;
    for (int j = 0; j <= 2 * nze_; ++j) {
        const double z = zq2_[static_cast<std::size_t>(j)];
        if (std::abs(z) < eps - 1e-14)
            continue; // layer handled by the zero initial condition
        const bool plus = z > 0;
        const Expression& ex = plus ? cfg_.v0_plus_x : cfg_.v0_minus_x;
        const Expression& ez = plus ? cfg_.v0_plus_z : cfg_.v0_minus_z;
        for (int i = 0; i <= 2 * nxe_; ++i) {
            const double x = 0.5 * hx_ * i;
            const int node = q2_node(i, j);
            raw(2 * node) = ex.eval(0.0, x, z > 0 ? z - eps : z + eps);
            raw(2 * node + 1) = ez.eval(0.0, x, z > 0 ? z - eps : z + eps);
        }
    }
    double scale = raw.cwiseAbs().maxCoeff();
    const double tol = 1e-10 * std::max(scale, 1.0);
    for (int j = 0; j <= 2 * nze_; ++j)
        for (int i : {0, 2 * nxe_})
            if (std::abs(raw(2 * q2_node(i, j))) > tol ||
                std::abs(raw(2 * q2_node(i, j) + 1)) > tol)
                throw ValidationError("micro initial velocity violates the lateral no-slip wall");
    // displacement and solid velocity start at zero: zero the solid dofs
    for (int d = 0; d < n_velocity(); ++d)
        if (solid_vdof_[static_cast<std::size_t>(d)])
            raw(d) = 0.0;

    using Mat = fem::SparseOperator::Mat;
    Mat a = mass_eff_.matrix();
    a += Mat(div_.matrix().transpose()) + div_.matrix();
    fem::SparseFactorization plu;
    const auto& r = map_.reduction_matrix();
    Mat reduced = r.transpose() * a * r;
    plu.factor(fem::SparseOperator::from_matrix(std::move(reduced), true));
    Eigen::VectorXd rhs = mass_eff_.apply(raw);
    return expand(plu.solve(reduce(rhs)));
}

Eigen::VectorXd MicroSystem::initial_from_stationary_forcing(
    const Expression& fpx, const Expression& fpz, const Expression& fmx, const Expression& fmz,
    const Expression& flx, const Expression& flz) const {
    // stationary scaled Stokes on the fluid part, traction-free on Gamma and
    // the outer horizontal boundaries, no-slip on the lateral boundary
    fem::ConstraintMap fluid_map(n_full_);
    std::vector<char> fluid_dof(static_cast<std::size_t>(n_velocity()), 0);
    for (int e = 0; e < num_elements(); ++e) {
        if (element_is_solid(e))
            continue;
        const int col = e % nxe_, row = e / nxe_;
        for (int a2 = 0; a2 < 3; ++a2)
            for (int a1 = 0; a1 < 3; ++a1) {
                const int node = q2_node(2 * col + a1, 2 * row + a2);
                fluid_dof[static_cast<std::size_t>(2 * node)] = 1;
                fluid_dof[static_cast<std::size_t>(2 * node + 1)] = 1;
            }
    }
    for (int d = 0; d < n_velocity(); ++d)
        if (!fluid_dof[static_cast<std::size_t>(d)])
            fluid_map.fix(d);
    for (int j = 0; j <= 2 * nze_; ++j)
        for (int i : {0, 2 * nxe_})
            for (int c = 0; c < 2; ++c) {
                const int dof = 2 * q2_node(i, j) + c;
                if (fluid_dof[static_cast<std::size_t>(dof)])
                    fluid_map.fix(dof);
            }
    fluid_map.finalize();

    using Mat = fem::SparseOperator::Mat;
    Mat a = visc_eff_.matrix();
    a += Mat(div_.matrix().transpose()) + div_.matrix();
    const auto& r = fluid_map.reduction_matrix();
    Mat reduced = r.transpose() * a * r;
    fem::SparseFactorization slu;
    slu.factor(fem::SparseOperator::from_matrix(std::move(reduced), true));

    MicroConfig tmp = cfg_;
    tmp.f_plus_x = fpx;
    tmp.f_plus_z = fpz;
    tmp.f_minus_x = fmx;
    tmp.f_minus_z = fmz;
    tmp.f_layer_x = flx;
    tmp.f_layer_z = flz;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_full_);
    add_micro_forcing(*this, tmp, 0.0, 1.0, rhs);
    Eigen::VectorXd full = fluid_map.expand(slu.solve(r.transpose() * rhs));
    return full;
}

MicroSystem build_micro_system(const MicroConfig& cfg) { return MicroSystem(cfg); }

MicroState advance_micro(const MicroSystem& sys, const MicroState& state) {
    const auto& cfg = sys.config();
    Eigen::VectorXd rhs = sys.step_rhs(state.full, state.u, state.t);
    Eigen::VectorXd x = sys.step_solver().solve(sys.reduce(rhs));
    MicroState next;
    next.t = state.t + cfg.dt;
    next.full = sys.expand(x);
    next.u = state.u;
    const auto& mask = sys.solid_vdof();
    for (int d = 0; d < sys.n_velocity(); ++d)
        if (mask[static_cast<std::size_t>(d)])
            next.u(d) += cfg.dt * (cfg.theta * next.full(d) + (1.0 - cfg.theta) * state.full(d));
    return next;
}

MicroRunResult run_micro(const MicroConfig& cfg) {
    MicroRunResult run;
    run.system = std::make_shared<MicroSystem>(cfg);
    MicroState state;
    state.t = 0.0;
    state.full = run.system->initial_full();
    state.u = Eigen::VectorXd::Zero(run.system->n_full());

    auto sup = [&](MicroSystem::Norms& acc, const MicroSystem::Norms& n) {
        acc.v_bulk = std::max(acc.v_bulk, n.v_bulk);
        acc.dv_bulk = std::max(acc.dv_bulk, n.dv_bulk);
        acc.p_bulk = std::max(acc.p_bulk, n.p_bulk);
        acc.v_layer = std::max(acc.v_layer, n.v_layer);
        acc.dv_layer = std::max(acc.dv_layer, n.dv_layer);
        acc.p_layer = std::max(acc.p_layer, n.p_layer);
        acc.w_solid = std::max(acc.w_solid, n.w_solid);
        acc.u_inplane = std::max(acc.u_inplane, n.u_inplane);
        acc.u_vertical = std::max(acc.u_vertical, n.u_vertical);
        acc.du_solid = std::max(acc.du_solid, n.du_solid);
    };
    run.sup_norms = MicroSystem::Norms{};

    auto record = [&](const MicroState& s, bool include_norms) {
        run.snapshots.push_back(s);
        const double e = run.system->energy(s.full, s.u);
        const auto divres = run.system->divergence_residual(s.full);
        run.series.push_back({s.t, e, divres[0], divres[1]});
        if (include_norms)
            sup(run.sup_norms, run.system->norms(s.full, s.u));
    };
    record(state, true);
    const int steps = static_cast<int>(std::llround(cfg.T / cfg.dt));
    for (int n = 0; n < steps; ++n) {
        state = advance_micro(*run.system, state);
        record(state, true);
    }
    return run;
}

AprioriReport apriori_report(const MicroRunResult& run) {
    const double eps = run.system->config().eps();
    const auto& n = run.sup_norms;
    AprioriReport rep;
    rep.eps = eps;
    const double se = std::sqrt(eps);
    rep.rows = {
        {"v_bulk", n.v_bulk},
        {"D_v_bulk", n.dv_bulk},
        {"p_bulk", n.p_bulk},
        {"v_layer_scaled", n.v_layer / se},
        {"D_v_layer_scaled", n.dv_layer / se},
        {"p_layer_scaled", n.p_layer / se},
        {"dt_u_scaled", n.w_solid / se},
        {"u_inplane_scaled", n.u_inplane / (eps * se)},
        {"u_vertical_scaled", n.u_vertical / se},
        {"D_u_scaled", n.du_solid / (eps * se)},
        {"D_u_unscaled", n.du_solid},
    };
    return rep;
}

nlohmann::json AprioriReport::to_json() const {
    nlohmann::json j;
    j["eps"] = eps;
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [k, v] : rows)
        r[k] = v;
    j["rows"] = r;
    return j;
}

void write_micro_run(const MicroRunResult& run, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta;
    meta["kind"] = "micro_run";
    meta["config"] = run.system->config().to_json();
    meta["apriori"] = apriori_report(run).to_json();
    write_json_file(dir / "run.json", meta);

    CsvWriter csv({"t", "energy", "div_residual_bulk", "div_residual_layer"});
    for (const auto& row : run.series)
        csv.add_row({row[0], row[1], row[2], row[3]});
    csv.write(dir / "series.csv");

    CsvWriter norms({"quantity", "value"});
    for (const auto& [k, v] : apriori_report(run).rows)
        norms.add_text_row({k, format_float(v)});
    norms.write(dir / "apriori.csv");

    RunStates states;
    for (const auto& s : run.snapshots) {
        states.times.push_back(s.t);
        Eigen::VectorXd rec(s.full.size() + s.u.size());
        rec << s.full, s.u;
        states.states.push_back(std::move(rec));
    }
    states.write(dir / "states.bin");

    const auto& sys = *run.system;
    const auto& cfg = sys.config();
    if (cfg.snapshot_stride > 0) {
        for (std::size_t n = 0; n < run.snapshots.size();
             n += static_cast<std::size_t>(cfg.snapshot_stride)) {
            const auto& s = run.snapshots[n];
            VtkStructuredGrid grid;
            for (int i = 0; i <= sys.columns(); ++i)
                grid.xs.push_back(i * cfg.L / sys.columns());
            grid.zs = sys.z_levels();
            VtkStructuredGrid::PointField vel{"velocity", 3, {}};
            VtkStructuredGrid::PointField disp{"displacement", 3, {}};
            for (int r = 0; r <= sys.rows(); ++r)
                for (int i = 0; i <= sys.columns(); ++i) {
                    const int node = sys.q2_node(2 * i, 2 * r);
                    vel.values.insert(vel.values.end(),
                                      {s.full(2 * node), 0.0, s.full(2 * node + 1)});
                    disp.values.insert(disp.values.end(),
                                       {s.u(2 * node), 0.0, s.u(2 * node + 1)});
                }
            VtkStructuredGrid::CellField phase{"region", {}};
            for (int e = 0; e < sys.num_elements(); ++e)
                phase.values.push_back(static_cast<double>(sys.element_region(e)));
            grid.point_fields = {vel, disp};
            grid.cell_fields = {phase};
            char name[64];
            std::snprintf(name, sizeof name, "snap_%05zu.vtk", n);
            grid.write(dir / name);
        }
    }
}

MicroRunResult read_micro_run(const std::filesystem::path& dir) {
    const auto meta = read_json_file(dir / "run.json");
    if (meta.value("kind", std::string{}) != "micro_run")
        throw ParseError(dir.string() + ": not a micro run directory");
    MicroRunResult run;
    run.system = std::make_shared<MicroSystem>(MicroConfig::from_json(meta.at("config"), dir));
    const auto states = RunStates::read(dir / "states.bin");
    const int n_full = run.system->n_full();
    for (std::size_t i = 0; i < states.times.size(); ++i) {
        if (states.states[i].size() != 2 * n_full)
            throw ParseError(dir.string() + ": states.bin does not match the configuration");
        MicroState s;
        s.t = states.times[i];
        s.full = states.states[i].head(n_full);
        s.u = states.states[i].tail(n_full);
        run.series.push_back({s.t, 0, 0, 0});
        run.snapshots.push_back(std::move(s));
    }
    run.sup_norms = MicroSystem::Norms{};
    for (const auto& s : run.snapshots) {
        auto n = run.system->norms(s.full, s.u);
        auto& acc = run.sup_norms;
        acc.v_bulk = std::max(acc.v_bulk, n.v_bulk);
        acc.dv_bulk = std::max(acc.dv_bulk, n.dv_bulk);
        acc.p_bulk = std::max(acc.p_bulk, n.p_bulk);
        acc.v_layer = std::max(acc.v_layer, n.v_layer);
        acc.dv_layer = std::max(acc.dv_layer, n.dv_layer);
        acc.p_layer = std::max(acc.p_layer, n.p_layer);
        acc.w_solid = std::max(acc.w_solid, n.w_solid);
        acc.u_inplane = std::max(acc.u_inplane, n.u_inplane);
        acc.u_vertical = std::max(acc.u_vertical, n.u_vertical);
        acc.du_solid = std::max(acc.du_solid, n.du_solid);
    }
    return run;
}

} // namespace platefsi
