#include "platefsi/correctors.hpp"

#include "platefsi/errors.hpp"
#include "platefsi/fem/elements.hpp"
#include "platefsi/fem/quadrature.hpp"
#include "platefsi/io.hpp"

#include <cmath>

namespace platefsi {

Eigen::VectorXd reconstruct_u2(const CellMesh& cell, const std::vector<CellSolution>& solutions,
                               const Eigen::MatrixXd& membrane_strain,
                               const Eigen::MatrixXd& hessian_u3) {
    const int dim = cell.dim;
    const int np = num_pairs(dim);
    const int plane = dim - 1;
    if (membrane_strain.rows() != plane || membrane_strain.cols() != plane ||
        hessian_u3.rows() != plane || hessian_u3.cols() != plane)
        throw DimensionError("reconstruct_u2: strain inputs must be (dim-1) square matrices");

    std::vector<const CellSolution*> standard(static_cast<std::size_t>(np), nullptr);
    std::vector<const CellSolution*> bending(static_cast<std::size_t>(np), nullptr);
    for (const auto& s : solutions) {
        if (s.dim != dim || s.mesh_resolution != cell.res)
            throw DimensionError("reconstruct_u2: solution " + s.load_case.name() +
                                 " does not match the cell mesh");
        const int p = pair_index(dim, s.load_case.alpha, s.load_case.beta);
        (s.load_case.kind == CellLoadCase::Kind::standard
             ? standard
             : bending)[static_cast<std::size_t>(p)] = &s;
    }

    Eigen::VectorXd u2 = Eigen::VectorXd::Zero(cell.num_nodes() * dim);
    for (int a = 1; a <= plane; ++a)
        for (int b = 1; b <= plane; ++b) {
            const int p = pair_index(dim, a, b);
            const auto* cs = standard[static_cast<std::size_t>(p)];
            const auto* cb = bending[static_cast<std::size_t>(p)];
            if (!cs || !cb)
                throw DimensionError("reconstruct_u2: missing cell solution for pair (" +
                                     std::to_string(a) + "," + std::to_string(b) + ")");
            u2 += membrane_strain(a - 1, b - 1) * cs->displacement;
            u2 += hessian_u3(a - 1, b - 1) * cb->displacement;
        }
    return u2;
}

namespace {

/// Locate the cell element containing (y1, y3) and its local coordinates.
struct CellLocation {
    int elem;
    Eigen::Vector3d xi; // packed local coordinates
};

CellLocation locate_in_cell(const CellMesh& cell, double y1, double y3) {
    const int n1 = cell.res[0];
    const int n3 = cell.res[2];
    const double h1 = cell.h(0);
    const double h3 = cell.h(2);
    // wrap the in-plane coordinate into [0, 1)
    y1 -= std::floor(y1);
    int i = std::clamp(static_cast<int>(y1 / h1), 0, n1 - 1);
    int k = std::clamp(static_cast<int>((y3 + 1.0) / h3), 0, n3 - 1);
    CellLocation loc;
    loc.elem = cell.elem_id(i, 0, k);
    loc.xi = Eigen::Vector3d((y1 - i * h1) / h1, (y3 + 1.0 - k * h3) / h3, 0.0);
    return loc;
}

} // namespace

Eigen::VectorXd cell_field_value(const CellMesh& cell, const Eigen::VectorXd& nodal, double y1,
                                 double y3) {
    if (cell.dim != 2)
        throw DimensionError("cell_field_value: 2D cells only");
    const auto loc = locate_in_cell(cell, y1, y3);
    const auto nodes = cell.elem_nodes(loc.elem);
    const auto shapes = fem::q1_shape_values(2, loc.xi);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(2);
    for (std::size_t a = 0; a < nodes.size(); ++a)
        for (int c = 0; c < 2; ++c)
            v(c) += shapes[a] * nodal(nodes[a] * 2 + c);
    return v;
}

Eigen::VectorXd cell_field_strain(const CellMesh& cell, const Eigen::VectorXd& nodal, double y1,
                                  double y3) {
    if (cell.dim != 2)
        throw DimensionError("cell_field_strain: 2D cells only");
    const auto loc = locate_in_cell(cell, y1, y3);
    const auto nodes = cell.elem_nodes(loc.elem);
    const double h1 = cell.h(0), h3 = cell.h(2);
    const double xi = loc.xi(0), eta = loc.xi(1);
    // bilinear shape gradients on the box
    const double gx[4] = {-(1 - eta) / h1, (1 - eta) / h1, -eta / h1, eta / h1};
    const double gz[4] = {-(1 - xi) / h3, -xi / h3, (1 - xi) / h3, xi / h3};
    Eigen::VectorXd e = Eigen::VectorXd::Zero(3);
    for (int a = 0; a < 4; ++a) {
        const double ux = nodal(nodes[static_cast<std::size_t>(a)] * 2);
        const double uz = nodal(nodes[static_cast<std::size_t>(a)] * 2 + 1);
        e(0) += gx[a] * ux;
        e(1) += gz[a] * uz;
        e(2) += gz[a] * ux + gx[a] * uz;
    }
    return e;
}

// ---------------------------------------------------------------------------
// ReconstructedFields
// ---------------------------------------------------------------------------

ReconstructedFields::ReconstructedFields(std::shared_ptr<const MacroRunResult> macro,
                                         const CellMesh* cell,
                                         const std::vector<CellSolution>* cell_solutions,
                                         double eps)
    : macro_(std::move(macro)), cell_(cell), solutions_(cell_solutions), eps_(eps) {
    if (!macro_ || !macro_->system)
        throw DimensionError("reconstruct_fields: missing macro run");
    if (eps_ <= 0.0 || eps_ >= 1.0)
        throw DimensionError("reconstruct_fields: eps must lie in (0,1)");
    if (solutions_) {
        for (const auto& s : *solutions_) {
            if (s.dim != 2)
                throw DimensionError("reconstruct_fields: slice mode needs 2D cell solutions");
            if (s.load_case.kind == CellLoadCase::Kind::standard)
                chi_std_ = &s;
            else
                chi_bend_ = &s;
        }
        if (!chi_std_ || !chi_bend_)
            throw DimensionError("reconstruct_fields: need both 2D cell solutions");
    }
}

std::size_t ReconstructedFields::steps() const { return macro_->snapshots.size(); }

Eigen::VectorXd ReconstructedFields::dt_u3_dofs(std::size_t n) const {
    const auto& sys = *macro_->system;
    if (n == 0)
        return Eigen::VectorXd::Zero(2 * sys.plate_nodes());
    const double th = sys.config().theta;
    Eigen::VectorXd w = sys.plate_velocity_dofs(macro_->snapshots[n].full);
    if (th == 1.0)
        return w;
    return th * w + (1.0 - th) * sys.plate_velocity_dofs(macro_->snapshots[n - 1].full);
}

Eigen::Vector2d ReconstructedFields::bulk_velocity(std::size_t n, int side, double x,
                                                   double z) const {
    const double zs = side == 0 ? z - eps_ : z + eps_;
    const auto& sys = *macro_->system;
    const double zc = std::clamp(zs, side == 0 ? 0.0 : -sys.config().H,
                                 side == 0 ? sys.config().H : 0.0);
    return sys.bulk_velocity(macro_->snapshots[n].full, side, x, zc);
}

double ReconstructedFields::bulk_pressure(std::size_t n, int side, double x, double z) const {
    const double zs = side == 0 ? z - eps_ : z + eps_;
    const auto& sys = *macro_->system;
    const double zc = std::clamp(zs, side == 0 ? 0.0 : -sys.config().H,
                                 side == 0 ? sys.config().H : 0.0);
    return sys.bulk_pressure(macro_->snapshots[n].full, side, x, zc);
}

Eigen::Vector3d ReconstructedFields::u3_eval(std::size_t n, double x) const {
    return macro_->system->plate_eval(macro_->snapshots[n].u3, x);
}

Eigen::Vector3d ReconstructedFields::dt_u3_eval(std::size_t n, double x) const {
    if (n == 0)
        return Eigen::Vector3d::Zero();
    return macro_->system->plate_eval(dt_u3_dofs(n), x);
}

Eigen::Vector2d ReconstructedFields::u1_eval(std::size_t n, double x) const {
    return macro_->system->membrane_eval(macro_->snapshots[n].full, x);
}

Eigen::Vector2d ReconstructedFields::dt_u1_eval(std::size_t n, double x) const {
    if (n == 0)
        return Eigen::Vector2d::Zero();
    const auto now = macro_->system->membrane_eval(macro_->snapshots[n].full, x);
    const auto prev = macro_->system->membrane_eval(macro_->snapshots[n - 1].full, x);
    return (now - prev) / macro_->system->config().dt;
}

Eigen::Vector2d ReconstructedFields::layer_fluid_velocity(std::size_t n, double x,
                                                          double z) const {
    const auto w = dt_u3_eval(n, x);
    const auto du1 = dt_u1_eval(n, x);
    Eigen::Vector2d v;
    v(0) = eps_ * du1(0) - z * w(1); // eps * [dt_u1 - (z/eps) dx dt_u3]
    v(1) = w(0);
    return v;
}

Eigen::Vector2d ReconstructedFields::solid_displacement_leading(std::size_t n, double x,
                                                                double z) const {
    const auto u3 = u3_eval(n, x);
    const auto u1 = u1_eval(n, x);
    Eigen::Vector2d u;
    u(0) = eps_ * u1(0) - z * u3(1);
    u(1) = u3(0);
    return u;
}

std::pair<double, double> ReconstructedFields::cell_point(double x, double z) const {
    return {x / eps_, z / eps_};
}

Eigen::Vector2d ReconstructedFields::solid_displacement(std::size_t n, double x, double z) const {
    Eigen::Vector2d u = solid_displacement_leading(n, x, z);
    if (!has_cell_data())
        return u;
    const auto u3 = u3_eval(n, x);
    const auto u1 = u1_eval(n, x);
    const auto [y1, y3] = cell_point(x, z);
    const Eigen::VectorXd uc = u1(1) * cell_field_value(*cell_, chi_std_->displacement, y1, y3) +
                               u3(2) * cell_field_value(*cell_, chi_bend_->displacement, y1, y3);
    u += eps_ * eps_ * uc.head<2>();
    return u;
}

Eigen::Vector3d ReconstructedFields::solid_scaled_strain(std::size_t n, double x, double z) const {
    if (!has_cell_data())
        throw DimensionError("solid_scaled_strain: cell solutions not provided");
    const auto u3 = u3_eval(n, x);
    const auto u1 = u1_eval(n, x);
    const auto [y1, y3] = cell_point(x, z);
    Eigen::Vector3d e = Eigen::Vector3d::Zero();
    e(0) = u1(1) - y3 * u3(2); // membrane strain minus y3 * curvature
    e += u1(1) * cell_field_strain(*cell_, chi_std_->displacement, y1, y3).head<3>();
    e += u3(2) * cell_field_strain(*cell_, chi_bend_->displacement, y1, y3).head<3>();
    return e;
}

ReconstructedFields reconstruct_fields(std::shared_ptr<const MacroRunResult> macro,
                                       const CellMesh* cell,
                                       const std::vector<CellSolution>* cell_solutions,
                                       double eps) {
    return ReconstructedFields(std::move(macro), cell, cell_solutions, eps);
}

// ---------------------------------------------------------------------------
// compare_runs
// ---------------------------------------------------------------------------

namespace {

struct Accumulator {
    double err2 = 0.0;
    double ref2 = 0.0;
    double relative() const {
        if (ref2 > 0.0)
            return std::sqrt(err2 / ref2);
        return std::sqrt(err2);
    }
};

} // namespace

double CompareReport::value(const std::string& quantity, std::size_t run) const {
    const auto it = values.find(quantity);
    if (it == values.end() || run >= it->second.size())
        throw DimensionError("CompareReport: unknown quantity " + quantity);
    return it->second[run];
}

std::string CompareReport::to_csv() const {
    CsvWriter csv({"eps", "quantity", "value"});
    for (std::size_t r = 0; r < epsilons.size(); ++r)
        for (const auto& q : quantities)
            csv.add_text_row({format_float(epsilons[r]), q, format_float(values.at(q)[r])});
    if (slopes_available) {
        for (const auto& q : quantities)
            csv.add_text_row({"slope", q, format_float(slopes.at(q))});
    } else {
        csv.add_text_row({"slope", "unavailable", notice});
    }
    return csv.str();
}

nlohmann::json CompareReport::to_json() const {
    nlohmann::json j;
    j["epsilons"] = epsilons;
    nlohmann::json vals = nlohmann::json::object();
    for (const auto& [k, v] : values)
        vals[k] = v;
    j["values"] = vals;
    if (slopes_available) {
        nlohmann::json s = nlohmann::json::object();
        for (const auto& [k, v] : slopes)
            s[k] = v;
        j["slopes"] = s;
    } else {
        j["notice"] = notice;
    }
    return j;
}

CompareReport compare_runs(std::shared_ptr<const MacroRunResult> macro, const CellMesh* cell,
                           const std::vector<CellSolution>* cell_solutions,
                           const std::vector<const MicroRunResult*>& micro_runs) {
    if (!macro || !macro->system)
        throw DimensionError("compare_runs: missing macro run");
    if (micro_runs.empty())
        throw DimensionError("compare_runs: need at least one micro run");
    const auto& mcfg = macro->system->config();

    CompareReport rep;
    const bool with_strain = cell != nullptr && cell_solutions != nullptr;
    rep.quantities = {"bulk_velocity_plus",        "bulk_velocity_minus",
                      "layer_vertical_displacement", "layer_inplane_displacement",
                      "layer_fluid_velocity",      "layer_fluid_velocity_corrected",
                      "layer_pressure_l2"};
    if (with_strain)
        rep.quantities.insert(rep.quantities.begin() + 4, "scaled_strain");
    for (const auto& q : rep.quantities)
        rep.values[q] = {};

    const auto& gp = fem::Gauss1d<2>::points;
    const auto& gw = fem::Gauss1d<2>::weights;

    for (const auto* mrun : micro_runs) {
        const auto& micro = *mrun;
        const auto& sys = *micro.system;
        const auto& ucfg = sys.config();
        if (std::abs(ucfg.dt - mcfg.dt) > 1e-14 || std::abs(ucfg.T - mcfg.T) > 1e-12)
            throw DimensionError("compare_runs: micro and macro time grids differ");
        if (std::abs(ucfg.L - mcfg.L) > 1e-14 || std::abs(ucfg.H - mcfg.H) > 1e-14)
            throw DimensionError("compare_runs: micro and macro extents differ");
        if (micro.snapshots.size() != macro->snapshots.size())
            throw DimensionError("compare_runs: snapshot counts differ");
        const double eps = ucfg.eps();
        rep.epsilons.push_back(eps);
        ReconstructedFields recon(macro, cell, cell_solutions, eps);

        std::map<std::string, Accumulator> acc;
        const double dt = ucfg.dt;
        for (std::size_t n = 1; n < micro.snapshots.size(); ++n) {
            const auto& snap = micro.snapshots[n];
            for (int e = 0; e < sys.num_elements(); ++e) {
                const auto region = sys.element_region(e);
                const auto box = sys.element_box(e);
                for (std::size_t qi = 0; qi < 2; ++qi)
                    for (std::size_t qj = 0; qj < 2; ++qj) {
                        const double xi = gp[qi], eta = gp[qj];
                        const double x = box(0) + xi * box(2);
                        const double z = box(1) + eta * box(3);
                        const double w = dt * gw[qi] * gw[qj] * box(2) * box(3);
                        switch (region) {
                        case MicroRegion::bulk_plus:
                        case MicroRegion::bulk_minus: {
                            const int side = region == MicroRegion::bulk_plus ? 0 : 1;
                            const auto vm = sys.velocity_local(snap.full, e, xi, eta);
                            const auto va = recon.bulk_velocity(n, side, x, z);
                            auto& a = acc[side == 0 ? "bulk_velocity_plus"
                                                    : "bulk_velocity_minus"];
                            a.err2 += w * (vm - va).squaredNorm();
                            a.ref2 += w * va.squaredNorm();
                            break;
                        }
                        case MicroRegion::layer_solid: {
                            const auto um = sys.displacement_local(snap.u, e, xi, eta);
                            const auto u3 = recon.u3_eval(n, x);
                            const auto u1 = recon.u1_eval(n, x);
                            {
                                auto& a = acc["layer_vertical_displacement"];
                                a.err2 += w * (um(1) - u3(0)) * (um(1) - u3(0));
                                a.ref2 += w * u3(0) * u3(0);
                            }
                            {
                                // order-eps in-plane target u1 - (z/eps) dx u3
                                const double target = u1(0) - (z / eps) * u3(1);
                                const double got = um(0) / eps;
                                auto& a = acc["layer_inplane_displacement"];
                                a.err2 += w * (got - target) * (got - target);
                                a.ref2 += w * target * target;
                            }
                            if (with_strain) {
                                Eigen::Vector3d em = sys.strain_local(snap.u, e, xi, eta) / eps;
                                Eigen::Vector3d ea = recon.solid_scaled_strain(n, x, z);
                                // tensor norm: engineering shear contributes half twice
                                Eigen::Vector3d d = em - ea;
                                const double n2 =
                                    d(0) * d(0) + d(1) * d(1) + 0.5 * d(2) * d(2);
                                const double r2 =
                                    ea(0) * ea(0) + ea(1) * ea(1) + 0.5 * ea(2) * ea(2);
                                auto& a = acc["scaled_strain"];
                                a.err2 += w * n2;
                                a.ref2 += w * r2;
                            }
                            break;
                        }
                        case MicroRegion::layer_fluid: {
                            const auto vm = sys.velocity_local(snap.full, e, xi, eta);
                            const auto w3 = recon.dt_u3_eval(n, x);
                            {
                                // zeroth order (0, dt_u3)
                                auto& a = acc["layer_fluid_velocity"];
                                Eigen::Vector2d va(0.0, w3(0));
                                a.err2 += w * (vm - va).squaredNorm();
                                a.ref2 += w * va.squaredNorm();
                            }
                            {
                                auto& a = acc["layer_fluid_velocity_corrected"];
                                const auto va = recon.layer_fluid_velocity(n, x, z);
                                a.err2 += w * (vm - va).squaredNorm();
                                a.ref2 += w * va.squaredNorm();
                            }
                            {
                                auto& a = acc["layer_pressure_l2"];
                                const double p = sys.pressure_local(snap.full, e, xi, eta);
                                a.err2 += w * p * p; // against the zero limit
                                a.ref2 = 1.0;        // absolute norm
                            }
                            break;
                        }
                        }
                    }
            }
        }
        for (const auto& q : rep.quantities)
            rep.values[q].push_back(acc[q].relative());
    }

    if (rep.epsilons.size() >= 2) {
        rep.slopes_available = true;
        // least-squares slope of log(err) vs log(eps)
        for (const auto& q : rep.quantities) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            int m = 0;
            for (std::size_t r = 0; r < rep.epsilons.size(); ++r) {
                const double v = rep.values[q][r];
                if (v <= 0.0)
                    continue;
                const double lx = std::log(rep.epsilons[r]);
                const double ly = std::log(v);
                sx += lx;
                sy += ly;
                sxx += lx * lx;
                sxy += lx * ly;
                ++m;
            }
            rep.slopes[q] = m >= 2 ? (m * sxy - sx * sy) / (m * sxx - sx * sx) : 0.0;
        }
    } else {
        rep.notice = "slope fit needs at least two epsilon values";
    }
    return rep;
}

double corrector_identity_defect(const ReconstructedFields& recon, const MicroSystem& micro) {
    const double dt = micro.config().dt;
    double defect = 0.0;
    for (std::size_t n = 1; n < recon.steps(); ++n)
        for (int e = 0; e < micro.num_elements(); ++e) {
            const auto region = micro.element_region(e);
            if (region == MicroRegion::bulk_plus || region == MicroRegion::bulk_minus)
                continue;
            const auto box = micro.element_box(e);
            for (double xi : {0.0, 0.5, 1.0})
                for (double eta : {0.0, 0.5, 1.0}) {
                    const double x = box(0) + xi * box(2);
                    const double z = box(1) + eta * box(3);
                    const Eigen::Vector2d va = recon.layer_fluid_velocity(n, x, z);
                    const Eigen::Vector2d fd =
                        (recon.solid_displacement_leading(n, x, z) -
                         recon.solid_displacement_leading(n - 1, x, z)) /
                        dt;
                    defect = std::max(defect, (va - fd).cwiseAbs().maxCoeff());
                }
        }
    return defect;
}

} // namespace platefsi
