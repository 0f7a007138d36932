#include "platefsi/fem/elements.hpp"

#include "platefsi/errors.hpp"
#include "platefsi/fem/quadrature.hpp"

namespace platefsi::fem {

std::vector<double> q1_shape_values(int dim, const Eigen::Vector3d& xi) {
    const int nn = dim == 3 ? 8 : 4;
    std::vector<double> n(static_cast<std::size_t>(nn));
    for (int a = 0; a < nn; ++a) {
        double v = 1.0;
        for (int d = 0; d < dim; ++d) {
            const bool hi = (a >> d) & 1;
            v *= hi ? xi(d) : (1.0 - xi(d));
        }
        n[static_cast<std::size_t>(a)] = v;
    }
    return n;
}

namespace {

// Physical shape gradients of the multilinear element at local point xi.
std::vector<Eigen::Vector3d> q1_shape_grads(int dim, const Eigen::Vector3d& xi,
                                            const Eigen::Vector3d& h) {
    const int nn = dim == 3 ? 8 : 4;
    std::vector<Eigen::Vector3d> g(static_cast<std::size_t>(nn), Eigen::Vector3d::Zero());
    for (int a = 0; a < nn; ++a) {
        for (int d = 0; d < dim; ++d) {
            double v = 1.0;
            for (int e = 0; e < dim; ++e) {
                const bool hi = (a >> e) & 1;
                if (e == d)
                    v *= hi ? 1.0 : -1.0;
                else
                    v *= hi ? xi(e) : (1.0 - xi(e));
            }
            g[static_cast<std::size_t>(a)](d) = v / h(d);
        }
    }
    return g;
}

Eigen::MatrixXd strain_b_matrix(int dim, const std::vector<Eigen::Vector3d>& grads) {
    const int nn = static_cast<int>(grads.size());
    const int nv = dim == 3 ? 6 : 3;
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nv, dim * nn);
    for (int a = 0; a < nn; ++a) {
        const auto& g = grads[static_cast<std::size_t>(a)];
        const int c = dim * a;
        if (dim == 2) {
            b(0, c + 0) = g(0);
            b(1, c + 1) = g(1);
            b(2, c + 0) = g(1);
            b(2, c + 1) = g(0);
        } else {
            b(0, c + 0) = g(0);
            b(1, c + 1) = g(1);
            b(2, c + 2) = g(2);
            b(3, c + 1) = g(2);
            b(3, c + 2) = g(1);
            b(4, c + 0) = g(2);
            b(4, c + 2) = g(0);
            b(5, c + 0) = g(1);
            b(5, c + 1) = g(0);
        }
    }
    return b;
}

} // namespace

std::vector<Q1Point> q1_elasticity_points(int dim, const Eigen::Vector3d& h) {
    if (dim != 2 && dim != 3)
        throw DimensionError("q1_elasticity_points: dimension must be 2 or 3");
    const auto& gp = Gauss1d<2>::points;
    const auto& gw = Gauss1d<2>::weights;
    double vol = h(0) * h(1) * (dim == 3 ? h(2) : 1.0);
    std::vector<Q1Point> pts;
    const int nq1 = 2;
    for (int i = 0; i < nq1; ++i)
        for (int j = 0; j < nq1; ++j)
            for (int k = 0; k < (dim == 3 ? nq1 : 1); ++k) {
                Eigen::Vector3d xi(gp[static_cast<std::size_t>(i)],
                                   gp[static_cast<std::size_t>(j)],
                                   dim == 3 ? gp[static_cast<std::size_t>(k)] : 0.0);
                double w = gw[static_cast<std::size_t>(i)] * gw[static_cast<std::size_t>(j)] *
                           (dim == 3 ? gw[static_cast<std::size_t>(k)] : 1.0) * vol;
                Q1Point p;
                p.offset = Eigen::Vector3d(xi(0) * h(0), xi(1) * h(1),
                                           dim == 3 ? xi(2) * h(2) : 0.0);
                p.weight = w;
                p.b = strain_b_matrix(dim, q1_shape_grads(dim, xi, h));
                pts.push_back(std::move(p));
            }
    return pts;
}

Eigen::MatrixXd element_stiffness_elasticity(int dim, const Eigen::Vector3d& h,
                                             const ElasticTensor& a) {
    if (a.dim() != dim)
        throw DimensionError("element_stiffness_elasticity: tensor dimension mismatch");
    const auto pts = q1_elasticity_points(dim, h);
    const int n = static_cast<int>(pts.front().b.cols());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (const auto& p : pts)
        k += p.weight * p.b.transpose() * a.voigt() * p.b;
    return k;
}

Eigen::MatrixXd q1_mass_matrix(int dim, const Eigen::Vector3d& h) {
    const auto& gp = Gauss1d<2>::points;
    const auto& gw = Gauss1d<2>::weights;
    const int nn = dim == 3 ? 8 : 4;
    const double vol = h(0) * h(1) * (dim == 3 ? h(2) : 1.0);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nn, nn);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < (dim == 3 ? 2 : 1); ++k) {
                Eigen::Vector3d xi(gp[static_cast<std::size_t>(i)],
                                   gp[static_cast<std::size_t>(j)],
                                   dim == 3 ? gp[static_cast<std::size_t>(k)] : 0.0);
                const double w = gw[static_cast<std::size_t>(i)] *
                                 gw[static_cast<std::size_t>(j)] *
                                 (dim == 3 ? gw[static_cast<std::size_t>(k)] : 1.0) * vol;
                const auto n = q1_shape_values(dim, xi);
                for (int p = 0; p < nn; ++p)
                    for (int q = 0; q < nn; ++q)
                        m(p, q) += w * n[static_cast<std::size_t>(p)] *
                                   n[static_cast<std::size_t>(q)];
            }
    return m;
}

// ---------------------------------------------------------------------------
// Q2 / Q1 pair
// ---------------------------------------------------------------------------

namespace {

inline std::array<double, 3> lag2(double x) {
    return {2.0 * (x - 0.5) * (x - 1.0), 4.0 * x * (1.0 - x), 2.0 * x * (x - 0.5)};
}
inline std::array<double, 3> lag2_d(double x) {
    return {4.0 * x - 3.0, 4.0 - 8.0 * x, 4.0 * x - 1.0};
}

} // namespace

std::array<double, 9> q2_shape_values(double xi, double eta) {
    const auto lx = lag2(xi);
    const auto le = lag2(eta);
    std::array<double, 9> n{};
    for (int a2 = 0; a2 < 3; ++a2)
        for (int a1 = 0; a1 < 3; ++a1)
            n[static_cast<std::size_t>(3 * a2 + a1)] =
                lx[static_cast<std::size_t>(a1)] * le[static_cast<std::size_t>(a2)];
    return n;
}

std::array<std::array<double, 2>, 9> q2_shape_gradients(double xi, double eta) {
    const auto lx = lag2(xi);
    const auto le = lag2(eta);
    const auto dx = lag2_d(xi);
    const auto de = lag2_d(eta);
    std::array<std::array<double, 2>, 9> g{};
    for (int a2 = 0; a2 < 3; ++a2)
        for (int a1 = 0; a1 < 3; ++a1) {
            g[static_cast<std::size_t>(3 * a2 + a1)][0] =
                dx[static_cast<std::size_t>(a1)] * le[static_cast<std::size_t>(a2)];
            g[static_cast<std::size_t>(3 * a2 + a1)][1] =
                lx[static_cast<std::size_t>(a1)] * de[static_cast<std::size_t>(a2)];
        }
    return g;
}

std::array<double, 4> q1quad_shape_values(double xi, double eta) {
    return {(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta};
}

std::array<std::array<double, 2>, 4> q1quad_shape_gradients(double xi, double eta) {
    return {{{-(1 - eta), -(1 - xi)}, {(1 - eta), -xi}, {-eta, (1 - xi)}, {eta, xi}}};
}

StokesElementMatrices stokes_element_matrices(double hx, double hz) {
    StokesElementMatrices out;
    out.viscous = Eigen::MatrixXd::Zero(18, 18);
    out.mass = Eigen::MatrixXd::Zero(18, 18);
    out.divergence = Eigen::MatrixXd::Zero(4, 18);
    out.pressure_mass = Eigen::MatrixXd::Zero(4, 4);

    const auto& gp = Gauss1d<3>::points;
    const auto& gw = Gauss1d<3>::weights;
    const double jac = hx * hz;

    // D(u):D(v) as engineering strains against diag(1,1,1/2)
    Eigen::Matrix3d cvisc = Eigen::Vector3d(1.0, 1.0, 0.5).asDiagonal();

    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const double xi = gp[i], eta = gp[j];
            const double w = gw[i] * gw[j] * jac;
            const auto n = q2_shape_values(xi, eta);
            const auto g = q2_shape_gradients(xi, eta);
            Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, 18);
            for (int a = 0; a < 9; ++a) {
                const double gx = g[static_cast<std::size_t>(a)][0] / hx;
                const double gz = g[static_cast<std::size_t>(a)][1] / hz;
                b(0, 2 * a + 0) = gx;
                b(1, 2 * a + 1) = gz;
                b(2, 2 * a + 0) = gz;
                b(2, 2 * a + 1) = gx;
            }
            out.viscous += w * b.transpose() * cvisc * b;
            for (int a = 0; a < 9; ++a)
                for (int bb = 0; bb < 9; ++bb) {
                    const double m =
                        w * n[static_cast<std::size_t>(a)] * n[static_cast<std::size_t>(bb)];
                    out.mass(2 * a, 2 * bb) += m;
                    out.mass(2 * a + 1, 2 * bb + 1) += m;
                }
            const auto np = q1quad_shape_values(xi, eta);
            for (int q = 0; q < 4; ++q) {
                for (int a = 0; a < 9; ++a) {
                    const double gx = g[static_cast<std::size_t>(a)][0] / hx;
                    const double gz = g[static_cast<std::size_t>(a)][1] / hz;
                    out.divergence(q, 2 * a + 0) -= w * np[static_cast<std::size_t>(q)] * gx;
                    out.divergence(q, 2 * a + 1) -= w * np[static_cast<std::size_t>(q)] * gz;
                }
                for (int r = 0; r < 4; ++r)
                    out.pressure_mass(q, r) +=
                        w * np[static_cast<std::size_t>(q)] * np[static_cast<std::size_t>(r)];
            }
        }
    return out;
}

Eigen::MatrixXd q2_elasticity_stiffness(double hx, double hz, const ElasticTensor& a) {
    if (a.dim() != 2)
        throw DimensionError("q2_elasticity_stiffness: need a 2D tensor");
    const auto& gp = Gauss1d<3>::points;
    const auto& gw = Gauss1d<3>::weights;
    const double jac = hx * hz;
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(18, 18);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const double w = gw[i] * gw[j] * jac;
            const auto g = q2_shape_gradients(gp[i], gp[j]);
            Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, 18);
            for (int n = 0; n < 9; ++n) {
                const double gx = g[static_cast<std::size_t>(n)][0] / hx;
                const double gz = g[static_cast<std::size_t>(n)][1] / hz;
                b(0, 2 * n + 0) = gx;
                b(1, 2 * n + 1) = gz;
                b(2, 2 * n + 0) = gz;
                b(2, 2 * n + 1) = gx;
            }
            k += w * b.transpose() * a.voigt() * b;
        }
    return k;
}

Eigen::VectorXd q2_body_load(double hx, double hz, const Eigen::Vector2d& f) {
    const auto& gp = Gauss1d<3>::points;
    const auto& gw = Gauss1d<3>::weights;
    const double jac = hx * hz;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(18);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const double w = gw[i] * gw[j] * jac;
            const auto n = q2_shape_values(gp[i], gp[j]);
            for (int a = 0; a < 9; ++a) {
                v(2 * a + 0) += w * n[static_cast<std::size_t>(a)] * f(0);
                v(2 * a + 1) += w * n[static_cast<std::size_t>(a)] * f(1);
            }
        }
    return v;
}

// ---------------------------------------------------------------------------
// Hermite beam / P1 membrane
// ---------------------------------------------------------------------------

std::array<double, 4> hermite_values(double s, double h) {
    return {1 - 3 * s * s + 2 * s * s * s, h * s * (1 - s) * (1 - s), 3 * s * s - 2 * s * s * s,
            h * s * s * (s - 1)};
}

std::array<double, 4> hermite_first_derivatives(double s, double h) {
    return {(-6 * s + 6 * s * s) / h, 1 - 4 * s + 3 * s * s, (6 * s - 6 * s * s) / h,
            3 * s * s - 2 * s};
}

std::array<double, 4> hermite_second_derivatives(double s, double h) {
    return {(-6 + 12 * s) / (h * h), (-4 + 6 * s) / h, (6 - 12 * s) / (h * h), (6 * s - 2) / h};
}

Eigen::Matrix4d hermite_bending_stiffness(double h) {
    Eigen::Matrix4d k;
    const double h2 = h * h, h3 = h2 * h;
    k << 12 / h3, 6 / h2, -12 / h3, 6 / h2, //
        6 / h2, 4 / h, -6 / h2, 2 / h,      //
        -12 / h3, -6 / h2, 12 / h3, -6 / h2, //
        6 / h2, 2 / h, -6 / h2, 4 / h;
    return k;
}

Eigen::Matrix4d hermite_mass(double h) {
    Eigen::Matrix4d m;
    m << 156, 22 * h, 54, -13 * h, //
        22 * h, 4 * h * h, 13 * h, -3 * h * h, //
        54, 13 * h, 156, -22 * h,  //
        -13 * h, -3 * h * h, -22 * h, 4 * h * h;
    return (h / 420.0) * m;
}

Eigen::Vector4d hermite_load(double h, double q0, double q1) {
    Eigen::Vector4d f = Eigen::Vector4d::Zero();
    const auto& gp = Gauss1d<4>::points;
    const auto& gw = Gauss1d<4>::weights;
    for (std::size_t i = 0; i < 4; ++i) {
        const double s = gp[i];
        const double q = q0 + (q1 - q0) * s;
        const auto n = hermite_values(s, h);
        for (int a = 0; a < 4; ++a)
            f(a) += gw[i] * h * q * n[static_cast<std::size_t>(a)];
    }
    return f;
}

Eigen::MatrixXd hermite_p1_coupling(double h) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(4, 2);
    const auto& gp = Gauss1d<4>::points;
    const auto& gw = Gauss1d<4>::weights;
    const double dp[2] = {-1.0 / h, 1.0 / h};
    for (std::size_t i = 0; i < 4; ++i) {
        const auto d2 = hermite_second_derivatives(gp[i], h);
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 2; ++b)
                c(a, b) += gw[i] * h * d2[static_cast<std::size_t>(a)] * dp[b];
    }
    return c;
}

Eigen::Matrix2d p1_stiffness(double h) {
    Eigen::Matrix2d k;
    k << 1, -1, -1, 1;
    return k / h;
}

Eigen::Matrix2d p1_mass(double h) {
    Eigen::Matrix2d m;
    m << 2, 1, 1, 2;
    return (h / 6.0) * m;
}

} // namespace platefsi::fem
