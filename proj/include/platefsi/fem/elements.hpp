#ifndef PLATEFSI_FEM_ELEMENTS_HPP
#define PLATEFSI_FEM_ELEMENTS_HPP

#include "platefsi/fem/elastic_tensor.hpp"

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace platefsi::fem {

// ---------------------------------------------------------------------------
// Multilinear displacement elements on axis-aligned boxes (voxels).
// Local node ordering is the bit pattern a = a1 + 2*a2 (+ 4*a3).
// ---------------------------------------------------------------------------

/// One Gauss point of a Q1 elasticity element: physical offset from the
/// element corner, integration weight (including the Jacobian), and the
/// engineering-strain B matrix.
struct Q1Point {
    Eigen::Vector3d offset;
    double weight;
    Eigen::MatrixXd b; // voigt x (dim * 2^dim)
};

/// Full 2-point Gauss data for a box element of size h (hz ignored in 2D).
std::vector<Q1Point> q1_elasticity_points(int dim, const Eigen::Vector3d& h);

/// Local stiffness K_e = sum w B^T C B. SPSD with the rigid motions as kernel.
Eigen::MatrixXd element_stiffness_elasticity(int dim, const Eigen::Vector3d& h,
                                             const ElasticTensor& a);

/// Q1 scalar shape values at a local point (components of xi in [0,1]).
std::vector<double> q1_shape_values(int dim, const Eigen::Vector3d& xi);

/// Consistent Q1 mass matrix (scalar field) on a box element.
Eigen::MatrixXd q1_mass_matrix(int dim, const Eigen::Vector3d& h);

// ---------------------------------------------------------------------------
// Biquadratic (Q2) velocity / bilinear (Q1) pressure pair on rectangles.
// Q2 local ordering: idx = 3*a2 + a1 with a1, a2 in {0,1,2}.
// ---------------------------------------------------------------------------

std::array<double, 9> q2_shape_values(double xi, double eta);
/// Gradients with respect to the local coordinates.
std::array<std::array<double, 2>, 9> q2_shape_gradients(double xi, double eta);

std::array<double, 4> q1quad_shape_values(double xi, double eta);
std::array<std::array<double, 2>, 4> q1quad_shape_gradients(double xi, double eta);

/// Element matrices for the Stokes pair on a rectangle of size hx x hz.
/// Velocity dofs are interleaved (node, component): column 2*a + c.
struct StokesElementMatrices {
    Eigen::MatrixXd viscous;    // 18x18, integral D(u):D(v)
    Eigen::MatrixXd mass;       // 18x18, integral u.v
    Eigen::MatrixXd divergence; // 4x18,  integral -q div(u)
    Eigen::MatrixXd pressure_mass; // 4x4
};
StokesElementMatrices stokes_element_matrices(double hx, double hz);

/// Q2 elasticity stiffness on a rectangle (used by the epsilon-resolved solid).
Eigen::MatrixXd q2_elasticity_stiffness(double hx, double hz, const ElasticTensor& a);

/// Q2 load vector for a constant body force per component: integral f.v.
Eigen::VectorXd q2_body_load(double hx, double hz, const Eigen::Vector2d& f);

// ---------------------------------------------------------------------------
// Cubic Hermite beam and P1 membrane elements on an interval of length h.
// Hermite dofs per element: (w0, w0', w1, w1').
// ---------------------------------------------------------------------------

std::array<double, 4> hermite_values(double s, double h);
std::array<double, 4> hermite_first_derivatives(double s, double h);
std::array<double, 4> hermite_second_derivatives(double s, double h);

/// Bending stiffness integral w'' v'' over the element.
Eigen::Matrix4d hermite_bending_stiffness(double h);
/// Consistent mass integral w v.
Eigen::Matrix4d hermite_mass(double h);
/// Load vector for a nodally sampled transverse load (linear interpolation of
/// the two end values).
Eigen::Vector4d hermite_load(double h, double q0, double q1);

/// Membrane coupling integral u' v'' (P1 slope times Hermite curvature);
/// rows Hermite dofs, columns the two P1 dofs.
Eigen::MatrixXd hermite_p1_coupling(double h);

Eigen::Matrix2d p1_stiffness(double h);
Eigen::Matrix2d p1_mass(double h);

} // namespace platefsi::fem

#endif
