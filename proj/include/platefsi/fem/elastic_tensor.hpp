#ifndef PLATEFSI_FEM_ELASTIC_TENSOR_HPP
#define PLATEFSI_FEM_ELASTIC_TENSOR_HPP

#include <Eigen/Dense>

namespace platefsi::fem {

/// Fourth-order elasticity tensor with the usual minor and major symmetries,
/// stored as a Voigt matrix of tensor components A_{v(I)v(J)}.
///
/// Voigt ordering: 3D (11, 22, 33, 23, 13, 12), 2D (11, 22, 12).
/// Paired with engineering strain vectors e = (e11, e22, e33, 2*e23, 2*e13,
/// 2*e12) this matrix acts as the standard stiffness matrix: sigma = C e and
/// A E : E' = e'^T C e.
class ElasticTensor {
public:
    ElasticTensor() = default;

    /// Isotropic tensor from a Lame pair; 2D uses the plane-strain reduction.
    static ElasticTensor isotropic(int dim, double lambda, double mu);

    /// Full tensor from a Voigt matrix of tensor components. Rejects
    /// non-symmetric input (major symmetry) beyond 1e-12 relative.
    static ElasticTensor from_voigt(int dim, const Eigen::MatrixXd& voigt);

    int dim() const { return dim_; }
    int voigt_size() const { return dim_ == 3 ? 6 : 3; }
    const Eigen::MatrixXd& voigt() const { return c_; }

    /// Smallest eigenvalue of the Mandel form; positive iff the tensor is
    /// coercive on symmetric matrices.
    double coercivity_constant() const;

    /// sigma = C e for an engineering strain vector.
    Eigen::VectorXd stress(const Eigen::VectorXd& eng_strain) const;

private:
    int dim_ = 3;
    Eigen::MatrixXd c_;
};

/// Engineering-strain Voigt vector of the symmetric load matrix
/// M_ab = (e_a otimes e_b + e_b otimes e_a)/2, indices 1-based.
Eigen::VectorXd unit_load_voigt(int dim, int a, int b);

} // namespace platefsi::fem

#endif
