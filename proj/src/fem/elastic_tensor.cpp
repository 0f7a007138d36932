#include "platefsi/fem/elastic_tensor.hpp"

#include "platefsi/errors.hpp"

#include <cmath>

namespace platefsi::fem {

ElasticTensor ElasticTensor::isotropic(int dim, double lambda, double mu) {
    if (dim != 2 && dim != 3)
        throw DimensionError("ElasticTensor: dimension must be 2 or 3");
    if (mu <= 0.0 || lambda < 0.0)
        throw ParseError("ElasticTensor: require mu > 0 and lambda >= 0");
    ElasticTensor t;
    t.dim_ = dim;
    const int n = dim == 3 ? 6 : 3;
    const int nd = dim; // number of normal slots
    t.c_ = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < nd; ++i)
        for (int j = 0; j < nd; ++j)
            t.c_(i, j) = lambda;
    for (int i = 0; i < nd; ++i)
        t.c_(i, i) += 2.0 * mu;
    for (int i = nd; i < n; ++i)
        t.c_(i, i) = mu;
    return t;
}

ElasticTensor ElasticTensor::from_voigt(int dim, const Eigen::MatrixXd& voigt) {
    if (dim != 2 && dim != 3)
        throw DimensionError("ElasticTensor: dimension must be 2 or 3");
    const int n = dim == 3 ? 6 : 3;
    if (voigt.rows() != n || voigt.cols() != n)
        throw DimensionError("ElasticTensor: Voigt matrix has wrong size");
    const double scale = voigt.cwiseAbs().maxCoeff();
    if ((voigt - voigt.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
        throw ParseError("ElasticTensor: Voigt matrix violates major symmetry");
    ElasticTensor t;
    t.dim_ = dim;
    t.c_ = 0.5 * (voigt + voigt.transpose());
    return t;
}

double ElasticTensor::coercivity_constant() const {
    // Mandel scaling turns the quadratic form on symmetric matrices into an
    // ordinary symmetric eigenvalue problem.
    const int n = voigt_size();
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i)
        s(i) = i < dim_ ? 1.0 : std::sqrt(2.0);
    Eigen::MatrixXd mandel = s.asDiagonal() * c_ * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mandel);
    return es.eigenvalues().minCoeff();
}

Eigen::VectorXd ElasticTensor::stress(const Eigen::VectorXd& eng_strain) const {
    return c_ * eng_strain;
}

Eigen::VectorXd unit_load_voigt(int dim, int a, int b) {
    const int n = dim == 3 ? 6 : 3;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    if (a < 1 || b < 1 || a > dim || b > dim)
        throw DimensionError("unit_load_voigt: index out of range");
    if (a == b) {
        e(a - 1) = 1.0;
        return e;
    }
    if (dim == 2) {
        e(2) = 1.0; // engineering 2*e12 for M12
        return e;
    }
    const int lo = std::min(a, b), hi = std::max(a, b);
    if (lo == 2 && hi == 3)
        e(3) = 1.0;
    else if (lo == 1 && hi == 3)
        e(4) = 1.0;
    else
        e(5) = 1.0;
    return e;
}

} // namespace platefsi::fem
