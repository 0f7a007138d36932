#ifndef PLATEFSI_FEM_SPARSE_HPP
#define PLATEFSI_FEM_SPARSE_HPP

#include <Eigen/Sparse>

#include <vector>

namespace platefsi::fem {

using Triplet = Eigen::Triplet<double>;

/// Compressed-row sparse operator. A symmetric-tagged operator is verified
/// entrywise on construction (within 1e-14 of the largest entry).
class SparseOperator {
public:
    using Mat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

    SparseOperator() = default;

    static SparseOperator from_triplets(int rows, int cols, const std::vector<Triplet>& trips,
                                        bool symmetric);
    static SparseOperator from_matrix(Mat m, bool symmetric);

    int rows() const { return static_cast<int>(mat_.rows()); }
    int cols() const { return static_cast<int>(mat_.cols()); }
    bool symmetric() const { return symmetric_; }
    std::size_t nonzeros() const { return static_cast<std::size_t>(mat_.nonZeros()); }

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return mat_ * x; }
    Eigen::VectorXd apply_transpose(const Eigen::VectorXd& x) const {
        return mat_.transpose() * x;
    }

    const Mat& matrix() const { return mat_; }

private:
    Mat mat_;
    bool symmetric_ = false;
};

} // namespace platefsi::fem

#endif
