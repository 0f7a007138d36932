#include "platefsi/fem/sparse.hpp"

#include "platefsi/errors.hpp"

#include <cmath>

namespace platefsi::fem {

namespace {

void verify_symmetry(const SparseOperator::Mat& m) {
    if (m.rows() != m.cols())
        throw DimensionError("SparseOperator: symmetric flag on a non-square matrix");
    double scale = 0.0;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseOperator::Mat::InnerIterator it(m, k); it; ++it)
            scale = std::max(scale, std::abs(it.value()));
    SparseOperator::Mat diff = SparseOperator::Mat(m.transpose()) - m;
    double defect = 0.0;
    for (int k = 0; k < diff.outerSize(); ++k)
        for (SparseOperator::Mat::InnerIterator it(diff, k); it; ++it)
            defect = std::max(defect, std::abs(it.value()));
    if (defect > 1e-14 * std::max(scale, 1.0))
        throw DimensionError("SparseOperator: matrix tagged symmetric is not");
}

} // namespace

SparseOperator SparseOperator::from_triplets(int rows, int cols,
                                             const std::vector<Triplet>& trips, bool symmetric) {
    Mat m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return from_matrix(std::move(m), symmetric);
}

SparseOperator SparseOperator::from_matrix(Mat m, bool symmetric) {
    m.makeCompressed();
    if (symmetric)
        verify_symmetry(m);
    SparseOperator op;
    op.mat_ = std::move(m);
    op.symmetric_ = symmetric;
    return op;
}

} // namespace platefsi::fem
