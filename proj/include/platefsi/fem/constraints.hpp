#ifndef PLATEFSI_FEM_CONSTRAINTS_HPP
#define PLATEFSI_FEM_CONSTRAINTS_HPP

#include "platefsi/fem/sparse.hpp"

#include <utility>
#include <vector>

namespace platefsi::fem {

/// Affine constraint reduction for symmetric systems.
///
/// Every full dof is kept, fixed to zero, or slaved to a linear combination
/// of kept dofs (periodic identification is the coefficient-1 special case).
/// The reduction matrix R maps reduced to full vectors, x_full = R x_red, and
/// operators reduce as R^T K R so symmetry is preserved.
///
/// Mean-zero functionals are carried along but never eliminated; solvers
/// enforce them by projection and a final gauge shift.
class ConstraintMap {
public:
    ConstraintMap() = default; // empty map; construct with a dof count before use
    explicit ConstraintMap(int n_full);

    void fix(int dof);
    void slave(int dof, std::vector<std::pair<int, double>> masters);
    void periodic_pair(int slave_dof, int master_dof);

    /// Weighted mean functional sum_i w_i x_i = 0 over a designated dof set.
    /// Total weight must be strictly positive.
    void add_mean_zero(std::vector<std::pair<int, double>> weights);

    /// Builds R; detects slave chains and slaves of fixed dofs.
    void finalize();

    int n_full() const { return n_full_; }
    int n_reduced() const { return n_reduced_; }
    bool finalized() const { return finalized_; }
    std::size_t num_mean_zero() const { return mean_zero_.size(); }

    bool is_kept(int dof) const;
    /// Reduced index of a kept dof (-1 otherwise).
    int reduced_index(int dof) const;

    Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const;
    /// Restriction of a full vector to kept entries.
    Eigen::VectorXd restrict_kept(const Eigen::VectorXd& full) const;

    /// R^T w for a sparse full-space functional.
    Eigen::VectorXd reduce_functional(const std::vector<std::pair<int, double>>& weights) const;
    /// Reduced forms of the registered mean-zero functionals.
    std::vector<Eigen::VectorXd> reduced_mean_zero() const;

    const SparseOperator::Mat& reduction_matrix() const { return r_; }

private:
    enum class Kind : unsigned char { kept, fixed, slaved };

    int n_full_ = 0;
    int n_reduced_ = 0;
    bool finalized_ = false;
    std::vector<Kind> kind_;
    std::vector<std::vector<std::pair<int, double>>> slave_terms_;
    std::vector<int> reduced_of_full_;
    std::vector<std::vector<std::pair<int, double>>> mean_zero_;
    SparseOperator::Mat r_;
};

/// Reduce a symmetric operator and right-hand side: (R^T K R, R^T b).
std::pair<SparseOperator, Eigen::VectorXd> apply_constraints(const SparseOperator& op,
                                                             const Eigen::VectorXd& rhs,
                                                             const ConstraintMap& map);

} // namespace platefsi::fem

#endif
