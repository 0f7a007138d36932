#ifndef PLATEFSI_FEM_SOLVERS_HPP
#define PLATEFSI_FEM_SOLVERS_HPP

#include "platefsi/fem/sparse.hpp"

#include <Eigen/SparseLU>

#include <memory>
#include <vector>

namespace platefsi::fem {

enum class Preconditioner { none, diagonal };

struct SolveConfig {
    double tolerance = 1e-10; // relative residual target, in (0,1)
    int max_iterations = 10000;
    Preconditioner preconditioner = Preconditioner::none;
    /// Saddle systems at or below this total dimension go through the dense
    /// oracle instead of the iterative path.
    int dense_threshold = 5000;
    /// Lanczos probe for a nontrivial kernel (sets SolveResult::singular_hint).
    bool probe_definiteness = false;

    void validate() const;
};

struct SolveResult {
    Eigen::VectorXd x;
    double rel_residual = 0.0;
    int iterations = 0;
    bool converged = false;
    bool singular_hint = false;
    double min_curvature = 0.0; // smallest Rayleigh quotient seen along search directions
    double max_curvature = 0.0;
    std::vector<double> residual_history;
};

/// Orthonormalize a set of vectors in place (modified Gram-Schmidt); drops
/// numerically dependent members.
void orthonormalize(std::vector<Eigen::VectorXd>& basis);

/// Conjugate gradients for symmetric positive (semi)definite systems.
/// `kernel` is an orthonormal basis of the known operator kernel; iterates are
/// kept orthogonal to it, which makes consistent singular systems solvable.
/// Negative curvature raises SolverError naming the direction index.
SolveResult solve_spd(const SparseOperator& op, const Eigen::VectorXd& rhs,
                      const SolveConfig& cfg = {},
                      const std::vector<Eigen::VectorXd>& kernel = {});

/// MINRES for symmetric indefinite systems, same kernel-projection contract.
SolveResult solve_minres(const SparseOperator& op, const Eigen::VectorXd& rhs,
                         const SolveConfig& cfg = {},
                         const std::vector<Eigen::VectorXd>& kernel = {});

/// Dense direct solve (partial-pivot LU plus one refinement pass) used as the
/// ground-truth oracle in tests. Throws above the dimension cap or on rank
/// deficiency.
Eigen::VectorXd dense_oracle_solve(const SparseOperator& op, const Eigen::VectorXd& rhs,
                                   int dimension_cap = 5000);
Eigen::VectorXd dense_oracle_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs,
                                   int dimension_cap = 5000);

enum class PressureGauge { none, zero_mean };

/// Solve the saddle system [[K, B^T], [B, 0]] (x, y) = (f, g).
/// K must be SPSD on the constrained space and B full row rank once the
/// pressure gauge is fixed. Routes to the dense oracle below
/// cfg.dense_threshold, otherwise MINRES. With PressureGauge::zero_mean the
/// multiplier is determined up to a constant and pinned to mean zero.
SolveResult solve_saddle(const SparseOperator& k, const SparseOperator& b,
                         const Eigen::VectorXd& rhs_primal, const Eigen::VectorXd& rhs_constraint,
                         const SolveConfig& cfg = {}, PressureGauge gauge = PressureGauge::none);

/// Assemble the explicit saddle matrix [[K, B^T], [B, 0]].
SparseOperator assemble_saddle_matrix(const SparseOperator& k, const SparseOperator& b);

/// Shift x along kernel directions so that the given functionals vanish.
void enforce_gauge(Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& kernel,
                   const std::vector<Eigen::VectorXd>& functionals);

/// Crude extremal eigenvalue estimates by a short Lanczos run (deterministic
/// seeded start). Used to flag singular operators.
std::pair<double, double> estimate_extremal_eigenvalues(const SparseOperator& op, int steps = 40);

/// One-time sparse LU factorization for repeated solves with the same
/// operator (time stepping).
class SparseFactorization {
public:
    void factor(const SparseOperator& op);
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
    bool ready() const { return ready_; }

private:
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
    Eigen::SparseMatrix<double> a_;
    bool ready_ = false;
};

} // namespace platefsi::fem

#endif
