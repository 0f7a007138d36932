#include "platefsi/fem/solvers.hpp"

#include "platefsi/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace platefsi::fem {

void SolveConfig::validate() const {
    if (!(tolerance > 0.0 && tolerance < 1.0))
        throw SolverError("SolveConfig: tolerance must lie in (0,1)");
    if (max_iterations < 1)
        throw SolverError("SolveConfig: max_iterations must be >= 1");
}

void orthonormalize(std::vector<Eigen::VectorXd>& basis) {
    std::vector<Eigen::VectorXd> out;
    for (auto& v : basis) {
        Eigen::VectorXd w = v;
        for (const auto& q : out)
            w -= q.dot(w) * q;
        const double n = w.norm();
        if (n > 1e-13 * std::max(1.0, v.norm()))
            out.push_back(w / n);
    }
    basis = std::move(out);
}

namespace {

void project_out(Eigen::VectorXd& v, const std::vector<Eigen::VectorXd>& kernel) {
    for (const auto& q : kernel)
        v -= q.dot(v) * q;
}

Eigen::VectorXd jacobi_inverse_diagonal(const SparseOperator& op) {
    const auto& m = op.matrix();
    Eigen::VectorXd d = Eigen::VectorXd::Ones(m.rows());
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseOperator::Mat::InnerIterator it(m, k); it; ++it)
            if (it.row() == it.col() && std::abs(it.value()) > 0.0)
                d(it.row()) = 1.0 / std::abs(it.value());
    return d;
}

} // namespace

SolveResult solve_spd(const SparseOperator& op, const Eigen::VectorXd& rhs,
                      const SolveConfig& cfg, const std::vector<Eigen::VectorXd>& kernel) {
    cfg.validate();
    if (!op.symmetric())
        throw SolverError("solve_spd: operator not tagged symmetric");
    if (rhs.size() != op.rows())
        throw SolverError("solve_spd: rhs dimension mismatch");

    SolveResult res;
    res.min_curvature = std::numeric_limits<double>::infinity();
    res.max_curvature = 0.0;

    if (cfg.probe_definiteness) {
        auto [lo, hi] = estimate_extremal_eigenvalues(op);
        if (lo <= 1e-10 * std::max(hi, 1e-300))
            res.singular_hint = true;
    }

    const double bnorm = rhs.norm();
    res.x = Eigen::VectorXd::Zero(op.rows());
    if (bnorm == 0.0) {
        res.converged = true;
        res.min_curvature = 0.0;
        return res;
    }

    const bool use_jacobi = cfg.preconditioner == Preconditioner::diagonal;
    Eigen::VectorXd dinv;
    if (use_jacobi)
        dinv = jacobi_inverse_diagonal(op);

    Eigen::VectorXd r = rhs;
    project_out(r, kernel);
    Eigen::VectorXd z = use_jacobi ? Eigen::VectorXd(dinv.cwiseProduct(r)) : r;
    if (use_jacobi)
        project_out(z, kernel);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);

    for (int it = 0; it < cfg.max_iterations; ++it) {
        Eigen::VectorXd ap = op.apply(p);
        const double pp = p.squaredNorm();
        const double kappa = p.dot(ap);
        const double curvature = pp > 0.0 ? kappa / pp : 0.0;
        res.min_curvature = std::min(res.min_curvature, curvature);
        res.max_curvature = std::max(res.max_curvature, curvature);
        if (kappa < -1e-14 * std::max(res.max_curvature, 1.0) * pp)
            throw SolverError("solve_spd: negative curvature along direction " +
                              std::to_string(it));
        if (!(kappa > 0.0)) {
            res.singular_hint = true;
            res.rel_residual = r.norm() / bnorm;
            res.residual_history.push_back(res.rel_residual);
            res.iterations = it;
            return res;
        }
        const double alpha = rz / kappa;
        res.x += alpha * p;
        r -= alpha * ap;
        if ((it + 1) % 50 == 0)
            project_out(r, kernel);
        const double rel = r.norm() / bnorm;
        res.residual_history.push_back(rel);
        res.iterations = it + 1;
        if (rel <= cfg.tolerance) {
            res.converged = true;
            res.rel_residual = rel;
            return res;
        }
        z = use_jacobi ? Eigen::VectorXd(dinv.cwiseProduct(r)) : r;
        project_out(z, kernel);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    res.rel_residual = r.norm() / bnorm;
    res.converged = res.rel_residual <= cfg.tolerance;
    return res;
}

SolveResult solve_minres(const SparseOperator& op, const Eigen::VectorXd& rhs,
                         const SolveConfig& cfg, const std::vector<Eigen::VectorXd>& kernel) {
    cfg.validate();
    if (!op.symmetric())
        throw SolverError("solve_minres: operator not tagged symmetric");
    if (rhs.size() != op.rows())
        throw SolverError("solve_minres: rhs dimension mismatch");

    SolveResult res;
    const int n = op.rows();
    res.x = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd b = rhs;
    project_out(b, kernel);
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        res.converged = true;
        return res;
    }

    // Paige-Saunders recurrence.
    Eigen::VectorXd v_prev = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v = b / bnorm;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd w_prev = Eigen::VectorXd::Zero(n);
    double beta = bnorm;
    double eta = beta;
    double c_old = 1.0, c = 1.0, s_old = 0.0, s = 0.0;

    for (int it = 0; it < cfg.max_iterations; ++it) {
        Eigen::VectorXd av = op.apply(v);
        project_out(av, kernel);
        const double alpha = v.dot(av);
        av -= alpha * v + beta * v_prev;
        const double beta_new = av.norm();

        const double rho1_hat = c * alpha - c_old * s * beta;
        const double rho1 = std::hypot(rho1_hat, beta_new);
        const double rho2 = s * alpha + c_old * c * beta;
        const double rho3 = s_old * beta;

        if (rho1 == 0.0) {
            res.singular_hint = true;
            break;
        }
        c_old = c;
        s_old = s;
        c = rho1_hat / rho1;
        s = beta_new / rho1;

        Eigen::VectorXd w_new = (v - rho3 * w_prev - rho2 * w) / rho1;
        res.x += (c * eta) * w_new;
        w_prev = w;
        w = w_new;

        eta = -s * eta;
        const double rel = std::abs(eta) / bnorm;
        res.residual_history.push_back(rel);
        res.iterations = it + 1;
        if (rel <= cfg.tolerance) {
            res.converged = true;
            break;
        }
        if (beta_new <= 1e-14 * bnorm)
            break;
        v_prev = v;
        v = av / beta_new;
        beta = beta_new;
    }
    Eigen::VectorXd r = b - op.apply(res.x);
    project_out(r, kernel);
    res.rel_residual = r.norm() / bnorm;
    res.converged = res.rel_residual <= cfg.tolerance;
    return res;
}

Eigen::VectorXd dense_oracle_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs,
                                   int dimension_cap) {
    if (a.rows() > dimension_cap)
        throw SolverError("dense_oracle_solve: dimension " + std::to_string(a.rows()) +
                          " exceeds cap " + std::to_string(dimension_cap));
    if (a.rows() != a.cols() || rhs.size() != a.rows())
        throw SolverError("dense_oracle_solve: dimension mismatch");
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    Eigen::VectorXd x = lu.solve(rhs);
    // one refinement pass
    Eigen::VectorXd r = rhs - a * x;
    x += lu.solve(r);
    r = rhs - a * x;
    const double scale = rhs.norm();
    if (scale > 0.0 && !(r.norm() / scale < 1e-6)) {
        Eigen::FullPivLU<Eigen::MatrixXd> flu(a);
        if (flu.rank() < a.rows())
            throw SolverError("dense_oracle_solve: rank-deficient matrix (rank " +
                              std::to_string(flu.rank()) + " of " + std::to_string(a.rows()) +
                              ")");
        x = flu.solve(rhs);
    }
    return x;
}

Eigen::VectorXd dense_oracle_solve(const SparseOperator& op, const Eigen::VectorXd& rhs,
                                   int dimension_cap) {
    if (op.rows() > dimension_cap)
        throw SolverError("dense_oracle_solve: dimension " + std::to_string(op.rows()) +
                          " exceeds cap " + std::to_string(dimension_cap));
    return dense_oracle_solve(Eigen::MatrixXd(op.matrix()), rhs, dimension_cap);
}

SparseOperator assemble_saddle_matrix(const SparseOperator& k, const SparseOperator& b) {
    const int n = k.rows();
    const int m = b.rows();
    if (k.rows() != k.cols() || b.cols() != n)
        throw SolverError("assemble_saddle_matrix: block dimensions inconsistent");
    std::vector<Triplet> trips;
    trips.reserve(k.nonzeros() + 2 * b.nonzeros());
    const auto& km = k.matrix();
    for (int r = 0; r < km.outerSize(); ++r)
        for (SparseOperator::Mat::InnerIterator it(km, r); it; ++it)
            trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    const auto& bm = b.matrix();
    for (int r = 0; r < bm.outerSize(); ++r)
        for (SparseOperator::Mat::InnerIterator it(bm, r); it; ++it) {
            trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()),
                               it.value());
            trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()),
                               it.value());
        }
    return SparseOperator::from_triplets(n + m, n + m, trips, true);
}

SolveResult solve_saddle(const SparseOperator& k, const SparseOperator& b,
                         const Eigen::VectorXd& rhs_primal, const Eigen::VectorXd& rhs_constraint,
                         const SolveConfig& cfg, PressureGauge gauge) {
    cfg.validate();
    const int n = k.rows();
    const int m = b.rows();
    if (rhs_primal.size() != n || rhs_constraint.size() != m)
        throw SolverError("solve_saddle: rhs dimension mismatch");
    Eigen::VectorXd rhs(n + m);
    rhs << rhs_primal, rhs_constraint;

    SparseOperator full = assemble_saddle_matrix(k, b);

    std::vector<Eigen::VectorXd> kernel;
    if (gauge == PressureGauge::zero_mean) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n + m);
        g.segment(n, m).setOnes();
        kernel.push_back(std::move(g));
        orthonormalize(kernel);
    }

    if (n + m <= cfg.dense_threshold) {
        SolveResult res;
        if (gauge == PressureGauge::zero_mean) {
            // Pin the multiplier mean with one extra Lagrange row.
            Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + m + 1, n + m + 1);
            a.topLeftCorner(n + m, n + m) = Eigen::MatrixXd(full.matrix());
            for (int i = 0; i < m; ++i) {
                a(n + m, n + i) = 1.0;
                a(n + i, n + m) = 1.0;
            }
            Eigen::VectorXd rr(n + m + 1);
            rr << rhs, 0.0;
            Eigen::VectorXd x = dense_oracle_solve(a, rr, cfg.dense_threshold + 1);
            res.x = x.head(n + m);
        } else {
            res.x = dense_oracle_solve(full, rhs, cfg.dense_threshold);
        }
        const double bn = rhs.norm();
        res.rel_residual = bn > 0.0 ? (rhs - full.apply(res.x)).norm() / bn : 0.0;
        res.converged = true;
        res.iterations = 0;
        return res;
    }

    SolveResult res = solve_minres(full, rhs, cfg, kernel);
    if (gauge == PressureGauge::zero_mean)
        enforce_gauge(res.x, kernel, kernel);
    return res;
}

void enforce_gauge(Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& kernel,
                   const std::vector<Eigen::VectorXd>& functionals) {
    if (kernel.empty() || functionals.empty())
        return;
    const auto nk = static_cast<Eigen::Index>(kernel.size());
    const auto nf = static_cast<Eigen::Index>(functionals.size());
    Eigen::MatrixXd g(nf, nk);
    Eigen::VectorXd r(nf);
    for (Eigen::Index i = 0; i < nf; ++i) {
        for (Eigen::Index j = 0; j < nk; ++j)
            g(i, j) = functionals[static_cast<std::size_t>(i)].dot(
                kernel[static_cast<std::size_t>(j)]);
        r(i) = functionals[static_cast<std::size_t>(i)].dot(x);
    }
    Eigen::VectorXd c = g.colPivHouseholderQr().solve(r);
    for (Eigen::Index j = 0; j < nk; ++j)
        x -= c(j) * kernel[static_cast<std::size_t>(j)];
}

std::pair<double, double> estimate_extremal_eigenvalues(const SparseOperator& op, int steps) {
    const int n = op.rows();
    steps = std::min(steps, n);
    std::mt19937 rng(0x5eed);
    std::normal_distribution<double> dist;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i)
        v(i) = dist(rng);
    v.normalize();

    std::vector<Eigen::VectorXd> basis;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(steps, steps);
    Eigen::VectorXd v_prev = Eigen::VectorXd::Zero(n);
    double beta = 0.0;
    int k = 0;
    for (; k < steps; ++k) {
        basis.push_back(v);
        Eigen::VectorXd w = op.apply(v);
        const double alpha = v.dot(w);
        t(k, k) = alpha;
        w -= alpha * v + beta * v_prev;
        for (const auto& q : basis) // full reorthogonalization, cheap at this size
            w -= q.dot(w) * q;
        beta = w.norm();
        if (k + 1 < steps) {
            t(k, k + 1) = beta;
            t(k + 1, k) = beta;
        }
        if (beta < 1e-14)
            break;
        v_prev = v;
        v = w / beta;
    }
    const int dim = std::min(k + 1, steps);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t.topLeftCorner(dim, dim));
    return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

void SparseFactorization::factor(const SparseOperator& op) {
    a_ = Eigen::SparseMatrix<double>(op.matrix());
    a_.makeCompressed();
    lu_.compute(a_);
    if (lu_.info() != Eigen::Success)
        throw SolverError("SparseFactorization: LU factorization failed (singular system?)");
    ready_ = true;
}

Eigen::VectorXd SparseFactorization::solve(const Eigen::VectorXd& rhs) const {
    if (!ready_)
        throw SolverError("SparseFactorization: not factorized");
    Eigen::VectorXd x = lu_.solve(rhs);
    if (lu_.info() != Eigen::Success)
        throw SolverError("SparseFactorization: backsolve failed");
    return x;
}

} // namespace platefsi::fem
