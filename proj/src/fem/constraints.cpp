#include "platefsi/fem/constraints.hpp"

#include "platefsi/errors.hpp"

#include <string>

namespace platefsi::fem {

ConstraintMap::ConstraintMap(int n_full)
    : n_full_(n_full), kind_(static_cast<std::size_t>(n_full), Kind::kept),
      slave_terms_(static_cast<std::size_t>(n_full)) {
    if (n_full <= 0)
        throw DimensionError("ConstraintMap: dof count must be positive");
}

void ConstraintMap::fix(int dof) {
    if (finalized_)
        throw ConstraintError("ConstraintMap: already finalized");
    kind_.at(static_cast<std::size_t>(dof)) = Kind::fixed;
    slave_terms_[static_cast<std::size_t>(dof)].clear();
}

void ConstraintMap::slave(int dof, std::vector<std::pair<int, double>> masters) {
    if (finalized_)
        throw ConstraintError("ConstraintMap: already finalized");
    if (masters.empty())
        throw ConstraintError("ConstraintMap: slave without masters (use fix)");
    auto& k = kind_.at(static_cast<std::size_t>(dof));
    if (k != Kind::kept)
        throw ConstraintError("ConstraintMap: dof " + std::to_string(dof) +
                              " constrained twice");
    k = Kind::slaved;
    slave_terms_[static_cast<std::size_t>(dof)] = std::move(masters);
}

void ConstraintMap::periodic_pair(int slave_dof, int master_dof) {
    slave(slave_dof, {{master_dof, 1.0}});
}

void ConstraintMap::add_mean_zero(std::vector<std::pair<int, double>> weights) {
    double total = 0.0;
    for (const auto& [dof, w] : weights) {
        if (dof < 0 || dof >= n_full_)
            throw ConstraintError("ConstraintMap: mean-zero weight out of range");
        total += w;
    }
    if (!(total > 0.0))
        throw ConstraintError("ConstraintMap: mean-zero functional needs positive total weight");
    mean_zero_.push_back(std::move(weights));
}

void ConstraintMap::finalize() {
    if (finalized_)
        return;
    reduced_of_full_.assign(static_cast<std::size_t>(n_full_), -1);
    int next = 0;
    for (int i = 0; i < n_full_; ++i)
        if (kind_[static_cast<std::size_t>(i)] == Kind::kept)
            reduced_of_full_[static_cast<std::size_t>(i)] = next++;
    n_reduced_ = next;

    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(n_full_));
    for (int i = 0; i < n_full_; ++i) {
        const auto kind = kind_[static_cast<std::size_t>(i)];
        if (kind == Kind::kept) {
            trips.emplace_back(i, reduced_of_full_[static_cast<std::size_t>(i)], 1.0);
        } else if (kind == Kind::slaved) {
            for (const auto& [m, c] : slave_terms_[static_cast<std::size_t>(i)]) {
                if (m < 0 || m >= n_full_)
                    throw ConstraintError("ConstraintMap: master index out of range");
                const auto mk = kind_[static_cast<std::size_t>(m)];
                if (mk == Kind::slaved)
                    throw ConstraintError(
                        "ConstraintMap: constraint chain detected at dof " + std::to_string(i) +
                        " (master " + std::to_string(m) + " is itself a slave)");
                if (mk == Kind::fixed)
                    continue; // fixed masters contribute zero
                trips.emplace_back(i, reduced_of_full_[static_cast<std::size_t>(m)], c);
            }
        }
    }
    r_ = SparseOperator::Mat(n_full_, n_reduced_);
    r_.setFromTriplets(trips.begin(), trips.end());
    r_.makeCompressed();
    finalized_ = true;
}

bool ConstraintMap::is_kept(int dof) const {
    return kind_.at(static_cast<std::size_t>(dof)) == Kind::kept;
}

int ConstraintMap::reduced_index(int dof) const {
    if (!finalized_)
        throw ConstraintError("ConstraintMap: not finalized");
    return reduced_of_full_.at(static_cast<std::size_t>(dof));
}

Eigen::VectorXd ConstraintMap::expand(const Eigen::VectorXd& reduced) const {
    if (!finalized_ || reduced.size() != n_reduced_)
        throw ConstraintError("ConstraintMap: expand size mismatch");
    return r_ * reduced;
}

Eigen::VectorXd ConstraintMap::restrict_kept(const Eigen::VectorXd& full) const {
    if (!finalized_ || full.size() != n_full_)
        throw ConstraintError("ConstraintMap: restrict size mismatch");
    Eigen::VectorXd out(n_reduced_);
    for (int i = 0; i < n_full_; ++i) {
        const int r = reduced_of_full_[static_cast<std::size_t>(i)];
        if (r >= 0)
            out(r) = full(i);
    }
    return out;
}

Eigen::VectorXd
ConstraintMap::reduce_functional(const std::vector<std::pair<int, double>>& weights) const {
    if (!finalized_)
        throw ConstraintError("ConstraintMap: not finalized");
    Eigen::VectorXd full = Eigen::VectorXd::Zero(n_full_);
    for (const auto& [dof, w] : weights)
        full(dof) += w;
    return r_.transpose() * full;
}

std::vector<Eigen::VectorXd> ConstraintMap::reduced_mean_zero() const {
    std::vector<Eigen::VectorXd> out;
    out.reserve(mean_zero_.size());
    for (const auto& mz : mean_zero_)
        out.push_back(reduce_functional(mz));
    return out;
}

std::pair<SparseOperator, Eigen::VectorXd> apply_constraints(const SparseOperator& op,
                                                             const Eigen::VectorXd& rhs,
                                                             const ConstraintMap& map) {
    if (!map.finalized())
        throw ConstraintError("apply_constraints: map not finalized");
    if (op.rows() != map.n_full() || rhs.size() != map.n_full())
        throw DimensionError("apply_constraints: dimension mismatch");
    const auto& r = map.reduction_matrix();
    SparseOperator::Mat reduced = r.transpose() * op.matrix() * r;
    Eigen::VectorXd rhs_red = r.transpose() * rhs;
    return {SparseOperator::from_matrix(std::move(reduced), op.symmetric()), std::move(rhs_red)};
}

} // namespace platefsi::fem
