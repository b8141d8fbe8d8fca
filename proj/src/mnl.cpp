#include "smb/mnl.hpp"

#include <Eigen/SVD>

namespace smb {

bool is_feasible(const Matching& m, int N, int L, const ActiveSets* active) {
    std::vector<char> used(static_cast<std::size_t>(N), 0);
    for (int k = 0; k < m.arm_count(); ++k) {
        const auto& s = m.members(k);
        if (static_cast<int>(s.size()) > L) return false;
        if (!sorted_unique(s)) return false;
        for (int n : s) {
            if (n < 0 || n >= N) return false;
            if (used[static_cast<std::size_t>(n)]) return false;
            used[static_cast<std::size_t>(n)] = 1;
            if (active && !active->contains(k, n)) return false;
        }
    }
    return true;
}

bool canonical_less(const Matching& a, const Matching& b) {
    const int K = std::min(a.arm_count(), b.arm_count());
    for (int k = 0; k < K; ++k) {
        if (a.members(k) != b.members(k)) return a.members(k) < b.members(k);
    }
    return a.arm_count() < b.arm_count();
}

double revenue_from_utilities(const VectorXd& utilities, const VectorXd& member_rewards) {
    const VectorXd p = mnl_probs(utilities);
    double rev = 0.0;
    for (Eigen::Index i = 0; i < utilities.size(); ++i) rev += member_rewards[i] * p[i];
    return rev;
}

double expected_revenue(const Assortment& s, const VectorXd& theta,
                        const MatrixXd& Z, const VectorXd& rewards) {
    VectorXd member_rewards(static_cast<Eigen::Index>(s.members.size()));
    for (std::size_t i = 0; i < s.members.size(); ++i)
        member_rewards[static_cast<Eigen::Index>(i)] = rewards[s.members[i]];
    return revenue_from_utilities(assortment_utilities(s, theta, Z), member_rewards);
}

double total_revenue(const Matching& m, const Instance& instance) {
    if (m.arm_count() != instance.K || !is_feasible(m, instance.N, instance.L))
        throw SmbError("total_revenue: matching is not feasible");
    double total = 0.0;
    for (int k = 0; k < instance.K; ++k) {
        const auto& s = m.members(k);
        VectorXd u(static_cast<Eigen::Index>(s.size()));
        VectorXd rw(static_cast<Eigen::Index>(s.size()));
        for (std::size_t i = 0; i < s.size(); ++i) {
            u[static_cast<Eigen::Index>(i)] =
                instance.X.col(s[i]).dot(instance.Theta.col(k));
            rw[static_cast<Eigen::Index>(i)] = instance.Rewards(s[i], k);
        }
        total += revenue_from_utilities(u, rw);
    }
    return total;
}

VectorXd centered_feature(int agent, const Assortment& s, const VectorXd& theta,
                          const MatrixXd& Z) {
    const VectorXd p = choice_probs(s, theta, Z);
    VectorXd mean = VectorXd::Zero(Z.rows());
    for (std::size_t i = 0; i < s.members.size(); ++i)
        mean += p[static_cast<Eigen::Index>(i)] * Z.col(s.members[i]);
    return Z.col(agent) - mean;
}

ProjectedFeatures project_features(const MatrixXd& X, double tol) {
    if (tol <= 0.0) throw SmbError("project_features: tol must be positive");
    if (!X.allFinite()) throw SmbError("project_features: non-finite feature matrix");
    Eigen::JacobiSVD<MatrixXd> svd(X, Eigen::ComputeThinU);
    const VectorXd& sigma = svd.singularValues();
    if (sigma.size() == 0 || sigma[0] <= 0.0)
        throw SmbError("rank zero feature matrix");
    const double cutoff = tol * sigma[0];
    int r = 0;
    while (r < sigma.size() && sigma[r] > cutoff) ++r;
    if (r == 0) throw SmbError("rank zero feature matrix");
    ProjectedFeatures pf;
    pf.rank = r;
    pf.basis = svd.matrixU().leftCols(r);
    pf.Z = pf.basis.transpose() * X;
    return pf;
}

double kappa_lower_bound(int L) {
    if (L < 1) throw SmbError("kappa_lower_bound: capacity must be >= 1");
    const double e2 = std::exp(2.0);
    const double denom = 1.0 + L * e2;
    return std::exp(-2.0) / (denom * denom);
}

}  // namespace smb
