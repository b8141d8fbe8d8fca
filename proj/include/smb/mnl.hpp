#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "smb/types.hpp"

namespace smb {

// Choice probabilities of the multinomial-logit model from a utility vector.
// Entry i is the probability of option i; the returned vector has one extra
// trailing entry for the outside option: p_i = exp(u_i) / (1 + sum exp(u_j)).
// Utilities are bounded (|u| <= 2 throughout this project), so no log-sum-exp
// shift is applied.
template <typename Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> mnl_probs(
    const Eigen::MatrixBase<Derived>& utilities) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = utilities.size();
    Eigen::Vector<Scalar, Eigen::Dynamic> p(n + 1);
    Scalar denom = Scalar(1);
    for (Eigen::Index i = 0; i < n; ++i) {
        p[i] = std::exp(utilities[i]);
        denom += p[i];
    }
    p /= denom;
    p[n] = Scalar(1) / denom;
    return p;
}

// Utilities z_n^T theta of an assortment's members.
inline VectorXd assortment_utilities(const Assortment& s, const VectorXd& theta,
                                     const MatrixXd& Z) {
    VectorXd u(static_cast<Eigen::Index>(s.members.size()));
    for (std::size_t i = 0; i < s.members.size(); ++i)
        u[static_cast<Eigen::Index>(i)] = Z.col(s.members[i]).dot(theta);
    return u;
}

// Acceptance probabilities over S ∪ {outside}; last entry is the outside
// option. Empty S gives (1) — the outside option with probability one.
inline VectorXd choice_probs(const Assortment& s, const VectorXd& theta,
                             const MatrixXd& Z) {
    return mnl_probs(assortment_utilities(s, theta, Z));
}

// Expected revenue sum_{n in S} r_n p(n|S,theta) of one assortment, with
// `rewards` the reward column of the assortment's arm (indexed by agent).
double expected_revenue(const Assortment& s, const VectorXd& theta,
                        const MatrixXd& Z, const VectorXd& rewards);

// Revenue directly from member utilities and member rewards.
double revenue_from_utilities(const VectorXd& utilities, const VectorXd& member_rewards);

// Sum of per-arm expected revenues of a feasible matching, evaluated at the
// instance's true parameters (in the ambient d-space). Throws on infeasible m.
double total_revenue(const Matching& m, const Instance& instance);

// Centered feature z_n - sum_{m in S} p(m|S,theta) z_m.
VectorXd centered_feature(int agent, const Assortment& s, const VectorXd& theta,
                          const MatrixXd& Z);

// SVD projection of X onto its column space. Singular values <= tol * sigma_max
// count as zero. Throws on an all-zero matrix ("rank zero feature matrix").
ProjectedFeatures project_features(const MatrixXd& X, double tol = 1e-9);

// Closed-form lower bound exp(-2)/(1 + L e^2)^2 on the non-linearity constant
// kappa = inf p(n|S,theta) p(outside|S,theta) over ||theta|| <= 2, |S| <= L.
double kappa_lower_bound(int L);

}  // namespace smb
