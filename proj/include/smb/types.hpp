#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace smb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Outcome marker for the outside option (arm accepts nobody).
inline constexpr int kOutsideOption = -1;

struct SmbError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ground-truth market: agent features, arm parameters, rewards, capacity.
struct Instance {
    int N = 0;            // agents
    int K = 0;            // arms
    int L = 0;            // per-arm capacity, 1 <= L <= N
    int d = 0;            // ambient feature dimension
    MatrixXd X;           // d x N, columns are agent features, ||x_n|| <= 1
    MatrixXd Theta;       // d x K, columns are arm parameters, ||theta_k|| <= 1
    MatrixXd Rewards;     // N x K, entries in [0,1]
    std::uint64_t seed = 0;
};

// Rank-revealing projection of the feature matrix onto its column space.
struct ProjectedFeatures {
    int rank = 0;         // effective rank r
    MatrixXd basis;       // d x r, orthonormal columns (left singular vectors)
    MatrixXd Z;           // r x N, z_n = basis^T x_n
};

// Set of agents offered to one arm. Members sorted ascending, no duplicates.
struct Assortment {
    int arm = 0;
    std::vector<int> members;
};

// One assortment per arm; pairwise disjoint, each within capacity.
struct Matching {
    std::vector<Assortment> assortments;

    int arm_count() const { return static_cast<int>(assortments.size()); }
    const std::vector<int>& members(int k) const { return assortments[k].members; }
};

inline Matching empty_matching(int K) {
    Matching m;
    m.assortments.resize(K);
    for (int k = 0; k < K; ++k) m.assortments[k].arm = k;
    return m;
}

// Per-arm active agent sets; induces the feasible matchings with S_k within
// the arm's set, |S_k| <= capacity, pairwise disjoint.
struct ActiveSets {
    std::vector<std::vector<int>> per_arm;   // sorted ascending
    int capacity = 0;

    int arm_count() const { return static_cast<int>(per_arm.size()); }
    bool contains(int arm, int agent) const {
        const auto& s = per_arm[arm];
        return std::binary_search(s.begin(), s.end(), agent);
    }
};

inline ActiveSets full_active_sets(int N, int K, int L) {
    ActiveSets a;
    a.capacity = L;
    a.per_arm.assign(K, {});
    for (int k = 0; k < K; ++k) {
        a.per_arm[k].resize(N);
        for (int n = 0; n < N; ++n) a.per_arm[k][n] = n;
    }
    return a;
}

inline bool sorted_unique(const std::vector<int>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] <= v[i - 1]) return false;
    return true;
}

// Membership of a matching in the feasible set: sorted member lists,
// capacity respected, pairwise disjoint, agents in range, and (optionally)
// each S_k inside the arm's active set.
bool is_feasible(const Matching& m, int N, int L, const ActiveSets* active = nullptr);

// Lexicographic order on the canonical encoding (arm-by-arm sorted member
// lists); ties in optimizers are broken toward the smaller encoding.
bool canonical_less(const Matching& a, const Matching& b);

inline bool matchings_equal(const Matching& a, const Matching& b) {
    if (a.arm_count() != b.arm_count()) return false;
    for (int k = 0; k < a.arm_count(); ++k)
        if (a.members(k) != b.members(k)) return false;
    return true;
}

}  // namespace smb
