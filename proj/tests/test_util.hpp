#pragma once

// Shared test oracles, independent of the library's optimization paths.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "smb/environment.hpp"
#include "smb/matching_opt.hpp"
#include "smb/rng.hpp"
#include "smb/types.hpp"

namespace smb::testutil {

// Independent recursive enumerator: chooses arm 1's assortment as a subset,
// then arm 2's from the remainder, and so on. Structurally different from the
// production per-agent assignment search; same canonical tie-break.
inline void recursive_subsets(const std::vector<int>& pool, int cap, std::size_t start,
                              std::vector<int>& current,
                              const std::function<void(const std::vector<int>&)>& visit) {
    visit(current);
    if (static_cast<int>(current.size()) >= cap) return;
    for (std::size_t i = start; i < pool.size(); ++i) {
        current.push_back(pool[i]);
        recursive_subsets(pool, cap, i + 1, current, visit);
        current.pop_back();
    }
}

struct RecursiveOracle {
    const AssortmentIndex& index;
    const ActiveSets& active;
    bool found = false;
    double best_value = -std::numeric_limits<double>::infinity();
    Matching best;

    void search(int arm, Matching& current, double value, std::vector<char>& used) {
        if (arm == active.arm_count()) {
            if (!found || value > best_value ||
                (value == best_value && canonical_less(current, best))) {
                found = true;
                best_value = value;
                best = current;
            }
            return;
        }
        std::vector<int> pool;
        for (int n : active.per_arm[static_cast<std::size_t>(arm)])
            if (!used[static_cast<std::size_t>(n)]) pool.push_back(n);
        std::vector<int> subset;
        recursive_subsets(pool, active.capacity, 0, subset, [&](const std::vector<int>& s) {
            current.assortments[static_cast<std::size_t>(arm)].members = s;
            for (int n : s) used[static_cast<std::size_t>(n)] = 1;
            search(arm + 1, current, value + index.value(arm, s), used);
            for (int n : s) used[static_cast<std::size_t>(n)] = 0;
        });
        current.assortments[static_cast<std::size_t>(arm)].members.clear();
    }
};

inline OptResult recursive_argmax(const AssortmentIndex& index, const ActiveSets& active) {
    RecursiveOracle oracle{index, active};
    Matching current = empty_matching(active.arm_count());
    int max_agent = -1;
    for (const auto& s : active.per_arm)
        for (int n : s) max_agent = std::max(max_agent, n);
    std::vector<char> used(static_cast<std::size_t>(max_agent + 1), 0);
    oracle.search(0, current, 0.0, used);
    return {oracle.best, oracle.best_value, 0};
}

// Index of the true expected revenue (zero-width plug-in at theta*).
inline EllipsoidWidthIndex true_revenue_index(const Environment& env) {
    std::vector<VectorXd> theta;
    std::vector<MatrixXd> vinv;
    for (int k = 0; k < env.instance().K; ++k) {
        theta.push_back(env.theta_star(k));
        vinv.push_back(MatrixXd::Identity(env.rank(), env.rank()));
    }
    return EllipsoidWidthIndex(env.Z(), env.instance().Rewards, theta, vinv, 0.0, 0.0);
}

// Central finite difference of a scalar function.
inline VectorXd finite_difference_gradient(const std::function<double(const VectorXd&)>& f,
                                           const VectorXd& x, double h = 1e-5) {
    VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        VectorXd e = VectorXd::Zero(x.size());
        e[i] = h;
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h);
    }
    return g;
}

inline MatrixXd finite_difference_hessian(const std::function<double(const VectorXd&)>& f,
                                          const VectorXd& x, double h = 1e-4) {
    const Eigen::Index r = x.size();
    MatrixXd hess(r, r);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < r; ++j) {
            VectorXd ei = VectorXd::Zero(r), ej = VectorXd::Zero(r);
            ei[i] = h;
            ej[j] = h;
            hess(i, j) = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) /
                         (4.0 * h * h);
        }
    return hess;
}

// Random dataset of MNL feedback from a known parameter.
inline ArmDataset simulate_dataset(const Environment& env, int arm, int rounds,
                                   std::uint64_t seed) {
    ArmDataset data;
    data.arm = arm;
    CounterRng rng(seed);
    const int N = env.instance().N;
    const int L = env.instance().L;
    for (int t = 1; t <= rounds; ++t) {
        Assortment s;
        s.arm = arm;
        for (int n = 0; n < N && static_cast<int>(s.members.size()) < L; ++n)
            if (rng.next_double() < 0.6) s.members.push_back(n);
        data.add(t, s, sample_choice(s, env.theta_star(arm), env.Z(), rng));
    }
    return data;
}

inline VectorXd random_unit_vector(CounterRng& rng, int dim) {
    VectorXd v(dim);
    double norm = 0.0;
    do {
        for (int i = 0; i < dim; ++i) v[i] = rng.next_double(-1.0, 1.0);
        norm = v.norm();
    } while (norm < 1e-9);
    return v / norm;
}

}  // namespace smb::testutil
