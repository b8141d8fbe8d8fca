#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "smb/estimation.hpp"
#include "smb/types.hpp"

namespace smb {

// Identity of one exploration unit: a single agent, an assortment J, or an
// (agent, assortment) pair.
struct DesignUnitKey {
    int agent = -1;                // -1 when the unit is a bare assortment
    std::vector<int> members;      // empty for agent units

    bool operator==(const DesignUnitKey& o) const {
        return agent == o.agent && members == o.members;
    }
};

// Moment contribution sum_i w_i v_i v_i^T of one unit; its leverage under a
// design W is sum_i w_i ||v_i||^2_{W^{-1}}. Agent and pair units carry a
// single vector with weight one.
struct DesignUnit {
    DesignUnitKey key;
    std::vector<double> weights;
    std::vector<VectorXd> vectors;
};

struct DesignProblem {
    std::vector<DesignUnit> units;
    double regularizer = 0.0;      // rho, added as rho * I to the moment matrix
    int dimension = 0;
};

struct DesignWeights {
    std::vector<DesignUnitKey> support;
    std::vector<double> weights;   // matching nonnegative entries, sum 1
    double max_leverage = 0.0;     // certified g(pi)
};

struct DesignError : SmbError {
    DesignError(const std::string& what, double best_leverage)
        : SmbError(what), best_leverage(best_leverage) {}
    double best_leverage;
};

struct DesignOptions {
    int max_iters = 0;             // 0 -> 10 * r^2
    double tol = 0.05;             // certificate slack: accept g <= r (1 + tol)
    double prune_threshold = 1e-6;
    int support_bound_slack = 5;   // target support <= r(r+1)/2 + slack
    // Called with the max leverage after each sweep (testing hook).
    std::function<void(double)> on_sweep = nullptr;
};

// Frank-Wolfe on the log-det objective with away steps; stops once the
// Kiefer-Wolfowitz certificate max_u leverage_u <= r (1 + tol) holds.
// Throws DesignError if the certificate is not reached within max_iters.
DesignWeights solve_g_optimal(const DesignProblem& problem,
                              const DesignOptions& options = {});

// Leverage of every unit under the design pi (for tests and re-certification).
std::vector<double> unit_leverages(const DesignProblem& problem,
                                   const std::vector<double>& pi);

// One unit per active agent with vector z_n; regularizer lam / (r T_tau)
// (pass lam = 1 for the plain variant).
DesignProblem build_agent_design(const std::vector<int>& active, const MatrixXd& Z,
                                 double T_tau, double lam);

// One unit per nonempty J subseteq active with |J| <= L, enumerated by size
// then lexicographically; the unit's moment is
// sum_{n in J} p(n|J,theta_hat) ztilde_n(J) ztilde_n(J)^T.
DesignProblem build_assortment_design(const std::vector<int>& active,
                                      const VectorXd& theta_hat, const MatrixXd& Z,
                                      int L, double T_tau, double lam,
                                      std::uint64_t unit_cap = 100000);

// One unit per pair (n, J) with n in J, ordered by J then by member; the
// unit's vector is ztilde_n(J).
DesignProblem build_pair_design(const std::vector<int>& active,
                                const VectorXd& theta_hat, const MatrixXd& Z,
                                int L, double T_tau, double lam,
                                std::uint64_t unit_cap = 100000);

// Nonempty subsets of `active` with size <= L, by size then lexicographic.
std::vector<std::vector<int>> enumerate_assortments(const std::vector<int>& active,
                                                    int L, std::uint64_t cap);

}  // namespace smb
