#pragma once

#include <cstdint>
#include <vector>

#include "smb/design.hpp"
#include "smb/environment.hpp"
#include "smb/estimation.hpp"
#include "smb/matching_opt.hpp"

namespace smb {

enum class Algo { Bsmb, BsmbPlus, Baseline, BsmbAlpha };

const char* algo_name(Algo a);
Algo algo_from_name(const std::string& name);

// Epoch-length schedule: eta_T = (T / (rK))^{1 / (2 (1 - 2^{-M}))},
// T_{tau+1} = eta_T sqrt(T_tau) (real-valued; lengths are rounded up only at
// allocation time and clamped to >= 1).
struct BatchSchedule {
    int M = 1;
    double eta_T = 1.0;
    double T1 = 1.0;

    double next(double T_tau) const;
};

BatchSchedule batch_schedule(int T, int r, int K, int M, Algo variant,
                             double C3 = 1.0, int L = 1);

struct AlgoConfig {
    Algo algorithm = Algo::Bsmb;
    int T = 1000;
    int M = 2;
    // Unspecified absolute constants of the index/schedule formulas; all 1 by
    // default and configurable.
    double C1 = 1.0;               // beta_T multiplier
    double C2 = 1.0;               // lambda = C2 r log K
    double C3 = 1.0;               // first-epoch length (plus variant)
    double C3_warm = 1.0;          // warm-up length multiplier
    double C4 = 1.0;               // baseline bonus gamma_t
    double C5 = 1.0;               // baseline lambda
    double C6 = 1.0;               // baseline eta
    double zeta_scale = 1.0;       // extra width multiplier for the plus variant
    double kappa = 0.0;            // <= 0 selects kappa_lower_bound(L)
    double alpha = 1.0;            // approximation factor (BsmbAlpha)
    MleConfig mle{1.0, std::nullopt, 100, 1e-8};
    int mle_projected_max_iters = 20000;
    double design_tol = 0.05;
    int design_max_iters = 0;      // 0 -> solver default
    double warmup_cap_fraction = 0.1;
    std::uint64_t assortment_cap = 100000;
};

struct RoundRecord {
    int round = 0;                 // 1-based, covers [1, T]
    int epoch = 0;                 // 1-based
    Matching offered;
    std::vector<int> outcomes;     // per arm
    double expected_revenue = 0.0;
    double realized_reward = 0.0;
    double inst_regret = 0.0;      // oracle value - expected revenue
    double wall_seconds = 0.0;     // elapsed since the previous record
    std::uint64_t opt_calls = 0;   // cumulative combinatorial-optimizer calls
};

struct EpochRecord {
    int epoch = 0;
    int start_round = 0;
    double T_tau = 0.0;
    std::vector<VectorXd> theta_hat;
    ActiveSets active;
    std::vector<DesignWeights> agent_design;       // per arm; empty set -> none
    std::vector<DesignWeights> assortment_design;  // plus variant only
    std::vector<DesignWeights> pair_design;        // plus variant only
    std::uint64_t opt_calls = 0;   // optimizer calls made planning this epoch
    double opt_seconds = 0.0;
    int warmup_rounds = 0;
    bool warmup_capped = false;
};

struct RunTrace {
    std::vector<RoundRecord> rounds;
    std::vector<EpochRecord> epochs;
    double total_seconds = 0.0;
    std::uint64_t optimizer_calls = 0;
    double optimizer_seconds = 0.0;
    double oracle_value = 0.0;

    double cumulative_regret() const;
    int epoch_count() const { return static_cast<int>(epochs.size()); }
};

// Confidence level of the curvature-weighted index at an epoch starting at
// round t_tau: zeta = sqrt(lam)/2 + (2r/sqrt(lam)) log(4KT (1 + 2(t_tau-1)L/(r lam))).
double zeta_tau(double lambda, int r, int K, int T, int L, int t_tau);

// Round-robin warm-up plan over the active agents of one arm: chunks of
// i = min(L, |active|) agents, wrap-around at the list end.
std::vector<int> warmup_chunk(const std::vector<int>& active, int chunk_size,
                              int local_round);
double warmup_rounds_wanted(int n_active, int chunk_size, double kappa,
                            double C3_warm, int T, int K, double lambda_min, int r);

RunTrace run_bsmb(Environment& env, const AlgoConfig& cfg);
RunTrace run_bsmb_plus(Environment& env, const AlgoConfig& cfg);
RunTrace run_baseline(Environment& env, const AlgoConfig& cfg);
RunTrace run_bsmb_alpha(Environment& env, const AlgoConfig& cfg);
RunTrace run_algorithm(Environment& env, const AlgoConfig& cfg);

// Measurement baseline: a uniformly random feasible matching every round.
RunTrace run_uniform_random(Environment& env, int T);

}  // namespace smb
