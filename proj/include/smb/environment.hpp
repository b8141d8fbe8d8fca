#pragma once

#include <string>
#include <vector>

#include "smb/matching_opt.hpp"
#include "smb/mnl.hpp"
#include "smb/rng.hpp"
#include "smb/types.hpp"

namespace smb {

// Stochastic feedback of one round: per-arm accepted agent (or the outside
// option) and the per-agent acceptance indicators.
struct Feedback {
    std::vector<int> outcome;     // per arm: agent index or kOutsideOption
    std::vector<int> indicator;   // per agent: y_n in {0,1}
};

struct OracleSolution {
    Matching matching;
    double value = 0.0;
};

// x_n, theta_k drawn uniformly from [-1,1]^d then scaled to unit norm;
// rewards uniform on [0,1]. Deterministic in the seed.
Instance generate_instance(int N, int K, int d, int L, std::uint64_t seed);

// Inverse-CDF draw from choice_probs on a single uniform variate; members in
// sorted order, outside option last.
int sample_choice(const Assortment& s, const VectorXd& theta, const MatrixXd& Z,
                  CounterRng& rng);

// Exact optimum of the true expected revenue over the full feasible set.
// Throws when (K+1)^N exceeds the enumeration cap.
OracleSolution oracle_matching(const Instance& instance,
                               std::uint64_t assignment_cap = 100000000ULL);

// Exact minimum of p(n|S,theta_k) p(outside|S,theta_k) over the instance's
// arms and feasible nonempty assortments (the instance-specific non-linearity
// level, used for width ablations).
double empirical_kappa(const Instance& instance);

// JSON round trip for cross-language reproduction (row-major matrices; both
// d and the realized rank are recorded).
std::string instance_to_json(const Instance& instance);
Instance instance_from_json(const std::string& text);
void save_instance(const Instance& instance, const std::string& path);
Instance load_instance(const std::string& path);

// Owns the ground truth and the feedback randomness of one run. Feedback
// streams are split per arm so one arm's draws never perturb another's.
class Environment {
  public:
    explicit Environment(Instance instance, double svd_tol = 1e-9);

    const Instance& instance() const { return instance_; }
    const ProjectedFeatures& projection() const { return projected_; }
    const MatrixXd& Z() const { return projected_.Z; }
    int rank() const { return projected_.rank; }
    const OracleSolution& oracle() const { return oracle_; }

    // True projected parameter of arm k (basis^T theta_k).
    const VectorXd& theta_star(int k) const { return theta_star_[static_cast<std::size_t>(k)]; }

    // Applies sample_choice per arm and builds the indicators.
    Feedback step(const Matching& m);

    // Expected revenue of a matching under the true parameters.
    double true_total_revenue(const Matching& m) const {
        return total_revenue(m, instance_);
    }

  private:
    Instance instance_;
    ProjectedFeatures projected_;
    std::vector<VectorXd> theta_star_;
    OracleSolution oracle_;
    std::vector<CounterRng> arm_rng_;
};

}  // namespace smb
