#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "smb/design.hpp"
#include "smb/estimation.hpp"
#include "smb/types.hpp"

namespace smb {

// Incremental per-arm index evaluation used inside the enumerator. Agents are
// pushed in ascending order along the search path; pops are LIFO. State is
// snapshot-restored on pop, so value() is bit-identical to a fresh evaluation
// of the sorted member list.
class ArmEvaluator {
  public:
    virtual ~ArmEvaluator() = default;
    virtual void push(int agent) = 0;
    virtual void pop() = 0;
    virtual double value() const = 0;
};

// A revenue index over assortments, one evaluator per arm.
class AssortmentIndex {
  public:
    virtual ~AssortmentIndex() = default;
    virtual int arm_count() const = 0;
    virtual std::unique_ptr<ArmEvaluator> make_evaluator(int arm) const = 0;

    double value(int arm, const std::vector<int>& members) const;
    double matching_value(const Matching& m) const;
};

// Index defined by a plain callback (test plug-ins and one-off indices).
class FunctionIndex : public AssortmentIndex {
  public:
    using Fn = std::function<double(const std::vector<int>&, int)>;
    FunctionIndex(int arms, Fn fn) : arms_(arms), fn_(std::move(fn)) {}
    int arm_count() const override { return arms_; }
    std::unique_ptr<ArmEvaluator> make_evaluator(int arm) const override;

  private:
    int arms_;
    Fn fn_;
};

// sum_{n in S} r_n p(n|S,theta_hat) + width_sign * 2 beta * max_{n in S} ||z_n||_{V^-1};
// the max over the empty set is 0, so the empty assortment scores 0.
class EllipsoidWidthIndex : public AssortmentIndex {
  public:
    EllipsoidWidthIndex(const MatrixXd& Z, const MatrixXd& rewards,
                        std::vector<VectorXd> theta, std::vector<MatrixXd> v_inv,
                        double beta, double width_sign);
    int arm_count() const override { return static_cast<int>(theta_.size()); }
    std::unique_ptr<ArmEvaluator> make_evaluator(int arm) const override;

  private:
    friend class EllipsoidWidthEvaluator;
    MatrixXd exp_util_;    // N x K, exp(z_n^T theta_k)
    MatrixXd rew_exp_;     // N x K, r_{n,k} exp(z_n^T theta_k)
    MatrixXd z_norm_;      // N x K, ||z_n||_{V_k^{-1}}
    std::vector<VectorXd> theta_;
    double two_beta_signed_;
};

// sum r_n p(n|S,theta_hat) + width_sign * B(S) with
// B(S) = 13/2 zeta^2 max ||z_n||^2_{H^-1} + 2 zeta^2 max ||ztilde_n(S)||^2_{H^-1}
//        + zeta sum_n p(n|S,theta_prev) ||ztilde_n(S)||_{H^-1}.
class LocalWidthIndex : public AssortmentIndex {
  public:
    LocalWidthIndex(const MatrixXd& Z, const MatrixXd& rewards,
                    std::vector<VectorXd> theta, std::vector<VectorXd> theta_prev,
                    std::vector<MatrixXd> h_inv, double zeta, double width_sign);
    int arm_count() const override { return static_cast<int>(theta_.size()); }
    std::unique_ptr<ArmEvaluator> make_evaluator(int arm) const override;

  private:
    friend class LocalWidthEvaluator;
    const MatrixXd& Z_;
    MatrixXd exp_util_;        // exp(z^T theta_k)
    MatrixXd exp_util_prev_;   // exp(z^T theta_prev_k)
    MatrixXd rew_exp_;
    std::vector<MatrixXd> gram_;   // Z^T H_k^{-1} Z, N x N per arm
    std::vector<VectorXd> theta_;
    double zeta_, width_sign_;
};

// Optimistic per-utility index of the per-round baseline:
// sum_{n in S} r_n exp(h_n) / (1 + sum_m exp(h_m)), h_n = z^T theta + gamma ||z||_{G^-1}.
class OptimisticUtilityIndex : public AssortmentIndex {
  public:
    OptimisticUtilityIndex(const MatrixXd& Z, const MatrixXd& rewards,
                           const std::vector<VectorXd>& theta,
                           const std::vector<MatrixXd>& gram, double gamma);
    int arm_count() const override { return arms_; }
    std::unique_ptr<ArmEvaluator> make_evaluator(int arm) const override;

  private:
    friend class OptimisticUtilityEvaluator;
    int arms_;
    MatrixXd exp_h_;    // N x K
    MatrixXd rew_exp_h_;
};

struct OptConstraint {
    enum class Kind { None, Pin, Fix } kind = Kind::None;
    int arm = -1;
    int agent = -1;               // Pin: force agent into arm's assortment
    std::vector<int> members;     // Fix: force the arm's assortment exactly

    static OptConstraint none() { return {}; }
    static OptConstraint pin(int agent, int arm) {
        OptConstraint c;
        c.kind = Kind::Pin;
        c.arm = arm;
        c.agent = agent;
        return c;
    }
    static OptConstraint fix(std::vector<int> members, int arm) {
        OptConstraint c;
        c.kind = Kind::Fix;
        c.arm = arm;
        c.members = std::move(members);
        return c;
    }
};

struct OptResult {
    Matching matching;
    double value = 0.0;
    std::uint64_t assignments_visited = 0;  // complete assignments enumerated
};

// Exhaustive maximization of sum_k index(S_k, k) over the feasible matchings
// induced by `active` (per-agent assignment vectors with capacity pruning).
// Ties break toward the lexicographically smallest canonical encoding.
// Throws when the constraint makes the feasible set empty.
OptResult exact_argmax(const AssortmentIndex& index, const ActiveSets& active,
                       const OptConstraint& constraint = OptConstraint::none());

// Greedy insertion oracle: starting from the constraint-mandated partial
// matching, repeatedly applies the feasible (agent, arm) insertion with the
// largest positive gain. Same tie-break as exact_argmax.
OptResult greedy_oracle(const AssortmentIndex& index, const ActiveSets& active,
                        const OptConstraint& constraint = OptConstraint::none());

enum class ElimMode { Bsmb, BsmbPlus, AlphaOracle };

struct EliminationResult {
    ActiveSets active;                                  // surviving sets
    std::vector<std::map<int, OptResult>> pins;         // per arm: agent -> pinned optimum
    std::vector<std::map<std::vector<int>, OptResult>> fixes;  // per arm (BsmbPlus)
    double lcb_best = 0.0;                              // max_m sum_l lcb(S_l)
    Matching lcb_argmax;
    std::uint64_t optimizer_calls = 0;
};

struct ElimOptions {
    ElimMode mode = ElimMode::Bsmb;
    double alpha = 1.0;                 // AlphaOracle comparison factor
    std::uint64_t assortment_cap = 100000;
};

// One elimination pass over all arms: constructs the pinned (and, for
// BsmbPlus, subset-fixed) optimistic matchings over the incoming active sets,
// then keeps agent n in arm k's set iff its optimistic value reaches the best
// pessimistic value. AlphaOracle uses the greedy oracle on both sides and the
// alpha-scaled comparison.
EliminationResult eliminate(const AssortmentIndex& ucb, const AssortmentIndex& lcb,
                            const ActiveSets& active_prev, const ElimOptions& options);

}  // namespace smb
