#include "smb/matching_opt.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>

namespace smb {

double AssortmentIndex::value(int arm, const std::vector<int>& members) const {
    auto ev = make_evaluator(arm);
    for (int n : members) ev->push(n);
    return ev->value();
}

double AssortmentIndex::matching_value(const Matching& m) const {
    double total = 0.0;
    for (int k = 0; k < m.arm_count(); ++k) total += value(k, m.members(k));
    return total;
}

namespace {

class FunctionEvaluator : public ArmEvaluator {
  public:
    FunctionEvaluator(const FunctionIndex::Fn& fn, int arm) : fn_(fn), arm_(arm) {}
    void push(int agent) override { members_.push_back(agent); }
    void pop() override { members_.pop_back(); }
    double value() const override { return fn_(members_, arm_); }

  private:
    const FunctionIndex::Fn& fn_;
    int arm_;
    std::vector<int> members_;
};

}  // namespace

std::unique_ptr<ArmEvaluator> FunctionIndex::make_evaluator(int arm) const {
    return std::make_unique<FunctionEvaluator>(fn_, arm);
}

EllipsoidWidthIndex::EllipsoidWidthIndex(const MatrixXd& Z, const MatrixXd& rewards,
                                         std::vector<VectorXd> theta,
                                         std::vector<MatrixXd> v_inv, double beta,
                                         double width_sign)
    : theta_(std::move(theta)), two_beta_signed_(2.0 * beta * width_sign) {
    const int N = static_cast<int>(Z.cols());
    const int K = static_cast<int>(theta_.size());
    exp_util_.resize(N, K);
    rew_exp_.resize(N, K);
    z_norm_.resize(N, K);
    for (int k = 0; k < K; ++k) {
        for (int n = 0; n < N; ++n) {
            const double w = std::exp(Z.col(n).dot(theta_[static_cast<std::size_t>(k)]));
            exp_util_(n, k) = w;
            rew_exp_(n, k) = rewards(n, k) * w;
            z_norm_(n, k) =
                std::sqrt(Z.col(n).dot(v_inv[static_cast<std::size_t>(k)] * Z.col(n)));
        }
    }
}

namespace {

// Snapshot-stack evaluator: pop restores the exact previous state, so the
// running sums equal a fresh ascending-order accumulation bit for bit.
class EllipsoidWidthEvaluator : public ArmEvaluator {
  public:
    EllipsoidWidthEvaluator(const EllipsoidWidthIndex& idx, const MatrixXd& exp_util,
                            const MatrixXd& rew_exp, const MatrixXd& z_norm, int arm,
                            double two_beta_signed)
        : exp_util_(exp_util), rew_exp_(rew_exp), z_norm_(z_norm), arm_(arm),
          two_beta_signed_(two_beta_signed) {
        (void)idx;
        stack_.push_back({0.0, 0.0, 0.0});
    }
    void push(int agent) override {
        State s = stack_.back();
        s.sum_w += exp_util_(agent, arm_);
        s.sum_rw += rew_exp_(agent, arm_);
        s.max_norm = std::max(s.max_norm, z_norm_(agent, arm_));
        stack_.push_back(s);
    }
    void pop() override { stack_.pop_back(); }
    double value() const override {
        const State& s = stack_.back();
        if (s.sum_rw == 0.0 && s.sum_w == 0.0) return 0.0;
        return s.sum_rw / (1.0 + s.sum_w) + two_beta_signed_ * s.max_norm;
    }

  private:
    struct State {
        double sum_w, sum_rw, max_norm;
    };
    const MatrixXd& exp_util_;
    const MatrixXd& rew_exp_;
    const MatrixXd& z_norm_;
    int arm_;
    double two_beta_signed_;
    std::vector<State> stack_;
};

}  // namespace

std::unique_ptr<ArmEvaluator> EllipsoidWidthIndex::make_evaluator(int arm) const {
    return std::make_unique<EllipsoidWidthEvaluator>(*this, exp_util_, rew_exp_, z_norm_,
                                                     arm, two_beta_signed_);
}

LocalWidthIndex::LocalWidthIndex(const MatrixXd& Z, const MatrixXd& rewards,
                                 std::vector<VectorXd> theta,
                                 std::vector<VectorXd> theta_prev,
                                 std::vector<MatrixXd> h_inv, double zeta,
                                 double width_sign)
    : Z_(Z), theta_(std::move(theta)), zeta_(zeta), width_sign_(width_sign) {
    const int N = static_cast<int>(Z.cols());
    const int K = static_cast<int>(theta_.size());
    exp_util_.resize(N, K);
    exp_util_prev_.resize(N, K);
    rew_exp_.resize(N, K);
    for (int k = 0; k < K; ++k) {
        gram_.push_back(Z.transpose() * h_inv[static_cast<std::size_t>(k)] * Z);
        for (int n = 0; n < N; ++n) {
            exp_util_(n, k) = std::exp(Z.col(n).dot(theta_[static_cast<std::size_t>(k)]));
            exp_util_prev_(n, k) =
                std::exp(Z.col(n).dot(theta_prev[static_cast<std::size_t>(k)]));
            rew_exp_(n, k) = rewards(n, k) * exp_util_(n, k);
        }
    }
}

namespace {

class LocalWidthEvaluator : public ArmEvaluator {
  public:
    LocalWidthEvaluator(const MatrixXd& exp_util, const MatrixXd& exp_util_prev,
                        const MatrixXd& rew_exp, const MatrixXd& gram, int arm,
                        double zeta, double width_sign)
        : exp_util_(exp_util), exp_util_prev_(exp_util_prev), rew_exp_(rew_exp),
          gram_(gram), arm_(arm), zeta_(zeta), width_sign_(width_sign) {}
    void push(int agent) override { members_.push_back(agent); }
    void pop() override { members_.pop_back(); }
    double value() const override {
        if (members_.empty()) return 0.0;
        const std::size_t m = members_.size();
        double sum_w = 0.0, sum_w_prev = 0.0, sum_rw = 0.0;
        for (int n : members_) {
            sum_w += exp_util_(n, arm_);
            sum_w_prev += exp_util_prev_(n, arm_);
            sum_rw += rew_exp_(n, arm_);
        }
        const double denom = 1.0 + sum_w;
        // b_i = sum_j p_j A_ij, c = sum_i p_i b_i, with p from theta_hat.
        double c = 0.0, max_a = 0.0;
        std::vector<double> b(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const int ni = members_[i];
            for (std::size_t j = 0; j < m; ++j) {
                const int nj = members_[j];
                b[i] += (exp_util_(nj, arm_) / denom) * gram_(ni, nj);
            }
            c += (exp_util_(ni, arm_) / denom) * b[i];
            max_a = std::max(max_a, gram_(ni, ni));
        }
        double max_tilde_sq = 0.0, weighted_tilde = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const int ni = members_[i];
            const double tilde_sq = std::max(gram_(ni, ni) - 2.0 * b[i] + c, 0.0);
            max_tilde_sq = std::max(max_tilde_sq, tilde_sq);
            const double p_prev = exp_util_prev_(ni, arm_) / (1.0 + sum_w_prev);
            weighted_tilde += p_prev * std::sqrt(tilde_sq);
        }
        const double width = 6.5 * zeta_ * zeta_ * max_a +
                             2.0 * zeta_ * zeta_ * max_tilde_sq +
                             zeta_ * weighted_tilde;
        return sum_rw / denom + width_sign_ * width;
    }

  private:
    const MatrixXd& exp_util_;
    const MatrixXd& exp_util_prev_;
    const MatrixXd& rew_exp_;
    const MatrixXd& gram_;
    int arm_;
    double zeta_, width_sign_;
    std::vector<int> members_;
};

}  // namespace

std::unique_ptr<ArmEvaluator> LocalWidthIndex::make_evaluator(int arm) const {
    return std::make_unique<LocalWidthEvaluator>(
        exp_util_, exp_util_prev_, rew_exp_, gram_[static_cast<std::size_t>(arm)], arm,
        zeta_, width_sign_);
}

OptimisticUtilityIndex::OptimisticUtilityIndex(const MatrixXd& Z, const MatrixXd& rewards,
                                               const std::vector<VectorXd>& theta,
                                               const std::vector<MatrixXd>& gram,
                                               double gamma)
    : arms_(static_cast<int>(theta.size())) {
    const int N = static_cast<int>(Z.cols());
    exp_h_.resize(N, arms_);
    rew_exp_h_.resize(N, arms_);
    for (int k = 0; k < arms_; ++k) {
        Eigen::LDLT<MatrixXd> ldlt(gram[static_cast<std::size_t>(k)]);
        for (int n = 0; n < N; ++n) {
            const double bonus =
                gamma * std::sqrt(Z.col(n).dot(ldlt.solve(Z.col(n))));
            const double h = Z.col(n).dot(theta[static_cast<std::size_t>(k)]) + bonus;
            exp_h_(n, k) = std::exp(h);
            rew_exp_h_(n, k) = rewards(n, k) * exp_h_(n, k);
        }
    }
}

namespace {

class OptimisticUtilityEvaluator : public ArmEvaluator {
  public:
    OptimisticUtilityEvaluator(const MatrixXd& exp_h, const MatrixXd& rew_exp_h, int arm)
        : exp_h_(exp_h), rew_exp_h_(rew_exp_h), arm_(arm) {
        stack_.push_back({0.0, 0.0});
    }
    void push(int agent) override {
        State s = stack_.back();
        s.sum_w += exp_h_(agent, arm_);
        s.sum_rw += rew_exp_h_(agent, arm_);
        stack_.push_back(s);
    }
    void pop() override { stack_.pop_back(); }
    double value() const override {
        const State& s = stack_.back();
        return s.sum_rw == 0.0 ? 0.0 : s.sum_rw / (1.0 + s.sum_w);
    }

  private:
    struct State {
        double sum_w, sum_rw;
    };
    const MatrixXd& exp_h_;
    const MatrixXd& rew_exp_h_;
    int arm_;
    std::vector<State> stack_;
};

// Shared search state of the exhaustive enumerator.
struct Enumerator {
    const ActiveSets& active;
    const OptConstraint& constraint;
    std::vector<int> agents;                       // ascending union of active sets
    std::vector<std::unique_ptr<ArmEvaluator>> eval;
    std::vector<double> arm_value;                 // cached evaluator values
    std::vector<int> arm_count;
    std::vector<int> assignment;                   // per agent slot, -1 unassigned
    std::uint64_t leaves = 0;
    bool found = false;
    double best_value = -std::numeric_limits<double>::infinity();
    Matching best;

    Matching current_matching() const {
        Matching m = empty_matching(active.arm_count());
        for (std::size_t i = 0; i < agents.size(); ++i)
            if (assignment[i] >= 0)
                m.assortments[static_cast<std::size_t>(assignment[i])].members.push_back(
                    agents[i]);
        return m;
    }

    void at_leaf() {
        ++leaves;
        double total = 0.0;
        for (double v : arm_value) total += v;
        if (!found || total > best_value) {
            found = true;
            best_value = total;
            best = current_matching();
        } else if (total == best_value) {
            Matching cand = current_matching();
            if (canonical_less(cand, best)) best = std::move(cand);
        }
    }

    bool arm_allowed(std::size_t pos, int k) const {
        const int agent = agents[pos];
        if (!active.contains(k, agent)) return false;
        if (arm_count[static_cast<std::size_t>(k)] >= active.capacity) return false;
        if (constraint.kind == OptConstraint::Kind::Fix && k == constraint.arm &&
            !std::binary_search(constraint.members.begin(), constraint.members.end(),
                                agent))
            return false;
        return true;
    }

    void dfs(std::size_t pos) {
        if (pos == agents.size()) {
            at_leaf();
            return;
        }
        const int agent = agents[pos];
        const bool pinned =
            constraint.kind == OptConstraint::Kind::Pin && agent == constraint.agent;
        const bool fix_forced =
            constraint.kind == OptConstraint::Kind::Fix &&
            std::binary_search(constraint.members.begin(), constraint.members.end(),
                               agent);
        if (!pinned && !fix_forced) {
            assignment[pos] = -1;
            dfs(pos + 1);
        }
        for (int k = 0; k < active.arm_count(); ++k) {
            if (pinned && k != constraint.arm) continue;
            if (fix_forced && k != constraint.arm) continue;
            if (!arm_allowed(pos, k)) continue;
            assignment[pos] = k;
            ++arm_count[static_cast<std::size_t>(k)];
            const double saved = arm_value[static_cast<std::size_t>(k)];
            eval[static_cast<std::size_t>(k)]->push(agent);
            arm_value[static_cast<std::size_t>(k)] =
                eval[static_cast<std::size_t>(k)]->value();
            dfs(pos + 1);
            eval[static_cast<std::size_t>(k)]->pop();
            arm_value[static_cast<std::size_t>(k)] = saved;
            --arm_count[static_cast<std::size_t>(k)];
        }
        assignment[pos] = -1;
    }
};

std::vector<int> union_of_active(const ActiveSets& active) {
    std::vector<int> agents;
    for (const auto& s : active.per_arm) agents.insert(agents.end(), s.begin(), s.end());
    std::sort(agents.begin(), agents.end());
    agents.erase(std::unique(agents.begin(), agents.end()), agents.end());
    return agents;
}

void validate_constraint(const ActiveSets& active, const OptConstraint& c) {
    if (c.kind == OptConstraint::Kind::Pin) {
        if (c.arm < 0 || c.arm >= active.arm_count() || !active.contains(c.arm, c.agent))
            throw SmbError("optimizer constraint infeasible: pinned agent not active");
    } else if (c.kind == OptConstraint::Kind::Fix) {
        if (c.arm < 0 || c.arm >= active.arm_count())
            throw SmbError("optimizer constraint infeasible: bad arm");
        if (static_cast<int>(c.members.size()) > active.capacity)
            throw SmbError("optimizer constraint infeasible: fixed set over capacity");
        if (!sorted_unique(c.members))
            throw SmbError("optimizer constraint: fixed set must be sorted and unique");
        for (int n : c.members)
            if (!active.contains(c.arm, n))
                throw SmbError("optimizer constraint infeasible: fixed agent not active");
    }
}

}  // namespace

std::unique_ptr<ArmEvaluator> OptimisticUtilityIndex::make_evaluator(int arm) const {
    return std::make_unique<OptimisticUtilityEvaluator>(exp_h_, rew_exp_h_, arm);
}

OptResult exact_argmax(const AssortmentIndex& index, const ActiveSets& active,
                       const OptConstraint& constraint) {
    validate_constraint(active, constraint);
    Enumerator en{active, constraint, {}, {}, {}, {}, {}, 0, false,
                  -std::numeric_limits<double>::infinity(), {}};
    en.agents = union_of_active(active);
    for (int k = 0; k < active.arm_count(); ++k)
        en.eval.push_back(index.make_evaluator(k));
    en.arm_value.assign(static_cast<std::size_t>(active.arm_count()), 0.0);
    for (int k = 0; k < active.arm_count(); ++k)
        en.arm_value[static_cast<std::size_t>(k)] =
            en.eval[static_cast<std::size_t>(k)]->value();
    en.arm_count.assign(static_cast<std::size_t>(active.arm_count()), 0);
    en.assignment.assign(en.agents.size(), -1);
    en.dfs(0);
    if (!en.found) throw SmbError("exact_argmax: empty feasible set");
    return {std::move(en.best), en.best_value, en.leaves};
}

OptResult greedy_oracle(const AssortmentIndex& index, const ActiveSets& active,
                        const OptConstraint& constraint) {
    validate_constraint(active, constraint);
    const int K = active.arm_count();
    Matching m = empty_matching(K);
    std::vector<char> assigned(static_cast<std::size_t>(1 + [&] {
                                   int mx = -1;
                                   for (const auto& s : active.per_arm)
                                       for (int n : s) mx = std::max(mx, n);
                                   return mx;
                               }()),
                               0);
    bool arm_frozen_fix = false;
    if (constraint.kind == OptConstraint::Kind::Pin) {
        m.assortments[static_cast<std::size_t>(constraint.arm)].members = {constraint.agent};
        assigned[static_cast<std::size_t>(constraint.agent)] = 1;
    } else if (constraint.kind == OptConstraint::Kind::Fix) {
        m.assortments[static_cast<std::size_t>(constraint.arm)].members = constraint.members;
        for (int n : constraint.members) assigned[static_cast<std::size_t>(n)] = 1;
        arm_frozen_fix = true;
    }
    std::vector<double> arm_value(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) arm_value[static_cast<std::size_t>(k)] = index.value(k, m.members(k));
    std::uint64_t evals = 0;
    while (true) {
        double best_gain = 0.0;
        int best_arm = -1, best_agent = -1;
        double best_new_value = 0.0;
        Matching best_candidate;
        for (int k = 0; k < K; ++k) {
            if (arm_frozen_fix && k == constraint.arm) continue;
            auto& members = m.assortments[static_cast<std::size_t>(k)].members;
            if (static_cast<int>(members.size()) >= active.capacity) continue;
            for (int n : active.per_arm[static_cast<std::size_t>(k)]) {
                if (assigned[static_cast<std::size_t>(n)]) continue;
                std::vector<int> trial = members;
                trial.insert(std::lower_bound(trial.begin(), trial.end(), n), n);
                ++evals;
                const double v = index.value(k, trial);
                const double gain = v - arm_value[static_cast<std::size_t>(k)];
                if (gain <= 0.0) continue;
                bool take = gain > best_gain;
                if (!take && gain == best_gain) {
                    Matching cand = m;
                    cand.assortments[static_cast<std::size_t>(k)].members = trial;
                    if (best_arm < 0 || canonical_less(cand, best_candidate)) {
                        take = true;
                        best_candidate = std::move(cand);
                    }
                }
                if (take) {
                    best_gain = gain;
                    best_arm = k;
                    best_agent = n;
                    best_new_value = v;
                    best_candidate = m;
                    best_candidate.assortments[static_cast<std::size_t>(k)].members = trial;
                }
            }
        }
        if (best_arm < 0) break;
        m = best_candidate;
        arm_value[static_cast<std::size_t>(best_arm)] = best_new_value;
        assigned[static_cast<std::size_t>(best_agent)] = 1;
    }
    double total = 0.0;
    for (double v : arm_value) total += v;
    return {std::move(m), total, evals};
}

EliminationResult eliminate(const AssortmentIndex& ucb, const AssortmentIndex& lcb,
                            const ActiveSets& active_prev, const ElimOptions& options) {
    const int K = active_prev.arm_count();
    const bool greedy = options.mode == ElimMode::AlphaOracle;
    auto argmax = [&](const AssortmentIndex& idx, const OptConstraint& c) {
        return greedy ? greedy_oracle(idx, active_prev, c) : exact_argmax(idx, active_prev, c);
    };

    EliminationResult res;
    res.active.capacity = active_prev.capacity;
    res.active.per_arm.assign(static_cast<std::size_t>(K), {});
    res.pins.resize(static_cast<std::size_t>(K));
    res.fixes.resize(static_cast<std::size_t>(K));

    OptResult lcb_opt = argmax(lcb, OptConstraint::none());
    res.lcb_best = lcb_opt.value;
    res.lcb_argmax = std::move(lcb_opt.matching);
    res.optimizer_calls = 1;

    for (int k = 0; k < K; ++k) {
        for (int n : active_prev.per_arm[static_cast<std::size_t>(k)]) {
            res.pins[static_cast<std::size_t>(k)].emplace(
                n, argmax(ucb, OptConstraint::pin(n, k)));
            ++res.optimizer_calls;
        }
        if (options.mode == ElimMode::BsmbPlus &&
            !active_prev.per_arm[static_cast<std::size_t>(k)].empty()) {
            for (auto& members :
                 enumerate_assortments(active_prev.per_arm[static_cast<std::size_t>(k)],
                                       active_prev.capacity, options.assortment_cap)) {
                auto c = OptConstraint::fix(members, k);
                res.fixes[static_cast<std::size_t>(k)].emplace(std::move(members),
                                                               argmax(ucb, c));
                ++res.optimizer_calls;
            }
        }
    }

    // Ulp-level ties count as "not eliminated".
    const double slack = 1e-12 * std::max(1.0, std::abs(res.lcb_best));
    const double threshold = options.mode == ElimMode::AlphaOracle
                                 ? options.alpha * res.lcb_best
                                 : res.lcb_best;
    for (int k = 0; k < K; ++k) {
        auto& survivors = res.active.per_arm[static_cast<std::size_t>(k)];
        for (int n : active_prev.per_arm[static_cast<std::size_t>(k)]) {
            const double v = res.pins[static_cast<std::size_t>(k)].at(n).value;
            if (v >= threshold - slack) survivors.push_back(n);
        }
    }

    if (options.mode == ElimMode::BsmbPlus) {
        for (int k = 0; k < K; ++k) {
            const auto& prime = res.active.per_arm[static_cast<std::size_t>(k)];
            if (prime.empty()) continue;
            std::vector<char> keep(prime.size(), 0);
            for (auto& members :
                 enumerate_assortments(prime, active_prev.capacity, options.assortment_cap)) {
                const double v = res.fixes[static_cast<std::size_t>(k)].at(members).value;
                if (v >= threshold - slack)
                    for (int n : members) {
                        const auto it = std::lower_bound(prime.begin(), prime.end(), n);
                        keep[static_cast<std::size_t>(it - prime.begin())] = 1;
                    }
            }
            std::vector<int> final_set;
            for (std::size_t i = 0; i < prime.size(); ++i)
                if (keep[i]) final_set.push_back(prime[i]);
            res.active.per_arm[static_cast<std::size_t>(k)] = std::move(final_set);
        }
    }
    return res;
}

}  // namespace smb
