#include "smb/policies.hpp"

#include <chrono>
#include <cmath>

namespace smb {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

}  // namespace

const char* algo_name(Algo a) {
    switch (a) {
        case Algo::Bsmb: return "bsmb";
        case Algo::BsmbPlus: return "bsmb-plus";
        case Algo::Baseline: return "baseline";
        case Algo::BsmbAlpha: return "bsmb-alpha";
    }
    return "?";
}

Algo algo_from_name(const std::string& name) {
    if (name == "bsmb") return Algo::Bsmb;
    if (name == "bsmb-plus" || name == "bsmb+") return Algo::BsmbPlus;
    if (name == "baseline") return Algo::Baseline;
    if (name == "bsmb-alpha") return Algo::BsmbAlpha;
    throw SmbError("unknown algorithm: " + name);
}

double BatchSchedule::next(double T_tau) const {
    return std::max(eta_T * std::sqrt(std::max(T_tau, 1.0)), 1.0);
}

BatchSchedule batch_schedule(int T, int r, int K, int M, Algo variant, double C3, int L) {
    if (T < 1 || r < 1 || K < 1 || M < 1) throw SmbError("batch_schedule: bad sizes");
    BatchSchedule s;
    s.M = M;
    const double exponent = 1.0 / (2.0 * (1.0 - std::pow(2.0, -M)));
    s.eta_T = std::pow(static_cast<double>(T) / (static_cast<double>(r) * K), exponent);
    if (variant == Algo::BsmbPlus) {
        const double logT = std::log(static_cast<double>(T));
        const double logTKL =
            std::log(static_cast<double>(T) * K * std::max(L, 1));
        s.T1 = C3 * logT * logTKL * logTKL;
    } else {
        s.T1 = s.eta_T;
    }
    s.T1 = std::max(s.T1, 1.0);
    return s;
}

double RunTrace::cumulative_regret() const {
    double total = 0.0;
    for (const auto& rec : rounds) total += rec.inst_regret;
    return total;
}

std::vector<int> warmup_chunk(const std::vector<int>& active, int chunk_size,
                              int local_round) {
    // 1-based modular window [a, b] over the active list, wrapping at the end.
    const int n = static_cast<int>(active.size());
    auto wrap = [n](long long x) { return static_cast<int>((x - 1) % n) + 1; };
    const long long i = chunk_size, t = local_round;
    const int a = wrap(i * (t - 1) + 1);
    const int b = wrap(i * t);
    std::vector<int> chunk;
    if (a <= b) {
        for (int pos = a; pos <= b; ++pos) chunk.push_back(active[static_cast<std::size_t>(pos - 1)]);
    } else {
        for (int pos = 1; pos <= b; ++pos) chunk.push_back(active[static_cast<std::size_t>(pos - 1)]);
        for (int pos = a; pos <= n; ++pos) chunk.push_back(active[static_cast<std::size_t>(pos - 1)]);
    }
    std::sort(chunk.begin(), chunk.end());
    return chunk;
}

double zeta_tau(double lambda, int r, int K, int T, int L, int t_tau) {
    return 0.5 * std::sqrt(lambda) +
           (2.0 * r / std::sqrt(lambda)) *
               std::log(4.0 * K * T * (1.0 + 2.0 * (t_tau - 1.0) * L / (r * lambda)));
}

double warmup_rounds_wanted(int n_active, int chunk_size, double kappa, double C3_warm,
                            int T, int K, double lambda_min, int r) {
    const double log_tk = std::log(std::max(static_cast<double>(T) * K, 2.0));
    const double denom = chunk_size * kappa * kappa * lambda_min * log_tk;
    if (denom <= 0.0) return std::numeric_limits<double>::infinity();
    const double grow = (r + log_tk) * (r + log_tk);
    return std::ceil(C3_warm * n_active / denom * grow);
}

namespace {

// Per-run bookkeeping shared by all policies: plays rounds against the
// environment, records the trace, and owns the optimizer-call counters.
struct Runner {
    Environment& env;
    int T;
    RunTrace trace;
    std::uint64_t opt_calls = 0;
    double opt_seconds = 0.0;
    Clock::time_point started, last;
    int t = 1;

    Runner(Environment& e, int horizon) : env(e), T(horizon) {
        trace.oracle_value = env.oracle().value;
        trace.rounds.reserve(static_cast<std::size_t>(T));
        started = last = Clock::now();
    }

    bool done() const { return t > T; }

    template <typename F>
    auto timed_opt(F&& f) {
        const auto t0 = Clock::now();
        auto result = f();
        opt_seconds += seconds_between(t0, Clock::now());
        ++opt_calls;
        return result;
    }

    Feedback play(const Matching& m, int epoch) {
        Feedback fb = env.step(m);
        RoundRecord rec;
        rec.round = t;
        rec.epoch = epoch;
        rec.offered = m;
        rec.outcomes = fb.outcome;
        rec.expected_revenue = env.true_total_revenue(m);
        rec.realized_reward = 0.0;
        for (int k = 0; k < env.instance().K; ++k) {
            const int n = fb.outcome[static_cast<std::size_t>(k)];
            if (n != kOutsideOption) rec.realized_reward += env.instance().Rewards(n, k);
        }
        rec.inst_regret = trace.oracle_value - rec.expected_revenue;
        const auto now = Clock::now();
        rec.wall_seconds = seconds_between(last, now);
        last = now;
        rec.opt_calls = opt_calls;
        trace.rounds.push_back(std::move(rec));
        ++t;
        return fb;
    }

    RunTrace finish() {
        trace.total_seconds = seconds_between(started, Clock::now());
        trace.optimizer_calls = opt_calls;
        trace.optimizer_seconds = opt_seconds;
        return std::move(trace);
    }
};

ArmDataset single_obs(int round, const Assortment& s, int outcome) {
    ArmDataset d;
    d.add(round, s, outcome);
    return d;
}

// Elimination-family policies (exact optimizer, greedy-oracle variant, and
// the curvature-weighted plus variant) share this epoch loop.
RunTrace run_elimination_family(Environment& env, const AlgoConfig& cfg) {
    const MatrixXd& Z = env.Z();
    const MatrixXd& rewards = env.instance().Rewards;
    const int N = env.instance().N;
    const int K = env.instance().K;
    const int L = env.instance().L;
    const int r = env.rank();
    const int T = cfg.T;
    const bool plus = cfg.algorithm == Algo::BsmbPlus;
    const bool approx = cfg.algorithm == Algo::BsmbAlpha;

    Runner run(env, T);
    const BatchSchedule schedule = batch_schedule(T, r, K, cfg.M, cfg.algorithm, cfg.C3, L);

    const double kappa = cfg.kappa > 0.0 ? cfg.kappa : kappa_lower_bound(L);
    const double beta_T =
        (cfg.C1 / kappa) * std::sqrt(std::log(std::max(static_cast<double>(T) * N * K, 2.0)));
    const double lambda = cfg.C2 * r * std::log(std::max(K, 2));

    MleConfig mle = cfg.mle;
    if (plus) {
        mle.norm_cap = 1.0;
        mle.max_iters = std::max(cfg.mle.max_iters, cfg.mle_projected_max_iters);
        // The projected solver is first order; 1e-6 is the supported residual.
        mle.grad_tol = std::max(cfg.mle.grad_tol, 1e-6);
    }

    double lambda_min = 0.0;
    {
        MatrixXd zz = MatrixXd::Zero(r, r);
        for (int n = 0; n < N; ++n) zz.noalias() += Z.col(n) * Z.col(n).transpose();
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(zz);
        lambda_min = es.eigenvalues().minCoeff();
    }

    ActiveSets active = full_active_sets(N, K, L);
    std::vector<ArmDataset> data_prev(static_cast<std::size_t>(K));
    std::vector<VectorXd> theta_prev(static_cast<std::size_t>(K), VectorXd::Zero(r));
    double T_tau = schedule.T1;

    for (int epoch = 1; !run.done(); ++epoch) {
        // The batch budget caps the number of exploration plans: the last
        // permitted epoch runs out the horizon. (The plus variant's first
        // epoch length can undershoot eta_T at small T, so the schedule
        // alone does not guarantee the cap.)
        if (epoch == cfg.M)
            T_tau = std::max(T_tau, static_cast<double>(T - run.t + 1));
        EpochRecord erec;
        erec.epoch = epoch;
        erec.start_round = run.t;
        erec.T_tau = T_tau;
        const std::uint64_t calls_before = run.opt_calls;
        const double opt_secs_before = run.opt_seconds;
        const int t_tau = run.t;

        // Estimation on the previous epoch's exploration data.
        std::vector<VectorXd> theta_hat(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
            data_prev[static_cast<std::size_t>(k)].arm = k;
            theta_hat[static_cast<std::size_t>(k)] =
                fit_mle(data_prev[static_cast<std::size_t>(k)], Z, mle,
                        &theta_prev[static_cast<std::size_t>(k)]);
        }

        // Confidence indices for this epoch.
        std::unique_ptr<AssortmentIndex> ucb, lcb;
        if (plus) {
            const double zeta = cfg.zeta_scale * zeta_tau(lambda, r, K, T, L, t_tau);
            std::vector<MatrixXd> h_inv;
            for (int k = 0; k < K; ++k) {
                const MatrixXd h = local_gram(theta_hat[static_cast<std::size_t>(k)],
                                              data_prev[static_cast<std::size_t>(k)], Z,
                                              lambda);
                h_inv.push_back(h.ldlt().solve(MatrixXd::Identity(r, r)));
            }
            ucb = std::make_unique<LocalWidthIndex>(Z, rewards, theta_hat, theta_prev,
                                                    h_inv, zeta, +1.0);
            lcb = std::make_unique<LocalWidthIndex>(Z, rewards, theta_hat, theta_prev,
                                                    h_inv, zeta, -1.0);
        } else {
            std::vector<MatrixXd> v_inv;
            for (int k = 0; k < K; ++k) {
                const MatrixXd v = design_matrix(data_prev[static_cast<std::size_t>(k)], Z);
                v_inv.push_back(v.ldlt().solve(MatrixXd::Identity(r, r)));
            }
            ucb = std::make_unique<EllipsoidWidthIndex>(Z, rewards, theta_hat, v_inv,
                                                        beta_T, +1.0);
            lcb = std::make_unique<EllipsoidWidthIndex>(Z, rewards, theta_hat, v_inv,
                                                        beta_T, -1.0);
        }

        // Construction and elimination over the previous epoch's active sets.
        ElimOptions eopt;
        eopt.mode = plus ? ElimMode::BsmbPlus
                         : (approx ? ElimMode::AlphaOracle : ElimMode::Bsmb);
        eopt.alpha = cfg.alpha;
        eopt.assortment_cap = cfg.assortment_cap;
        const auto opt_t0 = Clock::now();
        EliminationResult elim = eliminate(*ucb, *lcb, active, eopt);
        run.opt_seconds += seconds_between(opt_t0, Clock::now());
        run.opt_calls += elim.optimizer_calls;
        active = elim.active;

        erec.theta_hat = theta_hat;
        erec.active = active;
        erec.agent_design.assign(static_cast<std::size_t>(K), {});
        erec.assortment_design.assign(static_cast<std::size_t>(K), {});
        erec.pair_design.assign(static_cast<std::size_t>(K), {});

        std::vector<ArmDataset> data_next(static_cast<std::size_t>(K));
        int rounds_played = 0;

        for (int k = 0; k < K && !run.done(); ++k) {
            const auto& agents = active.per_arm[static_cast<std::size_t>(k)];
            if (agents.empty()) continue;
            auto& dataset = data_next[static_cast<std::size_t>(k)];
            dataset.arm = k;

            // Warm-up (plain variants only): round-robin chunks to this arm,
            // empty assortments elsewhere.
            if (!plus) {
                const int chunk = std::min(L, static_cast<int>(agents.size()));
                const double wanted = warmup_rounds_wanted(
                    static_cast<int>(agents.size()), chunk, kappa, cfg.C3_warm, T, K,
                    lambda_min, r);
                const int cap = static_cast<int>(cfg.warmup_cap_fraction * T /
                                                 std::max(K, 1));
                int rounds = static_cast<int>(std::min(wanted, 1e9));
                if (rounds > cap) {
                    rounds = cap;
                    erec.warmup_capped = true;
                }
                for (int w = 1; w <= rounds && !run.done(); ++w) {
                    Matching m = empty_matching(K);
                    m.assortments[static_cast<std::size_t>(k)].members =
                        warmup_chunk(agents, chunk, w);
                    const Feedback fb = run.play(m, epoch);
                    dataset.add(run.t - 1, m.assortments[static_cast<std::size_t>(k)],
                                fb.outcome[static_cast<std::size_t>(k)]);
                    ++erec.warmup_rounds;
                    ++rounds_played;
                }
                if (run.done()) break;
            }

            const double design_lam = plus ? lambda : 1.0;
            DesignOptions dopt;
            dopt.tol = cfg.design_tol;
            dopt.max_iters = cfg.design_max_iters;

            // Agent sweep: pinned matchings in design proportions.
            {
                const DesignWeights pi = solve_g_optimal(
                    build_agent_design(agents, Z, T_tau, design_lam), dopt);
                erec.agent_design[static_cast<std::size_t>(k)] = pi;
                for (std::size_t u = 0; u < pi.support.size() && !run.done(); ++u) {
                    const int n = pi.support[u].agent;
                    const int budget = static_cast<int>(
                        std::ceil(r * pi.weights[u] * T_tau));
                    const Matching& m =
                        elim.pins[static_cast<std::size_t>(k)].at(n).matching;
                    for (int b = 0; b < budget && !run.done(); ++b) {
                        const Feedback fb = run.play(m, epoch);
                        dataset.add(run.t - 1,
                                    m.assortments[static_cast<std::size_t>(k)],
                                    fb.outcome[static_cast<std::size_t>(k)]);
                        ++rounds_played;
                    }
                }
            }

            // Assortment and pair sweeps (plus variant): subset-fixed
            // matchings; the pair sweep replays the same matchings and its
            // rounds stay out of the estimation data.
            if (plus && !run.done()) {
                const DesignWeights pi_j = solve_g_optimal(
                    build_assortment_design(agents, theta_hat[static_cast<std::size_t>(k)],
                                            Z, L, T_tau, design_lam, cfg.assortment_cap),
                    dopt);
                erec.assortment_design[static_cast<std::size_t>(k)] = pi_j;
                for (std::size_t u = 0; u < pi_j.support.size() && !run.done(); ++u) {
                    const auto& members = pi_j.support[u].members;
                    const int budget = static_cast<int>(
                        std::ceil(r * pi_j.weights[u] * T_tau));
                    const Matching& m =
                        elim.fixes[static_cast<std::size_t>(k)].at(members).matching;
                    for (int b = 0; b < budget && !run.done(); ++b) {
                        const Feedback fb = run.play(m, epoch);
                        dataset.add(run.t - 1,
                                    m.assortments[static_cast<std::size_t>(k)],
                                    fb.outcome[static_cast<std::size_t>(k)]);
                        ++rounds_played;
                    }
                }
                if (!run.done()) {
                    const DesignWeights pi_p = solve_g_optimal(
                        build_pair_design(agents, theta_hat[static_cast<std::size_t>(k)],
                                          Z, L, T_tau, design_lam, cfg.assortment_cap),
                        dopt);
                    erec.pair_design[static_cast<std::size_t>(k)] = pi_p;
                    for (std::size_t u = 0; u < pi_p.support.size() && !run.done(); ++u) {
                        const auto& members = pi_p.support[u].members;
                        const int budget = static_cast<int>(
                            std::ceil(r * pi_p.weights[u] * T_tau));
                        const Matching& m =
                            elim.fixes[static_cast<std::size_t>(k)].at(members).matching;
                        for (int b = 0; b < budget && !run.done(); ++b) {
                            run.play(m, epoch);
                            ++rounds_played;
                        }
                    }
                }
            }
        }

        erec.opt_calls = run.opt_calls - calls_before;
        erec.opt_seconds = run.opt_seconds - opt_secs_before;
        run.trace.epochs.push_back(std::move(erec));

        // All active sets empty: nothing left to explore or exploit.
        if (rounds_played == 0 && !run.done()) {
            bool all_empty = true;
            for (const auto& s : active.per_arm) all_empty &= s.empty();
            if (all_empty) {
                const Matching m = empty_matching(K);
                while (!run.done()) run.play(m, epoch);
                break;
            }
        }

        data_prev = std::move(data_next);
        theta_prev = std::move(theta_hat);
        T_tau = schedule.next(T_tau);
    }
    return run.finish();
}

}  // namespace

RunTrace run_bsmb(Environment& env, const AlgoConfig& cfg) {
    if (cfg.algorithm != Algo::Bsmb) throw SmbError("run_bsmb: wrong config");
    return run_elimination_family(env, cfg);
}

RunTrace run_bsmb_plus(Environment& env, const AlgoConfig& cfg) {
    if (cfg.algorithm != Algo::BsmbPlus) throw SmbError("run_bsmb_plus: wrong config");
    return run_elimination_family(env, cfg);
}

RunTrace run_bsmb_alpha(Environment& env, const AlgoConfig& cfg) {
    if (cfg.algorithm != Algo::BsmbAlpha) throw SmbError("run_bsmb_alpha: wrong config");
    return run_elimination_family(env, cfg);
}

RunTrace run_baseline(Environment& env, const AlgoConfig& cfg) {
    if (cfg.algorithm != Algo::Baseline) throw SmbError("run_baseline: wrong config");
    const MatrixXd& Z = env.Z();
    const MatrixXd& rewards = env.instance().Rewards;
    const int N = env.instance().N;
    const int K = env.instance().K;
    const int L = env.instance().L;
    const int r = env.rank();
    const int T = cfg.T;

    Runner run(env, T);
    const double lambda = cfg.C5 * r * std::log(std::max(K, 2));
    const double eta = cfg.C6 * std::log(std::max(K, 2));
    const MatrixXd eye = MatrixXd::Identity(r, r);
    const ActiveSets full = full_active_sets(N, K, L);

    std::vector<VectorXd> theta(static_cast<std::size_t>(K), VectorXd::Zero(r));
    std::vector<MatrixXd> gram_sum(static_cast<std::size_t>(K), MatrixXd::Zero(r, r));
    std::vector<MatrixXd> gram_last(static_cast<std::size_t>(K), MatrixXd::Zero(r, r));
    std::vector<VectorXd> grad_last(static_cast<std::size_t>(K), VectorXd::Zero(r));

    while (!run.done()) {
        const int t = run.t;
        std::vector<MatrixXd> gram_t;
        for (int k = 0; k < K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const MatrixXd gram_tilde =
                lambda * eye + (gram_sum[ks] - gram_last[ks]) + eta * gram_last[ks];
            theta[ks] = omd_update(theta[ks], grad_last[ks], gram_tilde, eta, 1.0);
            gram_t.push_back(lambda * eye + gram_sum[ks]);
        }
        const double gamma_t =
            cfg.C4 * std::log(static_cast<double>(L)) *
            std::sqrt(r * std::log(std::max(static_cast<double>(t), 1.0)) *
                      std::log(std::max(static_cast<double>(K) * T, 2.0)));
        OptimisticUtilityIndex index(Z, rewards, theta, gram_t, gamma_t);
        OptResult opt = run.timed_opt([&] { return exact_argmax(index, full); });
        const Feedback fb = run.play(opt.matching, 1);
        for (int k = 0; k < K; ++k) {
            const auto ks = static_cast<std::size_t>(k);
            const Assortment& s = opt.matching.assortments[ks];
            const ArmDataset obs = single_obs(t, s, fb.outcome[ks]);
            grad_last[ks] = nll_gradient(theta[ks], obs, Z, 0.0);
            gram_last[ks] = choice_curvature(theta[ks], s, Z);
            gram_sum[ks] += gram_last[ks];
        }
    }
    return run.finish();
}

RunTrace run_algorithm(Environment& env, const AlgoConfig& cfg) {
    switch (cfg.algorithm) {
        case Algo::Bsmb: return run_bsmb(env, cfg);
        case Algo::BsmbPlus: return run_bsmb_plus(env, cfg);
        case Algo::Baseline: return run_baseline(env, cfg);
        case Algo::BsmbAlpha: return run_bsmb_alpha(env, cfg);
    }
    throw SmbError("run_algorithm: unknown algorithm");
}

RunTrace run_uniform_random(Environment& env, int T) {
    const int N = env.instance().N;
    const int K = env.instance().K;
    const int L = env.instance().L;
    Runner run(env, T);

    // Enumerate the feasible matchings once, then sample uniformly per round.
    std::vector<Matching> feasible;
    Matching current = empty_matching(K);
    std::vector<int> counts(static_cast<std::size_t>(K), 0);
    std::function<void(int)> rec = [&](int agent) {
        if (agent == N) {
            Matching snapshot = current;
            feasible.push_back(std::move(snapshot));
            return;
        }
        rec(agent + 1);
        for (int k = 0; k < K; ++k) {
            if (counts[static_cast<std::size_t>(k)] >= L) continue;
            current.assortments[static_cast<std::size_t>(k)].members.push_back(agent);
            ++counts[static_cast<std::size_t>(k)];
            rec(agent + 1);
            current.assortments[static_cast<std::size_t>(k)].members.pop_back();
            --counts[static_cast<std::size_t>(k)];
        }
    };
    rec(0);

    CounterRng rng = CounterRng(env.instance().seed).fork(77);
    while (!run.done()) {
        const auto idx = rng.next_below(feasible.size());
        run.play(feasible[static_cast<std::size_t>(idx)], 1);
    }
    return run.finish();
}

}  // namespace smb
