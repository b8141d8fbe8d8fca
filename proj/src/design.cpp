#include "smb/design.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace smb {

namespace {

MatrixXd moment_matrix(const DesignProblem& p, const std::vector<double>& pi) {
    MatrixXd w = p.regularizer * MatrixXd::Identity(p.dimension, p.dimension);
    for (std::size_t u = 0; u < p.units.size(); ++u) {
        if (pi[u] == 0.0) continue;
        const auto& unit = p.units[u];
        for (std::size_t i = 0; i < unit.vectors.size(); ++i)
            w.noalias() +=
                pi[u] * unit.weights[i] * unit.vectors[i] * unit.vectors[i].transpose();
    }
    return w;
}

double log_det(const MatrixXd& w) {
    Eigen::LLT<MatrixXd> llt(w);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

std::vector<double> leverages_of(const DesignProblem& p, const MatrixXd& w) {
    Eigen::LDLT<MatrixXd> ldlt(w);
    std::vector<double> lev(p.units.size(), 0.0);
    for (std::size_t u = 0; u < p.units.size(); ++u) {
        const auto& unit = p.units[u];
        double g = 0.0;
        for (std::size_t i = 0; i < unit.vectors.size(); ++i)
            g += unit.weights[i] * unit.vectors[i].dot(ldlt.solve(unit.vectors[i]));
        lev[u] = g;
    }
    return lev;
}

double max_leverage(const DesignProblem& p, const std::vector<double>& pi) {
    const auto lev = leverages_of(p, moment_matrix(p, pi));
    return *std::max_element(lev.begin(), lev.end());
}

// Golden-section maximization of a unimodal function on [lo, hi].
template <typename F>
double golden_max(F f, double lo, double hi, int iters = 48) {
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters; ++i) {
        if (f1 < f2) {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + phi * (b - a); f2 = f(x2);
        } else {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - phi * (b - a); f1 = f(x1);
        }
    }
    return f1 > f2 ? x1 : x2;
}

std::vector<double> mix_towards(const std::vector<double>& pi, std::size_t u, double gamma) {
    std::vector<double> out(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) out[i] = (1.0 - gamma) * pi[i];
    out[u] += gamma;
    return out;
}

std::vector<double> move_away(const std::vector<double>& pi, std::size_t u, double t) {
    // pi' = (pi - t e_u) / (1 - t), t in [0, pi_u).
    std::vector<double> out(pi.size());
    const double scale = 1.0 / (1.0 - t);
    for (std::size_t i = 0; i < pi.size(); ++i) out[i] = pi[i] * scale;
    out[u] = (pi[u] - t) * scale;
    if (out[u] < 0.0) out[u] = 0.0;
    return out;
}

}  // namespace

std::vector<double> unit_leverages(const DesignProblem& p, const std::vector<double>& pi) {
    return leverages_of(p, moment_matrix(p, pi));
}

DesignWeights solve_g_optimal(const DesignProblem& problem, const DesignOptions& options) {
    const std::size_t n_units = problem.units.size();
    if (n_units == 0) throw SmbError("solve_g_optimal: no units");
    if (problem.regularizer <= 0.0)
        throw SmbError("solve_g_optimal: regularizer must be positive");
    for (const auto& u : problem.units)
        for (const auto& v : u.vectors)
            if (!v.allFinite()) throw SmbError("solve_g_optimal: non-finite unit vector");

    const double r = static_cast<double>(problem.dimension);
    const double target = r * (1.0 + options.tol);
    const int max_iters =
        options.max_iters > 0 ? options.max_iters : 10 * problem.dimension * problem.dimension;

    // Wynn-Fedorov sweeps (add step toward the worst-leverage unit, away step
    // off the best-covered support unit, exact log-det line search). The raw
    // iterate's max leverage is not monotone, so the incumbent tracks the
    // best design seen; the incumbent is what gets reported and returned.
    std::vector<double> cur(n_units, 1.0 / static_cast<double>(n_units));
    std::vector<double> pi = cur;
    double g_best = max_leverage(problem, cur);
    if (options.on_sweep) options.on_sweep(g_best);

    for (int iter = 0; iter < max_iters && g_best > target; ++iter) {
        // Add step.
        {
            const auto lev = unit_leverages(problem, cur);
            const std::size_t u_add = static_cast<std::size_t>(
                std::max_element(lev.begin(), lev.end()) - lev.begin());
            auto f = [&](double gamma) {
                return log_det(moment_matrix(problem, mix_towards(cur, u_add, gamma)));
            };
            const double gamma = golden_max(f, 0.0, 1.0);
            if (f(gamma) > f(0.0)) cur = mix_towards(cur, u_add, gamma);
        }
        // Away step.
        {
            const auto lev = unit_leverages(problem, cur);
            std::size_t u_away = n_units;
            double worst = std::numeric_limits<double>::infinity();
            for (std::size_t u = 0; u < n_units; ++u)
                if (cur[u] > 0.0 && lev[u] < worst) { worst = lev[u]; u_away = u; }
            if (u_away < n_units && cur[u_away] < 1.0) {
                auto f = [&](double t) {
                    return log_det(moment_matrix(problem, move_away(cur, u_away, t)));
                };
                const double t = golden_max(f, 0.0, cur[u_away]);
                if (f(t) > f(0.0)) cur = move_away(cur, u_away, t);
            }
        }
        const double g_cur = max_leverage(problem, cur);
        if (g_cur < g_best) {
            g_best = g_cur;
            pi = cur;
        }
        if (options.on_sweep) options.on_sweep(g_best);
    }
    if (g_best > target)
        throw DesignError("solve_g_optimal: certificate not reached, best max leverage " +
                              std::to_string(g_best),
                          g_best);

    // Prune tiny weights, renormalize, re-certify.
    auto pruned = [&](double threshold) {
        std::vector<double> q = pi;
        double sum = 0.0;
        for (double& x : q) {
            if (x < threshold) x = 0.0;
            sum += x;
        }
        for (double& x : q) x /= sum;
        return q;
    };
    std::vector<double> q = pruned(options.prune_threshold);
    if (max_leverage(problem, q) > target) q = pruned(1e-12);

    // Caratheodory reduction: while the support exceeds r(r+1)/2 + 1, the
    // support moments plus the normalization row are linearly dependent, so
    // mass can slide along a null direction until a weight hits zero while
    // the moment matrix (hence every leverage) stays fixed.
    const int sym_dim = problem.dimension * (problem.dimension + 1) / 2;
    for (;;) {
        std::vector<std::size_t> support;
        for (std::size_t u = 0; u < n_units; ++u)
            if (q[u] > 0.0) support.push_back(u);
        if (static_cast<int>(support.size()) <= sym_dim + 1) break;
        MatrixXd a(sym_dim + 1, static_cast<Eigen::Index>(support.size()));
        for (std::size_t c = 0; c < support.size(); ++c) {
            const auto& unit = problem.units[support[c]];
            MatrixXd m = MatrixXd::Zero(problem.dimension, problem.dimension);
            for (std::size_t i = 0; i < unit.vectors.size(); ++i)
                m.noalias() += unit.weights[i] * unit.vectors[i] * unit.vectors[i].transpose();
            Eigen::Index row = 0;
            for (int i = 0; i < problem.dimension; ++i)
                for (int j = i; j < problem.dimension; ++j)
                    a(row++, static_cast<Eigen::Index>(c)) = m(i, j);
            a(sym_dim, static_cast<Eigen::Index>(c)) = 1.0;
        }
        const Eigen::FullPivLU<MatrixXd> lu(a);
        const MatrixXd kernel = lu.kernel();
        if (kernel.cols() == 0 || kernel.col(0).norm() < 1e-12) break;
        VectorXd dir = kernel.col(0);
        // Slide toward the first vanishing weight.
        double t_max = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < support.size(); ++c)
            if (dir[static_cast<Eigen::Index>(c)] < 0.0)
                t_max = std::min(t_max, -q[support[c]] / dir[static_cast<Eigen::Index>(c)]);
        if (!std::isfinite(t_max)) {
            dir = -dir;
            t_max = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < support.size(); ++c)
                if (dir[static_cast<Eigen::Index>(c)] < 0.0)
                    t_max = std::min(t_max, -q[support[c]] / dir[static_cast<Eigen::Index>(c)]);
        }
        if (!std::isfinite(t_max)) break;
        std::size_t vanish = support.size();
        double closest = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < support.size(); ++c) {
            q[support[c]] += t_max * dir[static_cast<Eigen::Index>(c)];
            if (dir[static_cast<Eigen::Index>(c)] < 0.0 && q[support[c]] < closest) {
                closest = q[support[c]];
                vanish = c;
            }
            if (q[support[c]] < 0.0) q[support[c]] = 0.0;
        }
        if (vanish < support.size()) q[support[vanish]] = 0.0;
        double sum = std::accumulate(q.begin(), q.end(), 0.0);
        for (double& x : q) x /= sum;
    }

    DesignWeights out;
    out.max_leverage = max_leverage(problem, q);
    for (std::size_t u = 0; u < n_units; ++u) {
        if (q[u] > 0.0) {
            out.support.push_back(problem.units[u].key);
            out.weights.push_back(q[u]);
        }
    }
    return out;
}

DesignProblem build_agent_design(const std::vector<int>& active, const MatrixXd& Z,
                                 double T_tau, double lam) {
    if (active.empty()) throw SmbError("build_agent_design: empty active set");
    DesignProblem p;
    p.dimension = static_cast<int>(Z.rows());
    p.regularizer = lam / (static_cast<double>(p.dimension) * T_tau);
    for (int n : active) {
        DesignUnit u;
        u.key.agent = n;
        u.weights = {1.0};
        u.vectors = {Z.col(n)};
        p.units.push_back(std::move(u));
    }
    return p;
}

std::vector<std::vector<int>> enumerate_assortments(const std::vector<int>& active,
                                                    int L, std::uint64_t cap) {
    const int n = static_cast<int>(active.size());
    std::uint64_t count = 0;
    std::vector<std::vector<int>> out;
    for (int size = 1; size <= std::min(L, n); ++size) {
        std::vector<int> idx(static_cast<std::size_t>(size));
        for (int i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
        while (true) {
            if (++count > cap) throw SmbError("assortment design too large");
            std::vector<int> subset(static_cast<std::size_t>(size));
            for (int i = 0; i < size; ++i)
                subset[static_cast<std::size_t>(i)] = active[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
            out.push_back(std::move(subset));
            int i = size - 1;
            while (i >= 0 && idx[static_cast<std::size_t>(i)] == i + n - size) --i;
            if (i < 0) break;
            ++idx[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < size; ++j)
                idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return out;
}

DesignProblem build_assortment_design(const std::vector<int>& active,
                                      const VectorXd& theta_hat, const MatrixXd& Z,
                                      int L, double T_tau, double lam,
                                      std::uint64_t unit_cap) {
    if (active.empty()) throw SmbError("build_assortment_design: empty active set");
    DesignProblem p;
    p.dimension = static_cast<int>(Z.rows());
    p.regularizer = lam / (static_cast<double>(p.dimension) * T_tau);
    for (auto& members : enumerate_assortments(active, L, unit_cap)) {
        Assortment s;
        s.members = members;
        const VectorXd probs = choice_probs(s, theta_hat, Z);
        DesignUnit u;
        u.key.members = std::move(members);
        for (std::size_t i = 0; i < u.key.members.size(); ++i) {
            u.weights.push_back(probs[static_cast<Eigen::Index>(i)]);
            u.vectors.push_back(centered_feature(u.key.members[i], s, theta_hat, Z));
        }
        p.units.push_back(std::move(u));
    }
    return p;
}

DesignProblem build_pair_design(const std::vector<int>& active,
                                const VectorXd& theta_hat, const MatrixXd& Z,
                                int L, double T_tau, double lam,
                                std::uint64_t unit_cap) {
    if (active.empty()) throw SmbError("build_pair_design: empty active set");
    DesignProblem p;
    p.dimension = static_cast<int>(Z.rows());
    p.regularizer = lam / (static_cast<double>(p.dimension) * T_tau);
    std::uint64_t count = 0;
    for (auto& members : enumerate_assortments(active, L, unit_cap)) {
        Assortment s;
        s.members = members;
        for (int n : members) {
            if (++count > unit_cap) throw SmbError("assortment design too large");
            DesignUnit u;
            u.key.agent = n;
            u.key.members = members;
            u.weights = {1.0};
            u.vectors = {centered_feature(n, s, theta_hat, Z)};
            p.units.push_back(std::move(u));
        }
    }
    return p;
}

}  // namespace smb
