#include "smb/estimation.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

namespace smb {

namespace {

// Index of the outcome inside probs (members first, outside option last).
int outcome_slot(const ChoiceObservation& obs) {
    if (obs.outcome == kOutsideOption)
        return static_cast<int>(obs.assortment.members.size());
    for (std::size_t i = 0; i < obs.assortment.members.size(); ++i)
        if (obs.assortment.members[i] == obs.outcome) return static_cast<int>(i);
    throw SmbError("observation outcome not in the offered assortment");
}

}  // namespace

double nll(const VectorXd& theta, const ArmDataset& data, const MatrixXd& Z,
           double ridge_weight) {
    double loss = 0.5 * ridge_weight * theta.squaredNorm();
    for (const auto& obs : data.observations) {
        const VectorXd p = choice_probs(obs.assortment, theta, Z);
        loss -= std::log(p[outcome_slot(obs)]);
    }
    return loss;
}

VectorXd nll_gradient(const VectorXd& theta, const ArmDataset& data,
                      const MatrixXd& Z, double ridge_weight) {
    VectorXd g = ridge_weight * theta;
    for (const auto& obs : data.observations) {
        const VectorXd p = choice_probs(obs.assortment, theta, Z);
        const auto& members = obs.assortment.members;
        for (std::size_t i = 0; i < members.size(); ++i) {
            const double y = (members[i] == obs.outcome) ? 1.0 : 0.0;
            g += (p[static_cast<Eigen::Index>(i)] - y) * Z.col(members[i]);
        }
    }
    return g;
}

MatrixXd design_matrix(const ArmDataset& data, const MatrixXd& Z) {
    const Eigen::Index r = Z.rows();
    MatrixXd v = MatrixXd::Identity(r, r);
    for (const auto& obs : data.observations)
        for (int n : obs.assortment.members)
            v.noalias() += Z.col(n) * Z.col(n).transpose();
    return v;
}

MatrixXd choice_curvature(const VectorXd& theta, const Assortment& s, const MatrixXd& Z) {
    const Eigen::Index r = Z.rows();
    MatrixXd h = MatrixXd::Zero(r, r);
    const VectorXd p = choice_probs(s, theta, Z);
    VectorXd mean = VectorXd::Zero(r);
    for (std::size_t i = 0; i < s.members.size(); ++i) {
        const double pi = p[static_cast<Eigen::Index>(i)];
        h.noalias() += pi * Z.col(s.members[i]) * Z.col(s.members[i]).transpose();
        mean += pi * Z.col(s.members[i]);
    }
    h.noalias() -= mean * mean.transpose();
    return h;
}

MatrixXd local_gram(const VectorXd& theta_hat, const ArmDataset& data,
                    const MatrixXd& Z, double lam) {
    if (lam <= 0.0) throw SmbError("local_gram: lam must be positive");
    const Eigen::Index r = Z.rows();
    MatrixXd h = lam * MatrixXd::Identity(r, r);
    for (const auto& obs : data.observations)
        h.noalias() += choice_curvature(theta_hat, obs.assortment, Z);
    return h;
}

namespace {

VectorXd fit_newton(const ArmDataset& data, const MatrixXd& Z, const MleConfig& cfg,
                    VectorXd theta) {
    const double hess_ridge = std::max(cfg.ridge_weight, 1e-10);
    double grad_norm = 0.0;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        const VectorXd g = nll_gradient(theta, data, Z, cfg.ridge_weight);
        grad_norm = g.norm();
        if (grad_norm <= cfg.grad_tol) return theta;
        const MatrixXd h = local_gram(theta, data, Z, hess_ridge);
        const VectorXd step = h.ldlt().solve(-g);
        const double slope = g.dot(step);
        // Inside the quadratic-convergence region the full step is taken
        // without a function comparison; objective differences there are
        // below double resolution on large datasets.
        double alpha = 1.0;
        if (-slope > 1e-2) {
            const double f0 = nll(theta, data, Z, cfg.ridge_weight);
            while (alpha > 1e-12 &&
                   nll(theta + alpha * step, data, Z, cfg.ridge_weight) >
                       f0 + 1e-4 * alpha * slope)
                alpha *= 0.5;
        }
        theta += alpha * step;
    }
    grad_norm = nll_gradient(theta, data, Z, cfg.ridge_weight).norm();
    if (grad_norm <= cfg.grad_tol) return theta;
    throw MleError("fit_mle: Newton did not converge, gradient norm " +
                       std::to_string(grad_norm),
                   grad_norm);
}

VectorXd clip_norm(VectorXd v, double cap) {
    const double n = v.norm();
    if (n > cap) v *= cap / n;
    return v;
}

VectorXd fit_projected(const ArmDataset& data, const MatrixXd& Z, const MleConfig& cfg,
                       VectorXd theta) {
    const double cap = *cfg.norm_cap;
    theta = clip_norm(std::move(theta), cap);
    // Projected-gradient residual at unit probe step.
    auto residual = [&](const VectorXd& th, const VectorXd& g) {
        return (th - clip_norm(th - g, cap)).norm();
    };
    // Smoothness bound: per-round curvature is dominated by the raw second
    // moments, so 1/L steps are safe without any function comparison. That
    // keeps progress possible once objective differences fall below double
    // precision.
    double smooth = cfg.ridge_weight;
    {
        const Eigen::Index r = Z.rows();
        const MatrixXd second = design_matrix(data, Z) - MatrixXd::Identity(r, r);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(second);
        smooth += std::max(es.eigenvalues().maxCoeff(), 0.0);
    }
    const double safe_step = 1.0 / std::max(smooth, 1e-12);

    VectorXd g = nll_gradient(theta, data, Z, cfg.ridge_weight);
    double step = safe_step;
    VectorXd theta_old = theta, g_old = g;
    double res = residual(theta, g);
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        if (res <= cfg.grad_tol) return theta;
        if (iter > 0) {
            // Barzilai-Borwein spectral step, clamped.
            const VectorXd ds = theta - theta_old;
            const VectorXd dg = g - g_old;
            const double sg = ds.dot(dg);
            if (sg > 0) step = std::min(std::max(ds.squaredNorm() / sg, safe_step), 1e6);
        }
        const double f0 = nll(theta, data, Z, cfg.ridge_weight);
        double alpha = step;
        VectorXd cand = theta;
        bool accepted = false;
        for (int bt = 0; bt < 30 && alpha > 0.9 * safe_step; ++bt) {
            cand = clip_norm(theta - alpha * g, cap);
            const VectorXd diff = cand - theta;
            const double f1 = nll(cand, data, Z, cfg.ridge_weight);
            if (f1 <= f0 + 1e-4 * g.dot(diff) + 1e-18 || f1 < f0) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        // Fallback: a 1/L step needs no acceptance test.
        if (!accepted) cand = clip_norm(theta - safe_step * g, cap);
        theta_old = theta;
        g_old = g;
        theta = std::move(cand);
        g = nll_gradient(theta, data, Z, cfg.ridge_weight);
        res = residual(theta, g);
    }
    if (res <= cfg.grad_tol) return theta;
    throw MleError("fit_mle: projected gradient did not converge, residual " +
                       std::to_string(res),
                   res);
}

}  // namespace

VectorXd fit_mle(const ArmDataset& data, const MatrixXd& Z, const MleConfig& config,
                 const VectorXd* warm_start) {
    if (config.max_iters < 1 || config.grad_tol <= 0.0)
        throw SmbError("fit_mle: invalid config");
    const Eigen::Index r = Z.rows();
    if (data.empty()) return VectorXd::Zero(r);  // pure ridge minimum
    VectorXd theta = warm_start ? *warm_start : VectorXd::Zero(r);
    if (config.norm_cap) return fit_projected(data, Z, config, std::move(theta));
    return fit_newton(data, Z, config, std::move(theta));
}

VectorXd omd_update(const VectorXd& theta_prev, const VectorXd& grad_prev,
                    const MatrixXd& gram, double eta, double norm_cap) {
    Eigen::LDLT<MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw SmbError("omd_update: gram matrix is not positive definite");
    const VectorXd unconstrained = theta_prev - eta * ldlt.solve(grad_prev);
    if (!std::isfinite(norm_cap) || unconstrained.norm() <= norm_cap)
        return unconstrained;
    // Project under the gram norm: theta(nu) = (G + nu I)^{-1} G u has
    // norm decreasing in nu; bisect for ||theta(nu)|| = cap.
    const VectorXd gu = gram * unconstrained;
    auto norm_at = [&](double nu) {
        const Eigen::Index r = gram.rows();
        return (gram + nu * MatrixXd::Identity(r, r)).ldlt().solve(gu).norm();
    };
    double lo = 0.0, hi = std::max(gu.norm() / norm_cap, 1.0);
    while (norm_at(hi) > norm_cap) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-8 * std::max(1.0, hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        (norm_at(mid) > norm_cap ? lo : hi) = mid;
    }
    const Eigen::Index r = gram.rows();
    VectorXd theta = (gram + hi * MatrixXd::Identity(r, r)).ldlt().solve(gu);
    return clip_norm(std::move(theta), norm_cap);
}

}  // namespace smb
