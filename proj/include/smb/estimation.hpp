#pragma once

#include <optional>
#include <vector>

#include "smb/mnl.hpp"
#include "smb/types.hpp"

namespace smb {

// One round of preference feedback for an arm: the assortment it was offered
// and the accepted agent (or kOutsideOption).
struct ChoiceObservation {
    int round = 0;
    Assortment assortment;
    int outcome = kOutsideOption;
};

// Ordered feedback history of one arm; rounds strictly increasing.
struct ArmDataset {
    int arm = 0;
    std::vector<ChoiceObservation> observations;

    void add(int round, Assortment s, int outcome) {
        observations.push_back({round, std::move(s), outcome});
    }
    bool empty() const { return observations.empty(); }
    std::size_t size() const { return observations.size(); }
};

struct MleConfig {
    double ridge_weight = 1.0;
    std::optional<double> norm_cap;   // present for the norm-constrained fit
    int max_iters = 100;
    double grad_tol = 1e-8;
};

struct MleError : SmbError {
    MleError(const std::string& what, double residual)
        : SmbError(what), residual(residual) {}
    double residual;  // gradient norm (unconstrained) or projected residual
};

// Regularized negative log-likelihood
//   -sum_t sum_{n in S_t ∪ {outside}} y_{n,t} log p(n|S_t,theta) + (w/2)||theta||^2.
double nll(const VectorXd& theta, const ArmDataset& data, const MatrixXd& Z,
           double ridge_weight);

// Gradient sum_t sum_{n in S_t} (p(n|S_t,theta) - y_{n,t}) z_n + w * theta.
VectorXd nll_gradient(const VectorXd& theta, const ArmDataset& data,
                      const MatrixXd& Z, double ridge_weight);

// Design matrix sum_t sum_{n in S_t} z_n z_n^T + I_r.
MatrixXd design_matrix(const ArmDataset& data, const MatrixXd& Z);

// Curvature of one offered assortment at theta:
//   sum_n p_n z_n z_n^T - (sum_n p_n z_n)(sum_n p_n z_n)^T.
MatrixXd choice_curvature(const VectorXd& theta, const Assortment& s, const MatrixXd& Z);

// Curvature-weighted Gram matrix
//   sum_t [ sum_n p_n z_n z_n^T - (sum_n p_n z_n)(sum_n p_n z_n)^T ] + lam I_r,
// equal to the Hessian of the unregularized log-loss plus lam I.
MatrixXd local_gram(const VectorXd& theta_hat, const ArmDataset& data,
                    const MatrixXd& Z, double lam);

// Maximum-likelihood estimate. Unconstrained: damped Newton to gradient norm
// <= grad_tol. With norm_cap: projected gradient (Barzilai-Borwein step,
// Armijo backtracking) to a projected-gradient fixed point. Throws MleError
// on non-convergence, carrying the final residual.
VectorXd fit_mle(const ArmDataset& data, const MatrixXd& Z, const MleConfig& config,
                 const VectorXd* warm_start = nullptr);

// One online-mirror-descent step: the minimizer of
//   g^T theta + (1/(2 eta)) ||theta - theta_prev||^2_{G}
// subject to ||theta||_2 <= norm_cap (pass +inf for unconstrained). The
// constrained case projects under the G-norm by bisection to 1e-8.
VectorXd omd_update(const VectorXd& theta_prev, const VectorXd& grad_prev,
                    const MatrixXd& gram, double eta, double norm_cap);

}  // namespace smb
