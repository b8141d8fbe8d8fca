#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "smb/estimation.hpp"
#include "smb/environment.hpp"
#include "test_util.hpp"

using namespace smb;

namespace {

ArmDataset one_obs(std::vector<int> members, int outcome) {
    ArmDataset d;
    Assortment s;
    s.members = std::move(members);
    d.add(1, s, outcome);
    return d;
}

}  // namespace

TEST_CASE("nll closed forms") {
    MatrixXd Z = MatrixXd::Identity(2, 2);
    CHECK(nll(VectorXd::Zero(2), ArmDataset{}, Z, 1.0) == doctest::Approx(0.0));
    CHECK(nll(VectorXd::Zero(2), one_obs({0}, kOutsideOption), Z, 1.0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(nll(VectorXd::Zero(2), one_obs({0, 1}, 0), Z, 0.0) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("nll_gradient: empty data is the ridge term") {
    MatrixXd Z = MatrixXd::Identity(3, 3);
    VectorXd theta(3);
    theta << 0.3, -0.7, 0.1;
    CHECK((nll_gradient(theta, ArmDataset{}, Z, 1.0) - theta).norm() < 1e-15);
}

TEST_CASE("nll_gradient matches central finite differences") {
    const Instance inst = generate_instance(5, 1, 4, 3, 17);
    Environment env(inst);
    const ArmDataset data = testutil::simulate_dataset(env, 0, 20, 99);
    CounterRng rng(3);
    const VectorXd theta = 0.7 * testutil::random_unit_vector(rng, env.rank());
    const VectorXd g = nll_gradient(theta, data, env.Z(), 1.0);
    const VectorXd fd = testutil::finite_difference_gradient(
        [&](const VectorXd& x) { return nll(x, data, env.Z(), 1.0); }, theta, 1e-5);
    CHECK((g - fd).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("fit_mle: empty data gives zero") {
    MatrixXd Z = MatrixXd::Identity(3, 3);
    MleConfig cfg;
    CHECK(fit_mle(ArmDataset{}, Z, cfg).norm() == 0.0);
}

TEST_CASE("fit_mle: scalar closed form via root finder") {
    // One observation, outside option: minimizer solves sigmoid(t) + t = 0.
    MatrixXd Z = MatrixXd::Identity(2, 2);
    auto f = [](double t) { return 1.0 / (1.0 + std::exp(-t)) + t; };
    double lo = -1.0, hi = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0 ? lo : hi) = mid;
    }
    const double root = 0.5 * (lo + hi);
    CHECK(root == doctest::Approx(-0.4011).epsilon(1e-3));
    MleConfig cfg;
    const VectorXd theta = fit_mle(one_obs({0}, kOutsideOption), Z, cfg);
    CHECK(theta[0] == doctest::Approx(root).epsilon(1e-7));
    CHECK(std::abs(theta[1]) < 1e-9);
    CHECK(nll_gradient(theta, one_obs({0}, kOutsideOption), Z, 1.0).norm() <= cfg.grad_tol);
}

TEST_CASE("fit_mle: consistency on simulated data") {
    const Instance inst = generate_instance(6, 1, 4, 3, 21);
    Environment env(inst);
    const ArmDataset data = testutil::simulate_dataset(env, 0, 10000, 4242);
    MleConfig cfg;
    const VectorXd theta = fit_mle(data, env.Z(), cfg);
    CHECK((theta - env.theta_star(0)).norm() <= 0.1);
}

TEST_CASE("fit_mle: constrained fit respects the cap and first-order optimality") {
    const Instance inst = generate_instance(6, 1, 4, 3, 22);
    Environment env(inst);
    const ArmDataset data = testutil::simulate_dataset(env, 0, 500, 77);
    MleConfig cfg;
    cfg.norm_cap = 1.0;
    cfg.max_iters = 20000;
    cfg.grad_tol = 1e-6;
    const VectorXd theta = fit_mle(data, env.Z(), cfg);
    CHECK(theta.norm() <= 1.0 + 1e-12);
    const VectorXd g = nll_gradient(theta, data, env.Z(), cfg.ridge_weight);
    VectorXd step = theta - g;
    if (step.norm() > 1.0) step *= 1.0 / step.norm();
    CHECK((theta - step).norm() <= 1e-6);
}

TEST_CASE("fit_mle is deterministic") {
    const Instance inst = generate_instance(5, 1, 4, 2, 23);
    Environment env(inst);
    const ArmDataset data = testutil::simulate_dataset(env, 0, 200, 5);
    MleConfig cfg;
    const VectorXd a = fit_mle(data, env.Z(), cfg);
    const VectorXd b = fit_mle(data, env.Z(), cfg);
    CHECK((a - b).norm() == 0.0);
}

TEST_CASE("design_matrix") {
    MatrixXd Z = MatrixXd::Identity(2, 2);
    CHECK((design_matrix(ArmDataset{}, Z) - MatrixXd::Identity(2, 2)).norm() == 0.0);
    const MatrixXd v = design_matrix(one_obs({0}, 0), Z);
    CHECK(v(0, 0) == doctest::Approx(2.0));
    CHECK(v(1, 1) == doctest::Approx(1.0));
    CHECK(v(0, 1) == doctest::Approx(0.0));

    // Additivity: V(a ++ b) = V(a) + V(b) - I.
    const Instance inst = generate_instance(4, 1, 3, 2, 29);
    Environment env(inst);
    const ArmDataset a = testutil::simulate_dataset(env, 0, 10, 1);
    const ArmDataset b = testutil::simulate_dataset(env, 0, 13, 2);
    ArmDataset both = a;
    for (const auto& obs : b.observations) both.observations.push_back(obs);
    const MatrixXd lhs = design_matrix(both, env.Z());
    const MatrixXd rhs = design_matrix(a, env.Z()) + design_matrix(b, env.Z()) -
                         MatrixXd::Identity(env.rank(), env.rank());
    CHECK((lhs - rhs).norm() < 1e-12);
}

TEST_CASE("local_gram closed forms and dominance") {
    MatrixXd Z = MatrixXd::Identity(2, 2);
    CHECK((local_gram(VectorXd::Zero(2), ArmDataset{}, Z, 1.0) - MatrixXd::Identity(2, 2))
              .norm() == 0.0);
    const MatrixXd h = local_gram(VectorXd::Zero(2), one_obs({0}, 0), Z, 1.0);
    CHECK(h(0, 0) == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(h(1, 1) == doctest::Approx(1.0));

    // H - lam I is dominated by the raw second-moment sum.
    const Instance inst = generate_instance(5, 1, 4, 3, 31);
    Environment env(inst);
    const ArmDataset data = testutil::simulate_dataset(env, 0, 30, 9);
    CounterRng rng(1);
    const VectorXd theta = 0.5 * testutil::random_unit_vector(rng, env.rank());
    const double lam = 0.7;
    const MatrixXd curv = local_gram(theta, data, env.Z(), lam) -
                          lam * MatrixXd::Identity(env.rank(), env.rank());
    const MatrixXd raw = design_matrix(data, env.Z()) -
                         MatrixXd::Identity(env.rank(), env.rank());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(raw - curv);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es2(curv);
    CHECK(es2.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("local_gram equals the finite-difference Hessian plus lam I") {
    const Instance inst = generate_instance(4, 1, 3, 2, 37);
    Environment env(inst);
    const ArmDataset data = testutil::simulate_dataset(env, 0, 8, 3);
    CounterRng rng(2);
    const VectorXd theta = 0.4 * testutil::random_unit_vector(rng, env.rank());
    const double lam = 0.9;
    const MatrixXd h = local_gram(theta, data, env.Z(), lam);
    const MatrixXd fd = testutil::finite_difference_hessian(
        [&](const VectorXd& x) { return nll(x, data, env.Z(), 0.0); }, theta);
    const MatrixXd want = fd + lam * MatrixXd::Identity(env.rank(), env.rank());
    CHECK((h - want).lpNorm<Eigen::Infinity>() <= 1e-4);
}

TEST_CASE("centered_feature probability-weighted mean identity") {
    const Instance inst = generate_instance(5, 1, 4, 4, 41);
    const ProjectedFeatures pf = project_features(inst.X);
    CounterRng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        Assortment s;
        for (int n = 0; n < inst.N; ++n)
            if (rng.next_double() < 0.6) s.members.push_back(n);
        if (s.members.empty()) continue;
        const VectorXd theta = 0.8 * testutil::random_unit_vector(rng, pf.rank);
        const VectorXd p = choice_probs(s, theta, pf.Z);
        VectorXd lhs = VectorXd::Zero(pf.rank);
        VectorXd pz = VectorXd::Zero(pf.rank);
        double psum = 0.0;
        for (std::size_t i = 0; i < s.members.size(); ++i) {
            lhs += p[static_cast<Eigen::Index>(i)] *
                   centered_feature(s.members[i], s, theta, pf.Z);
            pz += p[static_cast<Eigen::Index>(i)] * pf.Z.col(s.members[i]);
            psum += p[static_cast<Eigen::Index>(i)];
        }
        CHECK((lhs - (1.0 - psum) * pz).norm() < 1e-12);
        for (int n : s.members)
            CHECK(centered_feature(n, s, theta, pf.Z).norm() <= 2.0 + 1e-12);
    }
}

TEST_CASE("nll convexity witness") {
    const Instance inst = generate_instance(4, 1, 3, 2, 43);
    Environment env(inst);
    const ArmDataset data = testutil::simulate_dataset(env, 0, 15, 6);
    CounterRng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const VectorXd a = testutil::random_unit_vector(rng, env.rank());
        const VectorXd b = testutil::random_unit_vector(rng, env.rank());
        const double mid = nll(0.5 * (a + b), data, env.Z(), 1.0);
        const double avg =
            0.5 * (nll(a, data, env.Z(), 1.0) + nll(b, data, env.Z(), 1.0));
        CHECK(mid <= avg + 1e-12);
    }
}

TEST_CASE("omd_update") {
    const MatrixXd eye = MatrixXd::Identity(3, 3);
    const double inf = std::numeric_limits<double>::infinity();
    SUBCASE("zero gradient leaves theta unchanged") {
        VectorXd prev(3);
        prev << 0.2, -0.1, 0.4;
        CHECK((omd_update(prev, VectorXd::Zero(3), eye, 0.5, inf) - prev).norm() == 0.0);
    }
    SUBCASE("euclidean step") {
        VectorXd g = VectorXd::Zero(3);
        g[0] = 1.0;
        const VectorXd out = omd_update(VectorXd::Zero(3), g, eye, 1.0, inf);
        CHECK((out + g).norm() < 1e-14);
    }
    SUBCASE("projection scales back to the cap") {
        VectorXd g = VectorXd::Zero(3);
        g[0] = 2.0;  // unconstrained step has norm 2
        const VectorXd out = omd_update(VectorXd::Zero(3), g, eye, 1.0, 1.0);
        CHECK(out.norm() == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-7));
    }
    SUBCASE("singular gram rejected") {
        MatrixXd bad = MatrixXd::Zero(3, 3);
        bad(0, 0) = 1.0;
        bad(1, 1) = -1.0;
        CHECK_THROWS_AS(omd_update(VectorXd::Zero(3), VectorXd::Ones(3), bad, 1.0, 1.0),
                        SmbError);
    }
    SUBCASE("general-metric projection satisfies the KKT system") {
        CounterRng rng(9);
        MatrixXd a(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) a(i, j) = rng.next_double(-1, 1);
        const MatrixXd gram = a * a.transpose() + 0.5 * eye;
        VectorXd prev = 0.3 * VectorXd::Ones(3);
        VectorXd g(3);
        g << 2.0, -1.0, 0.5;
        const double eta = 0.7;
        const VectorXd out = omd_update(prev, g, gram, eta, 1.0);
        CHECK(out.norm() <= 1.0 + 1e-7);
        // Objective of the projected point cannot beat interior candidates by
        // more than the projection tolerance.
        auto objective = [&](const VectorXd& th) {
            return g.dot(th) + (th - prev).dot(gram * (th - prev)) / (2 * eta);
        };
        for (int trial = 0; trial < 200; ++trial) {
            VectorXd cand(3);
            for (int i = 0; i < 3; ++i) cand[i] = rng.next_double(-1, 1);
            if (cand.norm() > 1.0) cand /= cand.norm();
            CHECK(objective(out) <= objective(cand) + 1e-6);
        }
    }
}
