#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "smb/environment.hpp"
#include "test_util.hpp"

using namespace smb;

TEST_CASE("generate_instance: normalization, determinism, shapes") {
    const Instance a = generate_instance(3, 2, 5, 2, 99);
    CHECK(a.X.rows() == 5);
    CHECK(a.X.cols() == 3);
    CHECK(a.Rewards.rows() == 3);
    CHECK(a.Rewards.cols() == 2);
    for (int n = 0; n < 3; ++n) CHECK(std::abs(a.X.col(n).norm() - 1.0) <= 1e-12);
    for (int k = 0; k < 2; ++k) CHECK(std::abs(a.Theta.col(k).norm() - 1.0) <= 1e-12);
    for (int n = 0; n < 3; ++n)
        for (int k = 0; k < 2; ++k) {
            CHECK(a.Rewards(n, k) >= 0.0);
            CHECK(a.Rewards(n, k) <= 1.0);
        }
    const Instance b = generate_instance(3, 2, 5, 2, 99);
    CHECK((a.X - b.X).norm() == 0.0);
    CHECK((a.Theta - b.Theta).norm() == 0.0);
    CHECK((a.Rewards - b.Rewards).norm() == 0.0);
    const Instance c = generate_instance(3, 2, 5, 2, 100);
    CHECK((a.X - c.X).norm() > 0.0);
}

TEST_CASE("sample_choice: empty assortment always takes the outside option") {
    MatrixXd Z = MatrixXd::Identity(2, 2);
    CounterRng rng(1);
    Assortment s;
    for (int i = 0; i < 50; ++i)
        CHECK(sample_choice(s, VectorXd::Zero(2), Z, rng) == kOutsideOption);
}

TEST_CASE("sample_choice: frequencies within three binomial standard errors") {
    MatrixXd Z = MatrixXd::Identity(2, 2);
    Assortment s;
    s.members = {0, 1};
    CounterRng rng(7);
    const int draws = 100000;
    int count0 = 0, count1 = 0, outside = 0;
    for (int i = 0; i < draws; ++i) {
        const int c = sample_choice(s, VectorXd::Zero(2), Z, rng);
        if (c == 0) ++count0;
        else if (c == 1) ++count1;
        else ++outside;
    }
    const double p = 1.0 / 3.0;
    const double sigma = std::sqrt(p * (1 - p) / draws);
    for (int count : {count0, count1, outside})
        CHECK(std::abs(count / static_cast<double>(draws) - p) <= 3 * sigma);
}

TEST_CASE("sample_choice: deterministic given the rng state") {
    MatrixXd Z = MatrixXd::Identity(2, 2);
    Assortment s;
    s.members = {0, 1};
    CounterRng a(42), b(42);
    for (int i = 0; i < 100; ++i)
        CHECK(sample_choice(s, VectorXd::Zero(2), Z, a) ==
              sample_choice(s, VectorXd::Zero(2), Z, b));
}

TEST_CASE("step: empty matching, single arm reduction, indicator consistency") {
    Instance inst = generate_instance(4, 2, 4, 2, 11);
    Environment env(std::move(inst));
    SUBCASE("empty matching yields all outside options") {
        const Feedback fb = env.step(empty_matching(2));
        for (int k = 0; k < 2; ++k) CHECK(fb.outcome[static_cast<std::size_t>(k)] == kOutsideOption);
        for (int y : fb.indicator) CHECK(y == 0);
    }
    SUBCASE("indicators match outcomes on random offers") {
        CounterRng rng(3);
        for (int trial = 0; trial < 200; ++trial) {
            Matching m = empty_matching(2);
            std::vector<int> pool{0, 1, 2, 3};
            for (int n : pool) {
                const auto pick = rng.next_below(3);
                if (pick < 2 &&
                    static_cast<int>(m.assortments[pick].members.size()) < 2)
                    m.assortments[pick].members.push_back(n);
            }
            const Feedback fb = env.step(m);
            int accepted = 0;
            for (int y : fb.indicator) accepted += y;
            int non_outside = 0;
            for (int k = 0; k < 2; ++k) {
                const int c = fb.outcome[static_cast<std::size_t>(k)];
                if (c != kOutsideOption) {
                    ++non_outside;
                    CHECK(fb.indicator[static_cast<std::size_t>(c)] == 1);
                    bool offered = false;
                    for (int n : m.members(k)) offered |= (n == c);
                    CHECK(offered);
                }
            }
            CHECK(accepted == non_outside);
        }
    }
    SUBCASE("infeasible matching rejected") {
        Matching m = empty_matching(2);
        m.assortments[0].members = {0, 1, 2};
        CHECK_THROWS_AS(env.step(m), SmbError);
    }
}

TEST_CASE("oracle_matching: closed forms and second-oracle agreement") {
    SUBCASE("single agent, positive reward: offer beats empty") {
        const Instance inst = generate_instance(1, 1, 3, 1, 13);
        const OracleSolution sol = oracle_matching(inst);
        CHECK(sol.matching.members(0) == std::vector<int>{0});
        CHECK(sol.value > 0.0);
    }
    SUBCASE("two agents, closed form 0.45") {
        Instance inst = generate_instance(2, 1, 3, 1, 17);
        // Zero utilities, rewards fixed by hand.
        inst.Theta.setZero();
        inst.Rewards(0, 0) = 0.9;
        inst.Rewards(1, 0) = 0.1;
        const OracleSolution sol = oracle_matching(inst);
        CHECK(sol.matching.members(0) == std::vector<int>{0});
        CHECK(sol.value == doctest::Approx(0.45).epsilon(1e-12));
    }
    SUBCASE("random instance matches the recursive enumerator") {
        for (std::uint64_t seed : {19, 23, 29}) {
            const Instance inst = generate_instance(4, 2, 4, 2, seed);
            Environment env(inst);
            const OracleSolution sol = oracle_matching(inst);
            const auto truth = testutil::true_revenue_index(env);
            const OptResult slow =
                testutil::recursive_argmax(truth, full_active_sets(4, 2, 2));
            CHECK(sol.value == doctest::Approx(slow.value).epsilon(1e-12));
            CHECK(matchings_equal(sol.matching, slow.matching));
        }
    }
}

TEST_CASE("oracle dominance over random feasible matchings") {
    const Instance inst = generate_instance(5, 2, 4, 2, 31);
    Environment env(inst);
    CounterRng rng(5);
    for (int trial = 0; trial < 10000; ++trial) {
        Matching m = empty_matching(2);
        for (int n = 0; n < 5; ++n) {
            const auto pick = rng.next_below(3);
            if (pick < 2 && static_cast<int>(m.assortments[pick].members.size()) < 2)
                m.assortments[pick].members.push_back(n);
        }
        CHECK(env.oracle().value >= env.true_total_revenue(m) - 1e-12);
    }
}

TEST_CASE("instance JSON round trip") {
    const Instance a = generate_instance(3, 2, 5, 2, 37);
    const std::string text = instance_to_json(a);
    const Instance b = instance_from_json(text);
    CHECK(b.N == a.N);
    CHECK(b.K == a.K);
    CHECK(b.L == a.L);
    CHECK(b.d == a.d);
    CHECK(b.seed == a.seed);
    CHECK((a.X - b.X).norm() == 0.0);
    CHECK((a.Theta - b.Theta).norm() == 0.0);
    CHECK((a.Rewards - b.Rewards).norm() == 0.0);
    // The realized rank is recorded alongside d.
    CHECK(text.find("\"rank\"") != std::string::npos);
}

TEST_CASE("empirical_kappa is a tighter level than the closed-form bound") {
    const Instance inst = generate_instance(4, 2, 4, 2, 41);
    const double k_emp = empirical_kappa(inst);
    CHECK(k_emp > 0.0);
    CHECK(k_emp >= kappa_lower_bound(inst.L));
    CHECK(k_emp <= 0.25);  // p (1 - p) is at most 1/4
}

TEST_CASE("environment feedback streams are split per arm") {
    // Replaying the same matchings gives identical feedback; the arm order of
    // reads does not perturb the per-arm streams.
    Instance inst = generate_instance(4, 2, 4, 2, 43);
    Environment env1(inst), env2(inst);
    Matching m = empty_matching(2);
    m.assortments[0].members = {0, 1};
    m.assortments[1].members = {2, 3};
    for (int t = 0; t < 50; ++t) {
        const Feedback a = env1.step(m);
        const Feedback b = env2.step(m);
        CHECK(a.outcome == b.outcome);
        CHECK(a.indicator == b.indicator);
    }
}
