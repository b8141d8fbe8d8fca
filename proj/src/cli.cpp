#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "smb/harness.hpp"

namespace smb {

namespace {

void usage(std::ostream& out) {
    out << "usage: smb <command> [options]\n"
           "\n"
           "commands:\n"
           "  run --config <path> [--out <dir>] [--seeds a..b] [--decimate k] [--quiet]\n"
           "      run the configured experiment; writes results.csv and curves.svg\n"
           "  oracle <instance.json> [--out <path>]\n"
           "      exact optimal matching of a serialized instance (JSON to stdout)\n"
           "  design <problem.json> [--out <path>]\n"
           "      G-optimal weights and certificate for a point set\n"
           "  selftest\n"
           "      run the built-in invariant suite\n";
}

struct Args {
    std::vector<std::string> positional;
    std::map<std::string, std::string> flags;
    bool quiet = false;
};

// Flags that take a value; everything else with a "--" prefix is boolean.
bool flag_takes_value(const std::string& name) {
    return name == "--config" || name == "--out" || name == "--seeds" ||
           name == "--decimate";
}

Args parse_args(int argc, const char* const* argv, int start) {
    Args args;
    for (int i = start; i < argc; ++i) {
        const std::string a = argv[i];
        if (a.rfind("--", 0) == 0) {
            if (a == "--quiet") {
                args.quiet = true;
            } else if (flag_takes_value(a)) {
                if (i + 1 >= argc) throw SmbError("flag " + a + " needs a value");
                args.flags[a] = argv[++i];
            } else {
                throw SmbError("unknown flag: " + a);
            }
        } else {
            args.positional.push_back(a);
        }
    }
    return args;
}

std::vector<std::uint64_t> parse_seeds_flag(const std::string& text) {
    const auto dots = text.find("..");
    if (dots == std::string::npos) return {std::stoull(text)};
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = std::stoull(text.substr(0, dots));
         s <= std::stoull(text.substr(dots + 2)); ++s)
        seeds.push_back(s);
    return seeds;
}

int cmd_run(const Args& args) {
    const auto it = args.flags.find("--config");
    if (it == args.flags.end()) {
        std::cerr << "run: --config <path> is required\n";
        return 1;
    }
    ExperimentConfig cfg;
    try {
        cfg = load_config(it->second);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    if (args.flags.count("--out")) cfg.out_dir = args.flags.at("--out");
    if (args.flags.count("--seeds")) cfg.seeds = parse_seeds_flag(args.flags.at("--seeds"));
    if (args.flags.count("--decimate")) cfg.decimate = std::stoi(args.flags.at("--decimate"));
    if (args.quiet) cfg.quiet = true;

    std::filesystem::create_directories(cfg.out_dir);
    const ExperimentResult result = run_experiment(cfg);
    emit_csv(result.rows, cfg.out_dir + "/results.csv");
    emit_plot(result, cfg.out_dir + "/curves.svg");
    for (const auto& f : result.failures)
        std::cerr << "FAILED cell " << f.algorithm << "/" << f.seed << ": " << f.message
                  << "\n";
    if (!cfg.quiet) {
        for (std::size_t s = 0; s < result.series.size(); ++s) {
            const auto& curve = result.regret_curves[s];
            if (!curve.empty())
                std::cout << result.series[s] << ": final mean regret "
                          << curve.back().mean << " (stderr " << curve.back().stderr_
                          << ")\n";
        }
        std::cout << "wrote " << cfg.out_dir << "/results.csv and curves.svg\n";
    }
    return result.failures.empty() ? 0 : 2;
}

int cmd_oracle(const Args& args) {
    if (args.positional.empty()) {
        std::cerr << "oracle: instance file required\n";
        return 1;
    }
    Instance inst;
    try {
        inst = load_instance(args.positional[0]);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    const OracleSolution sol = oracle_matching(inst);
    nlohmann::json j;
    j["value"] = sol.value;
    std::vector<std::vector<int>> lists;
    for (const auto& s : sol.matching.assortments) lists.push_back(s.members);
    j["matching"] = lists;
    const std::string text = j.dump(2);
    if (args.flags.count("--out")) {
        std::ofstream out(args.flags.at("--out"));
        out << text << "\n";
    } else {
        std::cout << text << "\n";
    }
    return 0;
}

int cmd_design(const Args& args) {
    if (args.positional.empty()) {
        std::cerr << "design: problem file required\n";
        return 1;
    }
    nlohmann::json j;
    try {
        std::ifstream in(args.positional[0]);
        if (!in) throw SmbError("cannot read problem file: " + args.positional[0]);
        in >> j;
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    DesignProblem p;
    p.dimension = j.at("dim").get<int>();
    p.regularizer = j.value("regularizer", 1e-6);
    int idx = 0;
    for (const auto& row : j.at("vectors")) {
        DesignUnit u;
        u.key.agent = idx++;
        VectorXd v(p.dimension);
        for (int i = 0; i < p.dimension; ++i) v[i] = row.at(static_cast<std::size_t>(i)).get<double>();
        u.weights = {1.0};
        u.vectors = {v};
        p.units.push_back(std::move(u));
    }
    const DesignWeights w = solve_g_optimal(p);
    nlohmann::json out;
    out["dimension"] = p.dimension;
    out["max_leverage"] = w.max_leverage;
    out["certificate_bound"] = p.dimension * 1.05;
    nlohmann::json support = nlohmann::json::array();
    for (std::size_t i = 0; i < w.support.size(); ++i)
        support.push_back({{"unit", w.support[i].agent}, {"weight", w.weights[i]}});
    out["support"] = support;
    const std::string text = out.dump(2);
    if (args.flags.count("--out")) {
        std::ofstream o(args.flags.at("--out"));
        o << text << "\n";
    } else {
        std::cout << text << "\n";
    }
    return 0;
}

int cmd_selftest() {
    int failures = 0;
    auto check = [&](bool ok, const std::string& what) {
        std::cout << (ok ? "ok   " : "FAIL ") << what << "\n";
        if (!ok) ++failures;
    };

    CounterRng rng(20240901);

    // Probability normalization and positivity on random assortments.
    {
        bool ok = true;
        for (int trial = 0; trial < 1000 && ok; ++trial) {
            const int r = 2 + static_cast<int>(rng.next_below(4));
            const int n = 1 + static_cast<int>(rng.next_below(6));
            MatrixXd Z(r, n);
            for (int c = 0; c < n; ++c)
                for (int i = 0; i < r; ++i) Z(i, c) = rng.next_double(-1, 1);
            for (int c = 0; c < n; ++c) Z.col(c) /= std::max(Z.col(c).norm(), 1e-9);
            VectorXd theta(r);
            for (int i = 0; i < r; ++i) theta[i] = rng.next_double(-1, 1);
            Assortment s;
            for (int c = 0; c < n; ++c) if (rng.next_double() < 0.6) s.members.push_back(c);
            const VectorXd p = choice_probs(s, theta, Z);
            double sum = 0.0;
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                sum += p[i];
                ok &= p[i] > 0.0 && p[i] < 1.0 + 1e-12;
            }
            ok &= std::abs(sum - 1.0) < 1e-12;
        }
        check(ok, "choice probabilities normalize");
    }

    // Projection fidelity on a random instance.
    {
        const Instance inst = generate_instance(4, 2, 6, 2, 7);
        const ProjectedFeatures pf = project_features(inst.X);
        bool ok = (pf.basis.transpose() * pf.basis -
                   MatrixXd::Identity(pf.rank, pf.rank))
                      .norm() < 1e-10;
        for (int trial = 0; trial < 100 && ok; ++trial) {
            VectorXd theta(inst.d);
            for (int i = 0; i < inst.d; ++i) theta[i] = rng.next_double(-1, 1);
            theta /= std::max(theta.norm(), 1e-9);
            const VectorXd proj = pf.basis.transpose() * theta;
            for (int n = 0; n < inst.N; ++n)
                ok &= std::abs(inst.X.col(n).dot(theta) - pf.Z.col(n).dot(proj)) < 1e-10;
        }
        check(ok, "feature projection preserves utilities");
    }

    // Gradient matches finite differences.
    {
        const Instance inst = generate_instance(5, 1, 4, 3, 11);
        const ProjectedFeatures pf = project_features(inst.X);
        Environment env(inst);
        ArmDataset data;
        CounterRng choice_rng(3);
        for (int t = 1; t <= 20; ++t) {
            Assortment s;
            for (int n = 0; n < inst.N && static_cast<int>(s.members.size()) < inst.L; ++n)
                if (choice_rng.next_double() < 0.5) s.members.push_back(n);
            data.add(t, s, sample_choice(s, env.theta_star(0), pf.Z, choice_rng));
        }
        VectorXd theta(pf.rank);
        for (int i = 0; i < pf.rank; ++i) theta[i] = rng.next_double(-0.5, 0.5);
        const VectorXd g = nll_gradient(theta, data, pf.Z, 1.0);
        bool ok = true;
        const double h = 1e-5;
        for (int i = 0; i < pf.rank; ++i) {
            VectorXd e = VectorXd::Zero(pf.rank);
            e[i] = h;
            const double fd =
                (nll(theta + e, data, pf.Z, 1.0) - nll(theta - e, data, pf.Z, 1.0)) /
                (2 * h);
            ok &= std::abs(fd - g[i]) < 1e-6;
        }
        check(ok, "log-loss gradient matches finite differences");
    }

    // Design certificate on a random problem.
    {
        DesignProblem p;
        p.dimension = 4;
        p.regularizer = 1e-6;
        for (int u = 0; u < 20; ++u) {
            DesignUnit unit;
            unit.key.agent = u;
            VectorXd v(4);
            for (int i = 0; i < 4; ++i) v[i] = rng.next_double(-1, 1);
            unit.weights = {1.0};
            unit.vectors = {v / std::max(v.norm(), 1e-9)};
            p.units.push_back(std::move(unit));
        }
        const DesignWeights w = solve_g_optimal(p);
        check(w.max_leverage <= 4 * 1.05 + 1e-9, "design certificate holds");
    }

    // Greedy never beats the exact optimizer; offered matchings feasible.
    {
        const Instance inst = generate_instance(4, 2, 4, 2, 23);
        Environment env(inst);
        std::vector<VectorXd> theta;
        std::vector<MatrixXd> vinv;
        for (int k = 0; k < inst.K; ++k) {
            theta.push_back(env.theta_star(k));
            vinv.push_back(MatrixXd::Identity(env.rank(), env.rank()));
        }
        EllipsoidWidthIndex truth(env.Z(), inst.Rewards, theta, vinv, 0.0, 0.0);
        const ActiveSets full = full_active_sets(inst.N, inst.K, inst.L);
        const OptResult exact = exact_argmax(truth, full);
        const OptResult greedy = greedy_oracle(truth, full);
        check(greedy.value <= exact.value + 1e-12 && is_feasible(exact.matching, inst.N, inst.L),
              "greedy oracle below exact optimum");
    }

    // Short end-to-end runs stay feasible with nonnegative regret.
    {
        bool ok = true;
        for (const Algo algo :
             {Algo::Bsmb, Algo::BsmbPlus, Algo::Baseline, Algo::BsmbAlpha}) {
            Instance inst = generate_instance(3, 2, 4, 2, 31);
            Environment env(std::move(inst));
            AlgoConfig cfg;
            cfg.algorithm = algo;
            cfg.T = 60;
            cfg.M = 2;
            const RunTrace trace = run_algorithm(env, cfg);
            ok &= static_cast<int>(trace.rounds.size()) == cfg.T;
            for (const auto& rec : trace.rounds) {
                ok &= is_feasible(rec.offered, env.instance().N, env.instance().L);
                ok &= rec.inst_regret >= -1e-9;
            }
            ok &= trace.epoch_count() <= cfg.M || algo == Algo::Baseline;
        }
        check(ok, "end-to-end runs feasible with nonnegative regret");
    }

    std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return failures == 0 ? 0 : 2;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    try {
        if (argc < 2) {
            usage(std::cerr);
            return 1;
        }
        const std::string cmd = argv[1];
        if (cmd == "--help" || cmd == "help" || cmd == "-h") {
            usage(std::cout);
            return 0;
        }
        Args args;
        try {
            args = parse_args(argc, argv, 2);
        } catch (const SmbError& e) {
            std::cerr << e.what() << "\n";
            usage(std::cerr);
            return 1;
        }
        if (cmd == "run") return cmd_run(args);
        if (cmd == "oracle") return cmd_oracle(args);
        if (cmd == "design") return cmd_design(args);
        if (cmd == "selftest") return cmd_selftest();
        std::cerr << "unknown command: " << cmd << "\n";
        usage(std::cerr);
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace smb
