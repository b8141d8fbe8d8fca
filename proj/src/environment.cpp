#include "smb/environment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace smb {

namespace {

// Stream ids for the generator forks; fixed so instances and feedback replay
// across refactors.
constexpr std::uint64_t kFeatureStream = 1;
constexpr std::uint64_t kThetaStream = 2;
constexpr std::uint64_t kRewardStream = 3;
constexpr std::uint64_t kArmStreamBase = 1000;

VectorXd unit_cube_direction(CounterRng& rng, int d) {
    VectorXd v(d);
    double norm = 0.0;
    do {
        for (int i = 0; i < d; ++i) v[i] = rng.next_double(-1.0, 1.0);
        norm = v.norm();
    } while (norm == 0.0);
    return v / norm;
}

}  // namespace

Instance generate_instance(int N, int K, int d, int L, std::uint64_t seed) {
    if (N < 1 || K < 1 || d < 1 || L < 1 || L > N)
        throw SmbError("generate_instance: invalid sizes");
    Instance inst;
    inst.N = N;
    inst.K = K;
    inst.L = L;
    inst.d = d;
    inst.seed = seed;
    CounterRng root(seed);
    CounterRng feature_rng = root.fork(kFeatureStream);
    CounterRng theta_rng = root.fork(kThetaStream);
    CounterRng reward_rng = root.fork(kRewardStream);
    inst.X.resize(d, N);
    for (int n = 0; n < N; ++n) inst.X.col(n) = unit_cube_direction(feature_rng, d);
    inst.Theta.resize(d, K);
    for (int k = 0; k < K; ++k) inst.Theta.col(k) = unit_cube_direction(theta_rng, d);
    inst.Rewards.resize(N, K);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) inst.Rewards(n, k) = reward_rng.next_double();
    return inst;
}

int sample_choice(const Assortment& s, const VectorXd& theta, const MatrixXd& Z,
                  CounterRng& rng) {
    const VectorXd p = choice_probs(s, theta, Z);
    const double u = rng.next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i < s.members.size(); ++i) {
        acc += p[static_cast<Eigen::Index>(i)];
        if (u < acc) return s.members[i];
    }
    return kOutsideOption;
}

OracleSolution oracle_matching(const Instance& instance, std::uint64_t assignment_cap) {
    double raw = 1.0;
    for (int n = 0; n < instance.N; ++n) raw *= static_cast<double>(instance.K + 1);
    if (raw > static_cast<double>(assignment_cap))
        throw SmbError("oracle_matching: instance too large for exact enumeration");
    const ProjectedFeatures pf = project_features(instance.X);
    std::vector<VectorXd> theta_star;
    for (int k = 0; k < instance.K; ++k)
        theta_star.push_back(pf.basis.transpose() * instance.Theta.col(k));
    EllipsoidWidthIndex truth(pf.Z, instance.Rewards, theta_star,
                              std::vector<MatrixXd>(static_cast<std::size_t>(instance.K),
                                                    MatrixXd::Identity(pf.rank, pf.rank)),
                              0.0, 0.0);
    OptResult r = exact_argmax(truth, full_active_sets(instance.N, instance.K, instance.L));
    return {std::move(r.matching), r.value};
}

double empirical_kappa(const Instance& instance) {
    const ProjectedFeatures pf = project_features(instance.X);
    std::vector<int> all_agents(static_cast<std::size_t>(instance.N));
    for (int n = 0; n < instance.N; ++n) all_agents[static_cast<std::size_t>(n)] = n;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < instance.K; ++k) {
        const VectorXd theta = pf.basis.transpose() * instance.Theta.col(k);
        for (const auto& members :
             enumerate_assortments(all_agents, instance.L, 1000000)) {
            Assortment s;
            s.members = members;
            const VectorXd p = choice_probs(s, theta, pf.Z);
            const double outside = p[p.size() - 1];
            for (Eigen::Index i = 0; i + 1 < p.size(); ++i)
                best = std::min(best, p[i] * outside);
        }
    }
    return best;
}

std::string instance_to_json(const Instance& instance) {
    nlohmann::json j;
    j["N"] = instance.N;
    j["K"] = instance.K;
    j["L"] = instance.L;
    j["d"] = instance.d;
    j["seed"] = instance.seed;
    j["rank"] = project_features(instance.X).rank;
    auto matrix_rows = [](const MatrixXd& m) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> row;
            for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    j["X"] = matrix_rows(instance.X);
    j["Theta"] = matrix_rows(instance.Theta);
    j["Rewards"] = matrix_rows(instance.Rewards);
    return j.dump(2);
}

Instance instance_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Instance inst;
    inst.N = j.at("N").get<int>();
    inst.K = j.at("K").get<int>();
    inst.L = j.at("L").get<int>();
    inst.d = j.at("d").get<int>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    auto read_matrix = [&](const char* key, Eigen::Index rows, Eigen::Index cols) {
        MatrixXd m(rows, cols);
        const auto& data = j.at(key);
        if (static_cast<Eigen::Index>(data.size()) != rows)
            throw SmbError(std::string("instance json: bad shape for ") + key);
        for (Eigen::Index i = 0; i < rows; ++i) {
            const auto& row = data[static_cast<std::size_t>(i)];
            if (static_cast<Eigen::Index>(row.size()) != cols)
                throw SmbError(std::string("instance json: bad shape for ") + key);
            for (Eigen::Index c = 0; c < cols; ++c)
                m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
        return m;
    };
    inst.X = read_matrix("X", inst.d, inst.N);
    inst.Theta = read_matrix("Theta", inst.d, inst.K);
    inst.Rewards = read_matrix("Rewards", inst.N, inst.K);
    return inst;
}

void save_instance(const Instance& instance, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SmbError("cannot write instance file: " + path);
    out << instance_to_json(instance) << "\n";
}

Instance load_instance(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SmbError("cannot read instance file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return instance_from_json(buf.str());
}

Environment::Environment(Instance instance, double svd_tol)
    : instance_(std::move(instance)), projected_(project_features(instance_.X, svd_tol)) {
    for (int k = 0; k < instance_.K; ++k)
        theta_star_.push_back(projected_.basis.transpose() * instance_.Theta.col(k));
    oracle_ = oracle_matching(instance_);
    CounterRng root(instance_.seed);
    for (int k = 0; k < instance_.K; ++k)
        arm_rng_.push_back(root.fork(kArmStreamBase + static_cast<std::uint64_t>(k)));
}

Feedback Environment::step(const Matching& m) {
    if (m.arm_count() != instance_.K || !is_feasible(m, instance_.N, instance_.L))
        throw SmbError("environment: offered matching is not feasible");
    Feedback fb;
    fb.outcome.assign(static_cast<std::size_t>(instance_.K), kOutsideOption);
    fb.indicator.assign(static_cast<std::size_t>(instance_.N), 0);
    for (int k = 0; k < instance_.K; ++k) {
        const int chosen = sample_choice(m.assortments[static_cast<std::size_t>(k)],
                                         theta_star_[static_cast<std::size_t>(k)],
                                         projected_.Z, arm_rng_[static_cast<std::size_t>(k)]);
        fb.outcome[static_cast<std::size_t>(k)] = chosen;
        if (chosen != kOutsideOption) fb.indicator[static_cast<std::size_t>(chosen)] = 1;
    }
    return fb;
}

}  // namespace smb
