#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smb/policies.hpp"

namespace smb {

struct AlgoSpec {
    std::string label;      // series name in outputs (defaults to the algorithm name)
    AlgoConfig config;
    std::string kappa_mode; // "lower_bound" (default), "empirical", or "" (explicit value)
};

struct ExperimentConfig {
    int N = 3, K = 2, d = 5, L = 2;
    int T = 1000;
    std::vector<std::uint64_t> seeds{1};
    std::vector<AlgoSpec> algorithms;
    std::string out_dir = "out";
    int decimate = 0;        // 0 -> every round for T <= 1e4, every 10th beyond
    int workers = 1;
    bool timing = false;     // forces workers = 1
    bool quiet = false;
};

struct SummaryRow {
    std::string algorithm;
    std::uint64_t seed = 0;
    int round = 0;
    double cum_regret = 0.0;
    double cum_seconds = 0.0;
    std::uint64_t opt_calls = 0;
};

struct CurvePoint {
    int round = 0;
    double mean = 0.0;
    double stderr_ = 0.0;
};

struct CellFailure {
    std::string algorithm;
    std::uint64_t seed = 0;
    std::string message;
};

struct ExperimentResult {
    std::vector<SummaryRow> rows;                       // sorted (algorithm, seed, round)
    std::vector<std::string> series;                    // algorithm labels in config order
    std::vector<std::vector<CurvePoint>> regret_curves; // per series, across seeds
    std::vector<std::vector<CurvePoint>> runtime_curves;
    std::vector<CellFailure> failures;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Runs every (algorithm, seed) cell: a fresh instance per seed, a full run,
// one row per recorded round. A failing cell is recorded and the others
// proceed. Deterministic given the config (timing columns aside).
ExperimentResult run_experiment(const ExperimentConfig& config);

std::vector<SummaryRow> rows_from_trace(const std::string& algorithm, std::uint64_t seed,
                                        const RunTrace& trace, int decimate);

void emit_csv(const std::vector<SummaryRow>& rows, const std::string& path);
std::string csv_string(const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> parse_csv(const std::string& text);

// Self-contained SVG: mean cumulative regret (with stderr band) on the left,
// cumulative runtime on the right, one series per algorithm.
void emit_plot(const ExperimentResult& result, const std::string& path);

int cli_main(int argc, const char* const* argv);

}  // namespace smb
