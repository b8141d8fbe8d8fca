#include "smb/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace smb {

namespace {

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
    const auto dots = text.find("..");
    std::vector<std::uint64_t> seeds;
    if (dots == std::string::npos) {
        seeds.push_back(std::stoull(text));
        return seeds;
    }
    const std::uint64_t a = std::stoull(text.substr(0, dots));
    const std::uint64_t b = std::stoull(text.substr(dots + 2));
    if (b < a) throw SmbError("bad seed range: " + text);
    for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
    return seeds;
}

AlgoSpec algo_spec_from_json(const nlohmann::json& j) {
    AlgoSpec spec;
    AlgoConfig& c = spec.config;
    c.algorithm = algo_from_name(j.at("name").get<std::string>());
    spec.label = j.value("label", std::string(algo_name(c.algorithm)));
    spec.kappa_mode = "lower_bound";
    if (j.contains("M")) c.M = j.at("M").get<int>();
    if (j.contains("C1")) c.C1 = j.at("C1").get<double>();
    if (j.contains("C2")) c.C2 = j.at("C2").get<double>();
    if (j.contains("C3")) c.C3 = j.at("C3").get<double>();
    if (j.contains("C3_warm")) c.C3_warm = j.at("C3_warm").get<double>();
    if (j.contains("C4")) c.C4 = j.at("C4").get<double>();
    if (j.contains("C5")) c.C5 = j.at("C5").get<double>();
    if (j.contains("C6")) c.C6 = j.at("C6").get<double>();
    if (j.contains("zeta_scale")) c.zeta_scale = j.at("zeta_scale").get<double>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("warmup_cap_fraction"))
        c.warmup_cap_fraction = j.at("warmup_cap_fraction").get<double>();
    if (j.contains("design_tol")) c.design_tol = j.at("design_tol").get<double>();
    if (j.contains("assortment_cap"))
        c.assortment_cap = j.at("assortment_cap").get<std::uint64_t>();
    if (j.contains("kappa")) {
        const auto& k = j.at("kappa");
        if (k.is_string()) {
            spec.kappa_mode = k.get<std::string>();
            if (spec.kappa_mode != "lower_bound" && spec.kappa_mode != "empirical")
                throw SmbError("config: kappa must be a number, \"lower_bound\" or "
                               "\"empirical\"");
        } else {
            c.kappa = k.get<double>();
            spec.kappa_mode.clear();
        }
    }
    if (j.contains("mle")) {
        const auto& m = j.at("mle");
        if (m.contains("ridge_weight")) c.mle.ridge_weight = m.at("ridge_weight").get<double>();
        if (m.contains("max_iters")) c.mle.max_iters = m.at("max_iters").get<int>();
        if (m.contains("grad_tol")) c.mle.grad_tol = m.at("grad_tol").get<double>();
    }
    return spec;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ExperimentConfig cfg;
    const auto& inst = j.at("instance");
    cfg.N = inst.at("N").get<int>();
    cfg.K = inst.at("K").get<int>();
    cfg.d = inst.at("d").get<int>();
    cfg.L = inst.at("L").get<int>();
    cfg.T = j.at("horizon").get<int>();
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        if (s.is_string()) {
            cfg.seeds = parse_seed_range(s.get<std::string>());
        } else {
            cfg.seeds.clear();
            for (const auto& v : s) cfg.seeds.push_back(v.get<std::uint64_t>());
        }
    }
    if (cfg.seeds.empty()) throw SmbError("config: at least one seed required");
    cfg.out_dir = j.value("out", std::string("out"));
    cfg.decimate = j.value("decimate", 0);
    cfg.workers = j.value("workers", 1);
    cfg.timing = j.value("timing", false);
    cfg.quiet = j.value("quiet", false);
    if (!j.contains("algorithms") || j.at("algorithms").empty())
        throw SmbError("config: algorithms list must be nonempty");
    for (const auto& a : j.at("algorithms")) cfg.algorithms.push_back(algo_spec_from_json(a));
    for (auto& spec : cfg.algorithms) spec.config.T = cfg.T;
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SmbError("cannot read config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return config_from_json(buf.str());
    } catch (const nlohmann::json::exception& e) {
        throw SmbError("config file " + path + ": " + e.what());
    }
}

std::vector<SummaryRow> rows_from_trace(const std::string& algorithm, std::uint64_t seed,
                                        const RunTrace& trace, int decimate) {
    std::vector<SummaryRow> rows;
    double cum_regret = 0.0, cum_seconds = 0.0;
    const int last = trace.rounds.empty() ? 0 : trace.rounds.back().round;
    for (const auto& rec : trace.rounds) {
        cum_regret += rec.inst_regret;
        cum_seconds += rec.wall_seconds;
        if (rec.round % decimate == 0 || rec.round == last)
            rows.push_back({algorithm, seed, rec.round, cum_regret, cum_seconds,
                            rec.opt_calls});
    }
    return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    ExperimentResult result;
    const int decimate =
        config.decimate > 0 ? config.decimate : (config.T <= 10000 ? 1 : 10);
    const int workers = config.timing ? 1 : std::max(config.workers, 1);

    struct Cell {
        std::size_t algo_idx;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (std::size_t a = 0; a < config.algorithms.size(); ++a) {
        result.series.push_back(config.algorithms[a].label);
        for (std::uint64_t seed : config.seeds) cells.push_back({a, seed});
    }

    std::vector<std::vector<SummaryRow>> cell_rows(cells.size());
    std::vector<CellFailure> failures;
    std::mutex mu;
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            const AlgoSpec& spec = config.algorithms[cell.algo_idx];
            try {
                Instance inst =
                    generate_instance(config.N, config.K, config.d, config.L, cell.seed);
                AlgoConfig algo = spec.config;
                algo.T = config.T;
                if (spec.kappa_mode == "empirical") algo.kappa = empirical_kappa(inst);
                Environment env(std::move(inst));
                const RunTrace trace = run_algorithm(env, algo);
                cell_rows[i] = rows_from_trace(spec.label, cell.seed, trace, decimate);
                if (!config.quiet) {
                    std::lock_guard<std::mutex> lock(mu);
                    std::cerr << spec.label << " seed " << cell.seed << ": regret "
                              << trace.cumulative_regret() << ", " << trace.total_seconds
                              << " s\n";
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                failures.push_back({spec.label, cell.seed, e.what()});
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    for (auto& rows : cell_rows)
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    result.failures = std::move(failures);

    // Mean and standard error across seeds, per series and recorded round.
    for (const auto& label : result.series) {
        std::map<int, std::vector<double>> regret, seconds;
        for (const auto& row : result.rows) {
            if (row.algorithm != label) continue;
            regret[row.round].push_back(row.cum_regret);
            seconds[row.round].push_back(row.cum_seconds);
        }
        auto curve = [](const std::map<int, std::vector<double>>& by_round) {
            std::vector<CurvePoint> pts;
            for (const auto& [round, vals] : by_round) {
                CurvePoint p;
                p.round = round;
                for (double v : vals) p.mean += v;
                p.mean /= static_cast<double>(vals.size());
                if (vals.size() > 1) {
                    double ss = 0.0;
                    for (double v : vals) ss += (v - p.mean) * (v - p.mean);
                    p.stderr_ = std::sqrt(ss / (static_cast<double>(vals.size()) - 1.0) /
                                          static_cast<double>(vals.size()));
                }
                pts.push_back(p);
            }
            return pts;
        };
        result.regret_curves.push_back(curve(regret));
        result.runtime_curves.push_back(curve(seconds));
    }
    return result;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string csv_string(const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out << "algorithm,seed,round,cum_regret,cum_seconds,opt_calls\n";
    for (const auto& r : rows)
        out << r.algorithm << ',' << r.seed << ',' << r.round << ','
            << format_double(r.cum_regret) << ',' << format_double(r.cum_seconds) << ','
            << r.opt_calls << '\n';
    return out.str();
}

void emit_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SmbError("cannot write csv: " + path);
    out << csv_string(rows);
}

std::vector<SummaryRow> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) ||
        line != "algorithm,seed,round,cum_regret,cum_seconds,opt_calls")
        throw SmbError("csv: bad header");
    std::vector<SummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<std::string, 6> field;
        std::size_t start = 0;
        for (int f = 0; f < 6; ++f) {
            const auto comma = f < 5 ? line.find(',', start) : line.size();
            if (comma == std::string::npos) throw SmbError("csv: bad row: " + line);
            field[static_cast<std::size_t>(f)] = line.substr(start, comma - start);
            start = comma + 1;
        }
        SummaryRow r;
        r.algorithm = field[0];
        r.seed = std::stoull(field[1]);
        r.round = std::stoi(field[2]);
        r.cum_regret = std::stod(field[3]);
        r.cum_seconds = std::stod(field[4]);
        r.opt_calls = std::stoull(field[5]);
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf"};

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Panel {
    double x0, y0, w, h;
    double xmin, xmax, ymin, ymax;
    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
    double py(double y) const {
        if (ymax == ymin) return y0 + h;
        return y0 + h - (y - ymin) / (ymax - ymin) * h;
    }
};

void draw_panel(std::ostringstream& svg, const Panel& p, const std::string& title,
                const std::string& ylabel,
                const std::vector<std::string>& series,
                const std::vector<std::vector<CurvePoint>>& curves, bool band) {
    svg << "<rect x=\"" << p.x0 << "\" y=\"" << p.y0 << "\" width=\"" << p.w
        << "\" height=\"" << p.h << "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << p.x0 + p.w / 2 << "\" y=\"" << p.y0 - 10
        << "\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
        << "</text>\n";
    svg << "<text x=\"" << p.x0 - 44 << "\" y=\"" << p.y0 + p.h / 2
        << "\" font-size=\"11\" transform=\"rotate(-90 " << p.x0 - 44 << ' '
        << p.y0 + p.h / 2 << ")\" text-anchor=\"middle\">" << xml_escape(ylabel)
        << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = p.xmin + (p.xmax - p.xmin) * i / 4.0;
        const double yv = p.ymin + (p.ymax - p.ymin) * i / 4.0;
        svg << "<text x=\"" << p.px(xv) << "\" y=\"" << p.y0 + p.h + 16
            << "\" font-size=\"10\" text-anchor=\"middle\">" << static_cast<long long>(xv)
            << "</text>\n";
        char ybuf[32];
        std::snprintf(ybuf, sizeof(ybuf), "%.3g", yv);
        svg << "<text x=\"" << p.x0 - 6 << "\" y=\"" << p.py(yv) + 3
            << "\" font-size=\"10\" text-anchor=\"end\">" << ybuf << "</text>\n";
    }
    for (std::size_t s = 0; s < curves.size(); ++s) {
        const auto& curve = curves[s];
        if (curve.empty()) continue;
        const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
        if (band) {
            std::ostringstream pts;
            for (const auto& c : curve) pts << p.px(c.round) << ',' << p.py(c.mean + c.stderr_) << ' ';
            for (auto it = curve.rbegin(); it != curve.rend(); ++it)
                pts << p.px(it->round) << ',' << p.py(it->mean - it->stderr_) << ' ';
            svg << "<polygon points=\"" << pts.str() << "\" fill=\"" << color
                << "\" opacity=\"0.15\" stroke=\"none\"/>\n";
        }
        std::ostringstream pts;
        for (const auto& c : curve) pts << p.px(c.round) << ',' << p.py(c.mean) << ' ';
        svg << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.5\"/>\n";
        svg << "<text x=\"" << p.x0 + 8 << "\" y=\"" << p.y0 + 16 + 14 * static_cast<double>(s)
            << "\" font-size=\"11\" fill=\"" << color << "\">" << xml_escape(series[s])
            << "</text>\n";
    }
}

}  // namespace

void emit_plot(const ExperimentResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SmbError("cannot write plot: " + path);
    const double W = 1060, H = 440;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
        << H << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H
        << "\" fill=\"white\"/>\n";
    auto bounds = [](const std::vector<std::vector<CurvePoint>>& curves) {
        double xmax = 1.0, ymax = 1e-12;
        for (const auto& c : curves)
            for (const auto& p : c) {
                xmax = std::max(xmax, static_cast<double>(p.round));
                ymax = std::max(ymax, p.mean + p.stderr_);
            }
        return std::pair<double, double>(xmax, ymax * 1.05);
    };
    {
        auto [xmax, ymax] = bounds(result.regret_curves);
        Panel p{70, 40, 400, 340, 0, xmax, 0, ymax};
        draw_panel(svg, p, "cumulative regret (mean +/- stderr)", "regret",
                   result.series, result.regret_curves, true);
    }
    {
        auto [xmax, ymax] = bounds(result.runtime_curves);
        Panel p{620, 40, 400, 340, 0, xmax, 0, ymax};
        draw_panel(svg, p, "cumulative runtime", "seconds", result.series,
                   result.runtime_curves, false);
    }
    svg << "</svg>\n";
    out << svg.str();
}

}  // namespace smb
