#pragma once

#include "vwmdvi/linear_mdp.hpp"
#include "vwmdvi/mdvi.hpp"
#include "vwmdvi/optimal_design.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace vwmdvi {

enum class AlgorithmKind { wls_f1, wls_oracle, vwls, tabular };

inline std::string to_string(AlgorithmKind kind) {
    switch (kind) {
        case AlgorithmKind::wls_f1: return "wls_f1";
        case AlgorithmKind::wls_oracle: return "wls_oracle";
        case AlgorithmKind::vwls: return "vwls";
        case AlgorithmKind::tabular: return "tabular";
    }
    return "unknown";
}

inline AlgorithmKind parse_algorithm_kind(const std::string& s) {
    if (s == "wls_f1") return AlgorithmKind::wls_f1;
    if (s == "wls_oracle") return AlgorithmKind::wls_oracle;
    if (s == "vwls") return AlgorithmKind::vwls;
    if (s == "tabular") return AlgorithmKind::tabular;
    throw std::invalid_argument("unknown algorithm kind '" + s + "'");
}

struct AlgorithmSpec {
    std::string label;
    AlgorithmKind kind = AlgorithmKind::wls_f1;
    double alpha = 0.9;
    int iterations = 100;         ///< K
    int samples = 100;            ///< M
    int second_iterations = 100;  ///< K_tilde (vwls only)
    int second_samples = 100;     ///< M_tilde (vwls only)
    int variance_samples = 1000;  ///< M_sigma (vwls only)
    double eps_fw = 0.01;
    bool exact = false;           ///< exact expectations instead of sampling

    /// Iterations on the shared grid: K, or K + K_tilde for vwls.
    int total_iterations() const {
        return kind == AlgorithmKind::vwls ? iterations + second_iterations : iterations;
    }
};

struct HardMdpSpec {
    int num_actions = 30;
    int dim = 4;
    double gamma = 0.9;
};

struct ExperimentConfig {
    int num_mdps = 20;
    HardMdpSpec mdp;
    std::vector<AlgorithmSpec> algorithms;
    std::uint64_t master_seed = 0;
    int eval_every = 10;
    std::string output_path;

    void validate() const {
        if (num_mdps < 1) throw std::invalid_argument("num_mdps must be >= 1");
        if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
        if (mdp.num_actions < 1 || mdp.dim < 3 || !(mdp.gamma > 0.0 && mdp.gamma < 1.0))
            throw std::invalid_argument("mdp needs num_actions >= 1, dim >= 3, gamma in (0,1)");
        std::set<std::string> labels;
        for (const auto& a : algorithms) {
            if (a.label.empty()) throw std::invalid_argument("algorithm label must not be empty");
            if (!labels.insert(a.label).second)
                throw std::invalid_argument("duplicate algorithm label '" + a.label + "'");
            if (!(a.alpha >= 0.0 && a.alpha < 1.0))
                throw std::invalid_argument(a.label + ": alpha must lie in [0,1)");
            if (a.iterations < 1 || a.samples < 1 || !(a.eps_fw > 0.0))
                throw std::invalid_argument(a.label + ": K, M must be >= 1 and eps_fw > 0");
            if (a.kind == AlgorithmKind::vwls &&
                (a.second_iterations < 1 || a.second_samples < 1 || a.variance_samples < 1))
                throw std::invalid_argument(a.label + ": K_tilde, M_tilde, M_sigma must be >= 1");
        }
    }
};

struct ExperimentRecord {
    std::uint64_t mdp_seed = 0;
    std::string algorithm;
    int iteration = 0;
    std::int64_t samples_used = 0;
    double normalized_gap = 0.0;

    bool failed() const { return std::isnan(normalized_gap); }
};

/// Seed of the i-th MDP of an experiment.
inline std::uint64_t mdp_seed_for(std::uint64_t master_seed, int index) {
    return master_seed + static_cast<std::uint64_t>(index);
}

/**
 * Runs one algorithm on one MDP and returns its checkpoint rows.
 *
 * Rows are emitted every `eval_every` iterations and at the last iteration of
 * each WLS run. A vwls run additionally emits the phase boundary: the
 * phase-1 policy at iteration K with the variance-estimation samples added.
 * The generative streams are keyed by `stream_seed`.
 */
inline std::vector<ExperimentRecord> run_single(const LinearMdp& mdp, std::uint64_t mdp_seed,
                                                std::uint64_t stream_seed,
                                                const AlgorithmSpec& spec, int eval_every) {
    const ValueFunction v_star = exact_optimal_values(mdp, 1e-10).values;
    const StreamFactory streams(stream_seed);
    std::vector<ExperimentRecord> rows;
    auto emit = [&](int iteration, std::int64_t samples, const Policy& pi) {
        rows.push_back({mdp_seed, spec.label, iteration, samples, normalized_gap(mdp, v_star, pi)});
    };
    auto on_grid = [&](int k, int last) { return k % eval_every == 0 || k == last; };

    const SamplerMode mode =
        spec.exact ? SamplerMode::exact() : SamplerMode::monte_carlo(spec.samples);
    switch (spec.kind) {
        case AlgorithmKind::tabular: {
            tabular_mdvi(mdp, spec.alpha, spec.iterations, mode, streams, [&](const MdviState& st) {
                if (on_grid(st.iteration, spec.iterations)) emit(st.iteration, st.samples_used, st.greedy);
            });
            break;
        }
        case AlgorithmKind::wls_f1:
        case AlgorithmKind::wls_oracle: {
            const WeightingFunction f = spec.kind == AlgorithmKind::wls_f1
                                            ? WeightingFunction::constant(mdp.num_pairs())
                                            : oracle_weighting(mdp, v_star);
            wls_mdvi(mdp, spec.alpha, f, spec.iterations, mode, spec.eps_fw, streams,
                     StreamTag::wls_first, [&](const MdviState& st) {
                         if (on_grid(st.iteration, spec.iterations))
                             emit(st.iteration, st.samples_used, st.greedy);
                     });
            break;
        }
        case AlgorithmKind::vwls: {
            VwlsParams p;
            p.alpha = spec.alpha;
            p.iterations = spec.iterations;
            p.samples = spec.samples;
            p.second_iterations = spec.second_iterations;
            p.second_samples = spec.second_samples;
            p.variance_samples = spec.variance_samples;
            p.eps_fw = spec.eps_fw;
            p.exact = spec.exact;
            vwls_mdvi(mdp, p, streams, [&](const TracePoint& tp) {
                const bool keep =
                    tp.phase == 2 ||
                    (tp.phase == 1 && on_grid(tp.iteration, p.iterations)) ||
                    (tp.phase == 3 && on_grid(tp.iteration - p.iterations, p.second_iterations));
                if (keep) emit(tp.iteration, tp.samples_used, tp.policy);
            });
            break;
        }
    }
    return rows;
}

/// Worker count: MDVI_WORKERS if set and positive, else hardware concurrency.
inline int default_worker_count() {
    if (const char* env = std::getenv("MDVI_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

struct ExperimentOutcome {
    std::vector<ExperimentRecord> records;
    int failures = 0;
};

/**
 * All (MDP, algorithm) runs of an experiment on a bounded worker pool.
 * Output order is (MDP index, algorithm order in the config, checkpoint),
 * independent of the worker count. A failing run contributes one NaN row.
 */
inline ExperimentOutcome run_experiment(const ExperimentConfig& config, int workers = 0,
                                        std::ostream* log = nullptr) {
    config.validate();
    if (workers <= 0) workers = default_worker_count();
    const std::size_t num_algorithms = config.algorithms.size();
    const std::size_t num_tasks = static_cast<std::size_t>(config.num_mdps) * num_algorithms;
    std::vector<std::vector<ExperimentRecord>> results(num_tasks);
    std::vector<std::string> errors(num_tasks);
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        for (std::size_t t = next++; t < num_tasks; t = next++) {
            const int mdp_index = static_cast<int>(t / num_algorithms);
            const AlgorithmSpec& spec = config.algorithms[t % num_algorithms];
            const std::uint64_t seed = mdp_seed_for(config.master_seed, mdp_index);
            try {
                const LinearMdp mdp =
                    make_hard_linear_mdp(config.mdp.num_actions, config.mdp.dim, config.mdp.gamma, seed);
                results[t] = run_single(mdp, seed, seed, spec, config.eval_every);
            } catch (const std::exception& e) {
                results[t] = {{seed, spec.label, 0, 0, std::numeric_limits<double>::quiet_NaN()}};
                errors[t] = e.what();
            }
        }
    };
    const int pool = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers),
                                                            std::max<std::size_t>(num_tasks, 1)));
    if (pool <= 1) {
        work();
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(static_cast<std::size_t>(pool));
        for (int i = 0; i < pool; ++i) threads.emplace_back(work);
    }

    ExperimentOutcome out;
    for (std::size_t t = 0; t < num_tasks; ++t) {
        if (!errors[t].empty()) {
            ++out.failures;
            if (log) *log << "run failed (seed " << results[t].front().mdp_seed << ", "
                          << results[t].front().algorithm << "): " << errors[t] << '\n';
        }
        out.records.insert(out.records.end(), results[t].begin(), results[t].end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* records_header = "mdp_seed,algorithm,iteration,samples_used,normalized_gap";
inline constexpr const char* summary_header = "algorithm,samples_used,mean_gap,stderr_gap,n";

inline std::string format_real(double x) {
    if (std::isnan(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_records_csv(std::ostream& os, const std::vector<ExperimentRecord>& records) {
    os << records_header << '\n';
    for (const auto& r : records) {
        os << r.mdp_seed << ',' << r.algorithm << ',' << r.iteration << ',' << r.samples_used << ','
           << format_real(r.normalized_gap) << '\n';
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::vector<ExperimentRecord> read_records_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("records CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != records_header) throw std::invalid_argument("records CSV header mismatch: '" + line + "'");
    std::vector<ExperimentRecord> out;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw std::invalid_argument("records CSV line " + std::to_string(lineno) + ": expected 5 fields");
        try {
            ExperimentRecord r;
            r.mdp_seed = std::stoull(f[0]);
            r.algorithm = f[1];
            r.iteration = std::stoi(f[2]);
            r.samples_used = std::stoll(f[3]);
            r.normalized_gap = f[4] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[4]);
            out.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw std::invalid_argument("records CSV line " + std::to_string(lineno) + ": malformed field");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Summaries

struct SummaryRow {
    std::string algorithm;
    double samples_used = 0.0;  ///< mean over runs at this checkpoint
    double mean_gap = 0.0;
    double stderr_gap = 0.0;
    int n = 0;
};

/**
 * Mean and standard error of the gap per algorithm and checkpoint.
 *
 * Runs are aligned on their checkpoint position: (iteration, occurrence of
 * that iteration within the run), which is shared by construction across
 * seeds. Labels keep their first-appearance order. NaN rows are skipped.
 */
inline std::vector<SummaryRow> summarize(const std::vector<ExperimentRecord>& records) {
    struct Acc {
        double samples = 0.0;
        std::vector<double> gaps;
    };
    std::vector<std::string> label_order;
    std::map<std::string, std::map<std::pair<int, int>, Acc>> groups;
    std::map<std::tuple<std::string, std::uint64_t, int>, int> seen;

    for (const auto& r : records) {
        if (r.failed()) continue;
        if (!groups.contains(r.algorithm)) label_order.push_back(r.algorithm);
        const int occurrence = seen[{r.algorithm, r.mdp_seed, r.iteration}]++;
        Acc& acc = groups[r.algorithm][{r.iteration, occurrence}];
        acc.samples += static_cast<double>(r.samples_used);
        acc.gaps.push_back(r.normalized_gap);
    }

    std::vector<SummaryRow> out;
    for (const auto& label : label_order) {
        for (const auto& [key, acc] : groups[label]) {
            const auto n = static_cast<double>(acc.gaps.size());
            double mean = 0.0;
            for (double g : acc.gaps) mean += g;
            mean /= n;
            double ss = 0.0;
            for (double g : acc.gaps) ss += (g - mean) * (g - mean);
            const double se = acc.gaps.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
            out.push_back({label, acc.samples / n, mean, se, static_cast<int>(acc.gaps.size())});
        }
    }
    return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
    os << summary_header << '\n';
    for (const auto& r : rows) {
        os << r.algorithm << ',' << format_real(r.samples_used) << ',' << format_real(r.mean_gap) << ','
           << format_real(r.stderr_gap) << ',' << r.n << '\n';
    }
}

/// Last checkpoint gap of each successful (seed, label) run, grouped by label.
inline std::map<std::string, std::vector<double>> final_gaps(const std::vector<ExperimentRecord>& records) {
    std::map<std::pair<std::string, std::uint64_t>, double> last;
    for (const auto& r : records)
        if (!r.failed()) last[{r.algorithm, r.mdp_seed}] = r.normalized_gap;
    std::map<std::string, std::vector<double>> out;
    for (const auto& [key, gap] : last) out[key.first].push_back(gap);
    return out;
}

}  // namespace vwmdvi
