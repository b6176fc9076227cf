// Command-line front end: experiments, summaries, designs and single runs.

#include "vwmdvi/vwmdvi.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_error = 1;
constexpr int exit_invalid_config = 2;
constexpr int exit_partial_failure = 3;

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace vwmdvi;

    CLI::App app{"Variance-weighted least-squares MDVI on linear MDPs"};
    app.require_subcommand(1);

    auto* experiment = app.add_subcommand("experiment", "Batch experiments over random hard MDPs");
    experiment->require_subcommand(1);

    std::string config_path, out_path, in_path;
    int workers = 0;
    auto* run = experiment->add_subcommand("run", "Run every (MDP, algorithm) pair and write the records CSV");
    run->add_option("--config", config_path, "Experiment JSON")->required();
    run->add_option("--out", out_path, "Records CSV (defaults to output_path in the config)");
    run->add_option("--workers", workers, "Worker threads (default: MDVI_WORKERS or all cores)");

    auto* summarize_cmd = experiment->add_subcommand("summarize", "Mean and standard error per checkpoint");
    summarize_cmd->add_option("--in", in_path, "Records CSV")->required();
    summarize_cmd->add_option("--out", out_path, "Summary CSV")->required();

    auto* design = app.add_subcommand("design", "Optimal designs");
    design->require_subcommand(1);
    std::string mdp_path, weighting = "one";
    double eps_fw = 0.01;
    auto* compute = design->add_subcommand("compute", "Frank-Wolfe design for an MDP document");
    compute->add_option("--mdp", mdp_path, "MDP JSON")->required();
    compute->add_option("--f", weighting, "Weighting function")->check(CLI::IsMember({"oracle", "one"}));
    compute->add_option("--eps", eps_fw, "Frank-Wolfe accuracy")->check(CLI::PositiveNumber);
    compute->add_option("--out", out_path, "Design JSON (default: stdout)");

    auto* mdp_cmd = app.add_subcommand("mdp", "MDP documents");
    mdp_cmd->require_subcommand(1);
    int actions = 30, dim = 4;
    double gamma = 0.9;
    std::uint64_t seed = 0;
    auto* hard = mdp_cmd->add_subcommand("hard", "Write a random hard instance as JSON");
    hard->add_option("--actions", actions);
    hard->add_option("--dim", dim);
    hard->add_option("--gamma", gamma);
    hard->add_option("--seed", seed);
    hard->add_option("--out", out_path, "MDP JSON (default: stdout)");

    auto* solve = app.add_subcommand("solve", "Single solver run from a JSON configuration");
    solve->add_option("--config", config_path, "Solve JSON")->required();
    solve->add_option("--out", out_path, "Result JSON (default: stdout)");

    double epsilon = 0.1, delta = 0.1;
    auto* counts = app.add_subcommand("counts", "Theorem-shaped K and M values with all constants set to 1 (heuristic)");
    counts->add_option("--dim", dim);
    counts->add_option("--gamma", gamma);
    counts->add_option("--eps", epsilon);
    counts->add_option("--delta", delta);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            ExperimentConfig config;
            try {
                config = experiment_config_from_json(read_json_file(config_path));
            } catch (const std::invalid_argument& e) {
                std::cerr << "invalid config: " << e.what() << '\n';
                return exit_invalid_config;
            }
            if (out_path.empty()) out_path = config.output_path;
            if (out_path.empty()) {
                std::cerr << "invalid config: no --out and no output_path\n";
                return exit_invalid_config;
            }
            const ExperimentOutcome outcome =
                run_experiment(config, workers > 0 ? workers : default_worker_count(), &std::cerr);
            std::ostringstream csv;
            write_records_csv(csv, outcome.records);
            write_text(out_path, csv.str());
            return outcome.failures > 0 ? exit_partial_failure : exit_ok;
        }
        if (*summarize_cmd) {
            std::ifstream in(in_path);
            if (!in) {
                std::cerr << "cannot open '" << in_path << "'\n";
                return exit_invalid_config;
            }
            std::vector<ExperimentRecord> records;
            try {
                records = read_records_csv(in);
            } catch (const std::invalid_argument& e) {
                std::cerr << "invalid records: " << e.what() << '\n';
                return exit_invalid_config;
            }
            int dropped = 0;
            for (const auto& r : records) dropped += r.failed() ? 1 : 0;
            if (dropped > 0) std::cerr << "dropped " << dropped << " failure rows\n";
            std::ostringstream csv;
            write_summary_csv(csv, summarize(records));
            write_text(out_path, csv.str());
            return exit_ok;
        }
        if (*compute) {
            LinearMdp mdp = [&] {
                try {
                    return linear_mdp_from_json(read_json_file(mdp_path));
                } catch (const std::invalid_argument& e) {
                    std::cerr << "invalid MDP: " << e.what() << '\n';
                    std::exit(exit_invalid_config);
                }
            }();
            const WeightingFunction f = weighting == "oracle" ? oracle_weighting(mdp)
                                                              : WeightingFunction::constant(mdp.num_pairs());
            write_text(out_path, to_json(frank_wolfe(mdp, f, eps_fw)).dump(2) + "\n");
            return exit_ok;
        }
        if (*hard) {
            write_text(out_path, to_json(make_hard_linear_mdp(actions, dim, gamma, seed)).dump(2) + "\n");
            return exit_ok;
        }
        if (*solve) {
            SolveConfig config;
            std::optional<LinearMdp> mdp;
            try {
                config = solve_config_from_json(read_json_file(config_path));
                if (config.mdp_file) mdp = linear_mdp_from_json(read_json_file(*config.mdp_file));
            } catch (const std::invalid_argument& e) {
                std::cerr << "invalid config: " << e.what() << '\n';
                return exit_invalid_config;
            }
            if (!mdp) mdp = make_hard_linear_mdp(config.hard.num_actions, config.hard.dim, config.hard.gamma,
                                                 config.mdp_seed);
            const auto rows = run_single(*mdp, config.mdp_seed, config.seed, config.algorithm, config.eval_every);
            write_text(out_path, solve_result_json(config, rows).dump(2) + "\n");
            return exit_ok;
        }
        if (*counts) {
            const TheoremShapedCounts c = theorem_shaped_counts(dim, gamma, epsilon, delta);
            std::cout << "heuristic values, all unknown constants set to 1\n"
                      << "core set bound      " << c.core_bound << '\n'
                      << "K (f = 1 run)       " << c.iterations_unweighted << '\n'
                      << "M (f = 1 run)       " << c.samples_unweighted << '\n'
                      << "M_sigma             " << c.samples_variance << '\n'
                      << "K (weighted run)    " << c.iterations_weighted << '\n'
                      << "M (weighted run)    " << c.samples_weighted << '\n';
            return exit_ok;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_invalid_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_error;
    }
    return exit_ok;
}
