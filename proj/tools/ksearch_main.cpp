#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ksearch/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Values in a JSON config file take precedence over command-line flags.
void finish_config(ksearch::ExperimentConfig& cfg, const std::string& config_path) {
    if (!config_path.empty()) cfg.overlay_json(read_file(config_path));
}

int execute(const ksearch::ExperimentConfig& cfg) {
    ksearch::ExperimentResult result = ksearch::run_experiment(cfg);
    if (cfg.kind == "meta-regression") {
        std::cout << "rmse_sot=" << result.rmse_sot << " rmse_knn=" << result.rmse_knn
                  << " rmse_mean=" << result.rmse_mean << "\n";
    } else {
        std::cout << "best kernel: " << result.final_tree << "\n"
                  << "normalized log evidence: " << result.final_g << "\n";
    }
    std::cout << "run record: " << result.run_json_path << "\n"
              << "trace: " << result.trace_csv_path << "\n"
              << "summary: " << result.summary_json_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-process kernel structure search"};
    app.require_subcommand(1);

    ksearch::ExperimentConfig cfg;
    std::string config_path;

    auto* select = app.add_subcommand("select", "Select a kernel structure for a CSV dataset");
    select->add_option("--data", cfg.data_path, "CSV file with a header row")->required();
    select->add_option("--target", cfg.target_column, "target column (default: last)");
    select->add_option("--train-size", cfg.train_size, "uniformly drawn training subset size");
    select->add_option("--space", cfg.space, "search space preset: A, B or auto");
    select->add_option("--method", cfg.method, "sot, greedy or treegep");
    select->add_option("--iters", cfg.iterations, "search iterations");
    select->add_option("--seed", cfg.seed, "random seed");
    select->add_option("--out", cfg.out_dir, "output directory");
    select->add_option("--map-restarts", cfg.map_restarts, "MAP restarts per evidence evaluation");
    select->add_option("--eval-budget", cfg.eval_budget,
                       "oracle-call budget for greedy/treegep (default: initial set + iters)");
    select->add_option("--config", config_path, "JSON config file; overrides flags");

    auto* meta = app.add_subcommand("meta-regress",
                                    "Predict held-out kernel evidence values from training pairs");
    meta->add_option("--data", cfg.data_path, "CSV file with a header row");
    meta->add_option("--kernel", cfg.kernel_text, "simulate the base dataset from this kernel");
    meta->add_option("--target", cfg.target_column, "target column (default: last)");
    meta->add_option("--train-size", cfg.train_size, "training subset size of the base dataset");
    meta->add_option("--n-train", cfg.n_train, "number of training kernel-evidence pairs");
    meta->add_option("--n-test", cfg.n_test, "number of test kernel-evidence pairs");
    meta->add_option("--space", cfg.space, "search space preset: A, B or auto");
    meta->add_option("--seed", cfg.seed, "random seed");
    meta->add_option("--out", cfg.out_dir, "output directory");
    meta->add_option("--map-restarts", cfg.map_restarts, "MAP restarts per evidence evaluation");
    meta->add_option("--sim-n", cfg.sim_n, "simulated base dataset size (with --kernel)");
    meta->add_option("--sim-noise", cfg.sim_noise, "simulation noise variance (with --kernel)");
    meta->add_option("--sim-dims", cfg.sim_dims, "simulated input dimension (with --kernel)");
    meta->add_option("--config", config_path, "JSON config file; overrides flags");

    auto* sim = app.add_subcommand("simulate",
                                   "Draw a dataset from a known kernel and run model selection");
    sim->add_option("--kernel", cfg.kernel_text, "ground-truth kernel, e.g. \"SE0 * PER0\"")
        ->required();
    sim->add_option("--n", cfg.sim_n, "training points to draw");
    sim->add_option("--noise", cfg.sim_noise, "observation noise variance");
    sim->add_option("--dims", cfg.sim_dims, "input dimension");
    sim->add_option("--test-n", cfg.sim_test_n, "held-out points from the same draw");
    sim->add_option("--params", cfg.sim_params,
                    "kernel parameter overrides, name=value[,name=value...]");
    sim->add_option("--space", cfg.space, "search space preset: A, B or auto");
    sim->add_option("--method", cfg.method, "sot, greedy or treegep");
    sim->add_option("--iters", cfg.iterations, "search iterations");
    sim->add_option("--seed", cfg.seed, "random seed");
    sim->add_option("--out", cfg.out_dir, "output directory");
    sim->add_option("--map-restarts", cfg.map_restarts, "MAP restarts per evidence evaluation");
    sim->add_option("--config", config_path, "JSON config file; overrides flags");

    CLI11_PARSE(app, argc, argv);

    try {
        if (select->parsed()) {
            cfg.kind = "model-selection";
        } else if (meta->parsed()) {
            cfg.kind = "meta-regression";
        } else {
            cfg.kind = "simulated-recovery";
        }
        finish_config(cfg, config_path);
        return execute(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
