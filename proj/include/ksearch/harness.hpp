#ifndef KSEARCH_HARNESS_HPP
#define KSEARCH_HARNESS_HPP

#include <optional>
#include <string>

#include "ksearch/search.hpp"

namespace ksearch {

// Train statistics used to map raw data into model space and back.
struct NormalizationRecord {
    Eigen::VectorXd x_min, x_max;
    double y_mean = 0.0;
    double y_std = 1.0;

    Eigen::MatrixXd scale_inputs(const Eigen::MatrixXd& raw) const;
    Eigen::VectorXd normalize_targets(const Eigen::VectorXd& raw) const;
    Eigen::VectorXd denormalize_targets(const Eigen::VectorXd& normalized) const;
};

struct LoadedData {
    Dataset train;
    Dataset test;  // remaining rows, transformed with the train statistics
    NormalizationRecord norm;
    std::vector<std::string> feature_names;
    std::string target_name;
};

// Reads a numeric CSV with a header row, draws a uniform train subset of the
// requested size, min-max scales inputs to [0, 1] and standardizes targets
// using train statistics. An empty target name selects the last column.
LoadedData load_dataset(const std::string& path, const std::string& target_column, int train_size,
                        std::mt19937_64& rng);

// One function draw at the given inputs: y ~ N(0, K + noise I), via Cholesky
// with the usual jitter ladder.
Eigen::VectorXd simulate_gp_targets(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                                    const Eigen::MatrixXd& X, double noise_variance,
                                    std::mt19937_64& rng);

// Uniform inputs on the unit cube, one GP draw, then the same target
// standardization applied to real data.
Dataset simulate_gp_data(const TreePtr& tree, const Eigen::VectorXd& kernel_params, int n,
                         double noise_variance, int dims, std::mt19937_64& rng);

struct MetaRegressionSets {
    std::vector<MetaObservation> train;
    std::vector<MetaObservation> test;
    OperationGraph graph;  // edges recorded while the kernel set was grown
};

// Grows a kernel set from the base kernels by random grammar operations until
// n_train + n_test unique trees exist, evaluates the evidence on each and
// splits uniformly. Trees whose evidence evaluation fails are dropped and
// regenerated.
MetaRegressionSets generate_meta_regression_sets(const Dataset& data, const SearchConfig& config,
                                                 int n_train, int n_test, std::mt19937_64& rng);

struct ExperimentConfig {
    std::string kind = "model-selection";  // model-selection | meta-regression | simulated-recovery
    std::string data_path;
    std::string target_column;  // empty = last column
    int train_size = 100;
    std::string space = "auto";  // A | B | auto (A for <= 2 input dims)
    std::string method = "sot";  // sot | greedy | treegep
    int iterations = 50;
    std::uint64_t seed = 0;
    std::string out_dir = "runs/out";

    // simulated-recovery
    std::string kernel_text;
    int sim_n = 100;
    double sim_noise = 0.01;
    int sim_dims = 1;
    int sim_test_n = 200;
    std::string sim_params;  // "name=value,..." overrides; names may be slot suffixes

    // meta-regression
    int n_train = 500;
    int n_test = 500;

    // engine knobs (0 = preset default)
    int map_restarts = 10;
    int n_population = 100;
    int n_offspring = 4;
    int ea_steps = 0;
    int eval_budget = 0;

    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
    // Fields present in the JSON object replace the current values.
    void overlay_json(const std::string& text);
};

GrammarConfig space_preset(const std::string& space, int dims);
SearchConfig make_search_config(const ExperimentConfig& cfg, int dims);

struct ExperimentResult {
    std::string run_json_path;
    std::string trace_csv_path;
    std::string summary_json_path;
    double final_g = 0;
    std::string final_tree;
    // meta-regression metrics
    double rmse_sot = 0, rmse_knn = 0, rmse_mean = 0;
};

// Dispatches on cfg.kind, writes run.json / trace.csv / summary.json under
// cfg.out_dir (created if missing) and returns the summary.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Mean squared-error and observation-level negative log likelihood of a
// fitted kernel on a held-out set, both in normalized target space.
struct TestMetrics {
    double rmse = 0;
    double nll = 0;
};
TestMetrics evaluate_test_metrics(const TreePtr& tree, const Eigen::VectorXd& map_params,
                                  const Dataset& train, const Dataset& test);

}  // namespace ksearch

#endif  // KSEARCH_HARNESS_HPP
