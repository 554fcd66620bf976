#include "ksearch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ksearch {

using nlohmann::json;

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Eigen::MatrixXd NormalizationRecord::scale_inputs(const Eigen::MatrixXd& raw) const {
    Eigen::MatrixXd scaled(raw.rows(), raw.cols());
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
        double range = x_max[c] - x_min[c];
        if (range <= 0)
            scaled.col(c).setZero();  // constant column guard
        else
            scaled.col(c) = (raw.col(c).array() - x_min[c]) / range;
    }
    return scaled;
}

Eigen::VectorXd NormalizationRecord::normalize_targets(const Eigen::VectorXd& raw) const {
    return (raw.array() - y_mean) / y_std;
}

Eigen::VectorXd NormalizationRecord::denormalize_targets(const Eigen::VectorXd& normalized) const {
    return normalized.array() * y_std + y_mean;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

LoadedData load_dataset(const std::string& path, const std::string& target_column, int train_size,
                        std::mt19937_64& rng) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    if (header.size() < 2)
        throw std::runtime_error("dataset needs at least one feature and one target column");

    int target = -1;
    if (target_column.empty()) {
        target = static_cast<int>(header.size()) - 1;
    } else {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == target_column) target = static_cast<int>(i);
        if (target < 0)
            throw std::runtime_error("target column '" + target_column + "' not found in " + path);
    }

    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " cells, got " +
                                     std::to_string(cells.size()));
        std::vector<double> row(cells.size());
        for (size_t c = 0; c < cells.size(); ++c) {
            try {
                size_t used = 0;
                row[c] = std::stod(trim(cells[c]), &used);
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                                         cells[c] + "' in column " + header[c]);
            }
        }
        rows.push_back(std::move(row));
    }
    const int n_total = static_cast<int>(rows.size());
    if (train_size < 2) throw std::runtime_error("train size must be at least 2");
    if (train_size > n_total)
        throw std::runtime_error("train size " + std::to_string(train_size) + " exceeds the " +
                                 std::to_string(n_total) + " rows in " + path);

    std::vector<int> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    const int d = static_cast<int>(header.size()) - 1;
    auto fill = [&](int from, int count, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
        X.resize(count, d);
        y.resize(count);
        for (int i = 0; i < count; ++i) {
            const auto& row = rows[static_cast<size_t>(order[static_cast<size_t>(from + i)])];
            int cc = 0;
            for (int c = 0; c < static_cast<int>(row.size()); ++c) {
                if (c == target) continue;
                X(i, cc++) = row[static_cast<size_t>(c)];
            }
            y[i] = row[static_cast<size_t>(target)];
        }
    };

    Eigen::MatrixXd X_train_raw, X_test_raw;
    Eigen::VectorXd y_train_raw, y_test_raw;
    fill(0, train_size, X_train_raw, y_train_raw);
    fill(train_size, n_total - train_size, X_test_raw, y_test_raw);

    NormalizationRecord norm;
    norm.x_min = X_train_raw.colwise().minCoeff();
    norm.x_max = X_train_raw.colwise().maxCoeff();
    norm.y_mean = y_train_raw.mean();
    double var = (y_train_raw.array() - norm.y_mean).square().sum() /
                 std::max<double>(1.0, static_cast<double>(train_size) - 1);
    norm.y_std = var > 0 ? std::sqrt(var) : 1.0;

    LoadedData out;
    out.norm = norm;
    out.train.X = norm.scale_inputs(X_train_raw);
    out.train.y = norm.normalize_targets(y_train_raw);
    out.test.X = norm.scale_inputs(X_test_raw);
    out.test.y = norm.normalize_targets(y_test_raw);
    out.target_name = header[static_cast<size_t>(target)];
    for (size_t i = 0; i < header.size(); ++i)
        if (static_cast<int>(i) != target) out.feature_names.push_back(header[i]);
    return out;
}

Eigen::VectorXd simulate_gp_targets(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                                    const Eigen::MatrixXd& X, double noise_variance,
                                    std::mt19937_64& rng) {
    const auto n = X.rows();
    Eigen::MatrixXd K = eval_composite_kernel(tree, kernel_params, X, X);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) K(j, i) = K(i, j);

    Eigen::LLT<Eigen::MatrixXd> llt;
    bool ok = false;
    for (double jitter : {1e-10, 1e-8, 1e-6, 1e-4}) {
        Eigen::MatrixXd M = K;
        M.diagonal().array() += jitter;
        llt.compute(M);
        if (llt.info() == Eigen::Success) {
            ok = true;
            break;
        }
    }
    if (!ok)
        throw std::runtime_error("simulation: Cholesky factorization failed after the jitter ladder");

    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
    Eigen::VectorXd y = llt.matrixL() * z;
    if (noise_variance > 0) {
        double sd = std::sqrt(noise_variance);
        for (Eigen::Index i = 0; i < n; ++i) y[i] += sd * normal(rng);
    }
    return y;
}

Dataset simulate_gp_data(const TreePtr& tree, const Eigen::VectorXd& kernel_params, int n,
                         double noise_variance, int dims, std::mt19937_64& rng) {
    if (n < 2) throw std::invalid_argument("simulation needs n >= 2");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd X(n, dims);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = unit(rng);
    Eigen::VectorXd y = simulate_gp_targets(tree, kernel_params, X, noise_variance, rng);
    double mean = y.mean();
    double var = (y.array() - mean).square().sum() / std::max<double>(1.0, n - 1);
    double sd = var > 0 ? std::sqrt(var) : 1.0;
    Dataset data;
    data.X = std::move(X);
    data.y = (y.array() - mean) / sd;
    return data;
}

MetaRegressionSets generate_meta_regression_sets(const Dataset& data, const SearchConfig& config,
                                                 int n_train, int n_test, std::mt19937_64& rng) {
    if (n_train < 1 || n_test < 0) throw std::invalid_argument("invalid meta-regression set sizes");
    const int n_total = n_train + n_test;
    const EvidenceOracle oracle = make_evidence_oracle(data, config.map_restarts, config.seed);

    MetaRegressionSets out;
    std::vector<TreePtr> pool;
    std::unordered_set<std::uint64_t> in_pool;
    for (const BaseKernelLabel& label : config.grammar.base_labels()) {
        TreePtr t = ExpressionTree::leaf(label);
        out.graph.add_node(t);
        if (in_pool.insert(t->canonical_hash()).second) pool.push_back(std::move(t));
    }
    if (static_cast<int>(pool.size()) > n_total) pool.resize(static_cast<size_t>(n_total));

    while (static_cast<int>(pool.size()) < n_total) {
        std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
        const TreePtr& parent = pool[pick(rng)];
        TreePtr child = random_grammar_op(parent, config.grammar, rng);
        out.graph.add_node(child);
        out.graph.add_edge(parent->canonical_hash(), child->canonical_hash());
        if (in_pool.insert(child->canonical_hash()).second) pool.push_back(std::move(child));
        // duplicates keep their edge and the draw is repeated
    }

    std::vector<MetaObservation> evaluated;
    evaluated.reserve(pool.size());
    size_t cursor = 0;
    while (static_cast<int>(evaluated.size()) < n_total) {
        if (cursor == pool.size()) {
            // all candidates consumed; grow replacements for dropped trees
            std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
            const TreePtr& parent = pool[pick(rng)];
            TreePtr child = random_grammar_op(parent, config.grammar, rng);
            out.graph.add_node(child);
            out.graph.add_edge(parent->canonical_hash(), child->canonical_hash());
            if (!in_pool.insert(child->canonical_hash()).second) continue;
            pool.push_back(std::move(child));
        }
        const TreePtr& tree = pool[cursor++];
        try {
            EvidenceResult ev = oracle(tree);
            evaluated.push_back({tree, ev.g});
        } catch (const std::exception&) {
            // dropped; the loop grows a replacement if needed
        }
    }

    std::vector<size_t> order(evaluated.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < n_total; ++i) {
        const auto& obs = evaluated[order[static_cast<size_t>(i)]];
        if (i < n_train)
            out.train.push_back(obs);
        else
            out.test.push_back(obs);
    }
    return out;
}

GrammarConfig space_preset(const std::string& space, int dims) {
    GrammarConfig grammar;
    grammar.dimensions = dims;
    std::string chosen = space;
    if (chosen == "auto") chosen = dims <= 2 ? "A" : "B";
    if (chosen == "A") {
        grammar.base_families = {KernelFamily::SE, KernelFamily::LIN, KernelFamily::PER,
                                 KernelFamily::RQ};
    } else if (chosen == "B") {
        grammar.base_families = {KernelFamily::SE, KernelFamily::RQ};
    } else {
        throw std::invalid_argument("unknown search space preset: " + space);
    }
    return grammar;
}

SearchConfig make_search_config(const ExperimentConfig& cfg, int dims) {
    SearchConfig sc;
    sc.grammar = space_preset(cfg.space, dims);
    sc.seed = cfg.seed;
    sc.bo_iterations = cfg.iterations;
    sc.map_restarts = cfg.map_restarts;
    sc.n_population = cfg.n_population;
    sc.n_offspring = cfg.n_offspring;
    std::string chosen = cfg.space == "auto" ? (dims <= 2 ? "A" : "B") : cfg.space;
    sc.ea_steps = cfg.ea_steps > 0 ? cfg.ea_steps : (chosen == "B" ? 10 : 6);
    sc.eval_budget = cfg.eval_budget;
    sc.validate();
    return sc;
}

namespace {

json config_to_json(const ExperimentConfig& c) {
    return json{{"kind", c.kind},
                {"data", c.data_path},
                {"target", c.target_column},
                {"train_size", c.train_size},
                {"space", c.space},
                {"method", c.method},
                {"iters", c.iterations},
                {"seed", c.seed},
                {"out", c.out_dir},
                {"kernel", c.kernel_text},
                {"sim_n", c.sim_n},
                {"sim_noise", c.sim_noise},
                {"sim_dims", c.sim_dims},
                {"sim_test_n", c.sim_test_n},
                {"sim_params", c.sim_params},
                {"n_train", c.n_train},
                {"n_test", c.n_test},
                {"map_restarts", c.map_restarts},
                {"n_population", c.n_population},
                {"n_offspring", c.n_offspring},
                {"ea_steps", c.ea_steps},
                {"eval_budget", c.eval_budget}};
}

void config_from_json(const json& j, ExperimentConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("kind", c.kind);
    get("data", c.data_path);
    get("target", c.target_column);
    get("train_size", c.train_size);
    get("space", c.space);
    get("method", c.method);
    get("iters", c.iterations);
    get("seed", c.seed);
    get("out", c.out_dir);
    get("kernel", c.kernel_text);
    get("sim_n", c.sim_n);
    get("sim_noise", c.sim_noise);
    get("sim_dims", c.sim_dims);
    get("sim_test_n", c.sim_test_n);
    get("sim_params", c.sim_params);
    get("n_train", c.n_train);
    get("n_test", c.n_test);
    get("map_restarts", c.map_restarts);
    get("n_population", c.n_population);
    get("n_offspring", c.n_offspring);
    get("ea_steps", c.ea_steps);
    get("eval_budget", c.eval_budget);
}

}  // namespace

std::string ExperimentConfig::to_json() const { return config_to_json(*this).dump(2); }

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    ExperimentConfig c;
    config_from_json(json::parse(text), c);
    return c;
}

void ExperimentConfig::overlay_json(const std::string& text) {
    config_from_json(json::parse(text), *this);
}

TestMetrics evaluate_test_metrics(const TreePtr& tree, const Eigen::VectorXd& map_params,
                                  const Dataset& train, const Dataset& test) {
    GpModel model(tree, train);
    Prediction pred = model.predict(map_params, test.X);
    const auto n = test.n();
    double sse = 0, nll = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double err = pred.mean[i] - test.y[i];
        sse += err * err;
        double var = std::max(pred.predictive_var[i], 1e-12);
        nll += 0.5 * std::log(2.0 * std::numbers::pi * var) + err * err / (2.0 * var);
    }
    return {std::sqrt(sse / static_cast<double>(n)), nll / static_cast<double>(n)};
}

namespace {

// Kernel parameters at prior means with "name=value" overrides applied; a
// bare name matches every slot whose last component equals it.
Eigen::VectorXd simulation_params(const TreePtr& tree, const std::string& overrides) {
    ParamLayout layout = ParamLayout::for_tree(tree);
    Eigen::VectorXd params = layout.prior_means();
    if (!overrides.empty()) {
        std::stringstream ss(overrides);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            auto eq = item.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("simulation parameter override '" + item +
                                            "' is not name=value");
            std::string name = trim(item.substr(0, eq));
            double value = std::stod(item.substr(eq + 1));
            bool matched = false;
            for (int i = 0; i < layout.size(); ++i) {
                const std::string& slot = layout.slots()[static_cast<size_t>(i)].name;
                bool exact = slot == name;
                bool suffix = slot.size() > name.size() &&
                              slot.compare(slot.size() - name.size(), name.size(), name) == 0 &&
                              slot[slot.size() - name.size() - 1] == '.';
                if (exact || suffix) {
                    params[i] = value;
                    matched = true;
                }
            }
            if (!matched)
                throw std::invalid_argument("simulation parameter '" + name +
                                            "' matches no slot of kernel " + format_tree(tree));
        }
    }
    return params.head(layout.kernel_param_count());
}

json row_to_json(const EvaluatedKernel& row) {
    return json{{"iteration", row.iteration},
                {"tree", format_tree(row.tree)},
                {"g", row.g},
                {"oracle_seconds", row.oracle_seconds},
                {"cpu_seconds", row.cpu_seconds}};
}

struct TraceWriter {
    std::ofstream csv;
    double best = -std::numeric_limits<double>::infinity();

    explicit TraceWriter(const std::string& path) : csv(path) {
        if (!csv) throw std::runtime_error("cannot write trace file: " + path);
        csv << "iteration,cpu_seconds,incumbent_g\n";
    }
    void add(const EvaluatedKernel& row) {
        best = std::max(best, row.g);
        csv << row.iteration << ',' << row.cpu_seconds << ',' << best << '\n';
        csv.flush();
    }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
}

SearchTrace dispatch_search(const std::string& method, const Dataset& data,
                            const SearchConfig& config) {
    if (method == "sot") return bo_search(data, config);
    if (method == "greedy") return greedy_search(data, config);
    if (method == "treegep") return tree_gep_search(data, config);
    throw std::invalid_argument("unknown search method: " + method);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::string run_path = (fs::path(cfg.out_dir) / "run.json").string();
    const std::string trace_path = (fs::path(cfg.out_dir) / "trace.csv").string();
    const std::string summary_path = (fs::path(cfg.out_dir) / "summary.json").string();

    ExperimentResult result;
    result.run_json_path = run_path;
    result.trace_csv_path = trace_path;
    result.summary_json_path = summary_path;

    json run;
    run["schema_version"] = 1;
    run["kind"] = cfg.kind;
    run["config"] = config_to_json(cfg);
    run["seed"] = cfg.seed;

    if (cfg.kind == "model-selection" || cfg.kind == "simulated-recovery") {
        Dataset train, test;
        json ground_truth;
        SearchConfig sc;
        if (cfg.kind == "model-selection") {
            if (cfg.data_path.empty())
                throw std::invalid_argument("model-selection needs a dataset path");
            std::mt19937_64 split_rng(mix_seed(cfg.seed, 0x5D17));
            LoadedData loaded =
                load_dataset(cfg.data_path, cfg.target_column, cfg.train_size, split_rng);
            train = std::move(loaded.train);
            test = std::move(loaded.test);
            sc = make_search_config(cfg, train.dims());
        } else {
            if (cfg.kernel_text.empty())
                throw std::invalid_argument("simulated-recovery needs a ground-truth kernel");
            TreePtr truth = parse_tree(cfg.kernel_text);
            Eigen::VectorXd params = simulation_params(truth, cfg.sim_params);
            std::mt19937_64 sim_rng(mix_seed(cfg.seed, 0xD47A));
            const int n_total = cfg.sim_n + cfg.sim_test_n;
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            Eigen::MatrixXd X(n_total, cfg.sim_dims);
            for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = unit(sim_rng);
            Eigen::VectorXd y = simulate_gp_targets(truth, params, X, cfg.sim_noise, sim_rng);
            // standardize with train statistics, as for real data
            double mean = y.head(cfg.sim_n).mean();
            double var = (y.head(cfg.sim_n).array() - mean).square().sum() /
                         std::max<double>(1.0, cfg.sim_n - 1);
            double sd = var > 0 ? std::sqrt(var) : 1.0;
            train.X = X.topRows(cfg.sim_n);
            train.y = (y.head(cfg.sim_n).array() - mean) / sd;
            test.X = X.bottomRows(cfg.sim_test_n);
            test.y = (y.tail(cfg.sim_test_n).array() - mean) / sd;
            sc = make_search_config(cfg, cfg.sim_dims);

            EvidenceResult truth_ev =
                make_evidence_oracle(train, sc.map_restarts, sc.seed)(truth);
            ground_truth = {{"tree", format_tree(truth)}, {"g", truth_ev.g}};
            TestMetrics tm = evaluate_test_metrics(truth, truth_ev.map_params, train, test);
            ground_truth["test_rmse"] = tm.rmse;
            ground_truth["test_nll"] = tm.nll;
        }

        TraceWriter writer(trace_path);
        sc.on_evaluation = [&writer](const EvaluatedKernel& row) { writer.add(row); };
        SearchTrace trace = dispatch_search(cfg.method, train, sc);

        json rows = json::array();
        for (const auto& row : trace.evaluations) rows.push_back(row_to_json(row));
        run["n_initial"] = std::count_if(trace.evaluations.begin(), trace.evaluations.end(),
                                         [](const auto& r) { return r.iteration == 0; });
        run["rows"] = rows;
        run["failed_proposals"] = trace.failed_proposals;

        const EvaluatedKernel& best = trace.best();
        ParamLayout layout = ParamLayout::for_tree(best.tree);
        std::vector<std::string> names;
        for (const auto& s : layout.slots()) names.push_back(s.name);
        run["final"] = {{"tree", format_tree(best.tree)},
                        {"g", best.g},
                        {"map_params", std::vector<double>(best.map_params.data(),
                                                           best.map_params.data() +
                                                               best.map_params.size())},
                        {"param_names", names}};
        if (!ground_truth.is_null()) run["ground_truth"] = ground_truth;

        json summary = {{"kind", cfg.kind},
                        {"method", cfg.method},
                        {"final_tree", format_tree(best.tree)},
                        {"final_g", best.g},
                        {"evaluations", trace.evaluations.size()}};
        if (test.n() > 0 && best.map_params.size() > 0) {
            TestMetrics tm = evaluate_test_metrics(best.tree, best.map_params, train, test);
            run["test_metrics"] = {{"rmse", tm.rmse}, {"nll", tm.nll}};
            summary["test_rmse"] = tm.rmse;
            summary["test_nll"] = tm.nll;
        }
        if (!ground_truth.is_null()) summary["ground_truth_g"] = ground_truth["g"];
        result.final_g = best.g;
        result.final_tree = format_tree(best.tree);
        write_file(run_path, run.dump(2) + "\n");
        write_file(summary_path, summary.dump(2) + "\n");
        return result;
    }

    if (cfg.kind == "meta-regression") {
        Dataset base;
        if (!cfg.data_path.empty()) {
            std::mt19937_64 split_rng(mix_seed(cfg.seed, 0x5D17));
            base = load_dataset(cfg.data_path, cfg.target_column, cfg.train_size, split_rng).train;
        } else if (!cfg.kernel_text.empty()) {
            TreePtr truth = parse_tree(cfg.kernel_text);
            Eigen::VectorXd params = simulation_params(truth, cfg.sim_params);
            std::mt19937_64 sim_rng(mix_seed(cfg.seed, 0xD47A));
            base = simulate_gp_data(truth, params, cfg.sim_n, cfg.sim_noise, cfg.sim_dims, sim_rng);
        } else {
            throw std::invalid_argument("meta-regression needs a dataset path or a kernel to simulate");
        }
        SearchConfig sc = make_search_config(cfg, base.dims());

        std::mt19937_64 gen_rng(mix_seed(cfg.seed, 0x6E7A));
        TraceWriter writer(trace_path);
        MetaRegressionSets sets =
            generate_meta_regression_sets(base, sc, cfg.n_train, cfg.n_test, gen_rng);

        json rows = json::array();
        int idx = 0;
        for (const auto& obs : sets.train) {
            EvaluatedKernel row{obs.tree, obs.g, {}, 0.0, 0.0, idx++};
            rows.push_back(row_to_json(row));
            writer.add(row);
        }
        run["rows"] = rows;

        FeatureCache cache(base.dims());
        MetaHyperparams init;
        {
            double mean = 0;
            for (const auto& o : sets.train) mean += o.g;
            mean /= static_cast<double>(sets.train.size());
            double var = 0;
            for (const auto& o : sets.train) var += (o.g - mean) * (o.g - mean);
            var /= std::max<double>(1.0, static_cast<double>(sets.train.size()) - 1);
            init.mean_constant = mean;
            init.variance = std::max(var, 1e-4);
            init.noise = std::max(1e-6, 0.01 * init.variance);
        }
        std::mt19937_64 fit_rng(mix_seed(cfg.seed, 0xF17));
        MetaHyperparams hyp = fit_meta_hyperparams(sets.train, init, 4, fit_rng, cache);

        std::vector<TreePtr> test_trees;
        Eigen::VectorXd test_g(static_cast<Eigen::Index>(sets.test.size()));
        for (size_t i = 0; i < sets.test.size(); ++i) {
            test_trees.push_back(sets.test[i].tree);
            test_g[static_cast<Eigen::Index>(i)] = sets.test[i].g;
        }
        MetaPosterior post = meta_posterior(sets.train, hyp, test_trees, cache);

        double train_mean = 0;
        for (const auto& o : sets.train) train_mean += o.g;
        train_mean /= static_cast<double>(sets.train.size());

        std::mt19937_64 knn_rng(mix_seed(cfg.seed, 0x7AA));
        std::vector<double> knn_pred =
            knn_meta_predict(sets.train, test_trees, sets.graph, {1, 2, 3, 5, 8, 13, 21}, knn_rng);

        auto rmse_of = [&](auto&& pred_at) {
            double sse = 0;
            for (Eigen::Index i = 0; i < test_g.size(); ++i) {
                double e = pred_at(i) - test_g[i];
                sse += e * e;
            }
            return std::sqrt(sse / static_cast<double>(test_g.size()));
        };
        result.rmse_sot = rmse_of([&](Eigen::Index i) { return post.mean[i]; });
        result.rmse_knn = rmse_of([&](Eigen::Index i) { return knn_pred[static_cast<size_t>(i)]; });
        result.rmse_mean = rmse_of([&](Eigen::Index) { return train_mean; });

        run["meta_regression"] = {{"n_train", sets.train.size()},
                                  {"n_test", sets.test.size()},
                                  {"rmse_sot", result.rmse_sot},
                                  {"rmse_knn", result.rmse_knn},
                                  {"rmse_mean", result.rmse_mean}};
        json summary = {{"kind", cfg.kind},
                        {"rmse_sot", result.rmse_sot},
                        {"rmse_knn", result.rmse_knn},
                        {"rmse_mean", result.rmse_mean},
                        {"n_train", sets.train.size()},
                        {"n_test", sets.test.size()}};
        write_file(run_path, run.dump(2) + "\n");
        write_file(summary_path, summary.dump(2) + "\n");
        return result;
    }

    throw std::invalid_argument("unknown experiment kind: " + cfg.kind);
}

}  // namespace ksearch
