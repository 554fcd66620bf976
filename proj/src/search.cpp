#include "ksearch/search.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <numeric>
#include <stdexcept>

namespace ksearch {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double cpu_seconds_now() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

struct TraceRecorder {
    SearchTrace trace;
    double cpu_start = cpu_seconds_now();
    double best = -std::numeric_limits<double>::infinity();
    const std::function<void(const EvaluatedKernel&)>* callback = nullptr;

    explicit TraceRecorder(const SearchConfig& config) {
        if (config.on_evaluation) callback = &config.on_evaluation;
    }

    void record(TreePtr tree, const EvidenceResult& ev, int iteration) {
        EvaluatedKernel row;
        row.tree = std::move(tree);
        row.g = ev.g;
        row.map_params = ev.map_params;
        row.oracle_seconds = ev.seconds;
        row.cpu_seconds = cpu_seconds_now() - cpu_start;
        row.iteration = iteration;
        best = std::max(best, ev.g);
        trace.evaluations.push_back(std::move(row));
        trace.incumbent_g.push_back(best);
        if (callback) (*callback)(trace.evaluations.back());
    }
};

}  // namespace

void SearchConfig::validate() const {
    grammar.validate();
    if (bo_iterations < 0) throw std::invalid_argument("bo_iterations must be >= 0");
    if (n_population < 1 || n_offspring < 0 || ea_steps < 0)
        throw std::invalid_argument("invalid evolutionary-optimizer sizes");
    if (n_population % (n_offspring + 1) != 0)
        throw std::invalid_argument("n_population must be divisible by n_offspring + 1");
    if (map_restarts < 1) throw std::invalid_argument("map_restarts must be >= 1");
    if (gep_population < 2) throw std::invalid_argument("gep_population must be >= 2");
    if (gep_reproduction_rate < 0 || gep_reproduction_rate > 1 || gep_mutation_prob < 0 ||
        gep_mutation_prob > 1 || gep_tournament_fraction <= 0 || gep_tournament_fraction > 1)
        throw std::invalid_argument("TreeGEP rates must lie in [0, 1]");
    if (gep_mutation_leaves < 1) throw std::invalid_argument("gep_mutation_leaves must be >= 1");
}

const EvaluatedKernel& SearchTrace::best() const {
    if (evaluations.empty()) throw std::runtime_error("empty search trace");
    size_t best_idx = 0;
    for (size_t i = 1; i < evaluations.size(); ++i)
        if (evaluations[i].g > evaluations[best_idx].g) best_idx = i;
    return evaluations[best_idx];
}

EvidenceOracle make_evidence_oracle(const Dataset& data, int map_restarts, std::uint64_t seed) {
    return [data, map_restarts, seed](const TreePtr& tree) {
        std::mt19937_64 rng(mix_seed(seed, tree->canonical_hash()));
        EvidenceResult ev = laplace_log_evidence(tree, data, map_restarts, rng);
        if (!std::isfinite(ev.g)) throw std::runtime_error("non-finite log evidence");
        return ev;
    };
}

TreePtr evolve_acquisition(const BatchAcquisition& acq, const SearchConfig& config,
                           const std::vector<TreePtr>& context, std::mt19937_64& rng,
                           const std::unordered_set<std::uint64_t>& exclude) {
    config.validate();
    const int n_survive = config.n_population / (config.n_offspring + 1);

    // Seed with all base kernels plus the context, pad with one-op mutants.
    std::vector<TreePtr> population;
    population.reserve(static_cast<size_t>(config.n_population));
    for (const BaseKernelLabel& label : config.grammar.base_labels())
        population.push_back(ExpressionTree::leaf(label));
    for (const TreePtr& t : context) population.push_back(t);
    if (static_cast<int>(population.size()) > config.n_population)
        population.resize(static_cast<size_t>(config.n_population));
    const size_t n_seeds = population.size();
    std::uniform_int_distribution<size_t> seed_dist(0, n_seeds - 1);
    while (static_cast<int>(population.size()) < config.n_population) {
        const TreePtr& parent = population[seed_dist(rng)];
        population.push_back(random_grammar_op(parent, config.grammar, rng));
    }

    auto ranked_order = [](const Eigen::VectorXd& fitness) {
        std::vector<size_t> order(static_cast<size_t>(fitness.size()));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return fitness[static_cast<Eigen::Index>(a)] > fitness[static_cast<Eigen::Index>(b)];
        });
        return order;
    };

    for (int step = 0; step < config.ea_steps; ++step) {
        Eigen::VectorXd fitness = acq(population);
        auto order = ranked_order(fitness);
        std::vector<TreePtr> next;
        next.reserve(static_cast<size_t>(config.n_population));
        for (int s = 0; s < n_survive; ++s) next.push_back(population[order[static_cast<size_t>(s)]]);
        for (int s = 0; s < n_survive; ++s) {
            const TreePtr& parent = next[static_cast<size_t>(s)];
            for (int o = 0; o < config.n_offspring; ++o)
                next.push_back(random_grammar_op(parent, config.grammar, rng));
        }
        population = std::move(next);
    }

    Eigen::VectorXd fitness = acq(population);
    auto order = ranked_order(fitness);
    for (size_t idx : order)
        if (!exclude.count(population[idx]->canonical_hash())) return population[idx];
    return population[order.front()];
}

SearchTrace bo_search(const EvidenceOracle& oracle, const SearchConfig& config) {
    config.validate();
    std::mt19937_64 rng_init(mix_seed(config.seed, 0xA11CE));
    std::mt19937_64 rng_ea(mix_seed(config.seed, 0xEA));
    std::mt19937_64 rng_meta(mix_seed(config.seed, 0x3E7A));

    FeatureCache cache(config.grammar.dimensions);
    TraceRecorder rec(config);
    MetaDataset md;
    std::unordered_set<std::uint64_t> excluded;  // evaluated or failed

    for (const TreePtr& tree : generate_initial_trees(config.grammar, rng_init)) {
        if (excluded.count(tree->canonical_hash())) continue;
        try {
            EvidenceResult ev = oracle(tree);
            md.push_back({tree, ev.g});
            rec.record(tree, ev, 0);
        } catch (const std::exception&) {
            ++rec.trace.failed_proposals;
        }
        excluded.insert(tree->canonical_hash());
    }
    if (md.empty()) throw std::runtime_error("no initial kernel could be evaluated");

    auto g_stats = [&]() {
        double mean = 0, var = 0;
        for (const auto& o : md) mean += o.g;
        mean /= static_cast<double>(md.size());
        for (const auto& o : md) var += (o.g - mean) * (o.g - mean);
        var /= std::max<double>(1.0, static_cast<double>(md.size()) - 1);
        return std::pair<double, double>(mean, var);
    };
    auto [mean0, var0] = g_stats();
    MetaHyperparams hyp;
    hyp.mean_constant = mean0;
    hyp.variance = std::max(var0, 1e-4);
    hyp.noise = std::max(1e-6, 0.01 * hyp.variance);

    for (int t = 1; t <= config.bo_iterations; ++t) {
        if (md.size() >= 2)
            hyp = fit_meta_hyperparams(md, hyp, config.meta_fit_restarts, rng_meta, cache);

        double best_g = rec.best;
        BatchAcquisition acq = [&](std::span<const TreePtr> trees) {
            MetaPosterior post = meta_posterior(md, hyp, trees, cache);
            return expected_improvement(post.mean, post.variance, best_g);
        };

        // Context: incumbent plus the top meta-dataset trees.
        std::vector<const MetaObservation*> sorted;
        sorted.reserve(md.size());
        for (const auto& o : md) sorted.push_back(&o);
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const auto* a, const auto* b) { return a->g > b->g; });
        std::vector<TreePtr> context;
        std::unordered_set<std::uint64_t> context_seen;
        for (size_t i = 0; i < sorted.size() && context.size() < 5; ++i)
            if (context_seen.insert(sorted[i]->tree->canonical_hash()).second)
                context.push_back(sorted[i]->tree);

        bool evaluated = false;
        for (int attempt = 0; attempt < 2 && !evaluated; ++attempt) {
            TreePtr candidate = evolve_acquisition(acq, config, context, rng_ea, excluded);
            if (excluded.count(candidate->canonical_hash())) {
                ++rec.trace.failed_proposals;
                break;  // whole final population already seen; leave a gap this iteration
            }
            excluded.insert(candidate->canonical_hash());
            try {
                EvidenceResult ev = oracle(candidate);
                md.push_back({candidate, ev.g});
                rec.record(candidate, ev, t);
                evaluated = true;
            } catch (const std::exception&) {
                ++rec.trace.failed_proposals;
            }
        }
    }
    return rec.trace;
}

SearchTrace greedy_search(const EvidenceOracle& oracle, const SearchConfig& config) {
    config.validate();
    std::mt19937_64 rng(mix_seed(config.seed, 0x62EED));
    const auto base_labels = config.grammar.base_labels();
    const int budget = config.eval_budget > 0
                           ? config.eval_budget
                           : static_cast<int>(base_labels.size()) + config.bo_iterations;

    TraceRecorder rec(config);
    std::unordered_set<std::uint64_t> evaluated;
    std::unordered_set<std::uint64_t> expanded;
    std::vector<std::pair<TreePtr, double>> scored;  // evaluation order

    auto evaluate = [&](const TreePtr& tree, int level) -> bool {
        if (static_cast<int>(rec.trace.evaluations.size()) >= budget) return false;
        if (!evaluated.insert(tree->canonical_hash()).second) return true;
        try {
            EvidenceResult ev = oracle(tree);
            scored.emplace_back(tree, ev.g);
            rec.record(tree, ev, level);
        } catch (const std::exception&) {
            ++rec.trace.failed_proposals;
        }
        return true;
    };

    for (const BaseKernelLabel& label : base_labels)
        if (!evaluate(ExpressionTree::leaf(label), 0)) break;

    std::deque<TreePtr> frontier;
    int level = 0;
    while (static_cast<int>(rec.trace.evaluations.size()) < budget) {
        if (frontier.empty()) {
            if (scored.empty()) break;
            const auto best_it = std::max_element(
                scored.begin(), scored.end(),
                [](const auto& a, const auto& b) { return a.second < b.second; });
            const TreePtr& incumbent = best_it->first;
            if (!expanded.insert(incumbent->canonical_hash()).second) break;  // no improvement left
            std::vector<TreePtr> neigh = neighbors(incumbent, config.grammar);
            std::erase_if(neigh, [&](const TreePtr& t) { return evaluated.count(t->canonical_hash()); });
            std::shuffle(neigh.begin(), neigh.end(), rng);
            for (auto& t : neigh) frontier.push_back(std::move(t));
            ++level;
            if (frontier.empty()) break;
        }
        TreePtr next = frontier.front();
        frontier.pop_front();
        if (!evaluate(next, level)) break;
    }
    return rec.trace;
}

namespace {

TreePtr random_subtree_of_size(int leaves, const GrammarConfig& grammar, std::mt19937_64& rng) {
    const auto labels = grammar.base_labels();
    std::uniform_int_distribution<size_t> label_dist(0, labels.size() - 1);
    TreePtr t = ExpressionTree::leaf(labels[label_dist(rng)]);
    std::uniform_int_distribution<int> op_dist(0, 1);
    for (int i = 1; i < leaves; ++i) {
        std::uniform_int_distribution<int> pos_dist(0, t->node_count() - 1);
        OperatorLabel op = op_dist(rng) == 0 ? OperatorLabel::add() : OperatorLabel::mult();
        t = apply_grammar_op(t, ExtendOp{op, pos_dist(rng), labels[label_dist(rng)]});
    }
    return t;
}

}  // namespace

SearchTrace tree_gep_search(const EvidenceOracle& oracle, const SearchConfig& config) {
    config.validate();
    std::mt19937_64 rng(mix_seed(config.seed, 0x63E9));
    const auto base_labels = config.grammar.base_labels();
    const int budget = config.eval_budget > 0
                           ? config.eval_budget
                           : static_cast<int>(base_labels.size()) + config.bo_iterations;

    TraceRecorder rec(config);
    std::unordered_map<std::uint64_t, double> fitness_by_hash;
    std::unordered_set<std::uint64_t> attempted;

    auto evaluate = [&](const TreePtr& tree, int generation) -> bool {
        if (static_cast<int>(rec.trace.evaluations.size()) >= budget) return false;
        if (!attempted.insert(tree->canonical_hash()).second) return true;
        try {
            EvidenceResult ev = oracle(tree);
            fitness_by_hash[tree->canonical_hash()] = ev.g;
            rec.record(tree, ev, generation);
        } catch (const std::exception&) {
            ++rec.trace.failed_proposals;
        }
        return true;
    };

    // Initial population: the usual initial design, padded with one-op mutants.
    std::vector<TreePtr> population = generate_initial_trees(config.grammar, rng);
    if (static_cast<int>(population.size()) > config.gep_population)
        population.resize(static_cast<size_t>(config.gep_population));
    {
        std::uniform_int_distribution<size_t> pick(0, population.size() - 1);
        while (static_cast<int>(population.size()) < config.gep_population) {
            const TreePtr& parent = population[pick(rng)];
            population.push_back(random_grammar_op(parent, config.grammar, rng));
        }
    }

    const int elites = std::max(
        1, static_cast<int>(std::lround(config.gep_reproduction_rate * config.gep_population)));
    const int tournament = std::max(
        1, static_cast<int>(std::lround(config.gep_tournament_fraction * config.gep_population)));

    int generation = 0;
    while (true) {
        bool budget_left = true;
        for (const TreePtr& t : population)
            if (!(budget_left = evaluate(t, generation))) break;
        if (!budget_left || static_cast<int>(rec.trace.evaluations.size()) >= budget) break;

        auto fitness = [&](const TreePtr& t) {
            auto it = fitness_by_hash.find(t->canonical_hash());
            return it == fitness_by_hash.end() ? -std::numeric_limits<double>::infinity()
                                               : it->second;
        };
        std::vector<size_t> order(population.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return fitness(population[a]) > fitness(population[b]);
        });

        std::uniform_int_distribution<size_t> pick(0, population.size() - 1);
        auto tournament_select = [&]() -> const TreePtr& {
            size_t best = pick(rng);
            for (int i = 1; i < tournament; ++i) {
                size_t c = pick(rng);
                if (fitness(population[c]) > fitness(population[best])) best = c;
            }
            return population[best];
        };

        std::vector<TreePtr> next;
        next.reserve(population.size());
        for (int e = 0; e < elites; ++e) next.push_back(population[order[static_cast<size_t>(e)]]);
        std::bernoulli_distribution mutate_coin(config.gep_mutation_prob);
        while (static_cast<int>(next.size()) < config.gep_population) {
            if (mutate_coin(rng)) {
                const TreePtr& parent = tournament_select();
                std::uniform_int_distribution<int> pos(0, parent->node_count() - 1);
                TreePtr sub = random_subtree_of_size(config.gep_mutation_leaves, config.grammar, rng);
                next.push_back(replace_subtree_at(parent, pos(rng), sub));
            } else {
                const TreePtr& p1 = tournament_select();
                const TreePtr& p2 = tournament_select();
                std::uniform_int_distribution<int> pos1(0, p1->node_count() - 1);
                std::uniform_int_distribution<int> pos2(0, p2->node_count() - 1);
                int i1 = pos1(rng), i2 = pos2(rng);
                TreePtr s1 = subtree_at(p1, i1);
                TreePtr s2 = subtree_at(p2, i2);
                next.push_back(replace_subtree_at(p1, i1, s2));
                if (static_cast<int>(next.size()) < config.gep_population)
                    next.push_back(replace_subtree_at(p2, i2, s1));
            }
        }
        population = std::move(next);
        ++generation;
    }
    return rec.trace;
}

SearchTrace bo_search(const Dataset& data, const SearchConfig& config) {
    return bo_search(make_evidence_oracle(data, config.map_restarts, config.seed), config);
}
SearchTrace greedy_search(const Dataset& data, const SearchConfig& config) {
    return greedy_search(make_evidence_oracle(data, config.map_restarts, config.seed), config);
}
SearchTrace tree_gep_search(const Dataset& data, const SearchConfig& config) {
    return tree_gep_search(make_evidence_oracle(data, config.map_restarts, config.seed), config);
}

void OperationGraph::add_node(const TreePtr& tree) {
    auto [it, inserted] = index_.emplace(tree->canonical_hash(), static_cast<int>(adjacency_.size()));
    if (inserted) adjacency_.emplace_back();
}

void OperationGraph::add_edge(std::uint64_t parent_hash, std::uint64_t child_hash) {
    auto pi = index_.find(parent_hash);
    auto ci = index_.find(child_hash);
    if (pi == index_.end() || ci == index_.end())
        throw std::invalid_argument("operation-graph edge references an unknown node");
    if (pi->second == ci->second) return;
    adjacency_[static_cast<size_t>(pi->second)].push_back(ci->second);
    adjacency_[static_cast<size_t>(ci->second)].push_back(pi->second);
    ++edge_count_;
}

int OperationGraph::node_index(std::uint64_t hash) const {
    auto it = index_.find(hash);
    return it == index_.end() ? -1 : it->second;
}

std::vector<int> OperationGraph::hop_distances(std::uint64_t from) const {
    std::vector<int> dist(adjacency_.size(), -1);
    int start = node_index(from);
    if (start < 0) return dist;
    std::deque<int> queue{start};
    dist[static_cast<size_t>(start)] = 0;
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        for (int v : adjacency_[static_cast<size_t>(u)]) {
            if (dist[static_cast<size_t>(v)] < 0) {
                dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
                queue.push_back(v);
            }
        }
    }
    return dist;
}

namespace {

// Mean g of the k nearest members of `pool` by (hops, insertion order).
double knn_predict_one(const std::vector<int>& hops,
                       const std::vector<std::pair<int, double>>& pool /* (node idx, g) */, int k) {
    std::vector<std::pair<int, size_t>> reachable;  // (distance, pool position)
    for (size_t i = 0; i < pool.size(); ++i) {
        int d = pool[i].first >= 0 ? hops[static_cast<size_t>(pool[i].first)] : -1;
        if (d >= 0) reachable.emplace_back(d, i);
    }
    if (reachable.empty()) {
        double mean = 0;
        for (const auto& [idx, g] : pool) mean += g;
        return mean / static_cast<double>(pool.size());
    }
    std::stable_sort(reachable.begin(), reachable.end());
    double mean = 0;
    const int use = std::min<int>(k, static_cast<int>(reachable.size()));
    for (int i = 0; i < use; ++i) mean += pool[reachable[static_cast<size_t>(i)].second].second;
    return mean / use;
}

}  // namespace

std::vector<double> knn_meta_predict(const std::vector<MetaObservation>& train,
                                     const std::vector<TreePtr>& test, const OperationGraph& graph,
                                     const std::vector<int>& k_candidates, std::mt19937_64& rng) {
    if (train.empty()) throw std::invalid_argument("knn needs a non-empty training set");
    if (k_candidates.empty()) throw std::invalid_argument("knn needs candidate k values");

    std::vector<int> train_nodes(train.size());
    for (size_t i = 0; i < train.size(); ++i)
        train_nodes[i] = graph.node_index(train[i].tree->canonical_hash());

    // 5-fold cross-validation over the training pairs.
    const int n_folds = std::min<int>(5, static_cast<int>(train.size()));
    std::vector<size_t> perm(train.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    int best_k = k_candidates.front();
    double best_rmse = std::numeric_limits<double>::infinity();
    for (int k : k_candidates) {
        double sse = 0;
        size_t count = 0;
        for (int fold = 0; fold < n_folds; ++fold) {
            std::vector<std::pair<int, double>> pool;
            std::vector<size_t> held;
            for (size_t i = 0; i < perm.size(); ++i) {
                if (static_cast<int>(i % static_cast<size_t>(n_folds)) == fold)
                    held.push_back(perm[i]);
                else
                    pool.emplace_back(train_nodes[perm[i]], train[perm[i]].g);
            }
            if (pool.empty()) continue;
            for (size_t idx : held) {
                auto hops = graph.hop_distances(train[idx].tree->canonical_hash());
                double pred = knn_predict_one(hops, pool, k);
                sse += (pred - train[idx].g) * (pred - train[idx].g);
                ++count;
            }
        }
        double rmse = count ? std::sqrt(sse / static_cast<double>(count))
                            : std::numeric_limits<double>::infinity();
        if (rmse < best_rmse - 1e-15) {
            best_rmse = rmse;
            best_k = k;
        }
    }

    std::vector<std::pair<int, double>> full_pool;
    full_pool.reserve(train.size());
    for (size_t i = 0; i < train.size(); ++i) full_pool.emplace_back(train_nodes[i], train[i].g);
    std::vector<double> predictions;
    predictions.reserve(test.size());
    for (const TreePtr& t : test) {
        auto hops = graph.hop_distances(t->canonical_hash());
        predictions.push_back(knn_predict_one(hops, full_pool, best_k));
    }
    return predictions;
}

}  // namespace ksearch
