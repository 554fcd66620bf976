#ifndef KSEARCH_SEARCH_HPP
#define KSEARCH_SEARCH_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <unordered_set>

#include "ksearch/gp.hpp"
#include "ksearch/metamodel.hpp"

namespace ksearch {

struct SearchConfig {
    GrammarConfig grammar;
    std::uint64_t seed = 0;

    int bo_iterations = 50;
    int n_population = 100;
    int n_offspring = 4;
    int ea_steps = 6;
    int map_restarts = 10;
    int meta_fit_restarts = 2;  // fresh starts per refit, on top of the warm start
    // Oracle-call budget for greedy / TreeGEP; 0 means |initial set| + bo_iterations.
    int eval_budget = 0;

    int gep_population = 200;
    double gep_reproduction_rate = 0.1;
    double gep_mutation_prob = 0.5;  // vs. crossover
    double gep_tournament_fraction = 0.1;
    int gep_mutation_leaves = 4;

    // Invoked after each oracle evaluation; lets callers flush partial results.
    std::function<void(const struct EvaluatedKernel&)> on_evaluation;

    void validate() const;  // population divisibility etc.
};

struct EvaluatedKernel {
    TreePtr tree;
    double g = 0;
    Eigen::VectorXd map_params;  // constrained, noise last; empty for synthetic oracles
    double oracle_seconds = 0;
    double cpu_seconds = 0;  // cumulative CPU time when this row was recorded
    int iteration = 0;       // 0 for the initial design, then the loop index
};

struct SearchTrace {
    std::vector<EvaluatedKernel> evaluations;
    std::vector<double> incumbent_g;  // running best, aligned with evaluations
    int failed_proposals = 0;

    const EvaluatedKernel& best() const;
};

// Evidence oracle: throws on numerical failure (the searches skip and log).
using EvidenceOracle = std::function<EvidenceResult(const TreePtr&)>;

// Laplace-evidence oracle over a dataset. Each tree gets its own generator
// seeded from (seed, canonical hash), so results do not depend on the order
// in which the search visits trees.
EvidenceOracle make_evidence_oracle(const Dataset& data, int map_restarts, std::uint64_t seed);

using BatchAcquisition = std::function<Eigen::VectorXd(std::span<const TreePtr>)>;

// Evolutionary maximizer of a batch acquisition. Starts from the base
// kernels plus the given context trees, padded to the population size with
// one-operation mutants; keeps the top n_survive each step and refills with
// their offspring. Returns the best final member whose canonical hash is not
// excluded, falling back to the overall best.
TreePtr evolve_acquisition(const BatchAcquisition& acq, const SearchConfig& config,
                           const std::vector<TreePtr>& context, std::mt19937_64& rng,
                           const std::unordered_set<std::uint64_t>& exclude = {});

// Bayesian-optimization kernel search with the tree-feature transport
// kernel-kernel as surrogate and EI as acquisition.
SearchTrace bo_search(const EvidenceOracle& oracle, const SearchConfig& config);

// Evaluates all base kernels, then repeatedly expands the incumbent's
// grammar neighborhood in seed-shuffled order.
SearchTrace greedy_search(const EvidenceOracle& oracle, const SearchConfig& config);

// Genetic-programming baseline: tournament selection, elitism, subtree
// mutation and crossover, fitness = normalized log evidence.
SearchTrace tree_gep_search(const EvidenceOracle& oracle, const SearchConfig& config);

// Convenience overloads that build the Laplace oracle from the dataset.
SearchTrace bo_search(const Dataset& data, const SearchConfig& config);
SearchTrace greedy_search(const Dataset& data, const SearchConfig& config);
SearchTrace tree_gep_search(const Dataset& data, const SearchConfig& config);

// Graph over trees recorded while a kernel set is generated; nodes are
// canonical hashes and edges connect trees one grammar operation apart.
class OperationGraph {
public:
    // Idempotent by canonical hash.
    void add_node(const TreePtr& tree);
    void add_edge(std::uint64_t parent_hash, std::uint64_t child_hash);
    bool contains(std::uint64_t hash) const { return index_.count(hash) > 0; }
    size_t node_count() const { return adjacency_.size(); }
    size_t edge_count() const { return edge_count_; }

    // Breadth-first hop counts from `from` to every node, ignoring edge
    // direction; -1 marks unreachable nodes. Order follows node insertion.
    std::vector<int> hop_distances(std::uint64_t from) const;
    int node_index(std::uint64_t hash) const;

private:
    std::unordered_map<std::uint64_t, int> index_;
    std::vector<std::vector<int>> adjacency_;
    size_t edge_count_ = 0;
};

// k-nearest-neighbor prediction over the operation graph: the mean g of the
// k training trees with the fewest hops, k selected from `k_candidates` by
// 5-fold cross-validation on the training pairs. Distance ties break by
// training insertion order; unreachable test trees get the train mean.
std::vector<double> knn_meta_predict(const std::vector<MetaObservation>& train,
                                     const std::vector<TreePtr>& test, const OperationGraph& graph,
                                     const std::vector<int>& k_candidates, std::mt19937_64& rng);

}  // namespace ksearch

#endif  // KSEARCH_SEARCH_HPP
