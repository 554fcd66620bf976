#ifndef KSEARCH_FEATURES_HPP
#define KSEARCH_FEATURES_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ksearch/grammar.hpp"

namespace ksearch {

// Key of a tree feature: a base label, a collapsed root-to-leaf path, or a
// subtree canonical hash. Equality is by id; `repr` is a human-readable
// representative kept for logging.
struct FeatureKey {
    std::uint64_t id;
    std::string repr;
};

// Sentinel for dimensions that carry no base kernel.
extern const FeatureKey kNullFeature;

struct FeatureMultiset {
    // Insertion-ordered; counts are strictly positive.
    std::vector<std::pair<FeatureKey, int>> entries;
    int total = 0;

    void add(FeatureKey key, int count = 1);
};

// A discrete probability distribution over feature ids, kept sorted by id so
// total-variation distances reduce to a merge walk.
struct FeatureDist {
    std::vector<std::pair<std::uint64_t, double>> mass;

    double sum() const;
    static FeatureDist from_multiset(const FeatureMultiset& ms);
};

struct FeatureDistributions {
    std::vector<FeatureDist> base;  // one entry per input dimension
    FeatureDist paths;
    FeatureDist subtrees;
    int dims = 1;
};

// Multiset of base labels at the leaves.
FeatureMultiset base_multiset(const TreePtr& tree);
// Per-dimension variant; dimensions without any base kernel get the null
// feature with count 1.
std::vector<FeatureMultiset> base_multisets_per_dim(const TreePtr& tree, int dims);

// One path per leaf: operator labels from the root down to the leaf's base
// label, with runs of identical consecutive operators collapsed to one
// occurrence (for associative+commutative operators). A bare leaf yields the
// single-element path holding just its label.
FeatureMultiset path_multiset(const TreePtr& tree);

// Every node's subtree, counted under the rotation-invariant canonical hash.
FeatureMultiset subtree_multiset(const TreePtr& tree);

FeatureDistributions to_distributions(const TreePtr& tree, int dims);

}  // namespace ksearch

#endif  // KSEARCH_FEATURES_HPP
