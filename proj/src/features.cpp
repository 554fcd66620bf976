#include "ksearch/features.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace ksearch {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

const FeatureKey kNullFeature{fnv1a("<null>"), "<null>"};

void FeatureMultiset::add(FeatureKey key, int count) {
    for (auto& [k, c] : entries) {
        if (k.id == key.id) {
            c += count;
            total += count;
            return;
        }
    }
    entries.emplace_back(std::move(key), count);
    total += count;
}

double FeatureDist::sum() const {
    double s = 0.0;
    for (const auto& [id, m] : mass) s += m;
    return s;
}

FeatureDist FeatureDist::from_multiset(const FeatureMultiset& ms) {
    if (ms.total <= 0) throw std::invalid_argument("cannot normalize an empty multiset");
    FeatureDist dist;
    dist.mass.reserve(ms.entries.size());
    for (const auto& [key, count] : ms.entries)
        dist.mass.emplace_back(key.id, static_cast<double>(count) / ms.total);
    std::sort(dist.mass.begin(), dist.mass.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return dist;
}

namespace {

FeatureKey leaf_key(const BaseKernelLabel& label) {
    return {ExpressionTree::leaf(label)->canonical_hash(), label.to_string()};
}

void collect_leaves(const TreePtr& t, const std::function<void(const BaseKernelLabel&)>& sink) {
    if (t->is_leaf()) {
        sink(t->label());
        return;
    }
    collect_leaves(t->left(), sink);
    collect_leaves(t->right(), sink);
}

}  // namespace

FeatureMultiset base_multiset(const TreePtr& tree) {
    FeatureMultiset ms;
    collect_leaves(tree, [&](const BaseKernelLabel& l) { ms.add(leaf_key(l)); });
    return ms;
}

std::vector<FeatureMultiset> base_multisets_per_dim(const TreePtr& tree, int dims) {
    if (dims < 1) throw std::invalid_argument("dims must be >= 1");
    std::vector<FeatureMultiset> per_dim(static_cast<size_t>(dims));
    collect_leaves(tree, [&](const BaseKernelLabel& l) {
        if (l.dimension < 0 || l.dimension >= dims)
            throw std::invalid_argument("base label " + l.to_string() +
                                        " outside dataset dimension " + std::to_string(dims));
        per_dim[static_cast<size_t>(l.dimension)].add(leaf_key(l));
    });
    for (auto& ms : per_dim)
        if (ms.total == 0) ms.add(kNullFeature);
    return per_dim;
}

namespace {

struct PathState {
    std::vector<OpKind> ops;  // collapsed operator run
    std::string repr;
};

void walk_paths(const TreePtr& t, PathState& state, FeatureMultiset& out) {
    if (t->is_leaf()) {
        std::string repr = state.repr + t->label().to_string();
        std::uint64_t id = fnv1a(repr);
        out.add({id, std::move(repr)});
        return;
    }
    const OperatorLabel& op = t->op();
    bool collapse = op.commutative && op.associative && !state.ops.empty() &&
                    state.ops.back() == op.kind;
    PathState next = state;
    if (!collapse) {
        next.ops.push_back(op.kind);
        next.repr += op.name();
        next.repr += "->";
    }
    walk_paths(t->left(), next, out);
    walk_paths(t->right(), next, out);
}

void walk_subtrees(const TreePtr& t, FeatureMultiset& out) {
    out.add({t->canonical_hash(), format_tree(t)});
    if (!t->is_leaf()) {
        walk_subtrees(t->left(), out);
        walk_subtrees(t->right(), out);
    }
}

}  // namespace

FeatureMultiset path_multiset(const TreePtr& tree) {
    FeatureMultiset ms;
    PathState state;
    walk_paths(tree, state, ms);
    return ms;
}

FeatureMultiset subtree_multiset(const TreePtr& tree) {
    FeatureMultiset ms;
    walk_subtrees(tree, ms);
    return ms;
}

FeatureDistributions to_distributions(const TreePtr& tree, int dims) {
    FeatureDistributions fd;
    fd.dims = dims;
    auto per_dim = base_multisets_per_dim(tree, dims);
    fd.base.reserve(per_dim.size());
    for (const auto& ms : per_dim) fd.base.push_back(FeatureDist::from_multiset(ms));
    fd.paths = FeatureDist::from_multiset(path_multiset(tree));
    fd.subtrees = FeatureDist::from_multiset(subtree_multiset(tree));
    return fd;
}

}  // namespace ksearch
