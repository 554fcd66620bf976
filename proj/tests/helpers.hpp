#ifndef KSEARCH_TESTS_HELPERS_HPP
#define KSEARCH_TESTS_HELPERS_HPP

#include <map>
#include <random>
#include <string>

#include "ksearch/features.hpp"
#include "ksearch/grammar.hpp"

namespace kst {

using ksearch::BaseKernelLabel;
using ksearch::ExpressionTree;
using ksearch::GrammarConfig;
using ksearch::KernelFamily;
using ksearch::OperatorLabel;
using ksearch::TreePtr;

inline TreePtr leaf(KernelFamily f, int dim = 0) {
    return ExpressionTree::leaf(BaseKernelLabel{f, dim});
}

inline TreePtr add(TreePtr a, TreePtr b) {
    return ExpressionTree::node(OperatorLabel::add(), std::move(a), std::move(b));
}

inline TreePtr mult(TreePtr a, TreePtr b) {
    return ExpressionTree::node(OperatorLabel::mult(), std::move(a), std::move(b));
}

// The worked-example pair: t1 = LIN * ((PER * SE) + SE),
// t2 = (LIN + SE) * ((PER * LIN) + SE).
inline TreePtr example_tree_1() {
    return mult(leaf(KernelFamily::LIN),
                add(mult(leaf(KernelFamily::PER), leaf(KernelFamily::SE)), leaf(KernelFamily::SE)));
}

inline TreePtr example_tree_2() {
    return mult(add(leaf(KernelFamily::LIN), leaf(KernelFamily::SE)),
                add(mult(leaf(KernelFamily::PER), leaf(KernelFamily::LIN)),
                    leaf(KernelFamily::SE)));
}

inline TreePtr random_tree(const GrammarConfig& config, int ops, std::mt19937_64& rng) {
    auto labels = config.base_labels();
    std::uniform_int_distribution<size_t> pick(0, labels.size() - 1);
    TreePtr t = ExpressionTree::leaf(labels[pick(rng)]);
    for (int i = 0; i < ops; ++i) t = ksearch::random_grammar_op(t, config, rng);
    return t;
}

// Randomly swaps the children of commutative nodes; the canonical hash and
// all feature distributions must not change.
inline TreePtr random_swap(const TreePtr& t, std::mt19937_64& rng) {
    if (t->is_leaf()) return t;
    TreePtr l = random_swap(t->left(), rng);
    TreePtr r = random_swap(t->right(), rng);
    if (t->op().commutative && std::bernoulli_distribution(0.5)(rng)) std::swap(l, r);
    return ExpressionTree::node(t->op(), std::move(l), std::move(r));
}

inline std::map<std::string, int> counts(const ksearch::FeatureMultiset& ms) {
    std::map<std::string, int> out;
    for (const auto& [key, count] : ms.entries) out[key.repr] = count;
    return out;
}

}  // namespace kst

#endif
