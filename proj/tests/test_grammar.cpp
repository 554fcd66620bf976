#include <doctest.h>

#include <set>
#include <unordered_set>

#include "helpers.hpp"

using namespace ksearch;
using kst::add;
using kst::leaf;
using kst::mult;

TEST_SUITE_BEGIN("grammar");

TEST_CASE("apply: add a base kernel at the root") {
    TreePtr t = leaf(KernelFamily::LIN);
    TreePtr out = apply_grammar_op(
        t, ExtendOp{OperatorLabel::add(), 0, {KernelFamily::SE, 0}});
    CHECK(format_tree(out) == "LIN0 + SE0");
    CHECK(format_tree(t) == "LIN0");  // input untouched
}

TEST_CASE("apply: exchange a leaf label") {
    TreePtr t = mult(leaf(KernelFamily::PER), leaf(KernelFamily::SE));
    TreePtr out = apply_grammar_op(t, ReplaceOp{0, {KernelFamily::LIN, 0}});
    CHECK(format_tree(out) == "LIN0 * SE0");
    CHECK(format_tree(t) == "PER0 * SE0");
}

TEST_CASE("apply: identity exchange is a permitted no-op") {
    TreePtr t = leaf(KernelFamily::SE);
    TreePtr out = apply_grammar_op(t, ReplaceOp{0, {KernelFamily::SE, 0}});
    CHECK(trees_equal(t, out));
}

TEST_CASE("apply: short op sequence reaches the motivating composite") {
    TreePtr t = leaf(KernelFamily::LIN);
    t = apply_grammar_op(t, ExtendOp{OperatorLabel::add(), 0, {KernelFamily::SE, 0}});
    t = apply_grammar_op(t, ExtendOp{OperatorLabel::mult(), 2, {KernelFamily::PER, 0}});
    t = apply_grammar_op(t, ExtendOp{OperatorLabel::add(), 2, {KernelFamily::SE, 0}});
    CHECK(format_tree(t) == "LIN0 + ((SE0 * PER0) + SE0)");
}

TEST_CASE("apply: invalid positions raise") {
    TreePtr t = leaf(KernelFamily::SE);
    CHECK_THROWS_AS(apply_grammar_op(t, ExtendOp{OperatorLabel::add(), 5, {KernelFamily::SE, 0}}),
                    std::out_of_range);
    CHECK_THROWS_AS(apply_grammar_op(t, ReplaceOp{1, {KernelFamily::SE, 0}}),
                    std::out_of_range);
}

TEST_CASE("random op: deterministic per seed") {
    GrammarConfig config;
    TreePtr t = leaf(KernelFamily::SE);
    std::mt19937_64 rng_a(42), rng_b(42);
    for (int i = 0; i < 50; ++i) {
        TreePtr a = random_grammar_op(t, config, rng_a);
        TreePtr b = random_grammar_op(t, config, rng_b);
        CHECK(trees_equal(a, b));
        t = a;
    }
}

TEST_CASE("random op: kind frequencies are uniform") {
    GrammarConfig config;
    TreePtr t = add(leaf(KernelFamily::SE), leaf(KernelFamily::LIN));
    std::mt19937_64 rng(7);
    int n_add = 0, n_mult = 0, n_replace = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        TreePtr out = random_grammar_op(t, config, rng);
        if (out->leaf_count() == t->leaf_count()) {
            ++n_replace;
        } else {
            // one operator node was added; find which kind is now in surplus
            int add_before = 0, mult_before = 0, add_after = 0, mult_after = 0;
            auto count_ops = [](const TreePtr& tree, int& adds, int& mults) {
                auto walk = [&](auto&& self, const TreePtr& n) -> void {
                    if (n->is_leaf()) return;
                    (n->op().kind == OpKind::ADD ? adds : mults)++;
                    self(self, n->left());
                    self(self, n->right());
                };
                walk(walk, tree);
            };
            count_ops(t, add_before, mult_before);
            count_ops(out, add_after, mult_after);
            if (add_after > add_before)
                ++n_add;
            else
                ++n_mult;
            CHECK(out->leaf_count() == t->leaf_count() + 1);
        }
    }
    CHECK(std::abs(n_add / double(draws) - 1.0 / 3) < 0.02);
    CHECK(std::abs(n_mult / double(draws) - 1.0 / 3) < 0.02);
    CHECK(std::abs(n_replace / double(draws) - 1.0 / 3) < 0.02);
}

TEST_CASE("random op: depth bound falls back to replacement") {
    GrammarConfig config;
    config.depth_bound = 1;
    TreePtr t = add(leaf(KernelFamily::SE), leaf(KernelFamily::LIN));
    std::mt19937_64 rng(3);
    for (int i = 0; i < 500; ++i) {
        TreePtr out = random_grammar_op(t, config, rng);
        CHECK(out->depth() <= 1);
        CHECK(out->leaf_count() == 2);
    }
}

TEST_CASE("neighbors: exhaustive one-leaf enumeration") {
    GrammarConfig config;
    config.base_families = {KernelFamily::SE, KernelFamily::RQ};
    TreePtr t = leaf(KernelFamily::SE);
    auto result = neighbors(t, config);
    REQUIRE(result.size() == 5);

    std::set<std::string> got;
    for (const auto& n : result) got.insert(format_tree(n));
    std::set<std::string> expected{"SE0 + SE0", "SE0 + RQ0", "SE0 * SE0", "SE0 * RQ0", "RQ0"};
    CHECK(got == expected);
}

TEST_CASE("neighbors: none equals the input and count stays under the bound") {
    GrammarConfig config;
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        TreePtr t = kst::random_tree(config, trial % 6, rng);
        auto result = neighbors(t, config);
        const int families = static_cast<int>(config.base_labels().size());
        const int bound = t->node_count() * 2 * families + t->leaf_count() * (families - 1);
        CHECK(static_cast<int>(result.size()) <= bound);
        std::unordered_set<std::uint64_t> seen;
        for (const auto& n : result) {
            CHECK(n->canonical_hash() != t->canonical_hash());
            CHECK(seen.insert(n->canonical_hash()).second);  // already deduplicated
        }
        // at least families*dims - 1 replacement neighbors survive dedup
        CHECK(static_cast<int>(result.size()) >= families - 1);
    }
}

TEST_CASE("canonical hash: child order under commutative operators") {
    TreePtr a = add(leaf(KernelFamily::LIN), leaf(KernelFamily::SE));
    TreePtr b = add(leaf(KernelFamily::SE), leaf(KernelFamily::LIN));
    CHECK(a->canonical_hash() == b->canonical_hash());

    TreePtr c = mult(leaf(KernelFamily::PER), leaf(KernelFamily::SE));
    TreePtr d = add(leaf(KernelFamily::PER), leaf(KernelFamily::SE));
    CHECK(c->canonical_hash() != d->canonical_hash());

    CHECK(leaf(KernelFamily::SE, 0)->canonical_hash() != leaf(KernelFamily::SE, 1)->canonical_hash());
}

TEST_CASE("canonical hash: invariant under random child swaps") {
    GrammarConfig config;
    config.dimensions = 2;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        TreePtr t = kst::random_tree(config, 1 + trial % 8, rng);
        TreePtr swapped = kst::random_swap(t, rng);
        CHECK(t->canonical_hash() == swapped->canonical_hash());
    }
}

TEST_CASE("canonical hash: no algebraic normalization beyond rotation") {
    // SE * (LIN + PER) vs SE*LIN + SE*PER describe the same kernel but the
    // hash intentionally keeps them distinct.
    TreePtr factored = mult(leaf(KernelFamily::SE), add(leaf(KernelFamily::LIN), leaf(KernelFamily::PER)));
    TreePtr expanded = add(mult(leaf(KernelFamily::SE), leaf(KernelFamily::LIN)),
                           mult(leaf(KernelFamily::SE), leaf(KernelFamily::PER)));
    CHECK(factored->canonical_hash() != expanded->canonical_hash());
}

TEST_CASE("initial trees: sizes, counts, determinism") {
    GrammarConfig config;
    std::mt19937_64 rng(9);
    auto trees = generate_initial_trees(config, rng);
    CHECK(trees.size() <= 4);
    CHECK(!trees.empty());
    for (const auto& t : trees) {
        CHECK(t->leaf_count() >= 1);
        CHECK(t->leaf_count() <= 3);
    }

    std::mt19937_64 rng_a(123), rng_b(123);
    auto a = generate_initial_trees(config, rng_a);
    auto b = generate_initial_trees(config, rng_b);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(trees_equal(a[i], b[i]));

    GrammarConfig wide;
    wide.base_families = {KernelFamily::SE, KernelFamily::RQ};
    wide.dimensions = 5;
    auto many = generate_initial_trees(wide, rng);
    CHECK(many.size() <= 10);
}

TEST_CASE("format and parse round-trip") {
    GrammarConfig config;
    config.dimensions = 3;
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        TreePtr t = kst::random_tree(config, trial % 10, rng);
        CHECK(trees_equal(t, parse_tree(format_tree(t))));
    }
    CHECK(format_tree(parse_tree("LIN0 + ((SE0 * PER0) + SE0)")) ==
          "LIN0 + ((SE0 * PER0) + SE0)");
}

TEST_CASE("parser rejects malformed input") {
    CHECK_THROWS_AS(parse_tree("SE"), std::invalid_argument);       // missing dimension
    CHECK_THROWS_AS(parse_tree("FOO0"), std::invalid_argument);     // unknown family
    CHECK_THROWS_AS(parse_tree("SE0 +"), std::invalid_argument);    // dangling operator
    CHECK_THROWS_AS(parse_tree("(SE0"), std::invalid_argument);     // unbalanced paren
    CHECK_THROWS_AS(parse_tree("SE0 RQ0"), std::invalid_argument);  // trailing tokens
}

TEST_CASE("config validation") {
    GrammarConfig config;
    config.base_families.clear();
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = GrammarConfig{};
    config.dimensions = 0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}

TEST_SUITE_END();
