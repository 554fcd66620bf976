#include <doctest.h>

#include <cmath>

#include "helpers.hpp"

using namespace ksearch;
using kst::add;
using kst::counts;
using kst::leaf;
using kst::mult;

TEST_SUITE_BEGIN("features");

TEST_CASE("base multiset of the worked-example trees") {
    auto got1 = counts(base_multiset(kst::example_tree_1()));
    CHECK(got1 == std::map<std::string, int>{{"LIN0", 1}, {"SE0", 2}, {"PER0", 1}});

    auto got2 = counts(base_multiset(kst::example_tree_2()));
    CHECK(got2 == std::map<std::string, int>{{"LIN0", 2}, {"SE0", 2}, {"PER0", 1}});

    CHECK(counts(base_multiset(leaf(KernelFamily::SE))) == std::map<std::string, int>{{"SE0", 1}});
}

TEST_CASE("per-dimension base multisets insert the null feature") {
    TreePtr t = add(leaf(KernelFamily::SE, 0), leaf(KernelFamily::LIN, 0));
    auto per_dim = base_multisets_per_dim(t, 2);
    REQUIRE(per_dim.size() == 2);
    CHECK(counts(per_dim[0]) == std::map<std::string, int>{{"SE0", 1}, {"LIN0", 1}});
    CHECK(counts(per_dim[1]) == std::map<std::string, int>{{"<null>", 1}});
}

TEST_CASE("path multiset of the worked-example trees") {
    auto got1 = counts(path_multiset(kst::example_tree_1()));
    CHECK(got1 == std::map<std::string, int>{{"MULT->ADD->MULT->PER0", 1},
                                             {"MULT->ADD->MULT->SE0", 1},
                                             {"MULT->ADD->SE0", 1},
                                             {"MULT->LIN0", 1}});

    // paths through the two different ADD nodes of t2 merge by label sequence
    auto got2 = counts(path_multiset(kst::example_tree_2()));
    CHECK(got2 == std::map<std::string, int>{{"MULT->ADD->MULT->PER0", 1},
                                             {"MULT->ADD->MULT->LIN0", 1},
                                             {"MULT->ADD->SE0", 2},
                                             {"MULT->ADD->LIN0", 1}});
}

TEST_CASE("path collapse merges runs of one associative commutative operator") {
    TreePtr t = add(leaf(KernelFamily::LIN), add(leaf(KernelFamily::SE), leaf(KernelFamily::PER)));
    auto got = counts(path_multiset(t));
    CHECK(got == std::map<std::string, int>{{"ADD->LIN0", 1}, {"ADD->SE0", 1}, {"ADD->PER0", 1}});

    TreePtr nested = add(leaf(KernelFamily::LIN),
                         add(mult(leaf(KernelFamily::PER), leaf(KernelFamily::SE)),
                             leaf(KernelFamily::SE)));
    auto got2 = counts(path_multiset(nested));
    CHECK(got2 == std::map<std::string, int>{{"ADD->LIN0", 1},
                                             {"ADD->MULT->PER0", 1},
                                             {"ADD->MULT->SE0", 1},
                                             {"ADD->SE0", 1}});
}

TEST_CASE("bare leaf path is the singleton base label") {
    CHECK(counts(path_multiset(leaf(KernelFamily::RQ))) ==
          std::map<std::string, int>{{"RQ0", 1}});
}

TEST_CASE("paths never contain two identical consecutive operators") {
    GrammarConfig config;
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        TreePtr t = kst::random_tree(config, trial % 10, rng);
        for (const auto& [key, count] : path_multiset(t).entries) {
            CHECK(key.repr.find("ADD->ADD") == std::string::npos);
            CHECK(key.repr.find("MULT->MULT") == std::string::npos);
        }
    }
}

TEST_CASE("subtree multiset of the worked-example tree") {
    auto ms = subtree_multiset(kst::example_tree_1());
    CHECK(ms.entries.size() == 6);
    CHECK(ms.total == 7);
    auto got = counts(ms);
    CHECK(got.at("SE0") == 2);
    CHECK(got.at("LIN0") == 1);
    CHECK(got.at("PER0") == 1);
    CHECK(got.at("PER0 * SE0") == 1);
    CHECK(got.at("(PER0 * SE0) + SE0") == 1);
    CHECK(got.at("LIN0 * ((PER0 * SE0) + SE0)") == 1);
}

TEST_CASE("rotated subtrees count under one key") {
    TreePtr t = mult(add(leaf(KernelFamily::LIN), leaf(KernelFamily::SE)),
                     add(leaf(KernelFamily::SE), leaf(KernelFamily::LIN)));
    auto ms = subtree_multiset(t);
    CHECK(ms.total == 7);
    CHECK(ms.entries.size() == 4);  // root, the shared pair subtree, LIN, SE
    auto got = counts(ms);
    CHECK(got.at("LIN0 + SE0") == 2);
}

TEST_CASE("a bare leaf is its own only subtree") {
    auto ms = subtree_multiset(leaf(KernelFamily::SE));
    CHECK(ms.total == 1);
    CHECK(counts(ms) == std::map<std::string, int>{{"SE0", 1}});
}

TEST_CASE("structural count identities") {
    GrammarConfig config;
    config.dimensions = 2;
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        TreePtr t = kst::random_tree(config, trial % 12, rng);
        CHECK(path_multiset(t).total == t->leaf_count());
        CHECK(subtree_multiset(t).total == t->node_count());
    }
}

TEST_CASE("distributions normalize to one and match the example frequencies") {
    FeatureDistributions fd = to_distributions(kst::example_tree_1(), 1);
    REQUIRE(fd.base.size() == 1);
    CHECK(fd.base[0].sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fd.paths.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fd.subtrees.sum() == doctest::Approx(1.0).epsilon(1e-12));

    auto mass_of = [&](const FeatureDist& d, const TreePtr& key_tree) {
        for (const auto& [id, m] : d.mass)
            if (id == key_tree->canonical_hash()) return m;
        return 0.0;
    };
    CHECK(mass_of(fd.base[0], leaf(KernelFamily::LIN)) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(mass_of(fd.base[0], leaf(KernelFamily::SE)) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(mass_of(fd.base[0], leaf(KernelFamily::PER)) == doctest::Approx(0.25).epsilon(1e-12));

    FeatureDistributions fd2 = to_distributions(kst::example_tree_2(), 1);
    CHECK(mass_of(fd2.base[0], leaf(KernelFamily::LIN)) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(mass_of(fd2.base[0], leaf(KernelFamily::SE)) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(mass_of(fd2.base[0], leaf(KernelFamily::PER)) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("all three distributions are rotation invariant") {
    GrammarConfig config;
    config.dimensions = 2;
    std::mt19937_64 rng(37);
    auto same = [](const FeatureDist& a, const FeatureDist& b) {
        if (a.mass.size() != b.mass.size()) return false;
        for (size_t i = 0; i < a.mass.size(); ++i)
            if (a.mass[i] != b.mass[i]) return false;
        return true;
    };
    for (int trial = 0; trial < 200; ++trial) {
        TreePtr t = kst::random_tree(config, 1 + trial % 8, rng);
        TreePtr swapped = kst::random_swap(t, rng);
        FeatureDistributions fa = to_distributions(t, 2);
        FeatureDistributions fb = to_distributions(swapped, 2);
        CHECK(same(fa.base[0], fb.base[0]));
        CHECK(same(fa.base[1], fb.base[1]));
        CHECK(same(fa.paths, fb.paths));
        CHECK(same(fa.subtrees, fb.subtrees));
    }
}

TEST_CASE("per-dimension base mass mirrors the leaf partition") {
    GrammarConfig config;
    config.dimensions = 3;
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        TreePtr t = kst::random_tree(config, trial % 10, rng);
        auto per_dim = base_multisets_per_dim(t, 3);
        std::vector<int> by_dim(3, 0);
        for (const auto& [key, count] : base_multiset(t).entries) {
            int dim = key.repr.back() - '0';
            by_dim[static_cast<size_t>(dim)] += count;
        }
        for (int d = 0; d < 3; ++d) {
            int non_null = 0;
            for (const auto& [key, count] : per_dim[static_cast<size_t>(d)].entries)
                if (key.id != kNullFeature.id) non_null += count;
            CHECK(non_null == by_dim[static_cast<size_t>(d)]);
        }
    }
}

TEST_SUITE_END();
