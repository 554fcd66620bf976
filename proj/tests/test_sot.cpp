#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "helpers.hpp"
#include "ksearch/sot.hpp"

using namespace ksearch;
using kst::add;
using kst::leaf;
using kst::mult;

namespace {

DistanceWeights random_simplex(std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(1.0, 1.0);
    double a = gamma(rng), b = gamma(rng), c = gamma(rng);
    double s = a + b + c;
    return {a / s, b / s, c / s};
}

}  // namespace

TEST_SUITE_BEGIN("sot");

TEST_CASE("worked-example total variation distances are exact") {
    FeatureDistributions f1 = to_distributions(kst::example_tree_1(), 1);
    FeatureDistributions f2 = to_distributions(kst::example_tree_2(), 1);

    CHECK(total_variation(f1.base[0], f2.base[0]) == doctest::Approx(3.0 / 20).epsilon(1e-14));
    CHECK(total_variation(f1.paths, f2.paths) == doctest::Approx(11.0 / 20).epsilon(1e-14));
    CHECK(total_variation(f1.subtrees, f2.subtrees) == doctest::Approx(11.0 / 21).epsilon(1e-14));
}

TEST_CASE("total variation endpoints") {
    FeatureDistributions f1 = to_distributions(kst::example_tree_1(), 1);
    CHECK(total_variation(f1.paths, f1.paths) == 0.0);

    // disjoint supports carry the full unit of mass
    FeatureDistributions a = to_distributions(leaf(KernelFamily::SE), 1);
    FeatureDistributions b = to_distributions(leaf(KernelFamily::LIN), 1);
    CHECK(total_variation(a.base[0], b.base[0]) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("total variation rejects unnormalized input") {
    FeatureDist bad;
    bad.mass = {{1, 0.4}, {2, 0.4}};
    FeatureDist good;
    good.mass = {{1, 1.0}};
    CHECK_THROWS_AS(total_variation(bad, good), std::invalid_argument);
}

TEST_CASE("combined distance matches the weighted example values") {
    FeatureDistributions f1 = to_distributions(kst::example_tree_1(), 1);
    FeatureDistributions f2 = to_distributions(kst::example_tree_2(), 1);
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        DistanceWeights w = random_simplex(rng);
        double expected = w.base * (3.0 / 20) + w.paths * (11.0 / 20) + w.subtrees * (11.0 / 21);
        CHECK(sot_distance(f1, f2, w) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("distance degeneracies") {
    FeatureDistributions f1 = to_distributions(kst::example_tree_1(), 1);
    FeatureDistributions f2 = to_distributions(kst::example_tree_2(), 1);
    CHECK(sot_distance(f1, f1, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == 0.0);
    CHECK(sot_distance(f1, f2, {1.0, 0.0, 0.0}) == doctest::Approx(3.0 / 20).epsilon(1e-14));
}

TEST_CASE("mismatched per-dimension shapes raise") {
    FeatureDistributions one = to_distributions(leaf(KernelFamily::SE), 1);
    FeatureDistributions two = to_distributions(leaf(KernelFamily::SE), 2);
    CHECK_THROWS_AS(sot_distance(one, two, {1.0 / 3, 1.0 / 3, 1.0 / 3}), std::invalid_argument);
}

TEST_CASE("weights validation") {
    CHECK_THROWS_AS((DistanceWeights{0.5, 0.5, 0.5}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((DistanceWeights{-0.5, 1.0, 0.5}.validate()), std::invalid_argument);
    CHECK_NOTHROW((DistanceWeights{0.2, 0.3, 0.5}.validate()));
}

TEST_CASE("kernel-kernel values") {
    FeatureCache cache(1);
    TreePtr t1 = kst::example_tree_1();
    TreePtr t2 = kst::example_tree_2();

    KernelKernelParams p{1.0, 1.0, {1.0, 0.0, 0.0}};
    CHECK(kernel_kernel(t1, t1, p, cache) == 1.0);
    CHECK(kernel_kernel(t1, t2, p, cache) == doctest::Approx(std::exp(-0.15)).epsilon(1e-12));

    KernelKernelParams scaled{2.5, 0.7, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
    CHECK(kernel_kernel(t2, t2, scaled, cache) == 2.5);
    double v = kernel_kernel(t1, t2, scaled, cache);
    CHECK(v > 0);
    CHECK(v <= 2.5);
    CHECK(kernel_kernel(t2, t1, scaled, cache) == v);
}

TEST_CASE("gram matrix basics") {
    FeatureCache cache(1);
    KernelKernelParams p{1.7, 0.9, {0.3, 0.3, 0.4}};

    std::vector<TreePtr> single{kst::example_tree_1()};
    Eigen::MatrixXd K1 = gram_matrix(single, p, cache);
    REQUIRE(K1.rows() == 1);
    CHECK(K1(0, 0) == 1.7);

    GrammarConfig config;
    std::mt19937_64 rng(19);
    std::vector<TreePtr> trees;
    for (int i = 0; i < 12; ++i) trees.push_back(kst::random_tree(config, i % 7, rng));
    Eigen::MatrixXd K = gram_matrix(trees, p, cache);
    CHECK(K == K.transpose());
    for (size_t i = 0; i < trees.size(); ++i)
        for (size_t j = 0; j < trees.size(); ++j)
            CHECK(K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
                  kernel_kernel(trees[i], trees[j], p, cache));
}

TEST_CASE("gram matrices are positive semi-definite") {
    GrammarConfig config;
    config.dimensions = 2;
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> unif(0.2, 3.0);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<TreePtr> trees;
        for (int i = 0; i < 50; ++i) trees.push_back(kst::random_tree(config, i % 9, rng));
        KernelKernelParams p{unif(rng), unif(rng), random_simplex(rng)};
        FeatureCache cache(2);
        Eigen::MatrixXd K = gram_matrix(trees, p, cache);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
}

TEST_CASE("pseudo-metric axioms on random triples") {
    GrammarConfig config;
    std::mt19937_64 rng(43);
    FeatureCache cache(1);
    DistanceWeights w{0.25, 0.35, 0.4};
    for (int trial = 0; trial < 200; ++trial) {
        TreePtr a = kst::random_tree(config, trial % 8, rng);
        TreePtr b = kst::random_tree(config, (trial + 3) % 8, rng);
        TreePtr c = kst::random_tree(config, (trial + 5) % 8, rng);
        const auto &fa = *cache.get(a), &fb = *cache.get(b), &fc = *cache.get(c);
        double dab = sot_distance(fa, fb, w);
        double dba = sot_distance(fb, fa, w);
        CHECK(dab == dba);
        CHECK(sot_distance(fa, fa, w) == 0.0);
        CHECK(dab <= sot_distance(fa, fc, w) + sot_distance(fc, fb, w) + 1e-12);
        CHECK(dab <= 1.0 + 1e-12);  // dist over one dimension is bounded by 1
    }
}

TEST_CASE("kernel-kernel factors into per-component exponentials") {
    GrammarConfig config;
    config.dimensions = 2;
    std::mt19937_64 rng(47);
    FeatureCache cache(2);
    std::uniform_real_distribution<double> unif(0.2, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        TreePtr a = kst::random_tree(config, trial % 9, rng);
        TreePtr b = kst::random_tree(config, (trial + 4) % 9, rng);
        KernelKernelParams p{unif(rng), unif(rng), random_simplex(rng)};
        const auto &fa = *cache.get(a), &fb = *cache.get(b);

        double tv_base = 0;
        for (size_t d = 0; d < fa.base.size(); ++d)
            tv_base += total_variation(fa.base[d], fb.base[d]);
        double l1_base = 2.0 * tv_base;
        double l1_paths = 2.0 * total_variation(fa.paths, fb.paths);
        double l1_subtrees = 2.0 * total_variation(fa.subtrees, fb.subtrees);

        double factored = p.variance *
                          std::exp(-p.weights.base * l1_base / (2.0 * p.lengthscale_sq)) *
                          std::exp(-p.weights.paths * l1_paths / (2.0 * p.lengthscale_sq)) *
                          std::exp(-p.weights.subtrees * l1_subtrees / (2.0 * p.lengthscale_sq));
        CHECK(kernel_kernel(a, b, p, cache) == doctest::Approx(factored).epsilon(1e-12));
    }
}

TEST_CASE("distance bound for multi-dimensional labels") {
    GrammarConfig config;
    config.dimensions = 3;
    std::mt19937_64 rng(53);
    FeatureCache cache(3);
    for (int trial = 0; trial < 100; ++trial) {
        TreePtr a = kst::random_tree(config, trial % 9, rng);
        TreePtr b = kst::random_tree(config, (trial + 2) % 9, rng);
        DistanceWeights w = random_simplex(rng);
        double d = sot_distance(*cache.get(a), *cache.get(b), w);
        CHECK(d >= 0.0);
        CHECK(d <= w.base * 3 + w.paths + w.subtrees + 1e-12);
    }
}

TEST_SUITE_END();
