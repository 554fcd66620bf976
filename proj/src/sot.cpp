#include "ksearch/sot.hpp"

#include <cmath>
#include <stdexcept>

namespace ksearch {

void DistanceWeights::validate() const {
    if (base < 0 || paths < 0 || subtrees < 0)
        throw std::invalid_argument("distance weights must be non-negative");
    if (std::abs(base + paths + subtrees - 1.0) > 1e-12)
        throw std::invalid_argument("distance weights must sum to 1");
}

void KernelKernelParams::validate() const {
    if (!(variance > 0)) throw std::invalid_argument("kernel-kernel variance must be > 0");
    if (!(lengthscale_sq > 0)) throw std::invalid_argument("kernel-kernel lengthscale^2 must be > 0");
    weights.validate();
}

double total_variation(const FeatureDist& a, const FeatureDist& b) {
    if (std::abs(a.sum() - 1.0) > 1e-9 || std::abs(b.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("total_variation expects normalized distributions");
    double l1 = 0.0;
    size_t i = 0, j = 0;
    while (i < a.mass.size() && j < b.mass.size()) {
        if (a.mass[i].first == b.mass[j].first) {
            l1 += std::abs(a.mass[i].second - b.mass[j].second);
            ++i;
            ++j;
        } else if (a.mass[i].first < b.mass[j].first) {
            l1 += a.mass[i++].second;
        } else {
            l1 += b.mass[j++].second;
        }
    }
    for (; i < a.mass.size(); ++i) l1 += a.mass[i].second;
    for (; j < b.mass.size(); ++j) l1 += b.mass[j].second;
    return 0.5 * l1;
}

double sot_distance(const FeatureDistributions& a, const FeatureDistributions& b,
                    const DistanceWeights& w) {
    if (a.base.size() != b.base.size())
        throw std::invalid_argument("mismatched per-dimension base distributions (" +
                                    std::to_string(a.base.size()) + " vs " +
                                    std::to_string(b.base.size()) + ")");
    double base_term = 0.0;
    for (size_t i = 0; i < a.base.size(); ++i) base_term += total_variation(a.base[i], b.base[i]);
    return w.base * base_term + w.paths * total_variation(a.paths, b.paths) +
           w.subtrees * total_variation(a.subtrees, b.subtrees);
}

std::shared_ptr<const FeatureDistributions> FeatureCache::get(const TreePtr& tree) {
    const std::uint64_t h = tree->canonical_hash();
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(h);
        if (it != cache_.end()) return it->second;
    }
    auto fd = std::make_shared<const FeatureDistributions>(to_distributions(tree, dims_));
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.emplace(h, std::move(fd)).first->second;
}

double kernel_kernel(const FeatureDistributions& a, const FeatureDistributions& b,
                     const KernelKernelParams& p) {
    return p.variance * std::exp(-sot_distance(a, b, p.weights) / p.lengthscale_sq);
}

double kernel_kernel(const TreePtr& a, const TreePtr& b, const KernelKernelParams& p,
                     FeatureCache& cache) {
    if (a->canonical_hash() == b->canonical_hash()) return p.variance;
    return kernel_kernel(*cache.get(a), *cache.get(b), p);
}

Eigen::MatrixXd gram_matrix(std::span<const TreePtr> trees, const KernelKernelParams& p,
                            FeatureCache& cache) {
    const auto n = static_cast<Eigen::Index>(trees.size());
    std::vector<std::shared_ptr<const FeatureDistributions>> feats(trees.size());
    for (size_t i = 0; i < trees.size(); ++i) feats[i] = cache.get(trees[i]);
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = p.variance;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double v = trees[static_cast<size_t>(i)]->canonical_hash() ==
                               trees[static_cast<size_t>(j)]->canonical_hash()
                           ? p.variance
                           : kernel_kernel(*feats[static_cast<size_t>(i)],
                                           *feats[static_cast<size_t>(j)], p);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

Eigen::MatrixXd cross_gram_matrix(std::span<const TreePtr> rows, std::span<const TreePtr> cols,
                                  const KernelKernelParams& p, FeatureCache& cache) {
    Eigen::MatrixXd K(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    std::vector<std::shared_ptr<const FeatureDistributions>> row_feats(rows.size());
    std::vector<std::shared_ptr<const FeatureDistributions>> col_feats(cols.size());
    for (size_t i = 0; i < rows.size(); ++i) row_feats[i] = cache.get(rows[i]);
    for (size_t j = 0; j < cols.size(); ++j) col_feats[j] = cache.get(cols[j]);
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < cols.size(); ++j)
            K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i]->canonical_hash() == cols[j]->canonical_hash()
                    ? p.variance
                    : kernel_kernel(*row_feats[i], *col_feats[j], p);
    return K;
}

}  // namespace ksearch
