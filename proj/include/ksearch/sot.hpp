#ifndef KSEARCH_SOT_HPP
#define KSEARCH_SOT_HPP

#include <Eigen/Dense>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>

#include "ksearch/features.hpp"
#include "ksearch/grammar.hpp"

namespace ksearch {

struct DistanceWeights {
    double base = 1.0 / 3.0;
    double paths = 1.0 / 3.0;
    double subtrees = 1.0 / 3.0;

    void validate() const;  // non-negative, sum to 1 within 1e-12
};

struct KernelKernelParams {
    double variance = 1.0;
    double lengthscale_sq = 1.0;
    DistanceWeights weights;

    void validate() const;
};

// Closed-form optimal transport cost under the indicator ground metric:
// half the L1 distance between the two probability vectors. Throws if either
// input's mass is off 1 by more than 1e-9.
double total_variation(const FeatureDist& a, const FeatureDist& b);

// Weighted sum of the component transport distances. The base term sums the
// per-dimension total variations; shapes must match.
double sot_distance(const FeatureDistributions& a, const FeatureDistributions& b,
                    const DistanceWeights& w);

// Feature distributions memoized by canonical hash. Concurrent reads are
// fine; insertions are serialized.
class FeatureCache {
public:
    explicit FeatureCache(int dims) : dims_(dims) {}

    std::shared_ptr<const FeatureDistributions> get(const TreePtr& tree);
    int dims() const { return dims_; }

private:
    int dims_;
    mutable std::mutex mutex_;
    std::unordered_map<std::uint64_t, std::shared_ptr<const FeatureDistributions>> cache_;
};

// K(t1, t2) = variance * exp(-d(t1, t2) / lengthscale_sq)
double kernel_kernel(const TreePtr& a, const TreePtr& b, const KernelKernelParams& p,
                     FeatureCache& cache);
double kernel_kernel(const FeatureDistributions& a, const FeatureDistributions& b,
                     const KernelKernelParams& p);

// Symmetric Gram matrix; diagonal equals the variance exactly.
Eigen::MatrixXd gram_matrix(std::span<const TreePtr> trees, const KernelKernelParams& p,
                            FeatureCache& cache);
// Rectangular block K(rows_i, cols_j).
Eigen::MatrixXd cross_gram_matrix(std::span<const TreePtr> rows, std::span<const TreePtr> cols,
                                  const KernelKernelParams& p, FeatureCache& cache);

}  // namespace ksearch

#endif  // KSEARCH_SOT_HPP
