#ifndef KSEARCH_METAMODEL_HPP
#define KSEARCH_METAMODEL_HPP

#include <Eigen/Dense>
#include <array>
#include <random>
#include <span>
#include <vector>

#include "ksearch/sot.hpp"

namespace ksearch {

// Hyperparameters of the GP over kernels: constant mean, kernel-kernel
// variance/lengthscale^2, distance-weight logits, and observation noise.
// The weights live on the simplex via sigmoid(logit_i) / sum_j sigmoid(logit_j).
struct MetaHyperparams {
    double mean_constant = 0.0;
    double variance = 1.0;
    double lengthscale_sq = 1.0;
    std::array<double, 3> weight_logits{0.0, 0.0, 0.0};
    double noise = 1e-2;  // sigma_g^2, floored at 1e-6
    bool fit_warning = false;

    DistanceWeights weights() const;
    KernelKernelParams kk_params() const;
};

struct MetaObservation {
    TreePtr tree;
    double g;  // normalized log evidence; finite by construction
};

using MetaDataset = std::vector<MetaObservation>;

// Pairwise component distances of a tree list: the summed per-dimension base
// total variation plus the path and subtree total variations. Precomputing
// them makes the marginal likelihood cheap in the weights and lengthscale.
struct ComponentDistances {
    Eigen::MatrixXd base, paths, subtrees;
};
ComponentDistances component_distance_matrix(std::span<const TreePtr> trees, FeatureCache& cache);

// Negative log marginal likelihood of g under N(c, K_sot + noise I).
double meta_neg_log_marginal_likelihood(const MetaDataset& md, const MetaHyperparams& hyp,
                                        FeatureCache& cache);

// Gradient-based maximization of the marginal likelihood over all meta
// hyperparameters, warm-started from `init` plus `restarts` random starts.
// The returned parameters never score worse than `init`. If every start
// fails, `init` comes back with fit_warning set.
MetaHyperparams fit_meta_hyperparams(const MetaDataset& md, const MetaHyperparams& init,
                                     int restarts, std::mt19937_64& rng, FeatureCache& cache);

struct MetaPosterior {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;  // latent; clamped at 0
};
MetaPosterior meta_posterior(const MetaDataset& md, const MetaHyperparams& hyp,
                             std::span<const TreePtr> queries, FeatureCache& cache);

// EI under the maximization convention: (mu - best) Phi(z) + s phi(z) with
// z = (mu - best)/s; the improvement hinge at s = 0.
Eigen::VectorXd expected_improvement(const Eigen::VectorXd& mean, const Eigen::VectorXd& variance,
                                     double best_observed);

}  // namespace ksearch

#endif  // KSEARCH_METAMODEL_HPP
