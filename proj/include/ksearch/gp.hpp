#ifndef KSEARCH_GP_HPP
#define KSEARCH_GP_HPP

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "ksearch/grammar.hpp"

namespace ksearch {

struct Dataset {
    Eigen::MatrixXd X;  // N x D, inputs scaled to the unit interval
    Eigen::VectorXd y;  // centered targets

    Eigen::Index n() const { return y.size(); }
    int dims() const { return static_cast<int>(X.cols()); }
};

// Shape-rate parameterization: density proportional to x^(a-1) exp(-b x).
struct GammaPrior {
    double shape = 2.0;
    double rate = 2.0;

    double log_pdf(double x) const;
    double dlog_pdf(double x) const;  // d/dx log pdf
    double mean() const { return shape / rate; }
    double sample(std::mt19937_64& rng) const;
};

// Default priors per base-kernel parameter; the noise variance prior favors
// small noise on unit-variance targets.
GammaPrior lengthscale_prior();      // Gamma(2, 2)
GammaPrior signal_variance_prior();  // Gamma(2, 3)
GammaPrior period_prior();           // Gamma(2, 2)
GammaPrior rq_alpha_prior();         // Gamma(2, 2)
GammaPrior noise_variance_prior();   // Gamma(1.5, 10)

struct ParamSlot {
    std::string name;
    GammaPrior prior;
    bool frozen = false;
    double frozen_value = 1.0;
};

// Ordered parameter slots of a composite kernel: leaves in left-to-right
// order, a fixed per-family parameter order, and the likelihood noise
// variance as the final slot. Parameters are never shared between leaves.
// Values live in constrained (positive) space; the optimizer works on the
// softplus preimage of the free slots.
class ParamLayout {
public:
    static ParamLayout for_tree(const TreePtr& tree);

    const std::vector<ParamSlot>& slots() const { return slots_; }
    int size() const { return static_cast<int>(slots_.size()); }
    int kernel_param_count() const { return size() - 1; }
    int free_count() const;
    int noise_index() const { return size() - 1; }

    void freeze(int index, double value);

    // Full constrained vector from the free unconstrained coordinates.
    Eigen::VectorXd constrained(const Eigen::VectorXd& u_free) const;
    // Free unconstrained coordinates of a full constrained vector.
    Eigen::VectorXd unconstrained(const Eigen::VectorXd& constrained_full) const;

    double log_prior(const Eigen::VectorXd& constrained_full) const;  // all slots
    double log_jacobian(const Eigen::VectorXd& u_free) const;         // free slots
    // Full constrained vector with free slots drawn from their priors.
    Eigen::VectorXd sample_from_priors(std::mt19937_64& rng) const;
    // Full constrained vector with every slot at its prior mean.
    Eigen::VectorXd prior_means() const;

private:
    std::vector<ParamSlot> slots_;
};

// Algorithm: leaves evaluate their base-kernel formula on their single input
// dimension, ADD sums child matrices, MULT multiplies them elementwise.
// `kernel_params` holds the constrained kernel slots (noise excluded).
// Throws std::invalid_argument on a slot-count mismatch.
Eigen::MatrixXd eval_composite_kernel(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                                      const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

struct KernelGradient {
    Eigen::MatrixXd K;
    std::vector<Eigen::MatrixXd> dK;  // one per kernel slot, in layout order
};
KernelGradient eval_composite_kernel_grad(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                                          const Eigen::MatrixXd& X);

struct MapResult {
    Eigen::VectorXd params;    // full constrained vector (noise last)
    double log_posterior = 0;  // unconstrained-space objective value at the optimum, negated
    int failed_restarts = 0;
};

struct EvidenceResult {
    double g = 0;    // raw / N
    double raw = 0;  // Laplace-approximated log evidence
    Eigen::VectorXd map_params;
    double map_log_posterior = 0;
    double seconds = 0;
};

struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd latent_var;      // posterior variance of f
    Eigen::VectorXd predictive_var;  // latent + noise, for observation-level scores
};

// A composite-kernel GP bound to one dataset; owns the parameter layout.
class GpModel {
public:
    GpModel(TreePtr tree, Dataset data);
    GpModel(TreePtr tree, Dataset data, ParamLayout layout);

    const TreePtr& tree() const { return tree_; }
    const Dataset& data() const { return data_; }
    const ParamLayout& layout() const { return layout_; }

    // Exact Gaussian log density of y under K_theta + noise*I, via Cholesky
    // with a jitter ladder. Throws on factorization failure with the
    // attempted jitter levels in the message.
    double log_marginal_likelihood(const Eigen::VectorXd& params_full) const;

    // log marginal likelihood + log prior, constrained space.
    double log_posterior(const Eigen::VectorXd& params_full) const;

    // MAP objective: negative log posterior over the free unconstrained
    // coordinates, prior Jacobian included. Returns +inf out of domain.
    double neg_log_posterior_u(const Eigen::VectorXd& u_free, Eigen::VectorXd* grad) const;

    MapResult map_estimate(int restarts, std::mt19937_64& rng) const;

    // Laplace approximation at the MAP, Hessian by central finite differences
    // in the unconstrained parameterization.
    EvidenceResult laplace_log_evidence(int restarts, std::mt19937_64& rng) const;

    Prediction predict(const Eigen::VectorXd& params_full, const Eigen::MatrixXd& Xstar) const;

private:
    TreePtr tree_;
    Dataset data_;
    ParamLayout layout_;
};

// Convenience wrappers.
double log_marginal_likelihood(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                               double noise_variance, const Dataset& data);
Prediction posterior_predict(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                             double noise_variance, const Dataset& data,
                             const Eigen::MatrixXd& Xstar);
MapResult map_estimate(const TreePtr& tree, const Dataset& data, int restarts,
                       std::mt19937_64& rng);
EvidenceResult laplace_log_evidence(const TreePtr& tree, const Dataset& data, int restarts,
                                    std::mt19937_64& rng);

}  // namespace ksearch

#endif  // KSEARCH_GP_HPP
