#include "ksearch/metamodel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ksearch/lbfgs.hpp"
#include "ksearch/numerics.hpp"

namespace ksearch {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNoiseFloor = 1e-6;
const double kJitterLadder[] = {0.0, 1e-10, 1e-8, 1e-6};
}  // namespace

DistanceWeights MetaHyperparams::weights() const {
    double s0 = sigmoid(weight_logits[0]);
    double s1 = sigmoid(weight_logits[1]);
    double s2 = sigmoid(weight_logits[2]);
    double total = s0 + s1 + s2;
    return {s0 / total, s1 / total, s2 / total};
}

KernelKernelParams MetaHyperparams::kk_params() const {
    return {variance, lengthscale_sq, weights()};
}

ComponentDistances component_distance_matrix(std::span<const TreePtr> trees, FeatureCache& cache) {
    const auto n = static_cast<Eigen::Index>(trees.size());
    std::vector<std::shared_ptr<const FeatureDistributions>> feats(trees.size());
    for (size_t i = 0; i < trees.size(); ++i) feats[i] = cache.get(trees[i]);
    ComponentDistances cd{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n),
                          Eigen::MatrixXd::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto& fa = *feats[static_cast<size_t>(i)];
            const auto& fb = *feats[static_cast<size_t>(j)];
            double b = 0.0;
            for (size_t d = 0; d < fa.base.size(); ++d) b += total_variation(fa.base[d], fb.base[d]);
            cd.base(i, j) = cd.base(j, i) = b;
            cd.paths(i, j) = cd.paths(j, i) = total_variation(fa.paths, fb.paths);
            cd.subtrees(i, j) = cd.subtrees(j, i) = total_variation(fa.subtrees, fb.subtrees);
        }
    }
    return cd;
}

namespace {

Eigen::MatrixXd sot_gram_from_components(const ComponentDistances& cd, const MetaHyperparams& hyp) {
    DistanceWeights w = hyp.weights();
    Eigen::MatrixXd D = w.base * cd.base + w.paths * cd.paths + w.subtrees * cd.subtrees;
    return hyp.variance * (-D / hyp.lengthscale_sq).array().exp().matrix();
}

// NLL of the meta observations given precomputed component distances.
double meta_nll_from_components(const Eigen::VectorXd& g, const ComponentDistances& cd,
                                const MetaHyperparams& hyp) {
    const auto n = g.size();
    Eigen::MatrixXd K = sot_gram_from_components(cd, hyp);
    K.diagonal().array() += hyp.noise;
    Eigen::LLT<Eigen::MatrixXd> llt;
    bool ok = false;
    for (double jitter : kJitterLadder) {
        Eigen::MatrixXd M = K;
        if (jitter > 0) M.diagonal().array() += jitter;
        llt.compute(M);
        if (llt.info() == Eigen::Success) {
            ok = true;
            break;
        }
    }
    if (!ok) return std::numeric_limits<double>::infinity();
    Eigen::VectorXd r = g.array() - hyp.mean_constant;
    Eigen::VectorXd alpha = llt.solve(r);
    double log_det_half = llt.matrixLLT().diagonal().array().log().sum();
    return 0.5 * r.dot(alpha) + log_det_half + 0.5 * static_cast<double>(n) * kLog2Pi;
}

// Unconstrained packing: [c, u_var, u_len, logit0..2, u_noise].
MetaHyperparams unpack(const Eigen::VectorXd& u) {
    MetaHyperparams hyp;
    hyp.mean_constant = u[0];
    hyp.variance = softplus(u[1]);
    hyp.lengthscale_sq = softplus(u[2]);
    hyp.weight_logits = {u[3], u[4], u[5]};
    hyp.noise = kNoiseFloor + softplus(u[6]);
    return hyp;
}

Eigen::VectorXd pack(const MetaHyperparams& hyp) {
    Eigen::VectorXd u(7);
    u[0] = hyp.mean_constant;
    u[1] = inv_softplus(std::max(hyp.variance, 1e-10));
    u[2] = inv_softplus(std::max(hyp.lengthscale_sq, 1e-10));
    u[3] = hyp.weight_logits[0];
    u[4] = hyp.weight_logits[1];
    u[5] = hyp.weight_logits[2];
    u[6] = inv_softplus(std::max(hyp.noise - kNoiseFloor, 1e-10));
    return u;
}

}  // namespace

double meta_neg_log_marginal_likelihood(const MetaDataset& md, const MetaHyperparams& hyp,
                                        FeatureCache& cache) {
    std::vector<TreePtr> trees;
    Eigen::VectorXd g(static_cast<Eigen::Index>(md.size()));
    trees.reserve(md.size());
    for (size_t i = 0; i < md.size(); ++i) {
        trees.push_back(md[i].tree);
        g[static_cast<Eigen::Index>(i)] = md[i].g;
    }
    ComponentDistances cd = component_distance_matrix(trees, cache);
    return meta_nll_from_components(g, cd, hyp);
}

MetaHyperparams fit_meta_hyperparams(const MetaDataset& md, const MetaHyperparams& init,
                                     int restarts, std::mt19937_64& rng, FeatureCache& cache) {
    if (md.size() < 2) throw std::invalid_argument("meta fit needs at least 2 observations");

    std::vector<TreePtr> trees;
    Eigen::VectorXd g(static_cast<Eigen::Index>(md.size()));
    trees.reserve(md.size());
    for (size_t i = 0; i < md.size(); ++i) {
        trees.push_back(md[i].tree);
        g[static_cast<Eigen::Index>(i)] = md[i].g;
    }
    const ComponentDistances cd = component_distance_matrix(trees, cache);

    auto nll = [&](const Eigen::VectorXd& u) { return meta_nll_from_components(g, cd, unpack(u)); };
    ObjectiveFn objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
        double f = nll(u);
        if (grad) {
            if (!std::isfinite(f))
                grad->setConstant(u.size(), std::numeric_limits<double>::quiet_NaN());
            else
                *grad = fd_gradient(nll, u, 1e-6);
        }
        return f;
    };

    LbfgsOptions opts;
    opts.max_iterations = 200;
    opts.grad_tolerance = 1e-5;

    const double g_mean = g.mean();
    const double g_var = std::max(1e-8, (g.array() - g_mean).square().sum() /
                                            std::max<double>(1.0, static_cast<double>(g.size()) - 1));

    std::vector<Eigen::VectorXd> starts;
    starts.push_back(pack(init));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < restarts; ++r) {
        MetaHyperparams h;
        h.mean_constant = g_mean + std::sqrt(g_var) * normal(rng);
        h.variance = g_var * std::exp(normal(rng));
        h.lengthscale_sq = std::exp(normal(rng));
        h.weight_logits = {normal(rng), normal(rng), normal(rng)};
        h.noise = kNoiseFloor + 0.01 * g_var * std::exp(normal(rng));
        starts.push_back(pack(h));
    }

    double best_f = nll(starts.front());  // the warm start is always a candidate
    Eigen::VectorXd best_u = starts.front();
    bool any_finite = std::isfinite(best_f);
    for (const auto& u0 : starts) {
        LbfgsResult res = lbfgs_minimize(objective, u0, opts);
        if (res.failed || !std::isfinite(res.f)) continue;
        any_finite = true;
        if (res.f < best_f) {
            best_f = res.f;
            best_u = res.x;
        }
    }
    if (!any_finite) {
        MetaHyperparams out = init;
        out.fit_warning = true;
        return out;
    }
    return unpack(best_u);
}

MetaPosterior meta_posterior(const MetaDataset& md, const MetaHyperparams& hyp,
                             std::span<const TreePtr> queries, FeatureCache& cache) {
    if (md.empty()) throw std::invalid_argument("meta posterior needs at least 1 observation");
    std::vector<TreePtr> trees;
    Eigen::VectorXd g(static_cast<Eigen::Index>(md.size()));
    trees.reserve(md.size());
    for (size_t i = 0; i < md.size(); ++i) {
        trees.push_back(md[i].tree);
        g[static_cast<Eigen::Index>(i)] = md[i].g;
    }
    const KernelKernelParams kk = hyp.kk_params();
    Eigen::MatrixXd K = gram_matrix(trees, kk, cache);
    K.diagonal().array() += hyp.noise;

    Eigen::LLT<Eigen::MatrixXd> llt;
    bool ok = false;
    for (double jitter : kJitterLadder) {
        Eigen::MatrixXd M = K;
        if (jitter > 0) M.diagonal().array() += jitter;
        llt.compute(M);
        if (llt.info() == Eigen::Success) {
            ok = true;
            break;
        }
    }
    if (!ok)
        throw std::runtime_error(
            "meta posterior: Cholesky factorization failed after the jitter ladder");

    Eigen::VectorXd r = g.array() - hyp.mean_constant;
    Eigen::VectorXd alpha = llt.solve(r);
    Eigen::MatrixXd Ks = cross_gram_matrix(queries, trees, kk, cache);  // q x n

    MetaPosterior post;
    post.mean = (Ks * alpha).array() + hyp.mean_constant;
    post.variance.resize(static_cast<Eigen::Index>(queries.size()));
    Eigen::MatrixXd V = llt.matrixL().solve(Ks.transpose());  // n x q
    for (Eigen::Index i = 0; i < post.variance.size(); ++i)
        post.variance[i] = std::max(0.0, hyp.variance - V.col(i).squaredNorm());
    return post;
}

Eigen::VectorXd expected_improvement(const Eigen::VectorXd& mean, const Eigen::VectorXd& variance,
                                     double best_observed) {
    Eigen::VectorXd ei(mean.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
        double var = variance[i];
        if (var < 0) throw std::invalid_argument("expected_improvement needs variance >= 0");
        double delta = mean[i] - best_observed;
        double s = std::sqrt(var);
        if (s < 1e-12) {
            ei[i] = std::max(delta, 0.0);
            continue;
        }
        double z = delta / s;
        double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
        double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        ei[i] = delta * cdf + s * pdf;
    }
    return ei;
}

}  // namespace ksearch
