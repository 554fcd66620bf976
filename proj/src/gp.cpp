#include "ksearch/gp.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ksearch/lbfgs.hpp"
#include "ksearch/numerics.hpp"

namespace ksearch {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
const double kJitterLadder[] = {0.0, 1e-8, 1e-6, 1e-4};
}  // namespace

double GammaPrior::log_pdf(double x) const {
    if (!(x > 0)) return -std::numeric_limits<double>::infinity();
    return (shape - 1.0) * std::log(x) - rate * x + shape * std::log(rate) - std::lgamma(shape);
}

double GammaPrior::dlog_pdf(double x) const { return (shape - 1.0) / x - rate; }

double GammaPrior::sample(std::mt19937_64& rng) const {
    std::gamma_distribution<double> dist(shape, 1.0 / rate);
    return dist(rng);
}

GammaPrior lengthscale_prior() { return {2.0, 2.0}; }
GammaPrior signal_variance_prior() { return {2.0, 3.0}; }
GammaPrior period_prior() { return {2.0, 2.0}; }
GammaPrior rq_alpha_prior() { return {2.0, 2.0}; }
GammaPrior noise_variance_prior() { return {1.5, 10.0}; }

namespace {

void append_leaf_slots(const BaseKernelLabel& label, int leaf_index,
                       std::vector<ParamSlot>& slots) {
    const std::string prefix = "leaf" + std::to_string(leaf_index) + "." + label.to_string() + ".";
    switch (label.family) {
        case KernelFamily::SE:
            slots.push_back({prefix + "lengthscale", lengthscale_prior()});
            slots.push_back({prefix + "variance", signal_variance_prior()});
            break;
        case KernelFamily::LIN:
            slots.push_back({prefix + "variance", signal_variance_prior()});
            slots.push_back({prefix + "offset_variance", signal_variance_prior()});
            break;
        case KernelFamily::PER:
            slots.push_back({prefix + "lengthscale", lengthscale_prior()});
            slots.push_back({prefix + "variance", signal_variance_prior()});
            slots.push_back({prefix + "period", period_prior()});
            break;
        case KernelFamily::RQ:
            slots.push_back({prefix + "lengthscale", lengthscale_prior()});
            slots.push_back({prefix + "variance", signal_variance_prior()});
            slots.push_back({prefix + "alpha", rq_alpha_prior()});
            break;
    }
}

void collect_layout(const TreePtr& t, int& leaf_index, std::vector<ParamSlot>& slots) {
    if (t->is_leaf()) {
        append_leaf_slots(t->label(), leaf_index++, slots);
        return;
    }
    collect_layout(t->left(), leaf_index, slots);
    collect_layout(t->right(), leaf_index, slots);
}

}  // namespace

ParamLayout ParamLayout::for_tree(const TreePtr& tree) {
    ParamLayout layout;
    int leaf_index = 0;
    collect_layout(tree, leaf_index, layout.slots_);
    layout.slots_.push_back({"noise_variance", noise_variance_prior()});
    return layout;
}

int ParamLayout::free_count() const {
    int n = 0;
    for (const auto& s : slots_)
        if (!s.frozen) ++n;
    return n;
}

void ParamLayout::freeze(int index, double value) {
    if (index < 0 || index >= size()) throw std::out_of_range("slot index out of range");
    if (!(value > 0)) throw std::invalid_argument("frozen value must be positive");
    slots_[static_cast<size_t>(index)].frozen = true;
    slots_[static_cast<size_t>(index)].frozen_value = value;
}

Eigen::VectorXd ParamLayout::constrained(const Eigen::VectorXd& u_free) const {
    if (u_free.size() != free_count())
        throw std::invalid_argument("expected " + std::to_string(free_count()) +
                                    " unconstrained coordinates, got " + std::to_string(u_free.size()));
    Eigen::VectorXd c(size());
    Eigen::Index u = 0;
    for (int i = 0; i < size(); ++i) {
        const auto& s = slots_[static_cast<size_t>(i)];
        c[i] = s.frozen ? s.frozen_value : softplus(u_free[u++]);
    }
    return c;
}

Eigen::VectorXd ParamLayout::unconstrained(const Eigen::VectorXd& constrained_full) const {
    if (constrained_full.size() != size())
        throw std::invalid_argument("expected " + std::to_string(size()) + " parameters, got " +
                                    std::to_string(constrained_full.size()));
    Eigen::VectorXd u(free_count());
    Eigen::Index k = 0;
    for (int i = 0; i < size(); ++i)
        if (!slots_[static_cast<size_t>(i)].frozen) u[k++] = inv_softplus(constrained_full[i]);
    return u;
}

double ParamLayout::log_prior(const Eigen::VectorXd& constrained_full) const {
    double lp = 0.0;
    for (int i = 0; i < size(); ++i)
        lp += slots_[static_cast<size_t>(i)].prior.log_pdf(constrained_full[i]);
    return lp;
}

double ParamLayout::log_jacobian(const Eigen::VectorXd& u_free) const {
    double lj = 0.0;
    for (Eigen::Index i = 0; i < u_free.size(); ++i) lj += log_sigmoid(u_free[i]);
    return lj;
}

Eigen::VectorXd ParamLayout::sample_from_priors(std::mt19937_64& rng) const {
    Eigen::VectorXd c(size());
    for (int i = 0; i < size(); ++i) {
        const auto& s = slots_[static_cast<size_t>(i)];
        c[i] = s.frozen ? s.frozen_value : s.prior.sample(rng);
    }
    return c;
}

Eigen::VectorXd ParamLayout::prior_means() const {
    Eigen::VectorXd c(size());
    for (int i = 0; i < size(); ++i) {
        const auto& s = slots_[static_cast<size_t>(i)];
        c[i] = s.frozen ? s.frozen_value : s.prior.mean();
    }
    return c;
}

namespace {

int family_param_count(KernelFamily f) {
    switch (f) {
        case KernelFamily::SE: return 2;
        case KernelFamily::LIN: return 2;
        case KernelFamily::PER: return 3;
        case KernelFamily::RQ: return 3;
    }
    return 0;
}

Eigen::MatrixXd leaf_kernel(const BaseKernelLabel& label, const double* p,
                            const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const auto n = a.size(), m = b.size();
    Eigen::MatrixXd diff = a.replicate(1, m) - b.transpose().replicate(n, 1);
    switch (label.family) {
        case KernelFamily::SE: {
            const double l = p[0], s2 = p[1];
            return s2 * (-diff.array().square() / (2.0 * l * l)).exp();
        }
        case KernelFamily::LIN: {
            const double s2 = p[0], c2 = p[1];
            return (s2 * (a * b.transpose()).array() + c2).matrix();
        }
        case KernelFamily::PER: {
            const double l = p[0], s2 = p[1], period = p[2];
            Eigen::ArrayXXd s = (std::numbers::pi * diff.array().abs() / period).sin();
            return s2 * (-s.square() / (2.0 * l * l)).exp();
        }
        case KernelFamily::RQ: {
            const double l = p[0], s2 = p[1], alpha = p[2];
            Eigen::ArrayXXd base = 1.0 + diff.array().square() / (2.0 * alpha * l * l);
            return s2 * base.pow(-alpha);
        }
    }
    throw std::logic_error("unhandled kernel family");
}

Eigen::MatrixXd eval_rec(const TreePtr& t, const Eigen::VectorXd& params, Eigen::Index& cursor,
                         const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    if (t->is_leaf()) {
        const auto& label = t->label();
        int np = family_param_count(label.family);
        if (cursor + np > params.size())
            throw std::invalid_argument("kernel parameter vector too short for tree layout");
        const double* p = params.data() + cursor;
        cursor += np;
        return leaf_kernel(label, p, A.col(label.dimension), B.col(label.dimension));
    }
    Eigen::MatrixXd kl = eval_rec(t->left(), params, cursor, A, B);
    Eigen::MatrixXd kr = eval_rec(t->right(), params, cursor, A, B);
    if (t->op().kind == OpKind::ADD) return kl + kr;
    return kl.cwiseProduct(kr);
}

struct GradNode {
    Eigen::MatrixXd K;
    std::vector<Eigen::MatrixXd> dK;
};

GradNode leaf_kernel_grad(const BaseKernelLabel& label, const double* p, const Eigen::VectorXd& a,
                          const Eigen::VectorXd& b) {
    const auto n = a.size(), m = b.size();
    Eigen::ArrayXXd diff = (a.replicate(1, m) - b.transpose().replicate(n, 1)).array();
    GradNode out;
    switch (label.family) {
        case KernelFamily::SE: {
            const double l = p[0], s2 = p[1];
            Eigen::ArrayXXd d2 = diff.square();
            Eigen::ArrayXXd k = s2 * (-d2 / (2.0 * l * l)).exp();
            out.K = k.matrix();
            out.dK.push_back((k * d2 / (l * l * l)).matrix());  // d/dl
            out.dK.push_back((k / s2).matrix());                // d/dvariance
            break;
        }
        case KernelFamily::LIN: {
            const double s2 = p[0];
            (void)s2;
            Eigen::MatrixXd outer = a * b.transpose();
            out.K = (p[0] * outer.array() + p[1]).matrix();
            out.dK.push_back(outer);                              // d/dvariance
            out.dK.push_back(Eigen::MatrixXd::Ones(n, m));        // d/doffset_variance
            break;
        }
        case KernelFamily::PER: {
            const double l = p[0], s2 = p[1], period = p[2];
            Eigen::ArrayXXd absdiff = diff.abs();
            Eigen::ArrayXXd angle = std::numbers::pi * absdiff / period;
            Eigen::ArrayXXd s = angle.sin();
            Eigen::ArrayXXd k = s2 * (-s.square() / (2.0 * l * l)).exp();
            out.K = k.matrix();
            out.dK.push_back((k * s.square() / (l * l * l)).matrix());
            out.dK.push_back((k / s2).matrix());
            out.dK.push_back((k * (2.0 * angle).sin() * std::numbers::pi * absdiff /
                              (2.0 * l * l * period * period))
                                 .matrix());
            break;
        }
        case KernelFamily::RQ: {
            const double l = p[0], s2 = p[1], alpha = p[2];
            Eigen::ArrayXXd d2 = diff.square();
            Eigen::ArrayXXd base = 1.0 + d2 / (2.0 * alpha * l * l);
            Eigen::ArrayXXd k = s2 * base.pow(-alpha);
            out.K = k.matrix();
            out.dK.push_back((k * d2 / (l * l * l * base)).matrix());
            out.dK.push_back((k / s2).matrix());
            out.dK.push_back((k * (-base.log() + d2 / (2.0 * alpha * l * l * base))).matrix());
            break;
        }
    }
    return out;
}

GradNode grad_rec(const TreePtr& t, const Eigen::VectorXd& params, Eigen::Index& cursor,
                  const Eigen::MatrixXd& X) {
    if (t->is_leaf()) {
        const auto& label = t->label();
        int np = family_param_count(label.family);
        if (cursor + np > params.size())
            throw std::invalid_argument("kernel parameter vector too short for tree layout");
        const double* p = params.data() + cursor;
        cursor += np;
        return leaf_kernel_grad(label, p, X.col(label.dimension), X.col(label.dimension));
    }
    GradNode l = grad_rec(t->left(), params, cursor, X);
    GradNode r = grad_rec(t->right(), params, cursor, X);
    GradNode out;
    if (t->op().kind == OpKind::ADD) {
        out.K = l.K + r.K;
        out.dK = std::move(l.dK);
        for (auto& m : r.dK) out.dK.push_back(std::move(m));
    } else {
        out.K = l.K.cwiseProduct(r.K);
        out.dK.reserve(l.dK.size() + r.dK.size());
        for (auto& m : l.dK) out.dK.push_back(m.cwiseProduct(r.K));
        for (auto& m : r.dK) out.dK.push_back(m.cwiseProduct(l.K));
    }
    return out;
}

Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(const Eigen::MatrixXd& K) {
    if (!K.allFinite()) throw std::runtime_error("kernel matrix contains non-finite entries");
    Eigen::LLT<Eigen::MatrixXd> llt;
    for (double jitter : kJitterLadder) {
        Eigen::MatrixXd M = K;
        if (jitter > 0) M.diagonal().array() += jitter;
        llt.compute(M);
        if (llt.info() == Eigen::Success) return llt;
    }
    throw std::runtime_error(
        "Cholesky factorization failed (jitter ladder tried: 0, 1e-8, 1e-6, 1e-4)");
}

}  // namespace

Eigen::MatrixXd eval_composite_kernel(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                                      const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    Eigen::Index cursor = 0;
    Eigen::MatrixXd K = eval_rec(tree, kernel_params, cursor, A, B);
    if (cursor != kernel_params.size())
        throw std::invalid_argument("kernel parameter vector has " +
                                    std::to_string(kernel_params.size()) + " entries; tree expects " +
                                    std::to_string(cursor));
    return K;
}

KernelGradient eval_composite_kernel_grad(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                                          const Eigen::MatrixXd& X) {
    Eigen::Index cursor = 0;
    GradNode node = grad_rec(tree, kernel_params, cursor, X);
    if (cursor != kernel_params.size())
        throw std::invalid_argument("kernel parameter vector has " +
                                    std::to_string(kernel_params.size()) + " entries; tree expects " +
                                    std::to_string(cursor));
    // Symmetrize bitwise: the analytic forms are symmetric, mirror the upper
    // triangle to keep K == K^T exactly.
    auto mirror = [](Eigen::MatrixXd& M) {
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            for (Eigen::Index j = i + 1; j < M.cols(); ++j) M(j, i) = M(i, j);
    };
    mirror(node.K);
    for (auto& m : node.dK) mirror(m);
    return {std::move(node.K), std::move(node.dK)};
}

GpModel::GpModel(TreePtr tree, Dataset data)
    : tree_(std::move(tree)), data_(std::move(data)), layout_(ParamLayout::for_tree(tree_)) {}

GpModel::GpModel(TreePtr tree, Dataset data, ParamLayout layout)
    : tree_(std::move(tree)), data_(std::move(data)), layout_(std::move(layout)) {}

double GpModel::log_marginal_likelihood(const Eigen::VectorXd& params_full) const {
    if (params_full.size() != layout_.size())
        throw std::invalid_argument("parameter vector does not match the tree's slot layout");
    const auto n = data_.n();
    Eigen::MatrixXd K = eval_composite_kernel(tree_, params_full.head(layout_.kernel_param_count()),
                                              data_.X, data_.X);
    K.diagonal().array() += params_full[layout_.noise_index()];
    auto llt = chol_with_jitter(K);
    Eigen::VectorXd alpha = llt.solve(data_.y);
    double log_det_half = llt.matrixLLT().diagonal().array().log().sum();
    return -0.5 * data_.y.dot(alpha) - log_det_half - 0.5 * static_cast<double>(n) * kLog2Pi;
}

double GpModel::log_posterior(const Eigen::VectorXd& params_full) const {
    return log_marginal_likelihood(params_full) + layout_.log_prior(params_full);
}

double GpModel::neg_log_posterior_u(const Eigen::VectorXd& u_free, Eigen::VectorXd* grad) const {
    Eigen::VectorXd c = layout_.constrained(u_free);
    const auto kp = layout_.kernel_param_count();
    const double noise = c[layout_.noise_index()];
    try {
        if (!grad) {
            double lp = log_marginal_likelihood(c) + layout_.log_prior(c) + layout_.log_jacobian(u_free);
            return -lp;
        }
        KernelGradient kg = eval_composite_kernel_grad(tree_, c.head(kp), data_.X);
        Eigen::MatrixXd K = kg.K;
        K.diagonal().array() += noise;
        auto llt = chol_with_jitter(K);
        Eigen::VectorXd alpha = llt.solve(data_.y);
        double log_det_half = llt.matrixLLT().diagonal().array().log().sum();
        double lml = -0.5 * data_.y.dot(alpha) - log_det_half -
                     0.5 * static_cast<double>(data_.n()) * kLog2Pi;

        Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(data_.n(), data_.n()));
        Eigen::MatrixXd M = alpha * alpha.transpose() - Kinv;

        // d lml / d constrained slot, full layout.
        Eigen::VectorXd dlml(layout_.size());
        for (int j = 0; j < kp; ++j)
            dlml[j] = 0.5 * M.cwiseProduct(kg.dK[static_cast<size_t>(j)]).sum();
        dlml[layout_.noise_index()] = 0.5 * M.trace();

        double lp = lml + layout_.log_prior(c) + layout_.log_jacobian(u_free);
        grad->resize(u_free.size());
        Eigen::Index k = 0;
        for (int j = 0; j < layout_.size(); ++j) {
            const auto& slot = layout_.slots()[static_cast<size_t>(j)];
            if (slot.frozen) continue;
            double dc = dlml[j] + slot.prior.dlog_pdf(c[j]);
            (*grad)[k] = -(dc * sigmoid(u_free[k]) + sigmoid(-u_free[k]));
            ++k;
        }
        return -lp;
    } catch (const std::runtime_error&) {
        if (grad) grad->setConstant(u_free.size(), std::numeric_limits<double>::quiet_NaN());
        return std::numeric_limits<double>::infinity();
    }
}

MapResult GpModel::map_estimate(int restarts, std::mt19937_64& rng) const {
    if (restarts < 1) throw std::invalid_argument("map_estimate needs restarts >= 1");
    if (layout_.free_count() == 0) {
        Eigen::VectorXd u0(0);
        double f = neg_log_posterior_u(u0, nullptr);
        return {layout_.constrained(u0), -f, 0};
    }
    ObjectiveFn objective = [this](const Eigen::VectorXd& u, Eigen::VectorXd* g) {
        return neg_log_posterior_u(u, g);
    };
    LbfgsOptions opts;
    opts.grad_tolerance = 1e-6;
    opts.max_iterations = 400;

    LbfgsResult best;
    int failures = 0;
    for (int r = 0; r < restarts; ++r) {
        Eigen::VectorXd c0 = layout_.sample_from_priors(rng);
        LbfgsResult res = lbfgs_minimize(objective, layout_.unconstrained(c0), opts);
        if (res.failed || !std::isfinite(res.f)) {
            ++failures;
            continue;
        }
        if (res.f < best.f) best = std::move(res);
    }
    if (!std::isfinite(best.f))
        throw std::runtime_error("MAP estimation failed: all " + std::to_string(restarts) +
                                 " restarts produced non-finite objectives");
    // One polishing pass with fresh curvature memory if the gradient is loose.
    if (best.grad.lpNorm<Eigen::Infinity>() > 1e-4) {
        LbfgsResult polished = lbfgs_minimize(objective, best.x, opts);
        if (!polished.failed && polished.f <= best.f) best = std::move(polished);
    }
    return {layout_.constrained(best.x), -best.f, failures};
}

EvidenceResult GpModel::laplace_log_evidence(int restarts, std::mt19937_64& rng) const {
    const auto t0 = std::chrono::steady_clock::now();
    MapResult map = map_estimate(restarts, rng);
    const int d = layout_.free_count();

    EvidenceResult out;
    out.map_params = map.params;
    out.map_log_posterior = map.log_posterior;
    if (d == 0) {
        out.raw = map.log_posterior;
    } else {
        Eigen::VectorXd u_hat = layout_.unconstrained(map.params);
        auto fn = [this](const Eigen::VectorXd& u) { return neg_log_posterior_u(u, nullptr); };
        Eigen::MatrixXd H = fd_hessian(fn, u_hat, 1e-4);
        if (!H.allFinite())
            throw std::runtime_error("Laplace approximation failed: non-finite Hessian entries");
        H = 0.5 * (H + H.transpose()).eval();
        double log_det = clamped_log_det(H, 1e-6);
        out.raw = map.log_posterior + 0.5 * d * kLog2Pi - 0.5 * log_det;
    }
    out.g = out.raw / static_cast<double>(data_.n());
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

Prediction GpModel::predict(const Eigen::VectorXd& params_full, const Eigen::MatrixXd& Xstar) const {
    if (params_full.size() != layout_.size())
        throw std::invalid_argument("parameter vector does not match the tree's slot layout");
    const auto kp = layout_.kernel_param_count();
    const double noise = params_full[layout_.noise_index()];
    Eigen::VectorXd kernel_params = params_full.head(kp);

    Eigen::MatrixXd K = eval_composite_kernel(tree_, kernel_params, data_.X, data_.X);
    K.diagonal().array() += noise;
    auto llt = chol_with_jitter(K);
    Eigen::VectorXd alpha = llt.solve(data_.y);

    const auto m = Xstar.rows();
    Prediction pred;
    pred.mean.resize(m);
    pred.latent_var.resize(m);
    pred.predictive_var.resize(m);

    constexpr Eigen::Index kBlock = 256;
    for (Eigen::Index start = 0; start < m; start += kBlock) {
        Eigen::Index len = std::min(kBlock, m - start);
        Eigen::MatrixXd Xb = Xstar.middleRows(start, len);
        Eigen::MatrixXd Ks = eval_composite_kernel(tree_, kernel_params, data_.X, Xb);  // n x len
        Eigen::MatrixXd Kss = eval_composite_kernel(tree_, kernel_params, Xb, Xb);
        pred.mean.segment(start, len) = Ks.transpose() * alpha;
        Eigen::MatrixXd V = llt.matrixL().solve(Ks);  // L^-1 Ks
        for (Eigen::Index i = 0; i < len; ++i) {
            double latent = Kss(i, i) - V.col(i).squaredNorm();
            pred.latent_var[start + i] = std::max(0.0, latent);
            pred.predictive_var[start + i] = pred.latent_var[start + i] + noise;
        }
    }
    return pred;
}

double log_marginal_likelihood(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                               double noise_variance, const Dataset& data) {
    GpModel model(tree, data);
    Eigen::VectorXd full(kernel_params.size() + 1);
    full << kernel_params, noise_variance;
    return model.log_marginal_likelihood(full);
}

Prediction posterior_predict(const TreePtr& tree, const Eigen::VectorXd& kernel_params,
                             double noise_variance, const Dataset& data,
                             const Eigen::MatrixXd& Xstar) {
    GpModel model(tree, data);
    Eigen::VectorXd full(kernel_params.size() + 1);
    full << kernel_params, noise_variance;
    return model.predict(full, Xstar);
}

MapResult map_estimate(const TreePtr& tree, const Dataset& data, int restarts,
                       std::mt19937_64& rng) {
    return GpModel(tree, data).map_estimate(restarts, rng);
}

EvidenceResult laplace_log_evidence(const TreePtr& tree, const Dataset& data, int restarts,
                                    std::mt19937_64& rng) {
    return GpModel(tree, data).laplace_log_evidence(restarts, rng);
}

}  // namespace ksearch
