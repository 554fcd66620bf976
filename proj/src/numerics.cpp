#include "ksearch/numerics.hpp"

#include <stdexcept>

namespace ksearch {

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& fn,
                            const Eigen::VectorXd& x, double step_scale) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x, xm = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double h = step_scale * (1.0 + std::abs(x[i]));
        xp[i] = x[i] + h;
        xm[i] = x[i] - h;
        g[i] = (fn(xp) - fn(xm)) / (2.0 * h);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return g;
}

Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& fn,
                           const Eigen::VectorXd& x, double step_scale) {
    const auto d = x.size();
    Eigen::VectorXd h(d);
    for (Eigen::Index i = 0; i < d; ++i) h[i] = step_scale * (1.0 + std::abs(x[i]));

    Eigen::MatrixXd H(d, d);
    const double f0 = fn(x);
    Eigen::VectorXd xt = x;
    for (Eigen::Index i = 0; i < d; ++i) {
        xt[i] = x[i] + h[i];
        double fp = fn(xt);
        xt[i] = x[i] - h[i];
        double fm = fn(xt);
        xt[i] = x[i];
        H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for (Eigen::Index j = i + 1; j < d; ++j) {
            xt[i] = x[i] + h[i];
            xt[j] = x[j] + h[j];
            double fpp = fn(xt);
            xt[j] = x[j] - h[j];
            double fpm = fn(xt);
            xt[i] = x[i] - h[i];
            double fmm = fn(xt);
            xt[j] = x[j] + h[j];
            double fmp = fn(xt);
            xt[i] = x[i];
            xt[j] = x[j];
            H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
        }
    }
    return H;
}

double clamped_log_det(const Eigen::MatrixXd& symmetric, double eigenvalue_floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetric);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < symmetric.rows(); ++i)
        log_det += std::log(std::max(es.eigenvalues()[i], eigenvalue_floor));
    return log_det;
}

}  // namespace ksearch
