#ifndef KSEARCH_NUMERICS_HPP
#define KSEARCH_NUMERICS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>

namespace ksearch {

// Smooth bijection between the reals and the positive axis, used for all
// positively constrained parameters.
inline double softplus(double u) {
    if (u > 30.0) return u;
    if (u < -30.0) return std::exp(u);
    return std::log1p(std::exp(u));
}

inline double inv_softplus(double c) {
    if (c > 30.0) return c;
    return c + std::log1p(-std::exp(-c));  // log(expm1(c))
}

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// log d softplus(u)/du = log sigmoid(u), stable for large |u|.
inline double log_sigmoid(double u) {
    if (u > 0) return -std::log1p(std::exp(-u));
    return u - std::log1p(std::exp(u));
}

// Central finite-difference gradient with per-coordinate steps h_i.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& fn,
                            const Eigen::VectorXd& x, double step_scale = 1e-5);

// Central finite-difference Hessian with steps h_i = step_scale * (1 + |x_i|).
Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& fn,
                           const Eigen::VectorXd& x, double step_scale = 1e-4);

// log det of a symmetric matrix with eigenvalues clamped from below; keeps
// flat directions from driving the determinant to zero.
double clamped_log_det(const Eigen::MatrixXd& symmetric, double eigenvalue_floor = 1e-6);

}  // namespace ksearch

#endif  // KSEARCH_NUMERICS_HPP
