#ifndef KSEARCH_LBFGS_HPP
#define KSEARCH_LBFGS_HPP

#include <Eigen/Dense>
#include <functional>

namespace ksearch {

// Objective callback: returns f(x) and, when `grad` is non-null, writes the
// gradient into it. Non-finite returns are treated as out-of-domain points.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct LbfgsOptions {
    int max_iterations = 300;
    double grad_tolerance = 1e-6;  // sup-norm of the gradient
    double f_tolerance = 1e-13;    // relative flatness between accepted steps
    int history = 10;
    int max_line_search = 30;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    Eigen::VectorXd grad;
    int iterations = 0;
    bool converged = false;  // gradient tolerance reached
    bool failed = false;     // no finite value found at the start point
};

// Limited-memory BFGS with a strong-Wolfe line search. Minimizes f.
LbfgsResult lbfgs_minimize(const ObjectiveFn& fn, Eigen::VectorXd x0,
                           const LbfgsOptions& options = {});

}  // namespace ksearch

#endif  // KSEARCH_LBFGS_HPP
