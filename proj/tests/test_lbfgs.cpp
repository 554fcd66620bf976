#include <doctest.h>

#include "ksearch/lbfgs.hpp"

using namespace ksearch;

TEST_SUITE_BEGIN("lbfgs");

TEST_CASE("quadratic bowl") {
    ObjectiveFn fn = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        if (g) *g = 2.0 * x;
        return x.squaredNorm();
    };
    Eigen::VectorXd x0(3);
    x0 << 5.0, -3.0, 2.0;
    LbfgsResult res = lbfgs_minimize(fn, x0);
    CHECK(res.converged);
    CHECK(res.x.norm() < 1e-5);
    CHECK(res.f < 1e-10);
}

TEST_CASE("rosenbrock") {
    ObjectiveFn fn = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        double a = 1.0 - x[0];
        double b = x[1] - x[0] * x[0];
        if (g) {
            (*g)[0] = -2.0 * a - 400.0 * x[0] * b;
            (*g)[1] = 200.0 * b;
        }
        return a * a + 100.0 * b * b;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    LbfgsOptions opts;
    opts.max_iterations = 500;
    LbfgsResult res = lbfgs_minimize(fn, x0, opts);
    CHECK(res.converged);
    CHECK(std::abs(res.x[0] - 1.0) < 1e-5);
    CHECK(std::abs(res.x[1] - 1.0) < 1e-5);
}

TEST_CASE("objective with a forbidden region") {
    // +inf outside x > 0.1; the line search must back off instead of dying.
    ObjectiveFn fn = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        if (x[0] <= 0.1) {
            if (g) (*g)[0] = std::numeric_limits<double>::quiet_NaN();
            return std::numeric_limits<double>::infinity();
        }
        double d = x[0] - 1.0;
        if (g) (*g)[0] = 2.0 * d - 1.0 / x[0];
        return d * d - std::log(x[0]);
    };
    Eigen::VectorXd x0(1);
    x0 << 8.0;
    LbfgsResult res = lbfgs_minimize(fn, x0);
    CHECK(res.converged);
    CHECK(res.grad.lpNorm<Eigen::Infinity>() < 1e-5);
    CHECK(res.x[0] > 0.1);
}

TEST_CASE("start point out of domain reports failure") {
    ObjectiveFn fn = [](const Eigen::VectorXd&, Eigen::VectorXd*) {
        return std::numeric_limits<double>::infinity();
    };
    Eigen::VectorXd x0(2);
    x0 << 0.0, 0.0;
    LbfgsResult res = lbfgs_minimize(fn, x0);
    CHECK(res.failed);
}

TEST_SUITE_END();
