#include "ksearch/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace ksearch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;
constexpr double kCurvature = 0.9;

struct LinePoint {
    double alpha;
    double f;
    double dg;  // directional derivative at alpha
};

// Strong-Wolfe line search (bracket + zoom). Evaluates f and its directional
// derivative along x + alpha*d. Non-finite values shrink the trial step.
// Returns alpha > 0 on success, 0 on failure.
double wolfe_line_search(const ObjectiveFn& fn, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& d, double f0, double dg0, double alpha_init,
                         int max_trials, Eigen::VectorXd& x_out, double& f_out,
                         Eigen::VectorXd& g_out) {
    Eigen::VectorXd g(x.size());
    auto eval = [&](double alpha, LinePoint& p) -> bool {
        x_out = x + alpha * d;
        double f = fn(x_out, &g);
        if (!std::isfinite(f)) return false;
        p = {alpha, f, g.dot(d)};
        return true;
    };

    auto zoom = [&](LinePoint lo, LinePoint hi) -> double {
        for (int i = 0; i < max_trials; ++i) {
            // Bisection with a quadratic-interpolation candidate when sane.
            double alpha = 0.5 * (lo.alpha + hi.alpha);
            double denom = 2.0 * (hi.f - lo.f - lo.dg * (hi.alpha - lo.alpha));
            if (std::abs(denom) > 1e-300) {
                double interp = lo.alpha - lo.dg * (hi.alpha - lo.alpha) * (hi.alpha - lo.alpha) / denom;
                double lo_a = std::min(lo.alpha, hi.alpha), hi_a = std::max(lo.alpha, hi.alpha);
                double margin = 0.1 * (hi_a - lo_a);
                if (interp > lo_a + margin && interp < hi_a - margin) alpha = interp;
            }
            LinePoint p{};
            if (!eval(alpha, p)) {
                hi = LinePoint{alpha, kInf, 0.0};  // shrink the bracket toward lo
                continue;
            }
            if (p.f > f0 + kArmijo * alpha * dg0 || p.f >= lo.f) {
                hi = p;
            } else {
                if (std::abs(p.dg) <= -kCurvature * dg0) {
                    f_out = p.f;
                    g_out = g;
                    return p.alpha;
                }
                if (p.dg * (hi.alpha - lo.alpha) >= 0) hi = lo;
                lo = p;
            }
            if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
        }
        // Accept lo if it at least satisfies the Armijo condition.
        if (std::isfinite(lo.f) && lo.alpha > 0 && lo.f <= f0 + kArmijo * lo.alpha * dg0) {
            LinePoint p{};
            if (eval(lo.alpha, p)) {
                f_out = p.f;
                g_out = g;
                return p.alpha;
            }
        }
        return 0.0;
    };

    LinePoint prev{0.0, f0, dg0};
    double alpha = alpha_init;
    for (int i = 0; i < max_trials; ++i) {
        LinePoint p{};
        if (!eval(alpha, p)) {
            alpha *= 0.5;  // out of domain; come back toward the start
            continue;
        }
        if (p.f > f0 + kArmijo * alpha * dg0 || (i > 0 && p.f >= prev.f)) return zoom(prev, p);
        if (std::abs(p.dg) <= -kCurvature * dg0) {
            f_out = p.f;
            g_out = g;
            return p.alpha;
        }
        if (p.dg >= 0) return zoom(p, prev);
        prev = p;
        alpha = std::min(2.5 * alpha, 1e10);
    }
    return 0.0;
}

}  // namespace

LbfgsResult lbfgs_minimize(const ObjectiveFn& fn, Eigen::VectorXd x0, const LbfgsOptions& options) {
    const auto n = x0.size();
    LbfgsResult result;
    result.x = x0;
    result.grad.resize(n);

    Eigen::VectorXd g(n);
    double f = fn(x0, &g);
    if (!std::isfinite(f) || !g.allFinite()) {
        result.failed = true;
        return result;
    }
    Eigen::VectorXd x = std::move(x0);
    result.f = f;
    result.grad = g;

    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;  // (s, y)
    bool just_reset = true;
    int flat_streak = 0;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.iterations = iter;
        if (g.lpNorm<Eigen::Infinity>() <= options.grad_tolerance) {
            result.converged = true;
            break;
        }

        // Two-loop recursion.
        Eigen::VectorXd d = -g;
        std::vector<double> alphas(memory.size());
        for (size_t k = memory.size(); k-- > 0;) {
            const auto& [s, y] = memory[k];
            double rho = 1.0 / y.dot(s);
            alphas[k] = rho * s.dot(d);
            d -= alphas[k] * y;
        }
        if (!memory.empty()) {
            const auto& [s, y] = memory.back();
            d *= s.dot(y) / y.squaredNorm();
        }
        for (size_t k = 0; k < memory.size(); ++k) {
            const auto& [s, y] = memory[k];
            double rho = 1.0 / y.dot(s);
            double beta = rho * y.dot(d);
            d += (alphas[k] - beta) * s;
        }

        double dg = g.dot(d);
        if (!(dg < 0)) {  // not a descent direction; restart from steepest descent
            memory.clear();
            d = -g;
            dg = g.dot(d);
            just_reset = true;
        }

        double alpha_init = just_reset ? std::min(1.0, 1.0 / std::max(1e-12, g.lpNorm<Eigen::Infinity>()))
                                       : 1.0;
        Eigen::VectorXd x_new(n), g_new(n);
        double f_new = 0.0;
        double alpha = wolfe_line_search(fn, x, d, f, dg, alpha_init, options.max_line_search,
                                         x_new, f_new, g_new);
        if (alpha <= 0) {
            if (memory.empty()) break;  // steepest descent failed too; give up here
            memory.clear();
            just_reset = true;
            continue;
        }

        Eigen::VectorXd s = x_new - x;
        Eigen::VectorXd y = g_new - g;
        bool flat = std::abs(f - f_new) <= options.f_tolerance * (1.0 + std::abs(f));
        x = std::move(x_new);
        f = f_new;
        g = std::move(g_new);
        result.x = x;
        result.f = f;
        result.grad = g;
        just_reset = false;

        if (y.dot(s) > 1e-12 * y.norm() * s.norm()) {
            memory.emplace_back(std::move(s), std::move(y));
            if (static_cast<int>(memory.size()) > options.history) memory.pop_front();
        }
        flat_streak = flat ? flat_streak + 1 : 0;
        if (flat_streak >= 2) break;
    }
    if (g.lpNorm<Eigen::Infinity>() <= options.grad_tolerance) result.converged = true;
    return result;
}

}  // namespace ksearch
