#include "newton.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

namespace hazardiv::detail {

MaximizeResult newton_maximize(const Objective& objective, Eigen::VectorXd start,
                               double gradient_tolerance, int max_iterations) {
    MaximizeResult r;
    r.x = std::move(start);
    r.value = objective.value(r.x);
    r.gradient = objective.gradient(r.x);

    for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
        const double gnorm = r.gradient.cwiseAbs().maxCoeff();
        if (gnorm < gradient_tolerance) {
            r.converged = true;
            break;
        }
        const Eigen::MatrixXd h = objective.hessian(r.x);
        Eigen::VectorXd direction;
        Eigen::LLT<Eigen::MatrixXd> llt(-h);
        if (h.allFinite() && llt.info() == Eigen::Success) {
            direction = llt.solve(r.gradient);
        }
        if (direction.size() == 0 || !direction.allFinite() || r.gradient.dot(direction) <= 0.0) {
            direction = r.gradient;
        }
        const double slope = r.gradient.dot(direction);

        bool accepted = false;
        double t = 1.0;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            Eigen::VectorXd candidate = r.x + t * direction;
            const double v = objective.value(candidate);
            if (!std::isfinite(v)) continue;
            if (v >= r.value + 1e-4 * t * slope) {
                r.x = std::move(candidate);
                r.value = v;
                r.gradient = objective.gradient(r.x);
                accepted = true;
                break;
            }
            // Near the optimum the objective is flat to rounding; accept a
            // step that does not lose value beyond rounding and shrinks the gradient.
            const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                                 std::max(1.0, std::abs(r.value));
            if (v >= r.value - noise) {
                Eigen::VectorXd g = objective.gradient(candidate);
                if (g.cwiseAbs().maxCoeff() < gnorm) {
                    r.x = std::move(candidate);
                    r.value = v;
                    r.gradient = std::move(g);
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted) break;
        if (objective.after_step) objective.after_step(r.x);
    }
    if (!r.converged && r.gradient.cwiseAbs().maxCoeff() < gradient_tolerance) {
        r.converged = true;
    }
    r.hessian = objective.hessian(r.x);
    return r;
}

Eigen::MatrixXd finite_difference_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double relative_step) {
    Eigen::MatrixXd jac;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = relative_step * (1.0 + std::abs(x(k)));
        Eigen::VectorXd xp = x;
        Eigen::VectorXd xm = x;
        xp(k) += h;
        xm(k) -= h;
        const Eigen::VectorXd fp = f(xp);
        const Eigen::VectorXd fm = f(xm);
        if (k == 0) jac.resize(fp.size(), x.size());
        jac.col(k) = (fp - fm) / (xp(k) - xm(k));
    }
    return jac;
}

}  // namespace hazardiv::detail
