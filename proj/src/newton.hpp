#pragma once

#include <functional>

#include <Eigen/Core>

namespace hazardiv::detail {

struct Objective {
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian;
    /// Called after every accepted step; may throw (e.g. on divergence).
    std::function<void(const Eigen::VectorXd&)> after_step;
};

struct MaximizeResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
    int iterations = 0;
    bool converged = false;
};

/// Newton ascent with backtracking. Falls back to the gradient direction for
/// an iteration whenever the Hessian is not negative definite.
MaximizeResult newton_maximize(const Objective& objective, Eigen::VectorXd start,
                               double gradient_tolerance, int max_iterations);

/// Central finite-difference Jacobian of a vector-valued map, step
/// 1e-5 * (1 + |x_k|) per coordinate unless `relative_step` is given.
Eigen::MatrixXd finite_difference_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
    double relative_step = 1e-5);

}  // namespace hazardiv::detail
