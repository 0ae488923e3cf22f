#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hazardiv/core_data.hpp"

namespace hazardiv {

struct FitOptions {
    /// Convergence when the max-norm of the log-likelihood gradient drops below this.
    double gradient_tolerance = 1e-8;
    int max_iterations = 200;
};

/// Logistic model for P(Z = 1 | X).
struct PropensityModel {
    Eigen::VectorXd eta;
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
    /// Observed Hessian of the total log-likelihood at eta.
    Eigen::MatrixXd hessian;

    double prob_z1(const Eigen::VectorXd& x) const;
    /// f(z | x).
    double prob(int z, const Eigen::VectorXd& x) const;
};

enum class ExposureKind { rd_op, plugin_logistic };

std::string to_string(ExposureKind kind);
ExposureKind exposure_kind_from_string(const std::string& name);

struct ArmProbabilities {
    double p0 = 0.0;  ///< P(D = 1 | Z = 0, X)
    double p1 = 0.0;  ///< P(D = 1 | Z = 1, X)
};

/// Model for the exposure given instrument and covariates.
///
/// rd_op: risk difference tanh(beta'x) and log odds product zeta'x, mapped
/// to arm probabilities through invert_rd_op. plugin_logistic: logistic
/// regression of D on (x, z*x) (or (x, z) without interactions).
struct ExposureModel {
    ExposureKind kind = ExposureKind::rd_op;
    Eigen::VectorXd beta;
    Eigen::VectorXd zeta;
    Eigen::VectorXd theta_plugin;
    bool interactions = true;
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
    /// Observed Hessian of the total log-likelihood at parameters().
    Eigen::MatrixXd hessian;

    Eigen::VectorXd parameters() const;
    ExposureModel with_parameters(const Eigen::VectorXd& params) const;

    ArmProbabilities arm_probabilities(const Eigen::VectorXd& x) const;
    /// delta^D(x) = P(D=1|Z=1,x) - P(D=1|Z=0,x).
    double risk_difference(const Eigen::VectorXd& x) const;
};

struct NuisanceFit {
    PropensityModel propensity;
    ExposureModel exposure;

    /// Stacked (eta, exposure parameters).
    Eigen::VectorXd parameters() const;
    NuisanceFit with_parameters(const Eigen::VectorXd& theta) const;
};

// Caps on linear predictors in the rd_op likelihood.
inline constexpr double kTanhArgumentCap = 15.0;
inline constexpr double kLogOddsProductCap = 30.0;
/// |delta^D| below this on any unit makes the IV weights unusable.
inline constexpr double kWeakIdentificationThreshold = 1e-6;

/// The unique (p0, p1) in (0,1)^2 with p1 - p0 = delta and
/// p1 p0 / ((1 - p1)(1 - p0)) = op.
ArmProbabilities invert_rd_op(double delta, double op);

PropensityModel fit_propensity(const SurvivalDataset& ds, const FitOptions& options = {});
ExposureModel fit_exposure_rd_op(const SurvivalDataset& ds, const FitOptions& options = {});
ExposureModel fit_exposure_plugin(const SurvivalDataset& ds, bool interactions = true,
                                  const FitOptions& options = {});
NuisanceFit fit_nuisance(const SurvivalDataset& ds, ExposureKind kind,
                         const FitOptions& options = {});

struct NuisanceValue {
    double f_z = 0.0;      ///< f(z_i | x_i)
    double delta_d = 0.0;  ///< delta^D(x_i)
};

NuisanceValue evaluate_nuisance(const NuisanceFit& fit, const Observation& obs);

struct NuisanceValues {
    std::vector<double> f_z;
    std::vector<double> delta_d;
};

NuisanceValues evaluate_nuisance(const NuisanceFit& fit, const SurvivalDataset& ds);

// Log-likelihood pieces. `params` follows the layout of the corresponding
// model's parameters(). Gradients are analytic; scores are per-unit rows.
double propensity_loglik(const SurvivalDataset& ds, const Eigen::VectorXd& eta);
Eigen::VectorXd propensity_gradient(const SurvivalDataset& ds, const Eigen::VectorXd& eta);
Eigen::MatrixXd propensity_scores(const SurvivalDataset& ds, const Eigen::VectorXd& eta);

double exposure_loglik(const SurvivalDataset& ds, const ExposureModel& model);
Eigen::VectorXd exposure_gradient(const SurvivalDataset& ds, const ExposureModel& model);
Eigen::MatrixXd exposure_scores(const SurvivalDataset& ds, const ExposureModel& model);

/// Logistic regression of `outcome` on the rows of `design` (no intercept
/// added). Shared by the propensity, plugin and MSM comparator fits.
struct LogisticFit {
    Eigen::VectorXd coef;
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
    Eigen::MatrixXd hessian;
};

LogisticFit fit_logistic(const Eigen::MatrixXd& design, std::span<const int> outcome,
                         const FitOptions& options = {}, const std::string& label = "logistic");

}  // namespace hazardiv
