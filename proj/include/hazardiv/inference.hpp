#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hazardiv/core_data.hpp"
#include "hazardiv/ivhr.hpp"
#include "hazardiv/nuisance.hpp"

namespace hazardiv {

struct InferenceReport {
    double psi = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double level = 0.95;
    std::vector<double> if_values;
    double score_derivative = 0.0;          ///< A = d mean U / d psi
    Eigen::VectorXd nuisance_jacobian;      ///< B = d mean U / d theta
};

/// Mean estimating function of the given method at (psi, fit), with gamma
/// profiles (closed form) or risk-set ratios (estimating equation)
/// recomputed from the fit's weights.
double mean_score(const SurvivalDataset& ds, const NuisanceFit& fit, PsiMethod method,
                  HFunction h, double psi);

/// Analytic d mean_score / d psi.
double mean_score_derivative(const SurvivalDataset& ds, const NuisanceFit& fit, PsiMethod method,
                             HFunction h, double psi);

/// Per-unit influence values of psi_hat: -A^-1 [U^c_i + B IF_theta_i], where
/// U^c is the compensated (martingale) score at psi_hat using the weighted
/// Breslow baseline hazard, B is a central finite-difference Jacobian over
/// the nuisance parameters and IF_theta comes from each nuisance MLE's
/// observed information and per-unit scores.
std::vector<double> influence_functions(const SurvivalDataset& ds, const NuisanceFit& fit,
                                        const PsiEstimate& estimate);

InferenceReport infer(const SurvivalDataset& ds, const NuisanceFit& fit,
                      const PsiEstimate& estimate, double level = 0.95);

/// psi -/+ z_{(1+level)/2} se.
std::pair<double, double> wald_ci(double psi, double se, double level);

}  // namespace hazardiv
