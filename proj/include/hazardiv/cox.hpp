#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hazardiv/core_data.hpp"

namespace hazardiv {

/// Breslow partial likelihood of a (weighted) Cox model on a fixed design.
/// Columns are centred internally; the likelihood does not depend on it.
class CoxProblem {
public:
    /// `weights` empty means unit weights.
    CoxProblem(Eigen::MatrixXd design, std::span<const double> y, std::span<const int> delta,
               std::vector<double> weights = {});

    Eigen::Index dim() const { return design_.cols(); }
    double loglik(const Eigen::VectorXd& beta) const;
    Eigen::VectorXd score(const Eigen::VectorXd& beta) const;
    /// Negative Hessian of loglik.
    Eigen::MatrixXd information(const Eigen::VectorXd& beta) const;
    /// Unweighted per-unit score residuals (n x dim); w_i times row i sums to score().
    Eigen::MatrixXd score_residuals(const Eigen::VectorXd& beta) const;
    double total_weight() const { return total_weight_; }
    /// max - min of design column k.
    double column_range(Eigen::Index k) const {
        return design_.col(k).maxCoeff() - design_.col(k).minCoeff();
    }

private:
    struct RiskSums;
    RiskSums risk_sums(const Eigen::VectorXd& beta, bool second_order) const;

    Eigen::MatrixXd design_;
    std::vector<double> y_;
    std::vector<int> delta_;
    std::vector<double> w_;
    double total_weight_ = 0.0;
    RiskSets risk_;
};

/// Columns of a Cox fit: treatment D (optional) followed by named covariates.
struct CoxTerms {
    bool treatment = true;
    std::vector<std::string> covariates;
};

struct CoxFit {
    std::vector<std::string> names;
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    Eigen::MatrixXd covariance;
    /// true when `se` is the robust sandwich (weighted fits).
    bool robust = false;
    std::optional<std::vector<double>> weights_used;
    bool converged = false;
    int iterations = 0;
    double loglik = 0.0;
    /// max |score| / total weight at beta.
    double score_max = 0.0;
    std::vector<std::string> warnings;
};

inline constexpr double kCoxScoreTolerance = 1e-8;
inline constexpr int kCoxMaxIterations = 100;
/// |beta_k| * range(column k) beyond this is treated as a diverging (monotone) likelihood.
inline constexpr double kCoxDivergenceBound = 15.0;
inline constexpr double kExtremeWeight = 50.0;

CoxFit fit_cox(const CoxProblem& problem, std::vector<std::string> names);
CoxFit fit_cox(const SurvivalDataset& ds, const CoxTerms& terms,
               std::optional<std::vector<double>> weights = std::nullopt);

/// Stabilised weights P(D = d_i) / P(D = d_i | confounders) from a logistic
/// model on the confounders.
std::vector<double> stabilized_ipw_weights(const SurvivalDataset& ds,
                                           std::span<const std::string> confounders);

/// Marginal structural Cox model for D fitted with stabilised IPW weights.
CoxFit fit_msm_cox_ipw(const SurvivalDataset& ds, std::span<const std::string> confounders);

}  // namespace hazardiv
