#include "hazardiv/inference.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "hazardiv/errors.hpp"
#include "hazardiv/numeric.hpp"
#include "newton.hpp"

namespace hazardiv {

namespace {

struct RiskRatios {
    std::vector<double> s0;    // per tie group
    std::vector<double> sbar;  // S1 / S0 per tie group
};

RiskRatios risk_ratios(const SurvivalDataset& ds, const RiskSets& rs, const IVWeights& w,
                       double psi) {
    std::vector<double> e(ds.n());
    std::vector<double> de(ds.n());
    const double ep = std::exp(psi);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        e[i] = (ds.d()[i] ? ep : 1.0) * w.omega[i];
        de[i] = ds.d()[i] * e[i];
    }
    RiskRatios r{rs.cumulative(e), rs.cumulative(de)};
    for (std::size_t g = 0; g < r.s0.size(); ++g) {
        r.sbar[g] = r.s0[g] != 0.0 ? r.sbar[g] / r.s0[g] : 0.0;
    }
    return r;
}

// Index of the last grid time <= t, or -1.
std::ptrdiff_t last_time_at_or_before(const std::vector<double>& times, double t) {
    return std::upper_bound(times.begin(), times.end(), t) - times.begin() - 1;
}

// Compensator uses the baseline hazard from `w_breslow` (sign weights); the
// h = 1 version is unstable near psi = 0.
std::vector<double> centered_closed_form(const SurvivalDataset& ds, const IVWeights& w1,
                                         const IVWeights& w_breslow, double psi) {
    std::vector<double> u = closed_form_unit_scores(ds, w1, psi);
    const BaselineHazard bh = weighted_breslow(ds, w_breslow, psi);
    const GammaProfiles gp = gamma_profiles(ds, w1);

    const std::size_t k = bh.grid.times.size();
    std::vector<double> c1(k), c0(k);
    CompensatedSum acc1, acc0;
    for (std::size_t j = 0; j < k; ++j) {
        const double dl = bh.cumulative[j] - (j ? bh.cumulative[j - 1] : 0.0);
        acc1 += (gp.gamma1[j] - gp.gamma2[j]) * dl;
        acc0 += gp.gamma2[j] * dl;
        c1[j] = acc1.value();
        c0[j] = acc0.value();
    }
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const std::ptrdiff_t j = last_time_at_or_before(bh.grid.times, ds.y()[i]);
        if (j < 0) continue;
        const auto idx = static_cast<std::size_t>(j);
        const double compensator = ds.d()[i] ? c1[idx] : -c0[idx];
        u[i] -= w1.omega[i] * compensator;
    }
    return u;
}

std::vector<double> centered_ee(const SurvivalDataset& ds, const IVWeights& w, double psi) {
    const RiskSets rs(ds.y());
    const RiskRatios rr = risk_ratios(ds, rs, w, psi);
    const double horizon = ee_time_horizon(ds, w);

    // Ascending event times with the weighted Breslow increments for these weights.
    std::vector<double> times, e0, e1;
    CompensatedSum acc0, acc1;
    for (std::size_t g = rs.n_groups(); g-- > 0;) {
        CompensatedSum events;
        bool has_event = false;
        for (std::size_t i : rs.members(g)) {
            if (ds.delta()[i] == 1) {
                events += w.omega[i];
                has_event = true;
            }
        }
        if (!has_event || rs.group_time(g) >= horizon) continue;
        if (rr.s0[g] == 0.0) {
            throw DegenerateDenominatorError("influence function: zero risk-set denominator");
        }
        const double dl = events.value() / rr.s0[g];
        acc0 += dl;
        acc1 += rr.sbar[g] * dl;
        times.push_back(rs.group_time(g));
        e0.push_back(acc0.value());
        e1.push_back(acc1.value());
    }

    const double ep = std::exp(psi);
    std::vector<double> u(ds.n(), 0.0);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const int d = ds.d()[i];
        if (ds.delta()[i] == 1 && ds.y()[i] < horizon) {
            u[i] = w.omega[i] * (d - rr.sbar[rs.group_of(i)]);
        }
        const std::ptrdiff_t j = last_time_at_or_before(times, ds.y()[i]);
        if (j < 0) continue;
        const auto idx = static_cast<std::size_t>(j);
        u[i] -= w.omega[i] * (d ? ep : 1.0) * (d * e0[idx] - e1[idx]);
    }
    return u;
}

// Rows: per-unit influence of theta_hat = (observed information / n)^-1 score_i.
Eigen::MatrixXd nuisance_influence(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& hessian,
                                   const char* label) {
    const double n = static_cast<double>(scores.rows());
    if (hessian.rows() != scores.cols() || hessian.cols() != scores.cols()) {
        throw ContractError(std::string(label) + ": stored Hessian has the wrong shape");
    }
    const Eigen::MatrixXd info = -hessian / n;
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
        throw SingularInformationError(std::string(label) +
                                       ": observed information is not positive definite");
    }
    const Eigen::VectorXd diag = info.diagonal();
    const Eigen::VectorXd ldiag = llt.matrixL().toDenseMatrix().diagonal();
    if ((ldiag.array().square() < 1e-12 * diag.array().abs().maxCoeff()).any()) {
        throw SingularInformationError(std::string(label) + ": observed information is singular");
    }
    return llt.solve(scores.transpose()).transpose();
}

}  // namespace

double mean_score(const SurvivalDataset& ds, const NuisanceFit& fit, PsiMethod method, HFunction h,
                  double psi) {
    if (method == PsiMethod::closed_form) {
        const std::vector<double> u =
            closed_form_unit_scores(ds, compute_weights(ds, fit, HFunction::one), psi);
        return compensated_mean(u);
    }
    return evaluate_ee(ds, compute_weights(ds, fit, h), psi);
}

double mean_score_derivative(const SurvivalDataset& ds, const NuisanceFit& fit, PsiMethod method,
                             HFunction h, double psi) {
    const double n = static_cast<double>(ds.n());
    if (method == PsiMethod::closed_form) {
        const IVWeights w1 = compute_weights(ds, fit, HFunction::one);
        const std::vector<double> u = closed_form_unit_scores(ds, w1, psi);
        CompensatedSum s;
        for (std::size_t i = 0; i < ds.n(); ++i) {
            if (ds.d()[i] == 1) s += u[i];  // treated terms carry e^{-psi}
        }
        return -s.value() / n;
    }
    const IVWeights w = compute_weights(ds, fit, h);
    const RiskSets rs(ds.y());
    const RiskRatios rr = risk_ratios(ds, rs, w, psi);
    const double horizon = ee_time_horizon(ds, w);
    CompensatedSum s;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        if (ds.delta()[i] != 1 || ds.y()[i] >= horizon) continue;
        const double sb = rr.sbar[rs.group_of(i)];
        s += w.omega[i] * sb * (1.0 - sb);
    }
    return -s.value() / n;
}

std::vector<double> influence_functions(const SurvivalDataset& ds, const NuisanceFit& fit,
                                        const PsiEstimate& estimate) {
    const PsiMethod method = estimate.method;
    const HFunction h = method == PsiMethod::closed_form ? HFunction::one : estimate.h;
    const double psi = estimate.psi;

    const double a = mean_score_derivative(ds, fit, method, h, psi);
    if (!(std::abs(a) >= 1e-12)) {
        throw FlatScoreError("score derivative d U / d psi is numerically zero (" +
                             std::to_string(a) + ")");
    }

    const IVWeights w = compute_weights(ds, fit, h);
    const std::vector<double> centered = method == PsiMethod::closed_form
                                             ? centered_closed_form(
                                                   ds, w, compute_weights(ds, fit, HFunction::sign), psi)
                                             : centered_ee(ds, w, psi);

    const Eigen::VectorXd theta = fit.parameters();
    const auto score_at = [&](const Eigen::VectorXd& t) {
        return Eigen::VectorXd::Constant(1, mean_score(ds, fit.with_parameters(t), method, h, psi));
    };
    const Eigen::RowVectorXd b = detail::finite_difference_jacobian(score_at, theta).row(0);

    const Eigen::MatrixXd if_eta = nuisance_influence(
        propensity_scores(ds, fit.propensity.eta), fit.propensity.hessian, "instrument propensity");
    const Eigen::MatrixXd if_exposure =
        nuisance_influence(exposure_scores(ds, fit.exposure), fit.exposure.hessian, "exposure model");
    const Eigen::Index pe = if_eta.cols();

    std::vector<double> out(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double correction = b.head(pe).dot(if_eta.row(row)) +
                                  b.tail(b.size() - pe).dot(if_exposure.row(row));
        out[i] = -(centered[i] + correction) / a;
    }
    return out;
}

InferenceReport infer(const SurvivalDataset& ds, const NuisanceFit& fit,
                      const PsiEstimate& estimate, double level) {
    InferenceReport r;
    r.psi = estimate.psi;
    r.level = level;
    r.if_values = influence_functions(ds, fit, estimate);
    CompensatedSum sq;
    for (double v : r.if_values) sq += v * v;
    const double n = static_cast<double>(ds.n());
    r.se = std::sqrt(sq.value() / n / n);
    const HFunction h = estimate.method == PsiMethod::closed_form ? HFunction::one : estimate.h;
    r.score_derivative = mean_score_derivative(ds, fit, estimate.method, h, estimate.psi);
    const Eigen::VectorXd theta = fit.parameters();
    r.nuisance_jacobian = detail::finite_difference_jacobian(
                              [&](const Eigen::VectorXd& t) {
                                  return Eigen::VectorXd::Constant(
                                      1, mean_score(ds, fit.with_parameters(t), estimate.method, h,
                                                    estimate.psi));
                              },
                              theta)
                              .row(0)
                              .transpose();
    std::tie(r.ci_lo, r.ci_hi) = wald_ci(r.psi, r.se, level);
    return r;
}

std::pair<double, double> wald_ci(double psi, double se, double level) {
    if (!(se > 0.0) || !std::isfinite(se)) throw ContractError("wald_ci: se must be positive");
    if (!(level > 0.0 && level < 1.0)) throw ContractError("wald_ci: level must lie in (0, 1)");
    const double q = normal_quantile(0.5 + 0.5 * level);
    return {psi - q * se, psi + q * se};
}

}  // namespace hazardiv
