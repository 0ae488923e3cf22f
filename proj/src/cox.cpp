#include "hazardiv/cox.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>

#include "hazardiv/errors.hpp"
#include "hazardiv/nuisance.hpp"
#include "hazardiv/numeric.hpp"

namespace hazardiv {

struct CoxProblem::RiskSums {
    // Per tie group (decreasing time): S0, S1 (k), S2 (k x k) over the risk set.
    std::vector<double> s0;
    Eigen::MatrixXd s1;                 // groups x k
    std::vector<Eigen::MatrixXd> s2;    // per group, only when requested
    Eigen::VectorXd lp;
};

CoxProblem::CoxProblem(Eigen::MatrixXd design, std::span<const double> y,
                       std::span<const int> delta, std::vector<double> weights)
    : design_(std::move(design)),
      y_(y.begin(), y.end()),
      delta_(delta.begin(), delta.end()),
      w_(std::move(weights)),
      risk_(y_) {
    const auto n = static_cast<Eigen::Index>(y_.size());
    if (design_.rows() != n || delta_.size() != y_.size()) {
        throw ContractError("cox: design, time and event lengths differ");
    }
    if (w_.empty()) w_.assign(y_.size(), 1.0);
    if (w_.size() != y_.size()) throw ContractError("cox: weight vector has the wrong length");
    for (double w : w_) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw ValueError("cox: weights must be positive and finite");
        }
    }
    total_weight_ = compensated_sum(w_);
    for (Eigen::Index k = 0; k < design_.cols(); ++k) {
        const auto col = design_.col(k);
        if (col.maxCoeff() - col.minCoeff() == 0.0) {
            throw FlatLikelihoodError("cox: covariate column " + std::to_string(k) +
                                      " is constant");
        }
        design_.col(k).array() -= col.mean();
    }
    if (std::none_of(delta_.begin(), delta_.end(), [](int v) { return v == 1; })) {
        throw EmptyEventsError("cox: no observed events");
    }
}

CoxProblem::RiskSums CoxProblem::risk_sums(const Eigen::VectorXd& beta, bool second_order) const {
    const Eigen::Index k = dim();
    const std::size_t groups = risk_.n_groups();
    RiskSums r;
    r.lp = design_ * beta;
    r.s0.assign(groups, 0.0);
    r.s1 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups), k);
    if (second_order) r.s2.assign(groups, Eigen::MatrixXd::Zero(k, k));

    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(k, k);
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t i : risk_.members(g)) {
            const auto row = static_cast<Eigen::Index>(i);
            const double e = w_[i] * std::exp(r.lp(row));
            const auto x = design_.row(row).transpose();
            s0 += e;
            s1 += e * x;
            if (second_order) s2.noalias() += e * x * x.transpose();
        }
        r.s0[g] = s0;
        r.s1.row(static_cast<Eigen::Index>(g)) = s1.transpose();
        if (second_order) r.s2[g] = s2;
    }
    return r;
}

double CoxProblem::loglik(const Eigen::VectorXd& beta) const {
    const RiskSums r = risk_sums(beta, false);
    CompensatedSum acc;
    for (std::size_t i = 0; i < y_.size(); ++i) {
        if (delta_[i] != 1) continue;
        acc += w_[i] * (r.lp(static_cast<Eigen::Index>(i)) - std::log(r.s0[risk_.group_of(i)]));
    }
    return acc.value();
}

Eigen::VectorXd CoxProblem::score(const Eigen::VectorXd& beta) const {
    const RiskSums r = risk_sums(beta, false);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(dim());
    for (std::size_t i = 0; i < y_.size(); ++i) {
        if (delta_[i] != 1) continue;
        const std::size_t g = risk_.group_of(i);
        const auto row = static_cast<Eigen::Index>(i);
        u += w_[i] * (design_.row(row) - r.s1.row(static_cast<Eigen::Index>(g)) / r.s0[g])
                         .transpose();
    }
    return u;
}

Eigen::MatrixXd CoxProblem::information(const Eigen::VectorXd& beta) const {
    const RiskSums r = risk_sums(beta, true);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim(), dim());
    for (std::size_t i = 0; i < y_.size(); ++i) {
        if (delta_[i] != 1) continue;
        const std::size_t g = risk_.group_of(i);
        const Eigen::VectorXd xbar = r.s1.row(static_cast<Eigen::Index>(g)).transpose() / r.s0[g];
        info += w_[i] * (r.s2[g] / r.s0[g] - xbar * xbar.transpose());
    }
    return info;
}

Eigen::MatrixXd CoxProblem::score_residuals(const Eigen::VectorXd& beta) const {
    const RiskSums r = risk_sums(beta, false);
    const Eigen::Index k = dim();
    const std::size_t groups = risk_.n_groups();

    // Running sums over event times <= t of dN_w / S0 and dN_w xbar / S0,
    // accumulated from the earliest group (last index) upwards.
    std::vector<double> a0(groups, 0.0);
    Eigen::MatrixXd a1 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups), k);
    double acc0 = 0.0;
    Eigen::VectorXd acc1 = Eigen::VectorXd::Zero(k);
    for (std::size_t g = groups; g-- > 0;) {
        double dn = 0.0;
        for (std::size_t i : risk_.members(g)) {
            if (delta_[i] == 1) dn += w_[i];
        }
        if (dn > 0.0) {
            const Eigen::VectorXd xbar = r.s1.row(static_cast<Eigen::Index>(g)).transpose() / r.s0[g];
            acc0 += dn / r.s0[g];
            acc1 += dn / r.s0[g] * xbar;
        }
        a0[g] = acc0;
        a1.row(static_cast<Eigen::Index>(g)) = acc1.transpose();
    }

    Eigen::MatrixXd res(static_cast<Eigen::Index>(y_.size()), k);
    for (std::size_t i = 0; i < y_.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const std::size_t g = risk_.group_of(i);
        const auto gi = static_cast<Eigen::Index>(g);
        Eigen::RowVectorXd ri = -std::exp(r.lp(row)) * (design_.row(row) * a0[g] - a1.row(gi));
        if (delta_[i] == 1) ri += design_.row(row) - r.s1.row(gi) / r.s0[g];
        res.row(row) = ri;
    }
    return res;
}

CoxFit fit_cox(const CoxProblem& problem, std::vector<std::string> names) {
    const Eigen::Index k = problem.dim();
    const double scale = problem.total_weight();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    double ll = problem.loglik(beta);
    Eigen::VectorXd u = problem.score(beta);

    CoxFit fit;
    fit.names = std::move(names);
    int it = 0;
    for (; it < kCoxMaxIterations; ++it) {
        if (u.cwiseAbs().maxCoeff() / scale < kCoxScoreTolerance) {
            fit.converged = true;
            break;
        }
        const Eigen::MatrixXd info = problem.information(beta);
        Eigen::LLT<Eigen::MatrixXd> llt(info);
        if (llt.info() != Eigen::Success) {
            throw FlatLikelihoodError("cox: partial likelihood information is not positive definite");
        }
        const Eigen::VectorXd step = llt.solve(u);
        double t = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            const Eigen::VectorXd cand = beta + t * step;
            const double cand_ll = problem.loglik(cand);
            if (std::isfinite(cand_ll) && cand_ll >= ll - 64 * 2.2e-16 * std::abs(ll)) {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        u = problem.score(beta);
    }
    if (!fit.converged && u.cwiseAbs().maxCoeff() / scale < kCoxScoreTolerance) {
        fit.converged = true;
    }
    fit.iterations = it;
    fit.beta = beta;
    fit.loglik = ll;
    fit.score_max = u.cwiseAbs().maxCoeff() / scale;
    for (Eigen::Index j = 0; j < k; ++j) {
        if (std::abs(beta(j)) * problem.column_range(j) > kCoxDivergenceBound) {
            throw SeparationError("cox: coefficient of '" +
                                  (static_cast<std::size_t>(j) < fit.names.size()
                                       ? fit.names[static_cast<std::size_t>(j)]
                                       : std::to_string(j)) +
                                  "' diverges (monotone partial likelihood)");
        }
    }
    if (!fit.converged) {
        std::ostringstream msg;
        msg << "cox: Newton iterations did not converge (score max-norm " << fit.score_max << ")";
        throw ConvergenceError(msg.str());
    }

    const Eigen::MatrixXd info = problem.information(beta);
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
        throw FlatLikelihoodError("cox: information at the estimate is not positive definite");
    }
    fit.covariance = llt.solve(Eigen::MatrixXd::Identity(k, k));
    fit.se = fit.covariance.diagonal().cwiseSqrt();
    return fit;
}

namespace {

std::vector<std::string> cox_names(const CoxTerms& terms) {
    std::vector<std::string> names;
    if (terms.treatment) names.emplace_back("d");
    names.insert(names.end(), terms.covariates.begin(), terms.covariates.end());
    return names;
}

Eigen::MatrixXd cox_design(const SurvivalDataset& ds, const CoxTerms& terms) {
    const auto n = static_cast<Eigen::Index>(ds.n());
    const auto k = static_cast<Eigen::Index>(terms.covariates.size() + (terms.treatment ? 1 : 0));
    if (k == 0) throw ContractError("cox: no terms selected");
    Eigen::MatrixXd w(n, k);
    Eigen::Index col = 0;
    if (terms.treatment) {
        for (Eigen::Index i = 0; i < n; ++i) w(i, 0) = ds.d()[static_cast<std::size_t>(i)];
        ++col;
    }
    for (const std::string& name : terms.covariates) {
        if (name == SurvivalDataset::kInterceptName) {
            throw ContractError("cox: the intercept is not a Cox covariate");
        }
        w.col(col++) = ds.x().col(static_cast<Eigen::Index>(ds.covariate_index(name)));
    }
    return w;
}

}  // namespace

CoxFit fit_cox(const SurvivalDataset& ds, const CoxTerms& terms,
               std::optional<std::vector<double>> weights) {
    const Eigen::MatrixXd design = cox_design(ds, terms);
    const CoxProblem problem(design, ds.y(), ds.delta(), weights.value_or(std::vector<double>{}));
    CoxFit fit = fit_cox(problem, cox_names(terms));

    if (weights) {
        // Lin-Wei sandwich: I^-1 (sum w_i^2 r_i r_i') I^-1.
        const Eigen::MatrixXd res = problem.score_residuals(fit.beta);
        Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(problem.dim(), problem.dim());
        for (Eigen::Index i = 0; i < res.rows(); ++i) {
            const double w = (*weights)[static_cast<std::size_t>(i)];
            meat.noalias() += (w * w) * res.row(i).transpose() * res.row(i);
        }
        fit.covariance = fit.covariance * meat * fit.covariance;
        fit.se = fit.covariance.diagonal().cwiseSqrt();
        fit.robust = true;
        const double wmax = *std::max_element(weights->begin(), weights->end());
        if (wmax > kExtremeWeight) {
            std::ostringstream msg;
            msg << "extreme IPW weight " << wmax << " exceeds " << kExtremeWeight;
            fit.warnings.push_back(msg.str());
        }
        fit.weights_used = std::move(weights);
    }
    return fit;
}

std::vector<double> stabilized_ipw_weights(const SurvivalDataset& ds,
                                           std::span<const std::string> confounders) {
    const auto n = static_cast<Eigen::Index>(ds.n());
    Eigen::MatrixXd design(n, static_cast<Eigen::Index>(confounders.size()) + 1);
    design.col(0).setOnes();
    for (std::size_t j = 0; j < confounders.size(); ++j) {
        design.col(static_cast<Eigen::Index>(j) + 1) =
            ds.x().col(static_cast<Eigen::Index>(ds.covariate_index(confounders[j])));
    }
    const LogisticFit lf = fit_logistic(design, ds.d(), {}, "treatment propensity");
    double treated = 0.0;
    for (int d : ds.d()) treated += d;
    const double marginal = treated / static_cast<double>(ds.n());

    std::vector<double> w(ds.n());
    const Eigen::VectorXd lp = design * lf.coef;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double p = expit(lp(static_cast<Eigen::Index>(i)));
        w[i] = ds.d()[i] ? marginal / p : (1.0 - marginal) / (1.0 - p);
    }
    return w;
}

CoxFit fit_msm_cox_ipw(const SurvivalDataset& ds, std::span<const std::string> confounders) {
    return fit_cox(ds, CoxTerms{true, {}}, stabilized_ipw_weights(ds, confounders));
}

}  // namespace hazardiv
