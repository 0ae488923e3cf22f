#include "hazardiv/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hazardiv/errors.hpp"
#include "hazardiv/numeric.hpp"
#include "newton.hpp"

namespace hazardiv {

namespace {

constexpr double kSeparationLinearPredictor = 30.0;
constexpr double kSaturatedLoglikPerUnit = 1e-8;

// Arm probabilities with their complements, each accurate in relative terms.
struct ArmState {
    double p0, p1, q0, q1;
};

ArmState invert_rd_op_full(double delta, double op) {
    const double lo = std::max(0.0, -delta);
    const double hi = std::min(1.0, 1.0 - delta);
    // (op - 1) p0^2 + ((op - 1) delta - 2 op) p0 + op (1 - delta) = 0
    const double a = op - 1.0;
    const double b = (op - 1.0) * delta - 2.0 * op;
    const double c = op * (1.0 - delta);
    const double disc = std::max(0.0, b * b - 4.0 * a * c);
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));

    double p0 = std::numeric_limits<double>::quiet_NaN();
    double best_gap = std::numeric_limits<double>::infinity();
    auto consider = [&](double root) {
        if (!std::isfinite(root)) return;
        const double gap = root < lo ? lo - root : (root > hi ? root - hi : 0.0);
        if (gap < best_gap) {
            best_gap = gap;
            p0 = root;
        }
    };
    if (q != 0.0) consider(c / q);
    if (a != 0.0) consider(q / a);
    p0 = std::clamp(p0, lo, hi);

    ArmState s{p0, p0 + delta, 1.0 - p0, 1.0 - (p0 + delta)};
    // Recover the smallest of the four from p0 p1 = op q0 q1 so it keeps
    // full relative precision.
    const double smallest = std::min({s.p0, s.p1, s.q0, s.q1});
    if (smallest == s.q1 && s.q0 > 0.0) {
        s.q1 = s.p0 * s.p1 / (op * s.q0);
    } else if (smallest == s.q0 && s.q1 > 0.0) {
        s.q0 = s.p0 * s.p1 / (op * s.q1);
    } else if (smallest == s.p1 && s.p0 > 0.0) {
        s.p1 = op * s.q0 * s.q1 / s.p0;
    }
    return s;
}

struct RdOpUnit {
    ArmState arms;
    double delta;
    double ddelta;  // d delta / d(beta'x), zero when capped
    double dphi;    // d log OP / d(zeta'x), zero when capped
};

RdOpUnit rd_op_unit(const Eigen::VectorXd& beta, const Eigen::VectorXd& zeta,
                    const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const double lin_b = x.dot(beta);
    const double lin_z = x.dot(zeta);
    const double arg = std::clamp(lin_b, -kTanhArgumentCap, kTanhArgumentCap);
    const double phi = std::clamp(lin_z, -kLogOddsProductCap, kLogOddsProductCap);
    const double delta = std::tanh(arg);
    RdOpUnit u;
    u.arms = invert_rd_op_full(delta, std::exp(phi));
    u.delta = delta;
    u.ddelta = std::abs(lin_b) < kTanhArgumentCap ? 1.0 - delta * delta : 0.0;
    u.dphi = std::abs(lin_z) < kLogOddsProductCap ? 1.0 : 0.0;
    return u;
}

Eigen::MatrixXd plugin_design(const SurvivalDataset& ds, bool interactions) {
    const Eigen::MatrixXd& x = ds.x();
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    Eigen::MatrixXd design(n, interactions ? 2 * p : p + 1);
    design.leftCols(p) = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z = ds.z()[static_cast<std::size_t>(i)];
        if (interactions) {
            design.row(i).tail(p) = z * x.row(i);
        } else {
            design(i, p) = z;
        }
    }
    return design;
}

// Per-unit logistic log-likelihood contributions.
double logistic_loglik(const Eigen::MatrixXd& design, std::span<const int> outcome,
                       const Eigen::VectorXd& coef) {
    const Eigen::VectorXd lp = design * coef;
    CompensatedSum ll;
    for (Eigen::Index i = 0; i < lp.size(); ++i) {
        // log P(y | lp) = y lp - log(1 + e^lp)
        ll += outcome[static_cast<std::size_t>(i)] * lp(i) - log1pexp(lp(i));
    }
    return ll.value();
}

Eigen::MatrixXd logistic_scores(const Eigen::MatrixXd& design, std::span<const int> outcome,
                                const Eigen::VectorXd& coef) {
    const Eigen::VectorXd lp = design * coef;
    Eigen::MatrixXd scores(design.rows(), design.cols());
    for (Eigen::Index i = 0; i < lp.size(); ++i) {
        scores.row(i) = (outcome[static_cast<std::size_t>(i)] - expit(lp(i))) * design.row(i);
    }
    return scores;
}

Eigen::MatrixXd logistic_hessian(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef) {
    const Eigen::VectorXd lp = design * coef;
    Eigen::VectorXd w(lp.size());
    for (Eigen::Index i = 0; i < lp.size(); ++i) {
        const double p = expit(lp(i));
        w(i) = p * (1.0 - p);
    }
    return -(design.transpose() * w.asDiagonal() * design);
}

Eigen::VectorXd rd_op_gradient_impl(const SurvivalDataset& ds, const Eigen::VectorXd& beta,
                                    const Eigen::VectorXd& zeta, Eigen::MatrixXd* scores) {
    const Eigen::MatrixXd& x = ds.x();
    const Eigen::Index p = x.cols();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(2 * p);
    if (scores) scores->resize(x.rows(), 2 * p);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto row = x.row(i);
        const RdOpUnit u = rd_op_unit(beta, zeta, row);
        const ArmState& s = u.arms;
        const double v0 = s.p0 * s.q0;
        const double v1 = s.p1 * s.q1;
        const double sum_v = v0 + v1;
        const auto idx = static_cast<std::size_t>(i);
        const int d = ds.d()[idx];
        double coef_delta, coef_phi;
        if (ds.z()[idx] == 1) {
            const double resid = d ? s.q1 : -s.p1;  // d - p1
            coef_delta = resid / sum_v;
            coef_phi = resid * v0 / sum_v;
        } else {
            const double resid = d ? s.q0 : -s.p0;  // d - p0
            coef_delta = -resid / sum_v;
            coef_phi = resid * v1 / sum_v;
        }
        const double gb = coef_delta * u.ddelta;
        const double gz = coef_phi * u.dphi;
        grad.head(p) += gb * row.transpose();
        grad.tail(p) += gz * row.transpose();
        if (scores) {
            scores->row(i).head(p) = gb * row;
            scores->row(i).tail(p) = gz * row;
        }
    }
    return grad;
}

double rd_op_loglik_impl(const SurvivalDataset& ds, const Eigen::VectorXd& beta,
                         const Eigen::VectorXd& zeta) {
    const Eigen::MatrixXd& x = ds.x();
    CompensatedSum ll;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const RdOpUnit u = rd_op_unit(beta, zeta, x.row(i));
        const auto idx = static_cast<std::size_t>(i);
        const bool z1 = ds.z()[idx] == 1;
        const double p = z1 ? u.arms.p1 : u.arms.p0;
        const double q = z1 ? u.arms.q1 : u.arms.q0;
        // Probabilities on the boundary make the point infeasible for the line search.
        if (!(p > 0.0 && q > 0.0)) return -std::numeric_limits<double>::infinity();
        ll += ds.d()[idx] ? std::log(p) : std::log(q);
    }
    return ll.value();
}

void check_separation(const Eigen::MatrixXd& design, const Eigen::VectorXd& coef,
                      const std::string& label) {
    const double max_lp = (design * coef).cwiseAbs().maxCoeff();
    if (max_lp > kSeparationLinearPredictor) {
        throw SeparationError(label + ": linear predictor diverges (|x'b| = " +
                              std::to_string(max_lp) +
                              "); the outcome is (quasi-)perfectly separated by the covariates");
    }
}

}  // namespace

double PropensityModel::prob_z1(const Eigen::VectorXd& x) const { return expit(x.dot(eta)); }

double PropensityModel::prob(int z, const Eigen::VectorXd& x) const {
    const double lp = x.dot(eta);
    return z == 1 ? expit(lp) : expit(-lp);
}

std::string to_string(ExposureKind kind) {
    return kind == ExposureKind::rd_op ? "rd-op" : "plugin-logistic";
}

ExposureKind exposure_kind_from_string(const std::string& name) {
    if (name == "rd-op" || name == "rd_op") return ExposureKind::rd_op;
    if (name == "plugin-logistic" || name == "plugin_logistic") {
        return ExposureKind::plugin_logistic;
    }
    throw ContractError("unknown exposure model '" + name + "' (expected rd-op or plugin-logistic)");
}

Eigen::VectorXd ExposureModel::parameters() const {
    if (kind == ExposureKind::plugin_logistic) return theta_plugin;
    Eigen::VectorXd out(beta.size() + zeta.size());
    out << beta, zeta;
    return out;
}

ExposureModel ExposureModel::with_parameters(const Eigen::VectorXd& params) const {
    ExposureModel m = *this;
    if (kind == ExposureKind::plugin_logistic) {
        if (params.size() != theta_plugin.size()) throw ContractError("parameter size mismatch");
        m.theta_plugin = params;
    } else {
        if (params.size() != beta.size() + zeta.size()) {
            throw ContractError("parameter size mismatch");
        }
        m.beta = params.head(beta.size());
        m.zeta = params.tail(zeta.size());
    }
    return m;
}

ArmProbabilities ExposureModel::arm_probabilities(const Eigen::VectorXd& x) const {
    if (kind == ExposureKind::rd_op) {
        const RdOpUnit u = rd_op_unit(beta, zeta, x.transpose());
        return {u.arms.p0, u.arms.p1};
    }
    const Eigen::Index p = x.size();
    const double base = theta_plugin.head(p).dot(x);
    const double shift = interactions ? theta_plugin.tail(p).dot(x) : theta_plugin(p);
    return {expit(base), expit(base + shift)};
}

double ExposureModel::risk_difference(const Eigen::VectorXd& x) const {
    if (kind == ExposureKind::rd_op) {
        return std::tanh(std::clamp(x.dot(beta), -kTanhArgumentCap, kTanhArgumentCap));
    }
    const ArmProbabilities a = arm_probabilities(x);
    return a.p1 - a.p0;
}

Eigen::VectorXd NuisanceFit::parameters() const {
    const Eigen::VectorXd ex = exposure.parameters();
    Eigen::VectorXd out(propensity.eta.size() + ex.size());
    out << propensity.eta, ex;
    return out;
}

NuisanceFit NuisanceFit::with_parameters(const Eigen::VectorXd& theta) const {
    NuisanceFit f = *this;
    const Eigen::Index p = propensity.eta.size();
    if (theta.size() < p) throw ContractError("parameter size mismatch");
    f.propensity.eta = theta.head(p);
    f.exposure = exposure.with_parameters(theta.tail(theta.size() - p));
    return f;
}

ArmProbabilities invert_rd_op(double delta, double op) {
    if (!(delta > -1.0 && delta < 1.0)) {
        throw DomainError("invert_rd_op: risk difference must lie in (-1, 1), got " +
                          std::to_string(delta));
    }
    if (!(op > 0.0) || !std::isfinite(op)) {
        throw DomainError("invert_rd_op: odds product must be positive and finite, got " +
                          std::to_string(op));
    }
    const ArmState s = invert_rd_op_full(delta, op);
    return {s.p0, s.p1};
}

LogisticFit fit_logistic(const Eigen::MatrixXd& design, std::span<const int> outcome,
                         const FitOptions& options, const std::string& label) {
    detail::Objective obj;
    obj.value = [&](const Eigen::VectorXd& b) { return logistic_loglik(design, outcome, b); };
    obj.gradient = [&](const Eigen::VectorXd& b) -> Eigen::VectorXd {
        return logistic_scores(design, outcome, b).colwise().sum().transpose();
    };
    obj.hessian = [&](const Eigen::VectorXd& b) { return logistic_hessian(design, b); };
    obj.after_step = [&](const Eigen::VectorXd& b) { check_separation(design, b, label); };

    const detail::MaximizeResult r = detail::newton_maximize(
        obj, Eigen::VectorXd::Zero(design.cols()), options.gradient_tolerance,
        options.max_iterations);
    check_separation(design, r.x, label);

    // Complete separation: every unit's observed outcome predicted with certainty.
    const Eigen::VectorXd lp = design * r.x;
    bool all_certain = true;
    for (Eigen::Index i = 0; i < lp.size() && all_certain; ++i) {
        const double p_obs = outcome[static_cast<std::size_t>(i)] ? expit(lp(i)) : expit(-lp(i));
        all_certain = p_obs > 1.0 - 1e-6;
    }
    if (all_certain) {
        throw SeparationError(label + ": outcome is perfectly separated by the covariates");
    }
    if (!r.converged) {
        throw ConvergenceError(label + ": Newton iterations did not converge after " +
                               std::to_string(r.iterations) + " iterations (gradient max-norm " +
                               std::to_string(r.gradient.cwiseAbs().maxCoeff()) + ")");
    }
    return LogisticFit{r.x, r.converged, r.iterations, r.value, r.hessian};
}

PropensityModel fit_propensity(const SurvivalDataset& ds, const FitOptions& options) {
    const LogisticFit f = fit_logistic(ds.x(), ds.z(), options, "instrument propensity model");
    return PropensityModel{f.coef, f.converged, f.iterations, f.loglik, f.hessian};
}

double propensity_loglik(const SurvivalDataset& ds, const Eigen::VectorXd& eta) {
    return logistic_loglik(ds.x(), ds.z(), eta);
}

Eigen::VectorXd propensity_gradient(const SurvivalDataset& ds, const Eigen::VectorXd& eta) {
    return logistic_scores(ds.x(), ds.z(), eta).colwise().sum().transpose();
}

Eigen::MatrixXd propensity_scores(const SurvivalDataset& ds, const Eigen::VectorXd& eta) {
    return logistic_scores(ds.x(), ds.z(), eta);
}

ExposureModel fit_exposure_rd_op(const SurvivalDataset& ds, const FitOptions& options) {
    const Eigen::Index p = static_cast<Eigen::Index>(ds.p());
    auto split = [p](const Eigen::VectorXd& t) {
        return std::pair<Eigen::VectorXd, Eigen::VectorXd>{t.head(p), t.tail(p)};
    };
    detail::Objective obj;
    obj.value = [&](const Eigen::VectorXd& t) {
        const auto [b, z] = split(t);
        return rd_op_loglik_impl(ds, b, z);
    };
    obj.gradient = [&](const Eigen::VectorXd& t) {
        const auto [b, z] = split(t);
        return rd_op_gradient_impl(ds, b, z, nullptr);
    };
    obj.hessian = [&](const Eigen::VectorXd& t) -> Eigen::MatrixXd {
        const Eigen::MatrixXd j = detail::finite_difference_jacobian(obj.gradient, t);
        return 0.5 * (j + j.transpose());
    };

    detail::MaximizeResult r = detail::newton_maximize(
        obj, Eigen::VectorXd::Zero(2 * p), options.gradient_tolerance, options.max_iterations);
    // Exposure perfectly predicted (e.g. full compliance): the supremum 0 is
    // approached along a ray and the capped tanh keeps delta inside (-1, 1).
    if (!r.converged && r.value / static_cast<double>(ds.n()) > -kSaturatedLoglikPerUnit) {
        r.converged = true;
    }
    if (!r.converged) {
        throw ConvergenceError("exposure model (rd-op): Newton iterations did not converge after " +
                               std::to_string(r.iterations) + " iterations (gradient max-norm " +
                               std::to_string(r.gradient.cwiseAbs().maxCoeff()) + ")");
    }
    ExposureModel m;
    m.kind = ExposureKind::rd_op;
    m.beta = r.x.head(p);
    m.zeta = r.x.tail(p);
    m.converged = true;
    m.iterations = r.iterations;
    m.loglik = r.value;
    m.hessian = r.hessian;
    return m;
}

ExposureModel fit_exposure_plugin(const SurvivalDataset& ds, bool interactions,
                                  const FitOptions& options) {
    const Eigen::MatrixXd design = plugin_design(ds, interactions);
    const LogisticFit f = fit_logistic(design, ds.d(), options, "exposure model (plugin-logistic)");
    ExposureModel m;
    m.kind = ExposureKind::plugin_logistic;
    m.interactions = interactions;
    m.theta_plugin = f.coef;
    m.converged = f.converged;
    m.iterations = f.iterations;
    m.loglik = f.loglik;
    m.hessian = f.hessian;
    return m;
}

NuisanceFit fit_nuisance(const SurvivalDataset& ds, ExposureKind kind, const FitOptions& options) {
    NuisanceFit fit;
    fit.propensity = fit_propensity(ds, options);
    fit.exposure = kind == ExposureKind::rd_op ? fit_exposure_rd_op(ds, options)
                                               : fit_exposure_plugin(ds, true, options);
    return fit;
}

double exposure_loglik(const SurvivalDataset& ds, const ExposureModel& model) {
    if (model.kind == ExposureKind::rd_op) return rd_op_loglik_impl(ds, model.beta, model.zeta);
    return logistic_loglik(plugin_design(ds, model.interactions), ds.d(), model.theta_plugin);
}

Eigen::VectorXd exposure_gradient(const SurvivalDataset& ds, const ExposureModel& model) {
    if (model.kind == ExposureKind::rd_op) {
        return rd_op_gradient_impl(ds, model.beta, model.zeta, nullptr);
    }
    return exposure_scores(ds, model).colwise().sum().transpose();
}

Eigen::MatrixXd exposure_scores(const SurvivalDataset& ds, const ExposureModel& model) {
    if (model.kind == ExposureKind::rd_op) {
        Eigen::MatrixXd scores;
        rd_op_gradient_impl(ds, model.beta, model.zeta, &scores);
        return scores;
    }
    return logistic_scores(plugin_design(ds, model.interactions), ds.d(), model.theta_plugin);
}

NuisanceValue evaluate_nuisance(const NuisanceFit& fit, const Observation& obs) {
    return NuisanceValue{fit.propensity.prob(obs.z, obs.x), fit.exposure.risk_difference(obs.x)};
}

NuisanceValues evaluate_nuisance(const NuisanceFit& fit, const SurvivalDataset& ds) {
    NuisanceValues out;
    out.f_z.resize(ds.n());
    out.delta_d.resize(ds.n());
    const Eigen::MatrixXd& x = ds.x();
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const Eigen::VectorXd xi = x.row(static_cast<Eigen::Index>(i)).transpose();
        out.f_z[i] = fit.propensity.prob(ds.z()[i], xi);
        out.delta_d[i] = fit.exposure.risk_difference(xi);
    }
    return out;
}

}  // namespace hazardiv
