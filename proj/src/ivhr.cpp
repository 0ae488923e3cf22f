#include "hazardiv/ivhr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hazardiv/errors.hpp"
#include "hazardiv/numeric.hpp"

namespace hazardiv {

namespace {

void require_h(const IVWeights& w, HFunction expected, const char* what) {
    if (w.h != expected) {
        throw ContractError(std::string(what) + " requires weights built with h = " +
                            to_string(expected) + ", got h = " + to_string(w.h));
    }
}

void require_size(const SurvivalDataset& ds, const IVWeights& w) {
    if (w.omega.size() != ds.n()) throw ContractError("weights and dataset differ in length");
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

// Risk-set sums S0 = sum e^{psi D} I omega and S1 = sum D e^{psi D} I omega per tie group.
struct EeSums {
    std::vector<double> s0;
    std::vector<double> s1;
};

EeSums ee_sums(const SurvivalDataset& ds, const RiskSets& rs, const IVWeights& w, double psi) {
    std::vector<double> e(ds.n());
    std::vector<double> de(ds.n());
    const double ep = std::exp(psi);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        e[i] = (ds.d()[i] ? ep : 1.0) * w.omega[i];
        de[i] = ds.d()[i] * e[i];
    }
    return {rs.cumulative(e), rs.cumulative(de)};
}

// First event time at which an arm's weighted at-risk sum no longer has the
// sign of its population value (h(1) S_1 for treated, -h(0) S_0 for controls).
double ee_horizon(const SurvivalDataset& ds, const RiskSets& rs, const IVWeights& w) {
    std::vector<double> treated(ds.n()), control(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        treated[i] = ds.d()[i] * w.omega[i];
        control[i] = (1 - ds.d()[i]) * w.omega[i];
    }
    const std::vector<double> a = rs.cumulative(treated);
    const std::vector<double> b = rs.cumulative(control);
    const double s = h_value(w.h, 1) > 0.0 ? 1.0 : -1.0;
    for (std::size_t g = rs.n_groups(); g-- > 0;) {
        bool has_event = false;
        for (std::size_t i : rs.members(g)) has_event = has_event || ds.delta()[i] == 1;
        if (has_event && !(s * a[g] > 0.0 && s * b[g] > 0.0)) return rs.group_time(g);
    }
    return std::numeric_limits<double>::infinity();
}

double ee_value(const SurvivalDataset& ds, const RiskSets& rs, const IVWeights& w, double psi,
                double horizon) {
    const EeSums s = ee_sums(ds, rs, w, psi);
    CompensatedSum total;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        if (ds.delta()[i] != 1 || ds.y()[i] >= horizon) continue;
        const std::size_t g = rs.group_of(i);
        if (s.s0[g] == 0.0) {
            throw DegenerateDenominatorError(
                "estimating equation: weighted risk-set denominator is zero at event time " +
                format_double(rs.group_time(g)) + " (psi = " + format_double(psi) + ")");
        }
        total += w.omega[i] * (ds.d()[i] - s.s1[g] / s.s0[g]);
    }
    return total.value() / static_cast<double>(ds.n());
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

std::vector<std::pair<double, double>> scan_sign_changes(
    const std::function<double(double)>& f, double lo, double hi, int points) {
    std::vector<std::pair<double, double>> out;
    double prev_x = lo;
    double prev_v = f(lo);
    if (prev_v == 0.0) out.emplace_back(lo, lo);
    for (int k = 1; k < points; ++k) {
        const double x = lo + (hi - lo) * k / (points - 1);
        const double v = f(x);
        if (v == 0.0) {
            out.emplace_back(x, x);
        } else if (prev_v != 0.0 && sign_of(v) != sign_of(prev_v)) {
            out.emplace_back(prev_x, x);
        }
        prev_x = x;
        prev_v = v;
    }
    return out;
}

}  // namespace

std::string to_string(HFunction h) { return h == HFunction::one ? "one" : "sign"; }

HFunction h_function_from_string(const std::string& name) {
    if (name == "one") return HFunction::one;
    if (name == "sign") return HFunction::sign;
    throw ContractError("unknown h function '" + name + "' (expected one or sign)");
}

double h_value(HFunction h, int d) { return h == HFunction::one ? 1.0 : 2.0 * d - 1.0; }

std::string to_string(PsiMethod m) {
    return m == PsiMethod::closed_form ? "closed_form" : "estimating_equation";
}

IVWeights compute_weights(const SurvivalDataset& ds, const NuisanceValues& nuisance, HFunction h) {
    if (nuisance.f_z.size() != ds.n() || nuisance.delta_d.size() != ds.n()) {
        throw ContractError("nuisance values and dataset differ in length");
    }
    std::size_t weak = 0;
    double min_abs = std::numeric_limits<double>::infinity();
    for (double dd : nuisance.delta_d) {
        min_abs = std::min(min_abs, std::abs(dd));
        if (!(std::abs(dd) >= kWeakIdentificationThreshold)) ++weak;
    }
    if (weak > 0) {
        throw WeakIdentificationError(
            "instrument relevance fails: fitted risk difference |delta^D(x)| < " +
            format_double(kWeakIdentificationThreshold) + " for " + std::to_string(weak) +
            " unit(s) (min " + format_double(min_abs) + ")");
    }
    IVWeights w;
    w.h = h;
    w.omega.resize(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const double f = nuisance.f_z[i];
        if (!(f > 0.0 && f <= 1.0)) {
            throw ContractError("instrument propensity must lie in (0, 1]");
        }
        w.omega[i] = h_value(h, ds.d()[i]) * (2.0 * ds.z()[i] - 1.0) / (f * nuisance.delta_d[i]);
        if (!std::isfinite(w.omega[i])) {
            throw WeakIdentificationError("IV weight is not finite for unit " + std::to_string(i + 1));
        }
    }
    return w;
}

IVWeights compute_weights(const SurvivalDataset& ds, const NuisanceFit& fit, HFunction h) {
    if (!fit.propensity.converged || !fit.exposure.converged) {
        throw ContractError("nuisance models must be fitted and converged");
    }
    return compute_weights(ds, evaluate_nuisance(fit, ds), h);
}

GammaProfiles gamma_profiles(const SurvivalDataset& ds, const IVWeights& w) {
    require_size(ds, w);
    require_h(w, HFunction::one, "gamma profiles");
    const RiskSets rs(ds.y());
    std::vector<double> dw(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) dw[i] = ds.d()[i] * w.omega[i];
    const std::vector<double> c1 = rs.cumulative(w.omega);
    const std::vector<double> c2 = rs.cumulative(dw);
    const double n = static_cast<double>(ds.n());

    GammaProfiles out;
    out.grid = event_grid(ds);
    for (std::size_t g = rs.n_groups(); g-- > 0;) {
        const auto members = rs.members(g);
        const bool has_event = std::any_of(members.begin(), members.end(),
                                           [&](std::size_t i) { return ds.delta()[i] == 1; });
        if (!has_event) continue;
        out.gamma1.push_back(c1[g] / n);
        out.gamma2.push_back(c2[g] / n);
    }
    return out;
}

PsiEstimate estimate_closed_form(const SurvivalDataset& ds, const IVWeights& w1) {
    require_size(ds, w1);
    require_h(w1, HFunction::one, "closed-form estimator");
    const RiskSets rs(ds.y());
    std::vector<double> dw(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) dw[i] = ds.d()[i] * w1.omega[i];
    const std::vector<double> c1 = rs.cumulative(w1.omega);
    const std::vector<double> c2 = rs.cumulative(dw);
    const double n = static_cast<double>(ds.n());

    CompensatedSum num, den;
    bool treated_event = false, control_event = false;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        if (ds.delta()[i] != 1) continue;
        const std::size_t g = rs.group_of(i);
        const double gamma1 = c1[g] / n;
        const double gamma2 = c2[g] / n;
        if (ds.d()[i] == 1) {
            num += w1.omega[i] * (gamma1 - gamma2);
            treated_event = true;
        } else {
            den += w1.omega[i] * gamma2;
            control_event = true;
        }
    }
    if (!treated_event || !control_event) {
        throw DegenerateEstimateError(
            "closed-form estimator needs at least one treated and one control event");
    }
    PsiEstimate est;
    est.method = PsiMethod::closed_form;
    est.h = HFunction::one;
    est.numerator = num.value();
    est.denominator = den.value();
    if (est.numerator == 0.0 || est.denominator == 0.0 ||
        sign_of(est.numerator) != sign_of(est.denominator)) {
        throw DegenerateEstimateError("closed-form estimator undefined: numerator = " +
                                      format_double(est.numerator) +
                                      ", denominator = " + format_double(est.denominator));
    }
    est.hr = est.numerator / est.denominator;
    est.psi = std::log(est.hr);
    return est;
}

PsiEstimate estimate_closed_form(const SurvivalDataset& ds, const NuisanceFit& fit) {
    return estimate_closed_form(ds, compute_weights(ds, fit, HFunction::one));
}

double evaluate_ee(const SurvivalDataset& ds, const IVWeights& w, double psi) {
    require_size(ds, w);
    if (w.h == HFunction::one) {
        throw ContractError("estimating equation requires h(1) h(0) < 0; h = one is not allowed");
    }
    const RiskSets rs(ds.y());
    return ee_value(ds, rs, w, psi, ee_horizon(ds, rs, w));
}

double ee_time_horizon(const SurvivalDataset& ds, const IVWeights& w) {
    require_size(ds, w);
    return ee_horizon(ds, RiskSets(ds.y()), w);
}

double evaluate_ee(const SurvivalDataset& ds, const NuisanceFit& fit, HFunction h, double psi) {
    return evaluate_ee(ds, compute_weights(ds, fit, h), psi);
}

PsiEstimate solve_ee(const SurvivalDataset& ds, const IVWeights& w, Bracket bracket) {
    require_size(ds, w);
    if (w.h == HFunction::one) {
        throw ContractError("estimating equation requires h(1) h(0) < 0; h = one is not allowed");
    }
    if (!(bracket.lo < bracket.hi)) throw ContractError("bracket must satisfy lo < hi");
    const RiskSets rs(ds.y());
    const double horizon = ee_horizon(ds, rs, w);
    const auto f = [&](double psi) { return ee_value(ds, rs, w, psi, horizon); };

    constexpr double kMaxBracket = 20.0;
    constexpr int kScanPoints = 101;
    double lo = bracket.lo;
    double hi = bracket.hi;
    auto changes = scan_sign_changes(f, lo, hi, kScanPoints);
    while (changes.empty() && (lo > -kMaxBracket || hi < kMaxBracket)) {
        lo = std::max(-kMaxBracket, std::min(lo * 2.0, lo - 1.0));
        hi = std::min(kMaxBracket, std::max(hi * 2.0, hi + 1.0));
        changes = scan_sign_changes(f, lo, hi, kScanPoints);
    }
    if (changes.empty()) {
        throw NoRootError("estimating equation has no sign change on [" + format_double(lo) + ", " +
                          format_double(hi) + "]: U(lo) = " + format_double(f(lo)) +
                          ", U(hi) = " + format_double(f(hi)));
    }
    if (changes.size() > 1) {
        std::string list;
        for (const auto& [a, b] : changes) {
            list += " [" + format_double(a) + ", " + format_double(b) + "]";
        }
        throw MultipleRootsError("estimating equation changes sign " +
                                 std::to_string(changes.size()) + " times on [" +
                                 format_double(lo) + ", " + format_double(hi) + "]:" + list);
    }

    PsiEstimate est;
    est.method = PsiMethod::estimating_equation;
    est.h = w.h;
    est.bracket_lo = lo;
    est.bracket_hi = hi;
    est.sign_changes = changes;
    est.time_horizon = horizon;

    constexpr double kTolerance = 1e-10;
    double a = changes.front().first;
    double b = changes.front().second;
    double fa = f(a);
    double fb = f(b);
    double root = a;
    double froot = fa;
    if (a == b || fa == 0.0) {
        root = a;
        froot = fa;
    } else {
        while (b - a > 1e-4) {
            const double m = 0.5 * (a + b);
            const double fm = f(m);
            if (fm == 0.0) {
                a = b = m;
                fa = fb = 0.0;
                break;
            }
            if (sign_of(fm) == sign_of(fa)) {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
        root = std::abs(fa) < std::abs(fb) ? a : b;
        froot = std::abs(fa) < std::abs(fb) ? fa : fb;
        for (int it = 0; it < 200 && std::abs(froot) >= kTolerance && b > a; ++it) {
            double x = b - fb * (b - a) / (fb - fa);
            if (!(x > a && x < b)) x = 0.5 * (a + b);
            const double fx = f(x);
            root = x;
            froot = fx;
            if (fx == 0.0) break;
            if (sign_of(fx) == sign_of(fa)) {
                a = x;
                fa = fx;
            } else {
                b = x;
                fb = fx;
            }
        }
    }
    if (!(std::abs(froot) < kTolerance)) {
        throw NoRootError("estimating equation: sign change near psi = " + format_double(root) +
                          " is a discontinuity, |U| = " + format_double(std::abs(froot)));
    }
    est.psi = root;
    est.hr = std::exp(root);
    est.residual = froot;
    return est;
}

PsiEstimate solve_ee(const SurvivalDataset& ds, const NuisanceFit& fit, HFunction h,
                     Bracket bracket) {
    return solve_ee(ds, compute_weights(ds, fit, h), bracket);
}

double BaselineHazard::at(double t) const {
    const auto it = std::upper_bound(grid.times.begin(), grid.times.end(), t);
    if (it == grid.times.begin()) return 0.0;
    return cumulative[static_cast<std::size_t>(it - grid.times.begin()) - 1];
}

BaselineHazard weighted_breslow(const SurvivalDataset& ds, const IVWeights& w, double psi) {
    require_size(ds, w);
    if (!std::isfinite(psi)) throw ContractError("weighted Breslow needs a finite psi");
    const RiskSets rs(ds.y());
    const EeSums s = ee_sums(ds, rs, w, psi);

    BaselineHazard out;
    CompensatedSum cum;
    for (std::size_t g = rs.n_groups(); g-- > 0;) {
        CompensatedSum events;
        bool has_event = false;
        for (std::size_t i : rs.members(g)) {
            if (ds.delta()[i] == 1) {
                events += w.omega[i];
                has_event = true;
            }
        }
        if (!has_event) continue;
        if (s.s0[g] == 0.0) {
            throw DegenerateDenominatorError(
                "weighted Breslow: risk-set denominator is zero at event time " +
                format_double(rs.group_time(g)));
        }
        const double increment = events.value() / s.s0[g];
        if (increment < 0.0) ++out.negative_increments;
        cum += increment;
        out.grid.times.push_back(rs.group_time(g));
        out.cumulative.push_back(cum.value());
    }
    return out;
}

BaselineHazard weighted_breslow(const SurvivalDataset& ds, const NuisanceFit& fit, double psi,
                                HFunction h) {
    return weighted_breslow(ds, compute_weights(ds, fit, h), psi);
}

std::vector<double> closed_form_unit_scores(const SurvivalDataset& ds, const IVWeights& w1,
                                            double psi) {
    require_size(ds, w1);
    const RiskSets rs(ds.y());
    std::vector<double> dw(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) dw[i] = ds.d()[i] * w1.omega[i];
    const std::vector<double> c1 = rs.cumulative(w1.omega);
    const std::vector<double> c2 = rs.cumulative(dw);
    const double n = static_cast<double>(ds.n());
    const double em = std::exp(-psi);

    std::vector<double> u(ds.n(), 0.0);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        if (ds.delta()[i] != 1) continue;
        const std::size_t g = rs.group_of(i);
        const double gamma1 = c1[g] / n;
        const double gamma2 = c2[g] / n;
        u[i] = ds.d()[i] ? w1.omega[i] * em * (gamma1 - gamma2) : -w1.omega[i] * gamma2;
    }
    return u;
}

double closed_form_moment(const SurvivalDataset& ds, const IVWeights& w, double psi,
                          const MFunction& m) {
    require_size(ds, w);
    const RiskSets rs(ds.y());
    std::vector<double> w_treated(ds.n());
    std::vector<double> w_control(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        w_treated[i] = ds.d()[i] * w.omega[i];
        w_control[i] = (1 - ds.d()[i]) * w.omega[i];
    }
    const std::vector<double> r1 = rs.cumulative(w_treated);
    const std::vector<double> r0 = rs.cumulative(w_control);
    const double n = static_cast<double>(ds.n());
    const double ep = std::exp(psi);

    CompensatedSum total;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        if (ds.delta()[i] != 1) continue;
        const std::size_t g = rs.group_of(i);
        const double y = ds.y()[i];
        const double mean1 = r1[g] / n;
        const double mean0 = r0[g] / n;
        const double gamma1 = mean1 + mean0;
        const double m1 = m(1, y);
        const double m0 = m(0, y);
        const double gamma2m = m1 * mean1 + m0 * mean0;
        const double g1 = m1 * gamma1 - gamma2m;
        const double g0 = m0 * gamma1 - gamma2m;
        const double numer = g1 * mean1 + g0 * mean0;
        const double denom = ep * mean1 + mean0;
        if (denom == 0.0) {
            throw DegenerateDenominatorError("closed-form moment: zero denominator at event time " +
                                             format_double(y));
        }
        const double own = ds.d()[i] ? g1 / ep : g0;
        total += w.omega[i] * (own - numer / denom);
    }
    return total.value() / n;
}

}  // namespace hazardiv
