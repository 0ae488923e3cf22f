#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hazardiv/core_data.hpp"
#include "hazardiv/nuisance.hpp"

namespace hazardiv {

/// Stabilising function h(D) in the IV weight h(D)(2Z-1)/{f(Z|X) delta^D(X)}.
enum class HFunction {
    one,   ///< h(D) = 1, used by the closed-form estimator
    sign,  ///< h(D) = 2D - 1, default for the estimating equation
};

std::string to_string(HFunction h);
HFunction h_function_from_string(const std::string& name);
double h_value(HFunction h, int d);

struct IVWeights {
    std::vector<double> omega;
    HFunction h = HFunction::one;
};

/// omega_i = h(d_i)(2 z_i - 1) / (f_i delta_i). Throws WeakIdentificationError
/// when any |delta_i| is below kWeakIdentificationThreshold.
IVWeights compute_weights(const SurvivalDataset& ds, const NuisanceValues& nuisance, HFunction h);
IVWeights compute_weights(const SurvivalDataset& ds, const NuisanceFit& fit, HFunction h);

/// gamma1(y) = n^-1 sum_j I(Y_j >= y) omega_j and gamma2(y) = n^-1 sum_j D_j I(Y_j >= y) omega_j
/// evaluated at each event time.
struct GammaProfiles {
    EventGrid grid;
    std::vector<double> gamma1;
    std::vector<double> gamma2;
};

GammaProfiles gamma_profiles(const SurvivalDataset& ds, const IVWeights& w);

enum class PsiMethod { closed_form, estimating_equation };

std::string to_string(PsiMethod m);

struct PsiEstimate {
    double psi = 0.0;
    double hr = 1.0;
    PsiMethod method = PsiMethod::closed_form;
    HFunction h = HFunction::one;

    // closed form
    double numerator = 0.0;
    double denominator = 0.0;

    // estimating equation
    double residual = 0.0;
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
    std::vector<std::pair<double, double>> sign_changes;
    /// Events at or after this time are left out (see ee_time_horizon).
    double time_horizon = std::numeric_limits<double>::infinity();
};

PsiEstimate estimate_closed_form(const SurvivalDataset& ds, const IVWeights& w1);
PsiEstimate estimate_closed_form(const SurvivalDataset& ds, const NuisanceFit& fit);

/// Empirical estimating function divided by n:
/// n^-1 sum_i Delta_i omega_i [D_i - S1(Y_i) / S0(Y_i)] with
/// S_k(y) = sum_j D_j^k e^{psi D_j} I(Y_j >= y) omega_j, summed over events
/// before ee_time_horizon.
double evaluate_ee(const SurvivalDataset& ds, const IVWeights& w, double psi);
double evaluate_ee(const SurvivalDataset& ds, const NuisanceFit& fit, HFunction h, double psi);

/// First event time at which the treated or control weighted at-risk sum
/// sum_j I(Y_j >= y) omega_j (restricted to one arm) loses the sign of its
/// population value; +inf if none. Before it S0(y) = A e^psi + B has A and B
/// of one sign, so the estimating function has no poles in psi. Each event's
/// term has mean zero, so dropping the tail keeps the equation unbiased.
double ee_time_horizon(const SurvivalDataset& ds, const IVWeights& w);

struct Bracket {
    double lo = -5.0;
    double hi = 5.0;
};

/// Root of evaluate_ee. Scans 101 points of the bracket (doubling up to
/// [-20, 20] when no sign change is seen); more than one sign change is an
/// error. Bisection to width 1e-4 then safeguarded secant to |U| < 1e-10.
PsiEstimate solve_ee(const SurvivalDataset& ds, const IVWeights& w, Bracket bracket = {});
PsiEstimate solve_ee(const SurvivalDataset& ds, const NuisanceFit& fit, HFunction h,
                     Bracket bracket = {});

/// Cumulative baseline hazard as a right-continuous step function on the
/// event grid. Increments can be negative in finite samples.
///
/// Any weights with h(1)h(0) < 0 or h = 1 identify the same baseline hazard,
/// but with h = 1 the risk-set denominator estimates e^psi S_1(y) - S_0(y),
/// which vanishes at psi = 0. The fitted-model overload therefore defaults to
/// h(D) = 2D - 1, whose denominator e^psi S_1(y) + S_0(y) stays positive.
struct BaselineHazard {
    EventGrid grid;
    std::vector<double> cumulative;
    std::size_t negative_increments = 0;

    double at(double t) const;
};

BaselineHazard weighted_breslow(const SurvivalDataset& ds, const IVWeights& w, double psi);
BaselineHazard weighted_breslow(const SurvivalDataset& ds, const NuisanceFit& fit, double psi,
                                HFunction h = HFunction::sign);

/// Per-unit contributions U_i(psi) to the closed-form score
/// Delta_i omega_i e^{-psi D_i} [D_i (gamma1 - gamma2)(Y_i) - (1 - D_i) gamma2(Y_i)].
/// Their mean vanishes at the closed-form estimate.
std::vector<double> closed_form_unit_scores(const SurvivalDataset& ds, const IVWeights& w1,
                                            double psi);

/// Function m(D, y) defining g(D, y) = m(D, y) gamma1(y) - gamma2^m(y).
using MFunction = std::function<double(int d, double y)>;

/// Empirical mean of the generalised moment
/// Delta omega [e^{-psi D} g(D, Y) - P_n{g(D, Y) I(Y' >= Y) omega'} / P_n{e^{psi D} I(Y' >= Y) omega'}],
/// with gamma profiles formed from the same weights. Zero at the matching
/// closed-form estimate.
double closed_form_moment(const SurvivalDataset& ds, const IVWeights& w, double psi,
                          const MFunction& m);

}  // namespace hazardiv
