#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>

#include "hazardiv/errors.hpp"
#include "hazardiv/inference.hpp"
#include "hazardiv/numeric.hpp"
#include "hazardiv/simgen.hpp"

using namespace hazardiv;

namespace {

SurvivalDataset scenario_data(std::size_t n, std::uint64_t seed, double psi, double censor) {
    RandomStream rng(seed, 0);
    return to_dataset(simulate_units(preset_scenario('A', 0.0, psi, censor, n), rng));
}

PsiEstimate estimate(const SurvivalDataset& ds, const NuisanceFit& fit, PsiMethod m) {
    return m == PsiMethod::closed_form ? estimate_closed_form(ds, fit)
                                       : solve_ee(ds, fit, HFunction::sign);
}

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

TEST_CASE("Wald intervals") {
    auto [lo, hi] = wald_ci(0.62, 0.2, 0.95);
    CHECK(std::round(lo * 1e4) / 1e4 == doctest::Approx(0.2280));
    CHECK(std::round(hi * 1e4) / 1e4 == doctest::Approx(1.0120));
    std::tie(lo, hi) = wald_ci(0.0, 1.0, 0.95);
    CHECK(fixed2(lo) == "-1.96");
    CHECK(fixed2(hi) == "1.96");
    CHECK(std::abs(hi - 1.959964) < 5e-7);
    CHECK_THROWS_AS(wald_ci(0.0, 0.0, 0.95), ContractError);
    CHECK_THROWS_AS(wald_ci(0.0, 1.0, 1.0), ContractError);
    std::tie(lo, hi) = wald_ci(0.3, 0.1, 0.9);
    CHECK(hi - 0.3 == doctest::Approx(normal_quantile(0.95) * 0.1));
}

TEST_CASE("hazard-ratio scale formatting") {
    CHECK(fixed2(std::exp(0.6206)) == "1.86");
    CHECK(fixed2(std::exp(0.2700)) == "1.31");
    CHECK(fixed2(std::exp(0.9783)) == "2.66");
}

TEST_CASE("influence values are centred and match the reported SE") {
    const auto ds = scenario_data(800, 41, 0.5, 1.0);
    const NuisanceFit fit = fit_nuisance(ds, ExposureKind::rd_op);
    for (PsiMethod m : {PsiMethod::closed_form, PsiMethod::estimating_equation}) {
        const PsiEstimate e = estimate(ds, fit, m);
        const InferenceReport r = infer(ds, fit, e, 0.95);
        CHECK(std::abs(compensated_mean(r.if_values)) < 1e-8);
        double sq = 0;
        for (double v : r.if_values) sq += v * v;
        const double n = static_cast<double>(ds.n());
        CHECK(r.se * r.se == doctest::Approx(sq / n / n).epsilon(1e-12));
        CHECK(r.ci_lo < r.psi);
        CHECK(r.psi < r.ci_hi);
        CHECK(r.nuisance_jacobian.size() == fit.parameters().size());
    }
}

TEST_CASE("analytic score derivative matches finite differences") {
    const auto ds = scenario_data(600, 5, 0.5, 1.0);
    const NuisanceFit fit = fit_nuisance(ds, ExposureKind::rd_op);
    for (PsiMethod m : {PsiMethod::closed_form, PsiMethod::estimating_equation}) {
        const HFunction h = m == PsiMethod::closed_form ? HFunction::one : HFunction::sign;
        for (double psi : {0.0, 0.5}) {
            const double a = mean_score_derivative(ds, fit, m, h, psi);
            for (double step : {1e-5, 1e-6}) {
                const double fd = (mean_score(ds, fit, m, h, psi + step) -
                                   mean_score(ds, fit, m, h, psi - step)) /
                                  (2 * step);
                CHECK(fd == doctest::Approx(a).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("duplicating every row divides the variance by the multiplicity") {
    const auto ds = scenario_data(500, 13, 0.0, 1.0);
    std::vector<std::size_t> rows;
    for (int k = 0; k < 4; ++k) {
        for (std::size_t i = 0; i < ds.n(); ++i) rows.push_back(i);
    }
    const auto big = ds.take_rows(rows);
    const NuisanceFit f1 = fit_nuisance(ds, ExposureKind::rd_op);
    const NuisanceFit f4 = fit_nuisance(big, ExposureKind::rd_op);
    for (PsiMethod m : {PsiMethod::closed_form, PsiMethod::estimating_equation}) {
        const InferenceReport r1 = infer(ds, f1, estimate(ds, f1, m));
        const InferenceReport r4 = infer(big, f4, estimate(big, f4, m));
        CHECK(r4.psi == doctest::Approx(r1.psi).epsilon(1e-7));
        CHECK(r4.se * r4.se * 4 == doctest::Approx(r1.se * r1.se).epsilon(1e-6));
    }
}

TEST_CASE("influence values track leave-one-out changes") {
    // (n - 1)(psi_hat - psi_hat without unit i) approximates the influence of unit i.
    const auto ds = scenario_data(300, 3, 0.5, 0.0);
    const NuisanceFit fit = fit_nuisance(ds, ExposureKind::rd_op);
    const PsiEstimate e = estimate_closed_form(ds, fit);
    const std::vector<double> ifv = influence_functions(ds, fit, e);
    const std::size_t n = ds.n();
    std::vector<double> jack(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> rows;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) rows.push_back(j);
        }
        const auto sub = ds.take_rows(rows);
        jack[i] = (n - 1.0) * (e.psi - estimate_closed_form(sub, fit_nuisance(sub, ExposureKind::rd_op)).psi);
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += ifv[i] * jack[i];
        sxx += ifv[i] * ifv[i];
        syy += jack[i] * jack[i];
    }
    CHECK(sxy / std::sqrt(sxx * syy) > 0.95);
    CHECK(std::sqrt(syy / sxx) == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("singular nuisance information is reported") {
    const auto ds = scenario_data(500, 13, 0.0, 1.0);
    NuisanceFit fit = fit_nuisance(ds, ExposureKind::rd_op);
    const PsiEstimate e = estimate_closed_form(ds, fit);
    fit.propensity.hessian.setZero();
    CHECK_THROWS_AS(influence_functions(ds, fit, e), SingularInformationError);
}
