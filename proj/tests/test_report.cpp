#include <doctest.h>

#include <algorithm>

#include "hazardiv/errors.hpp"
#include "hazardiv/report.hpp"
#include "hazardiv/simgen.hpp"

using namespace hazardiv;

namespace {

SurvivalDataset scenario_data(std::size_t n, std::uint64_t seed) {
    RandomStream rng(seed, 0);
    return to_dataset(simulate_units(preset_scenario('A', 0.0, 0.5, 1.0, n), rng));
}

}  // namespace

TEST_CASE("nuisance fits round-trip through JSON") {
    const auto ds = scenario_data(500, 3);
    for (ExposureKind kind : {ExposureKind::rd_op, ExposureKind::plugin_logistic}) {
        const NuisanceFit fit = fit_nuisance(ds, kind);
        const nlohmann::json j = to_json(fit, ds.covariate_names());
        const NuisanceFit back =
            nuisance_from_json(nlohmann::json::parse(j.dump()), ds.covariate_names());
        CHECK(back.parameters() == fit.parameters());
        CHECK(back.propensity.hessian == fit.propensity.hessian);
        CHECK(back.exposure.hessian == fit.exposure.hessian);
        CHECK(back.exposure.kind == kind);
        CHECK(estimate_closed_form(ds, back).psi == estimate_closed_form(ds, fit).psi);
        CHECK_THROWS_AS(nuisance_from_json(j, {"(Intercept)", "x3", "x2"}), InputError);
    }
    CHECK_THROWS_AS(nuisance_from_json(nlohmann::json::object(), ds.covariate_names()), InputError);
}

TEST_CASE("estimate report JSON and text carry the same numbers") {
    const auto ds = scenario_data(400, 5);
    const NuisanceFit fit = fit_nuisance(ds, ExposureKind::rd_op);
    const PsiEstimate e = estimate_closed_form(ds, fit);
    const InferenceReport inf = infer(ds, fit, e);
    EstimateReport r;
    r.method = "iv-closed";
    r.n = ds.n();
    r.psi = e.psi;
    r.hr = e.hr;
    r.se = inf.se;
    r.ci_lo = inf.ci_lo;
    r.ci_hi = inf.ci_hi;
    r.iv = e;
    r.baseline = weighted_breslow(ds, fit, e.psi);
    r.nuisance = fit;
    r.covariate_names = ds.covariate_names();
    const nlohmann::json j = to_json(r);
    CHECK(j.at("psi").get<double>() == e.psi);
    CHECK(j.at("hr").get<double>() == doctest::Approx(std::exp(e.psi)).epsilon(1e-15));
    const std::string text = render_text(r);
    for (double v : {r.psi, r.hr, r.se, r.ci_lo, r.ci_hi}) {
        CHECK(text.find(sig6(v)) != std::string::npos);
    }
}

TEST_CASE("sig6 formatting") {
    CHECK(sig6(1.0986122886681098) == "1.09861");
    CHECK(sig6(0.0) == "0");
    CHECK(sig6(-2.5e-7) == "-2.5e-07");
}

TEST_CASE("replication summary serialisation") {
    const ReplicationSummary s =
        run_replications(preset_scenario('A', 0.0, 0.0, 0.0, 200), 3, EstimatorSpec{}, 1, 1);
    const nlohmann::json j = to_json(s);
    CHECK(j.at("reps").get<std::size_t>() == 3);
    CHECK(j.at("replicates").size() == 3);
    CHECK(!to_json(s, false).contains("replicates"));
    const std::string header = summary_csv_header();
    const std::string row = summary_csv_row(s);
    CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}
