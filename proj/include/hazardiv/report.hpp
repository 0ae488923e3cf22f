#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hazardiv/cox.hpp"
#include "hazardiv/inference.hpp"
#include "hazardiv/ivhr.hpp"
#include "hazardiv/nuisance.hpp"
#include "hazardiv/simgen.hpp"

namespace hazardiv {

/// Summary of one analysis, whatever the method.
struct EstimateReport {
    std::string method;  ///< iv-closed, iv-ee, cox, cox-adjusted, cox-msm
    std::size_t n = 0;
    std::size_t events = 0;
    double psi = 0.0;
    double hr = 1.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double level = 0.95;

    std::optional<PsiEstimate> iv;
    std::optional<BaselineHazard> baseline;
    HFunction baseline_h = HFunction::sign;
    std::optional<NuisanceFit> nuisance;
    std::vector<std::string> covariate_names;
    double min_abs_risk_difference = 0.0;
    double min_instrument_probability = 0.0;
    std::optional<CoxFit> cox;
    std::vector<std::string> warnings;
};

nlohmann::json to_json(const NuisanceFit& fit, const std::vector<std::string>& covariate_names);
/// Inverse of to_json(NuisanceFit); checks the covariate names match `expected_names`.
NuisanceFit nuisance_from_json(const nlohmann::json& j,
                               const std::vector<std::string>& expected_names);

nlohmann::json to_json(const PsiEstimate& est);
nlohmann::json to_json(const BaselineHazard& bh);
nlohmann::json to_json(const CoxFit& fit);
nlohmann::json to_json(const EstimateReport& report);
nlohmann::json to_json(const Scenario& s);
nlohmann::json to_json(const ReplicationSummary& s, bool include_records = true);
nlohmann::json to_json(const SimulationTable& t);

/// Human-readable rendering; numbers at 6 significant digits.
std::string render_text(const EstimateReport& report);
std::string render_text(const ReplicationSummary& s);

std::string summary_csv_header();
std::string summary_csv_row(const ReplicationSummary& s);
std::string replicates_csv(const ReplicationSummary& s);
std::string table_csv(const SimulationTable& t);

/// printf("%.6g").
std::string sig6(double v);

}  // namespace hazardiv
