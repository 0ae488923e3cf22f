#include "hazardiv/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hazardiv/errors.hpp"

namespace hazardiv {

using nlohmann::json;

namespace {

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const Eigen::VectorXd r = m.row(i).transpose();
        rows.push_back(vec(r));
    }
    return rows;
}

// JSON has no infinities or NaN.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Eigen::VectorXd read_vec(const json& j, const char* what) {
    if (!j.is_array()) throw SchemaError(std::string("nuisance JSON: '") + what + "' must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            throw SchemaError(std::string("nuisance JSON: '") + what + "' has a non-numeric entry");
        }
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

Eigen::MatrixXd read_mat(const json& j, const char* what) {
    if (!j.is_array()) throw SchemaError(std::string("nuisance JSON: '") + what + "' must be an array");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::MatrixXd m(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const Eigen::VectorXd r = read_vec(j[static_cast<std::size_t>(i)], what);
        if (r.size() != rows) {
            throw SchemaError(std::string("nuisance JSON: '") + what + "' must be square");
        }
        m.row(i) = r.transpose();
    }
    return m;
}

const json& field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw SchemaError(std::string("nuisance JSON: missing field '") + key + "'");
    }
    return j.at(key);
}

std::string describe_estimate(const PsiEstimate& e) {
    std::ostringstream os;
    if (e.method == PsiMethod::closed_form) {
        os << "  numerator sum       " << sig6(e.numerator) << "\n"
           << "  denominator sum     " << sig6(e.denominator) << "\n";
    } else {
        os << "  h(D)                " << to_string(e.h) << "\n"
           << "  residual            " << sig6(e.residual) << "\n"
           << "  bracket             [" << sig6(e.bracket_lo) << ", " << sig6(e.bracket_hi) << "]\n";
        if (std::isfinite(e.time_horizon)) {
            os << "  time horizon        " << sig6(e.time_horizon) << "\n";
        }
    }
    return os.str();
}

}  // namespace

std::string sig6(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

json to_json(const NuisanceFit& fit, const std::vector<std::string>& covariate_names) {
    const ExposureModel& e = fit.exposure;
    json exposure{{"kind", to_string(e.kind)},
                  {"converged", e.converged},
                  {"iterations", e.iterations},
                  {"loglik", e.loglik},
                  {"hessian", mat(e.hessian)}};
    if (e.kind == ExposureKind::rd_op) {
        exposure["risk_difference_coef"] = vec(e.beta);
        exposure["log_odds_product_coef"] = vec(e.zeta);
    } else {
        exposure["coef"] = vec(e.theta_plugin);
        exposure["interactions"] = e.interactions;
    }
    return json{{"covariates", covariate_names},
                {"propensity",
                 {{"coef", vec(fit.propensity.eta)},
                  {"converged", fit.propensity.converged},
                  {"iterations", fit.propensity.iterations},
                  {"loglik", fit.propensity.loglik},
                  {"hessian", mat(fit.propensity.hessian)}}},
                {"exposure", exposure}};
}

NuisanceFit nuisance_from_json(const json& j, const std::vector<std::string>& expected_names) {
    const auto names = field(j, "covariates").get<std::vector<std::string>>();
    if (names != expected_names) {
        throw SchemaError("nuisance JSON: covariates do not match the dataset's covariates");
    }
    const auto p = static_cast<Eigen::Index>(names.size());
    NuisanceFit fit;
    const json& pj = field(j, "propensity");
    fit.propensity.eta = read_vec(field(pj, "coef"), "propensity.coef");
    fit.propensity.converged = field(pj, "converged").get<bool>();
    fit.propensity.iterations = field(pj, "iterations").get<int>();
    fit.propensity.loglik = field(pj, "loglik").get<double>();
    fit.propensity.hessian = read_mat(field(pj, "hessian"), "propensity.hessian");
    if (fit.propensity.eta.size() != p || fit.propensity.hessian.rows() != p) {
        throw SchemaError("nuisance JSON: propensity dimensions do not match the covariates");
    }

    const json& ej = field(j, "exposure");
    ExposureModel& e = fit.exposure;
    e.kind = exposure_kind_from_string(field(ej, "kind").get<std::string>());
    e.converged = field(ej, "converged").get<bool>();
    e.iterations = field(ej, "iterations").get<int>();
    e.loglik = field(ej, "loglik").get<double>();
    e.hessian = read_mat(field(ej, "hessian"), "exposure.hessian");
    Eigen::Index expected = 0;
    if (e.kind == ExposureKind::rd_op) {
        e.beta = read_vec(field(ej, "risk_difference_coef"), "risk_difference_coef");
        e.zeta = read_vec(field(ej, "log_odds_product_coef"), "log_odds_product_coef");
        if (e.beta.size() != p || e.zeta.size() != p) {
            throw SchemaError("nuisance JSON: exposure dimensions do not match the covariates");
        }
        expected = 2 * p;
    } else {
        e.theta_plugin = read_vec(field(ej, "coef"), "coef");
        e.interactions = field(ej, "interactions").get<bool>();
        expected = e.interactions ? 2 * p : p + 1;
        if (e.theta_plugin.size() != expected) {
            throw SchemaError("nuisance JSON: exposure dimensions do not match the covariates");
        }
    }
    if (e.hessian.rows() != expected) {
        throw SchemaError("nuisance JSON: exposure Hessian has the wrong dimension");
    }
    return fit;
}

json to_json(const PsiEstimate& est) {
    json j{{"method", to_string(est.method)}, {"h", to_string(est.h)}, {"psi", est.psi},
           {"hr", est.hr}};
    if (est.method == PsiMethod::closed_form) {
        j["numerator"] = est.numerator;
        j["denominator"] = est.denominator;
    } else {
        j["residual"] = est.residual;
        j["bracket"] = {est.bracket_lo, est.bracket_hi};
        json changes = json::array();
        for (const auto& [a, b] : est.sign_changes) changes.push_back({a, b});
        j["sign_changes"] = changes;
        j["time_horizon"] = num(est.time_horizon);
    }
    return j;
}

json to_json(const BaselineHazard& bh) {
    return json{{"times", bh.grid.times},
                {"cumulative", bh.cumulative},
                {"negative_increments", bh.negative_increments}};
}

json to_json(const CoxFit& fit) {
    json j{{"names", fit.names},
           {"beta", vec(fit.beta)},
           {"se", vec(fit.se)},
           {"robust_se", fit.robust},
           {"converged", fit.converged},
           {"iterations", fit.iterations},
           {"loglik", fit.loglik},
           {"score_max", fit.score_max}};
    if (fit.weights_used) {
        double lo = fit.weights_used->front(), hi = lo;
        for (double w : *fit.weights_used) {
            lo = std::min(lo, w);
            hi = std::max(hi, w);
        }
        j["weights"] = {{"min", lo}, {"max", hi}};
    }
    return j;
}

json to_json(const EstimateReport& r) {
    json j{{"method", r.method},
           {"n", r.n},
           {"events", r.events},
           {"psi", r.psi},
           {"hr", r.hr},
           {"se", r.se},
           {"level", r.level},
           {"ci", {r.ci_lo, r.ci_hi}},
           {"hr_ci", {std::exp(r.ci_lo), std::exp(r.ci_hi)}},
           {"warnings", r.warnings}};
    j["estimate"] = r.iv ? to_json(*r.iv) : json(nullptr);
    if (r.baseline) {
        json b = to_json(*r.baseline);
        b["h"] = to_string(r.baseline_h);
        j["baseline_hazard"] = b;
    } else {
        j["baseline_hazard"] = nullptr;
    }
    if (r.nuisance) {
        json nj = to_json(*r.nuisance, r.covariate_names);
        nj["min_abs_risk_difference"] = r.min_abs_risk_difference;
        nj["min_instrument_probability"] = r.min_instrument_probability;
        j["nuisance"] = nj;
    } else {
        j["nuisance"] = nullptr;
    }
    j["cox"] = r.cox ? to_json(*r.cox) : json(nullptr);
    return j;
}

json to_json(const Scenario& s) {
    return json{{"id", s.id},
                {"lambda1", s.lambda1},
                {"lambda2", s.lambda2},
                {"lambda0", s.lambda0},
                {"beta1", s.beta1},
                {"beta2", s.beta2},
                {"gamma", s.gamma},
                {"delta_op", s.delta_op},
                {"psi_true", s.psi_true},
                {"censor_rate", s.censor_rate},
                {"n", s.n}};
}

json to_json(const ReplicationSummary& s, bool include_records) {
    json j{{"scenario", to_json(s.scenario)},
           {"estimator",
            {{"method", to_string(s.spec.method)},
             {"h", to_string(s.spec.method == PsiMethod::closed_form ? HFunction::one : s.spec.h)},
             {"exposure_model", to_string(s.spec.exposure)},
             {"level", s.spec.level}}},
           {"seed", s.seed},
           {"reps", s.reps},
           {"failures", s.failures},
           {"mean_psi", num(s.mean_psi)},
           {"mean_bias", num(s.mean_bias)},
           {"sd_psi", num(s.sd_psi)},
           {"mc_se", num(s.mc_se)},
           {"mean_se", num(s.mean_se)},
           {"coverage", num(s.coverage)},
           {"mean_censor_rate", s.mean_censor_rate},
           {"censor_rate_range", {s.censor_rate_min, s.censor_rate_max}},
           {"failure_warning", s.failure_warning},
           {"warnings", s.warnings}};
    if (s.spec.msm_comparator) {
        j["msm_cox"] = {{"successes", s.msm_successes}, {"mean_bias", num(s.msm_mean_bias)}};
    } else {
        j["msm_cox"] = nullptr;
    }
    if (include_records) {
        json recs = json::array();
        for (const ReplicationRecord& r : s.records) {
            recs.push_back({{"index", r.index},
                            {"ok", r.ok},
                            {"psi", r.ok ? num(r.psi) : json(nullptr)},
                            {"se", r.ok ? num(r.se) : json(nullptr)},
                            {"ci", r.ok ? json{r.ci_lo, r.ci_hi} : json(nullptr)},
                            {"covered", r.ok ? json(r.covered) : json(nullptr)},
                            {"censor_rate", r.censor_rate},
                            {"msm_beta", r.msm_beta ? json(*r.msm_beta) : json(nullptr)},
                            {"error", r.error}});
        }
        j["replicates"] = recs;
    }
    return j;
}

json to_json(const SimulationTable& t) {
    json cells = json::array();
    for (const TableCell& c : t.cells) {
        cells.push_back({{"preset", std::string(1, c.preset)},
                         {"censor_rate", c.censor_rate},
                         {"psi", c.psi},
                         {"summary", to_json(c.summary, false)}});
    }
    return json{{"table", to_string(t.table)},
                {"n", t.n},
                {"reps", t.reps},
                {"seed", t.seed},
                {"cells", cells}};
}

std::string render_text(const EstimateReport& r) {
    std::ostringstream os;
    const int pct = static_cast<int>(std::lround(100.0 * r.level));
    os << "Method              " << r.method << "\n"
       << "Units / events      " << r.n << " / " << r.events << "\n"
       << "psi (log HR)        " << sig6(r.psi) << "\n"
       << "SE                  " << sig6(r.se) << "\n"
       << pct << "% CI (psi)        (" << sig6(r.ci_lo) << ", " << sig6(r.ci_hi) << ")\n"
       << "Hazard ratio        " << sig6(r.hr) << "\n"
       << pct << "% CI (HR)         (" << sig6(std::exp(r.ci_lo)) << ", "
       << sig6(std::exp(r.ci_hi)) << ")\n";
    if (r.iv) os << describe_estimate(*r.iv);
    if (r.nuisance) {
        os << "Exposure model      " << to_string(r.nuisance->exposure.kind) << "\n"
           << "  min |risk diff|   " << sig6(r.min_abs_risk_difference) << "\n"
           << "  min f(Z|X)        " << sig6(r.min_instrument_probability) << "\n";
    }
    if (r.baseline) {
        os << "Baseline hazard     " << r.baseline->grid.times.size() << " steps (h = "
           << to_string(r.baseline_h) << "), " << r.baseline->negative_increments
           << " negative increments\n";
    }
    if (r.cox) {
        os << "Cox coefficients\n";
        for (std::size_t k = 0; k < r.cox->names.size(); ++k) {
            const auto i = static_cast<Eigen::Index>(k);
            char line[160];
            std::snprintf(line, sizeof line, "  %-16s %12s %12s\n", r.cox->names[k].c_str(),
                          sig6(r.cox->beta(i)).c_str(), sig6(r.cox->se(i)).c_str());
            os << line;
        }
        os << "  SE type           " << (r.cox->robust ? "robust sandwich" : "model-based") << "\n";
    }
    for (const std::string& w : r.warnings) os << "warning: " << w << "\n";
    return os.str();
}

std::string render_text(const ReplicationSummary& s) {
    std::ostringstream os;
    os << "Scenario            " << s.scenario.id << " (gamma3 = " << sig6(s.scenario.gamma[3])
       << ", psi = " << sig6(s.scenario.psi_true) << ", censoring rate "
       << sig6(s.scenario.censor_rate) << ", n = " << s.scenario.n << ")\n"
       << "Replicates          " << s.reps << " (failures " << s.failures << "), seed " << s.seed
       << "\n"
       << "Mean bias           " << sig6(s.mean_bias) << "\n"
       << "Monte Carlo SE      " << sig6(s.mc_se) << "\n"
       << "SD of estimates     " << sig6(s.sd_psi) << "\n"
       << "Mean estimated SE   " << sig6(s.mean_se) << "\n"
       << "Coverage            " << sig6(s.coverage) << "\n"
       << "Censoring rate      " << sig6(s.mean_censor_rate) << " (range " << sig6(s.censor_rate_min)
       << " to " << sig6(s.censor_rate_max) << ")\n";
    if (s.spec.msm_comparator) {
        os << "IPW Cox mean bias   " << sig6(s.msm_mean_bias) << " (" << s.msm_successes
           << " fits)\n";
    }
    for (const std::string& w : s.warnings) os << "warning: " << w << "\n";
    return os.str();
}

std::string summary_csv_header() {
    return "scenario,gamma3,psi_true,censor_rate,n,reps,failures,mean_psi,mean_bias,sd_psi,mc_se,"
           "mean_se,coverage,mean_censor_rate,censor_rate_min,censor_rate_max,msm_mean_bias";
}

std::string summary_csv_row(const ReplicationSummary& s) {
    char msm[64] = "";
    if (s.spec.msm_comparator) std::snprintf(msm, sizeof msm, "%.17g", s.msm_mean_bias);
    char buf[1024];
    std::snprintf(buf, sizeof buf,
                  "%s,%.17g,%.17g,%.17g,%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                  "%.17g,%s",
                  s.scenario.id.c_str(), s.scenario.gamma[3], s.scenario.psi_true,
                  s.scenario.censor_rate, s.scenario.n, s.reps, s.failures, s.mean_psi,
                  s.mean_bias, s.sd_psi, s.mc_se, s.mean_se, s.coverage, s.mean_censor_rate,
                  s.censor_rate_min, s.censor_rate_max,
                  msm);
    return buf;
}

std::string replicates_csv(const ReplicationSummary& s) {
    std::ostringstream os;
    os << "index,ok,psi,se,ci_lo,ci_hi,covered,censor_rate,msm_beta,error\n";
    char buf[512];
    for (const ReplicationRecord& r : s.records) {
        std::string err = r.error;
        for (char& c : err) {
            if (c == ',' || c == '\n' || c == '"') c = ' ';
        }
        std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,%.17g,%.17g,%.17g,%d,%.17g,", r.index,
                      r.ok ? 1 : 0, r.psi, r.se, r.ci_lo, r.ci_hi, r.covered ? 1 : 0,
                      r.censor_rate);
        os << buf;
        if (r.msm_beta) {
            std::snprintf(buf, sizeof buf, "%.17g", *r.msm_beta);
            os << buf;
        }
        os << "," << err << "\n";
    }
    return os.str();
}

std::string table_csv(const SimulationTable& t) {
    std::ostringstream os;
    os << "table,preset," << summary_csv_header() << "\n";
    for (const TableCell& c : t.cells) {
        os << to_string(t.table) << "," << c.preset << "," << summary_csv_row(c.summary) << "\n";
    }
    return os.str();
}

}  // namespace hazardiv
