#include "hazardiv/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hazardiv/cox.hpp"
#include "hazardiv/errors.hpp"
#include "hazardiv/inference.hpp"
#include "hazardiv/ivhr.hpp"
#include "hazardiv/nuisance.hpp"
#include "hazardiv/report.hpp"
#include "hazardiv/simgen.hpp"

namespace hazardiv {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitEstimation = 3;

struct EstimateOptions {
    std::string data;
    std::string method = "iv-closed";
    std::string exposure = "rd-op";
    std::vector<std::string> columns;
    std::vector<std::string> covariates;
    double level = 0.95;
    std::string h = "sign";
    std::string out;
    std::string nuisance_out;
    std::string nuisance_in;
};

struct SimulateOptions {
    std::string scenario;
    std::string preset;
    double gamma3 = 0.0;
    double psi = 0.0;
    double censor_lambda = 0.0;
    std::size_t n = 1000;
    std::size_t reps = 200;
    std::uint64_t seed = 1;
    std::string out;
    std::string method = "iv-closed";
    std::string exposure = "rd-op";
    std::string h = "sign";
    double level = 0.95;
    bool msm = false;
    std::string export_data;
    bool oracle = false;
};

struct TableOptions {
    std::string table;
    std::size_t n = 1000;
    std::size_t reps = 200;
    std::uint64_t seed = 1;
    std::string out;
    std::string method = "iv-closed";
    std::string exposure = "rd-op";
    bool msm = false;
};

std::string strip_json_suffix(std::string path) {
    const std::string ext = ".json";
    if (path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
        path.erase(path.size() - ext.size());
    }
    return path;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SchemaError("cannot open output file '" + path + "' for writing");
    f << content;
    if (!f) throw SchemaError("failed writing output file '" + path + "'");
}

ColumnMap column_map(const std::vector<std::string>& pairs,
                     const std::vector<std::string>& covariates) {
    ColumnMap map;
    for (const std::string& pair : pairs) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos) {
            throw ValueError("--columns entries must look like role=column, got '" + pair + "'");
        }
        const std::string role = pair.substr(0, eq);
        const std::string column = pair.substr(eq + 1);
        if (role == "y") {
            map.y = column;
        } else if (role == "delta") {
            map.delta = column;
        } else if (role == "d") {
            map.d = column;
        } else if (role == "z") {
            map.z = column;
        } else {
            throw ValueError("--columns role must be one of y, delta, d, z; got '" + role + "'");
        }
    }
    if (!covariates.empty()) map.covariates = covariates;
    return map;
}

PsiMethod iv_method(const std::string& m) {
    return m == "iv-ee" ? PsiMethod::estimating_equation : PsiMethod::closed_form;
}

EstimatorSpec estimator_spec(const std::string& method, const std::string& exposure,
                             const std::string& h, double level, bool msm) {
    EstimatorSpec spec;
    spec.method = iv_method(method);
    spec.exposure = exposure_kind_from_string(exposure);
    spec.h = h_function_from_string(h);
    if (spec.method == PsiMethod::estimating_equation && spec.h == HFunction::one) {
        throw ContractError("--h one is not allowed with iv-ee: h(1) h(0) must be negative");
    }
    if (!(level > 0.0 && level < 1.0)) throw ValueError("--level must lie in (0, 1)");
    spec.level = level;
    spec.msm_comparator = msm;
    return spec;
}

std::vector<std::string> non_intercept_covariates(const SurvivalDataset& ds) {
    const auto& names = ds.covariate_names();
    return {names.begin() + 1, names.end()};
}

int cmd_estimate(const EstimateOptions& o, std::ostream& out) {
    if (!(o.level > 0.0 && o.level < 1.0)) throw ValueError("--level must lie in (0, 1)");
    const SurvivalDataset ds = load_dataset(o.data, column_map(o.columns, o.covariates));

    EstimateReport r;
    r.method = o.method;
    r.n = ds.n();
    for (int e : ds.delta()) r.events += static_cast<std::size_t>(e);
    r.level = o.level;

    if (o.method == "iv-closed" || o.method == "iv-ee") {
        const EstimatorSpec spec = estimator_spec(o.method, o.exposure, o.h, o.level, false);
        NuisanceFit fit;
        if (!o.nuisance_in.empty()) {
            std::ifstream f(o.nuisance_in);
            if (!f) throw SchemaError("cannot open nuisance file '" + o.nuisance_in + "'");
            nlohmann::json j;
            try {
                f >> j;
            } catch (const nlohmann::json::exception& e) {
                throw SchemaError("nuisance file '" + o.nuisance_in + "' is not valid JSON: " +
                                  e.what());
            }
            const nlohmann::json& nj = j.contains("nuisance") ? j.at("nuisance") : j;
            fit = nuisance_from_json(nj, ds.covariate_names());
        } else {
            fit = fit_nuisance(ds, spec.exposure);
        }
        if (!o.nuisance_out.empty()) {
            write_file(o.nuisance_out, to_json(fit, ds.covariate_names()).dump(2) + "\n");
        }
        const PsiEstimate est = spec.method == PsiMethod::closed_form
                                    ? estimate_closed_form(ds, fit)
                                    : solve_ee(ds, fit, spec.h);
        const InferenceReport inf = infer(ds, fit, est, o.level);
        r.psi = est.psi;
        r.hr = est.hr;
        r.se = inf.se;
        r.ci_lo = inf.ci_lo;
        r.ci_hi = inf.ci_hi;
        r.iv = est;
        r.baseline_h = HFunction::sign;
        r.baseline = weighted_breslow(ds, fit, est.psi, r.baseline_h);
        if (r.baseline->negative_increments > 0) {
            r.warnings.push_back(std::to_string(r.baseline->negative_increments) +
                                 " negative baseline-hazard increments (reported as-is)");
        }
        const NuisanceValues nv = evaluate_nuisance(fit, ds);
        r.min_abs_risk_difference = std::numeric_limits<double>::infinity();
        r.min_instrument_probability = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ds.n(); ++i) {
            r.min_abs_risk_difference = std::min(r.min_abs_risk_difference, std::abs(nv.delta_d[i]));
            r.min_instrument_probability = std::min(r.min_instrument_probability, nv.f_z[i]);
        }
        r.nuisance = fit;
        r.covariate_names = ds.covariate_names();
    } else {
        CoxFit fit;
        if (o.method == "cox") {
            fit = fit_cox(ds, CoxTerms{true, {}});
        } else if (o.method == "cox-adjusted") {
            fit = fit_cox(ds, CoxTerms{true, non_intercept_covariates(ds)});
        } else {
            const std::vector<std::string> conf = non_intercept_covariates(ds);
            if (conf.empty()) throw ContractError("cox-msm needs at least one covariate");
            fit = fit_msm_cox_ipw(ds, conf);
        }
        r.psi = fit.beta(0);
        r.hr = std::exp(r.psi);
        r.se = fit.se(0);
        std::tie(r.ci_lo, r.ci_hi) = wald_ci(r.psi, r.se, o.level);
        r.warnings = fit.warnings;
        r.cox = fit;
    }

    const std::string text = render_text(r);
    out << text;
    if (!o.out.empty()) {
        const std::string prefix = strip_json_suffix(o.out);
        write_file(prefix + ".json", to_json(r).dump(2) + "\n");
        write_file(prefix + ".txt", text);
    }
    return kExitOk;
}

int cmd_simulate(const SimulateOptions& o, bool n_given, unsigned threads, std::ostream& out) {
    Scenario scenario;
    if (!o.scenario.empty()) {
        scenario = load_scenario_config(o.scenario);
        if (n_given) scenario.n = o.n;
        scenario = make_scenario(scenario);
    } else {
        if (o.preset != "A" && o.preset != "B") {
            throw ValueError("--preset must be A or B");
        }
        scenario = preset_scenario(o.preset[0], o.gamma3, o.psi, o.censor_lambda, o.n);
    }
    const EstimatorSpec spec = estimator_spec(o.method, o.exposure, o.h, o.level, o.msm);

    if (!o.export_data.empty()) {
        RandomStream rng(o.seed, 0);
        const std::vector<SimulatedUnit> units = simulate_units(scenario, rng);
        std::ostringstream csv;
        if (o.oracle) {
            write_oracle_csv(csv, scenario, units);
        } else {
            write_dataset_csv(csv, to_dataset(units));
        }
        write_file(o.export_data, csv.str());
    }

    const ReplicationSummary s = run_replications(scenario, o.reps, spec, o.seed, threads);
    const std::string text = render_text(s);
    out << text;
    if (!o.out.empty()) {
        const std::string prefix = strip_json_suffix(o.out);
        write_file(prefix + ".json", to_json(s).dump(2) + "\n");
        write_file(prefix + ".csv", summary_csv_header() + "\n" + summary_csv_row(s) + "\n");
        write_file(prefix + ".replicates.csv", replicates_csv(s));
        write_file(prefix + ".txt", text);
    }
    return kExitOk;
}

int cmd_table(const TableOptions& o, unsigned threads, std::ostream& out) {
    const SimTable table = sim_table_from_string(o.table);
    const EstimatorSpec spec = estimator_spec(o.method, o.exposure, "sign", 0.95, o.msm);
    if (o.reps < 1) throw ValueError("--reps must be at least 1");
    const SimulationTable t = run_table(table, o.n, o.reps, o.seed, spec, threads);
    const std::string text = render_table(t);
    out << text;
    if (!o.out.empty()) {
        const std::string prefix = strip_json_suffix(o.out);
        write_file(prefix + ".txt", text);
        write_file(prefix + ".csv", table_csv(t));
        write_file(prefix + ".json", to_json(t).dump(2) + "\n");
    }
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Instrumental-variable estimation of causal hazard ratios"};
    app.set_help_flag("--help", "Print this help message and exit");
    app.require_subcommand(1);
    unsigned threads = default_thread_count();
    app.add_option("--threads", threads, "Worker threads (default HAZARDIV_THREADS or 1)");

    const std::vector<std::string> methods{"iv-closed", "iv-ee", "cox", "cox-adjusted", "cox-msm"};
    const std::vector<std::string> iv_methods{"iv-closed", "iv-ee"};
    const std::vector<std::string> exposures{"rd-op", "plugin-logistic"};
    const std::vector<std::string> hs{"sign", "one"};

    EstimateOptions eo;
    CLI::App* est = app.add_subcommand("estimate", "Estimate the causal hazard ratio from a CSV");
    est->add_option("--data", eo.data, "Input CSV")->required();
    est->add_option("--method", eo.method, "Estimator")->check(CLI::IsMember(methods));
    est->add_option("--exposure-model", eo.exposure, "Exposure model")
        ->check(CLI::IsMember(exposures));
    est->add_option("--columns", eo.columns, "Column roles, e.g. y=time,delta=status,d=trt,z=iv")
        ->delimiter(',');
    est->add_option("--covariates", eo.covariates, "Covariate columns (default: all others)")
        ->delimiter(',');
    est->add_option("--level", eo.level, "Confidence level");
    est->add_option("--h", eo.h, "h(D) for iv-ee")->check(CLI::IsMember(hs));
    est->add_option("--out", eo.out, "Output prefix for .json and .txt");
    est->add_option("--nuisance-out", eo.nuisance_out, "Write fitted nuisance models as JSON");
    est->add_option("--nuisance-in", eo.nuisance_in, "Reuse nuisance models from JSON");

    SimulateOptions so;
    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo replications of one scenario");
    auto* scen = sim->add_option("--scenario", so.scenario, "Scenario key=value file");
    auto* preset = sim->add_option("--preset", so.preset, "Preset scenario")
                       ->check(CLI::IsMember({"A", "B"}));
    scen->excludes(preset);
    auto* g3 = sim->add_option("--gamma3", so.gamma3, "U-instrument interaction in the risk difference");
    auto* psi = sim->add_option("--psi", so.psi, "True log hazard ratio");
    auto* cl = sim->add_option("--censor-lambda", so.censor_lambda, "Exponential censoring rate");
    for (auto* opt : {g3, psi, cl}) scen->excludes(opt);
    auto* nopt = sim->add_option("--n", so.n, "Units per replicate");
    sim->add_option("--reps", so.reps, "Replicates");
    sim->add_option("--seed", so.seed, "Seed");
    sim->add_option("--out", so.out, "Output prefix for .json, .csv, .replicates.csv and .txt");
    sim->add_option("--method", so.method, "Estimator")->check(CLI::IsMember(iv_methods));
    sim->add_option("--exposure-model", so.exposure, "Exposure model")
        ->check(CLI::IsMember(exposures));
    sim->add_option("--h", so.h, "h(D) for iv-ee")->check(CLI::IsMember(hs));
    sim->add_option("--level", so.level, "Confidence level");
    sim->add_flag("--msm", so.msm, "Also fit the IPW Cox comparator");
    sim->add_option("--export-data", so.export_data, "Write replicate 0 as CSV");
    sim->add_flag("--oracle", so.oracle, "Include latent columns in --export-data");

    TableOptions to;
    CLI::App* tab = app.add_subcommand("replicate-table", "Run the 12 cells of a simulation table");
    tab->add_option("--table", to.table, "1 or S1")->required();
    tab->add_option("--n", to.n, "Units per replicate");
    tab->add_option("--reps", to.reps, "Replicates per cell");
    tab->add_option("--seed", to.seed, "Seed");
    tab->add_option("--out", to.out, "Output prefix for .txt, .csv and .json");
    tab->add_option("--method", to.method, "Estimator")->check(CLI::IsMember(iv_methods));
    tab->add_option("--exposure-model", to.exposure, "Exposure model")
        ->check(CLI::IsMember(exposures));
    tab->add_flag("--msm", to.msm, "Also fit the IPW Cox comparator");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*est) return cmd_estimate(eo, out);
        if (*sim) {
            if (so.scenario.empty() && so.preset.empty()) {
                throw ValueError("simulate needs --scenario or --preset");
            }
            return cmd_simulate(so, nopt->count() > 0, threads, out);
        }
        return cmd_table(to, threads, out);
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const EstimationError& e) {
        err << "estimation failed: " << e.what() << "\n";
        return kExitEstimation;
    }
}

}  // namespace hazardiv
