#include "hazardiv/simgen.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "hazardiv/cox.hpp"
#include "hazardiv/errors.hpp"
#include "hazardiv/inference.hpp"
#include "hazardiv/numeric.hpp"

namespace hazardiv {

namespace {

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

}  // namespace

Scenario make_scenario(const Scenario& s) {
    const auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw InvalidScenarioError(std::string(name) + " must be positive and finite");
        }
    };
    positive(s.lambda1, "lambda1");
    positive(s.lambda2, "lambda2");
    positive(s.lambda0, "lambda0");
    if (!(s.beta1 < 0.0) || !(s.beta2 < 0.0) || !std::isfinite(s.beta1) ||
        !std::isfinite(s.beta2)) {
        throw InvalidScenarioError("beta1 and beta2 must be negative for a proper survival model");
    }
    for (double g : s.gamma) {
        if (!std::isfinite(g)) throw InvalidScenarioError("gamma coefficients must be finite");
    }
    for (double g : s.delta_op) {
        if (!std::isfinite(g)) throw InvalidScenarioError("delta coefficients must be finite");
    }
    if (!(s.psi_true >= -1.0 && s.psi_true <= 1.0)) {
        throw InvalidScenarioError("psi_true must lie in [-1, 1]");
    }
    if (!(s.censor_rate >= 0.0) || !std::isfinite(s.censor_rate)) {
        throw InvalidScenarioError("censor_rate must be a finite value >= 0");
    }
    if (s.n < 2) throw InvalidScenarioError("n must be at least 2");

    const double lhs = -s.beta1 / s.lambda1 - s.beta2 / s.lambda2;
    if (lhs > s.lambda0) {
        throw InvalidScenarioError("violated |beta1|/lambda1 + |beta2|/lambda2 <= lambda0 (" +
                                   fmt("%g", lhs) + " > " + fmt("%g", s.lambda0) + ")");
    }
    const double bound = s.lambda0 * std::exp(s.psi_true);
    if (lhs > bound) {
        throw InvalidScenarioError(
            "violated |beta1|/lambda1 + |beta2|/lambda2 <= lambda0 * exp(psi) (" + fmt("%g", lhs) +
            " > " + fmt("%g", bound) + ")");
    }
    return s;
}

Scenario preset_scenario(char preset, double gamma3, double psi, double censor_rate,
                         std::size_t n) {
    Scenario s;
    if (preset == 'A' || preset == 'a') {
        s.gamma = {0.5, 0.5, 0.0, gamma3};
        s.id = "A";
    } else if (preset == 'B' || preset == 'b') {
        s.gamma = {0.0, 0.0, 0.5, gamma3};
        s.id = "B";
    } else {
        throw InvalidScenarioError(std::string("unknown preset '") + preset + "' (expected A or B)");
    }
    s.psi_true = psi;
    s.censor_rate = censor_rate;
    s.n = n;
    return make_scenario(s);
}

Scenario read_scenario_config(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string{};
            return v.substr(b, v.find_last_not_of(" \t\r") - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw SchemaError("scenario config line " + std::to_string(line_no) +
                              ": expected key=value");
        }
        entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }

    Scenario s;
    for (const auto& [key, value] : entries) {
        if (key != "preset") continue;
        if (value != "A" && value != "B") {
            throw ValueError("scenario config: preset must be A or B, got '" + value + "'");
        }
        s.id = value;
        s.gamma = value == "A" ? std::array<double, 4>{0.5, 0.5, 0.0, 0.0}
                               : std::array<double, 4>{0.0, 0.0, 0.5, 0.0};
    }

    std::map<std::string, double*> reals{
        {"lambda1", &s.lambda1},     {"lambda2", &s.lambda2},     {"lambda0", &s.lambda0},
        {"beta1", &s.beta1},         {"beta2", &s.beta2},         {"gamma0", &s.gamma[0]},
        {"gamma1", &s.gamma[1]},     {"gamma2", &s.gamma[2]},     {"gamma3", &s.gamma[3]},
        {"delta0", &s.delta_op[0]},  {"delta1", &s.delta_op[1]},  {"delta2", &s.delta_op[2]},
        {"psi_true", &s.psi_true},   {"censor_rate", &s.censor_rate}};
    for (const auto& [key, value] : entries) {
        if (key == "preset") continue;
        if (key == "id") {
            s.id = value;
            continue;
        }
        if (key == "n") {
            std::size_t n = 0;
            const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
            if (ec != std::errc{} || ptr != value.data() + value.size()) {
                throw ValueError("scenario config: n must be a positive integer, got '" + value + "'");
            }
            s.n = n;
            continue;
        }
        const auto it = reals.find(key);
        if (it == reals.end()) throw SchemaError("scenario config: unknown key '" + key + "'");
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc{} || ptr != value.data() + value.size()) {
            throw ValueError("scenario config: '" + key + "' is not a number: '" + value + "'");
        }
        *it->second = v;
    }
    return make_scenario(s);
}

Scenario load_scenario_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open scenario config '" + path + "'");
    return read_scenario_config(in);
}

namespace {

double log_survival(const Scenario& s, double u, double x2, int d, double t) {
    const double rate = s.lambda0 * std::exp(s.psi_true * d);
    return std::log1p(-s.beta1 * t / s.lambda1) + std::log1p(-s.beta2 * t / s.lambda2) +
           (s.beta1 * u + s.beta2 * x2 - rate) * t;
}

}  // namespace

double survival_function(const Scenario& s, double u, double x2, int d, double t) {
    if (t < 0.0) throw DomainError("survival_function: t must be >= 0");
    if (std::isinf(t)) return 0.0;
    return std::exp(log_survival(s, u, x2, d, t));
}

double survival_root(const Scenario& s, double u, double x2, int d, double a) {
    if (!(a >= 0.0 && a <= 1.0)) throw DomainError("survival_root: a must lie in [0, 1]");
    if (a == 0.0) return 0.0;
    if (a == 1.0) return std::numeric_limits<double>::infinity();
    const double target = std::log1p(-a);
    double lo = 0.0;
    double hi = 1.0;
    while (log_survival(s, u, x2, d, hi) > target) {
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (log_survival(s, u, x2, d, mid) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

SimulatedUnit draw_unit(const Scenario& s, RandomStream& rng) {
    SimulatedUnit unit;
    unit.u = rng.exponential(s.lambda1);
    unit.x2 = rng.exponential(s.lambda2);
    unit.x3 = unit.x2 >= 1.0 ? unit.x2 : -(unit.x2 + 1.0);
    unit.prob_z1 = expit(-1.0 / s.lambda2 + unit.x2);
    unit.z = rng.bernoulli(unit.prob_z1);

    unit.risk_difference =
        std::tanh(s.gamma[0] + s.gamma[1] * unit.x2 + s.gamma[2] * unit.x3 + s.gamma[3] * unit.u);
    unit.odds_product = std::exp(s.delta_op[0] + s.delta_op[1] * unit.u + s.delta_op[2] * unit.x2);
    const ArmProbabilities arms = invert_rd_op(unit.risk_difference, unit.odds_product);
    unit.d = rng.bernoulli(unit.z ? arms.p1 : arms.p0);

    unit.a = rng.uniform();
    unit.t = survival_root(s, unit.u, unit.x2, unit.d, unit.a);
    const double cu = rng.uniform();
    unit.c = s.censor_rate > 0.0 ? -std::log1p(-cu) / s.censor_rate
                                 : std::numeric_limits<double>::infinity();
    unit.y = std::min(unit.t, unit.c);
    unit.delta = unit.t <= unit.c ? 1 : 0;
    return unit;
}

std::vector<SimulatedUnit> simulate_units(const Scenario& s, RandomStream& rng) {
    std::vector<SimulatedUnit> units;
    units.reserve(s.n);
    for (std::size_t i = 0; i < s.n; ++i) units.push_back(draw_unit(s, rng));
    return units;
}

SurvivalDataset to_dataset(const std::vector<SimulatedUnit>& units) {
    const std::size_t n = units.size();
    std::vector<double> y(n);
    std::vector<int> delta(n), d(n), z(n);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        y[i] = units[i].y;
        delta[i] = units[i].delta;
        d[i] = units[i].d;
        z[i] = units[i].z;
        x(r, 0) = units[i].x2;
        x(r, 1) = units[i].x3;
    }
    return SurvivalDataset::from_columns(std::move(y), std::move(delta), std::move(d),
                                         std::move(z), x, {"x2", "x3"});
}

void write_oracle_csv(std::ostream& out, const Scenario& s, const std::vector<SimulatedUnit>& units) {
    out << "y,delta,d,z,x2,x3,u,a,t,c,gamma3\n";
    char buf[512];
    for (const SimulatedUnit& u : units) {
        std::snprintf(buf, sizeof buf, "%.17g,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      u.y, u.delta, u.d, u.z, u.x2, u.x3, u.u, u.a, u.t, u.c, s.gamma[3]);
        out << buf;
    }
}

namespace {

ReplicationRecord run_one(const Scenario& scenario, const EstimatorSpec& spec, std::uint64_t seed,
                          std::size_t r) {
    ReplicationRecord rec;
    rec.index = r;
    RandomStream rng(seed, r);
    const std::vector<SimulatedUnit> units = simulate_units(scenario, rng);
    std::size_t censored = 0;
    for (const SimulatedUnit& u : units) censored += u.delta == 0;
    rec.censor_rate = static_cast<double>(censored) / static_cast<double>(units.size());

    try {
        const SurvivalDataset ds = to_dataset(units);
        if (spec.msm_comparator) {
            try {
                const std::vector<std::string> confounders{"x2", "x3"};
                rec.msm_beta = fit_msm_cox_ipw(ds, confounders).beta(0);
            } catch (const Error&) {
                rec.msm_beta.reset();
            }
        }
        const NuisanceFit fit = fit_nuisance(ds, spec.exposure);
        const PsiEstimate est = spec.method == PsiMethod::closed_form
                                    ? estimate_closed_form(ds, fit)
                                    : solve_ee(ds, fit, spec.h);
        const InferenceReport inf = infer(ds, fit, est, spec.level);
        rec.psi = est.psi;
        rec.se = inf.se;
        rec.ci_lo = inf.ci_lo;
        rec.ci_hi = inf.ci_hi;
        rec.covered = inf.ci_lo <= scenario.psi_true && scenario.psi_true <= inf.ci_hi;
        rec.ok = std::isfinite(rec.psi) && std::isfinite(rec.se);
        if (!rec.ok) rec.error = "non-finite estimate";
    } catch (const Error& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

}  // namespace

unsigned default_thread_count() {
    if (const char* env = std::getenv("HAZARDIV_THREADS")) {
        unsigned v = 0;
        const std::string_view sv(env);
        const auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), v);
        if (ec == std::errc{} && ptr == sv.data() + sv.size()) return v;
    }
    return 1;
}

ReplicationSummary run_replications(const Scenario& scenario_in, std::size_t reps,
                                    const EstimatorSpec& spec, std::uint64_t seed,
                                    unsigned threads) {
    if (reps < 1) throw ContractError("run_replications: reps must be >= 1");
    const Scenario scenario = make_scenario(scenario_in);

    ReplicationSummary out;
    out.scenario = scenario;
    out.spec = spec;
    out.seed = seed;
    out.reps = reps;
    out.records.resize(reps);

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, reps));
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t r = next++; r < reps; r = next++) {
            out.records[r] = run_one(scenario, spec, seed, r);
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    // Ordered reduction.
    CompensatedSum psi_sum, se_sum, cover, cens_sum, msm_sum;
    std::size_t ok = 0;
    out.censor_rate_min = 1.0;
    out.censor_rate_max = 0.0;
    for (const ReplicationRecord& rec : out.records) {
        cens_sum += rec.censor_rate;
        out.censor_rate_min = std::min(out.censor_rate_min, rec.censor_rate);
        out.censor_rate_max = std::max(out.censor_rate_max, rec.censor_rate);
        if (rec.msm_beta) {
            ++out.msm_successes;
            msm_sum += *rec.msm_beta - scenario.psi_true;
        }
        if (!rec.ok) continue;
        ++ok;
        psi_sum += rec.psi;
        se_sum += rec.se;
        cover += rec.covered ? 1.0 : 0.0;
    }
    out.failures = reps - ok;
    out.mean_censor_rate = cens_sum.value() / static_cast<double>(reps);
    if (out.msm_successes > 0) {
        out.msm_mean_bias = msm_sum.value() / static_cast<double>(out.msm_successes);
    }
    if (ok > 0) {
        const double k = static_cast<double>(ok);
        out.mean_psi = psi_sum.value() / k;
        out.mean_bias = out.mean_psi - scenario.psi_true;
        out.mean_se = se_sum.value() / k;
        out.coverage = cover.value() / k;
        CompensatedSum ss;
        for (const ReplicationRecord& rec : out.records) {
            if (rec.ok) ss += (rec.psi - out.mean_psi) * (rec.psi - out.mean_psi);
        }
        out.sd_psi = ok > 1 ? std::sqrt(ss.value() / (k - 1.0)) : 0.0;
        out.mc_se = out.sd_psi / std::sqrt(k);
    } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out.mean_psi = out.mean_bias = out.mean_se = out.coverage = out.sd_psi = out.mc_se = nan;
    }
    if (static_cast<double>(out.failures) > 0.05 * static_cast<double>(reps)) {
        out.failure_warning = true;
        out.warnings.push_back(std::to_string(out.failures) + " of " + std::to_string(reps) +
                               " replicates failed (more than 5%)");
    }
    if (spec.msm_comparator && out.msm_successes < reps) {
        out.warnings.push_back("IPW Cox comparator failed on " +
                               std::to_string(reps - out.msm_successes) + " replicates");
    }
    return out;
}

std::string to_string(SimTable t) { return t == SimTable::main ? "1" : "S1"; }

SimTable sim_table_from_string(const std::string& name) {
    if (name == "1") return SimTable::main;
    if (name == "S1" || name == "s1") return SimTable::assumption_fails;
    throw ValueError("unknown table '" + name + "' (expected 1 or S1)");
}

SimulationTable run_table(SimTable table, std::size_t n, std::size_t reps, std::uint64_t seed,
                          const EstimatorSpec& spec, unsigned threads) {
    SimulationTable out;
    out.table = table;
    out.n = n;
    out.reps = reps;
    out.seed = seed;
    const double gamma3 = table == SimTable::main ? 0.0 : 0.5;
    std::uint64_t k = 0;
    for (char preset : {'A', 'B'}) {
        for (double lambda : kTableCensorRates) {
            for (double psi : kTablePsi) {
                TableCell cell;
                cell.preset = preset;
                cell.censor_rate = lambda;
                cell.psi = psi;
                const Scenario s = preset_scenario(preset, gamma3, psi, lambda, n);
                cell.summary = run_replications(s, reps, spec, splitmix64(seed + k), threads);
                out.cells.push_back(std::move(cell));
                ++k;
            }
        }
    }
    return out;
}

std::string render_table(const SimulationTable& t) {
    std::ostringstream os;
    os << "Table " << to_string(t.table) << ": gamma3 = "
       << (t.table == SimTable::main ? "0 (no-interaction holds)" : "0.5 (no-interaction fails)")
       << ", n = " << t.n << ", reps = " << t.reps << ", seed = " << t.seed << "\n";
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %-15s %-33s %s\n", "", "Censoring", "Bias x100 (SE x100)",
                  "Coverage");
    os << line;
    std::snprintf(line, sizeof line, "%-12s %-15s %-16s %-16s %-8s %s\n", "", "rate", "psi=0",
                  "psi=0.5", "psi=0", "psi=0.5");
    os << line;
    const auto bias = [](const ReplicationSummary& s) {
        if (!std::isfinite(s.mean_bias)) return std::string("NA");
        char b[64];
        std::snprintf(b, sizeof b, "%.2f(%.2f)", 100.0 * s.mean_bias, 100.0 * s.mc_se);
        return std::string(b);
    };
    const auto cov = [](const ReplicationSummary& s) {
        if (!std::isfinite(s.coverage)) return std::string("NA");
        return fmt("%.3f", s.coverage);
    };
    for (std::size_t block = 0; block < 2; ++block) {
        os << (block == 0 ? "Monotonicity holds\n" : "Monotonicity fails\n");
        for (std::size_t li = 0; li < kTableCensorRates.size(); ++li) {
            const std::size_t base = block * 6 + li * 2;
            if (base + 1 >= t.cells.size()) break;
            const ReplicationSummary& s0 = t.cells[base].summary;
            const ReplicationSummary& s1 = t.cells[base + 1].summary;
            std::string cens;
            if (kTableCensorRates[li] == 0.0) {
                cens = "0";
            } else {
                const double lo = std::min(s0.mean_censor_rate, s1.mean_censor_rate);
                const double hi = std::max(s0.mean_censor_rate, s1.mean_censor_rate);
                cens = fmt("%.1f%%", 100.0 * lo) + "-" + fmt("%.1f%%", 100.0 * hi);
            }
            const std::string label = "  lambda=" + fmt("%g", kTableCensorRates[li]);
            std::snprintf(line, sizeof line, "%-12s %-15s %-16s %-16s %-8s %-7s", label.c_str(),
                          cens.c_str(), bias(s0).c_str(), bias(s1).c_str(), cov(s0).c_str(),
                          cov(s1).c_str());
            os << line;
            if (s0.failures + s1.failures > 0) {
                os << "  [failures: " << s0.failures << "/" << s0.reps << ", " << s1.failures << "/"
                   << s1.reps << "]";
            }
            os << "\n";
        }
    }
    return os.str();
}

}  // namespace hazardiv
