#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hazardiv/core_data.hpp"
#include "hazardiv/ivhr.hpp"
#include "hazardiv/nuisance.hpp"
#include "hazardiv/rng.hpp"

namespace hazardiv {

/// Data-generating mechanism whose counterfactual survival curves follow a
/// marginal Cox model S_d(t) = exp(-lambda0 e^{psi d} t) while treatment is
/// confounded by the latent U.
struct Scenario {
    std::string id = "custom";
    double lambda1 = 2.0;  ///< rate of U
    double lambda2 = 2.0;  ///< rate of X2
    double lambda0 = 4.0;  ///< baseline hazard
    double beta1 = -1.0;   ///< conditional effect of U on the survival ratio
    double beta2 = -1.0;   ///< conditional effect of X2 on the survival ratio
    /// Risk difference tanh(g0 + g1 x2 + g2 x3 + g3 u).
    std::array<double, 4> gamma{0.5, 0.5, 0.0, 0.0};
    /// Log odds product d0 + d1 u + d2 x2.
    std::array<double, 3> delta_op{-2.0, 1.0, 1.0};
    double psi_true = 0.0;
    double censor_rate = 0.0;  ///< exponential censoring rate; 0 disables censoring
    std::size_t n = 1000;
};

/// Validates `params` (including the proper-survival constraints
/// |b1|/l1 + |b2|/l2 <= l0 and <= l0 e^psi) and returns it unchanged.
Scenario make_scenario(const Scenario& params);

/// 'A': risk difference tanh(0.5 + 0.5 x2) > 0 (monotonicity holds).
/// 'B': risk difference tanh(0.5 x3), which changes sign.
Scenario preset_scenario(char preset, double gamma3, double psi, double censor_rate,
                         std::size_t n = 1000);

/// Flat key=value config; '#' starts a comment. An optional `preset` key
/// (A or B) sets defaults that later keys override.
Scenario read_scenario_config(std::istream& in);
Scenario load_scenario_config(const std::string& path);

struct SimulatedUnit {
    double u = 0.0;
    double x2 = 0.0;
    double x3 = 0.0;
    int z = 0;
    int d = 0;
    double a = 0.0;  ///< uniform driving the survival time
    double t = 0.0;
    double c = 0.0;  ///< +inf without censoring
    double y = 0.0;
    int delta = 0;
    // true nuisance values, for oracles
    double prob_z1 = 0.0;
    double risk_difference = 0.0;
    double odds_product = 0.0;
};

/// S(t | d, u, x2) = (1 - b1 t / l1)(1 - b2 t / l2) exp{(b1 u + b2 x2 - l0 e^{psi d}) t}.
double survival_function(const Scenario& s, double u, double x2, int d, double t);

/// The t >= 0 with S(t | d, u, x2) = 1 - a, by bisection to 1e-12 (a = 1 gives +inf).
double survival_root(const Scenario& s, double u, double x2, int d, double a);

SimulatedUnit draw_unit(const Scenario& s, RandomStream& rng);
std::vector<SimulatedUnit> simulate_units(const Scenario& s, RandomStream& rng);

/// Observed data with covariates x2 and x3; u and the draw internals are dropped.
SurvivalDataset to_dataset(const std::vector<SimulatedUnit>& units);

/// Test-only export including the latent columns.
void write_oracle_csv(std::ostream& out, const Scenario& s, const std::vector<SimulatedUnit>& units);

struct EstimatorSpec {
    PsiMethod method = PsiMethod::closed_form;
    HFunction h = HFunction::sign;
    ExposureKind exposure = ExposureKind::rd_op;
    double level = 0.95;
    /// Also fit the measured-confounder IPW Cox comparator.
    bool msm_comparator = false;
};

struct ReplicationRecord {
    std::size_t index = 0;
    bool ok = false;
    std::string error;
    double psi = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool covered = false;
    double censor_rate = 0.0;
    std::optional<double> msm_beta;
};

struct ReplicationSummary {
    Scenario scenario;
    EstimatorSpec spec;
    std::uint64_t seed = 0;
    std::size_t reps = 0;
    std::size_t failures = 0;
    double mean_psi = 0.0;
    double mean_bias = 0.0;
    double sd_psi = 0.0;
    /// Monte Carlo standard error of the mean estimate, sd / sqrt(successes).
    double mc_se = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
    double mean_censor_rate = 0.0;
    double censor_rate_min = 0.0;
    double censor_rate_max = 0.0;
    std::size_t msm_successes = 0;
    double msm_mean_bias = 0.0;
    /// failures above 5% of reps.
    bool failure_warning = false;
    std::vector<std::string> warnings;
    std::vector<ReplicationRecord> records;
};

/// Replicate r draws from RandomStream(seed, r), so results do not depend on
/// `threads` (0 means one per hardware thread).
ReplicationSummary run_replications(const Scenario& scenario, std::size_t reps,
                                    const EstimatorSpec& spec, std::uint64_t seed,
                                    unsigned threads = 1);

/// Threads from HAZARDIV_THREADS, or 1 when unset.
unsigned default_thread_count();

enum class SimTable { main, assumption_fails };

std::string to_string(SimTable t);
SimTable sim_table_from_string(const std::string& name);

struct TableCell {
    char preset = 'A';
    double censor_rate = 0.0;
    double psi = 0.0;
    ReplicationSummary summary;
};

struct SimulationTable {
    SimTable table = SimTable::main;
    std::size_t n = 0;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    std::vector<TableCell> cells;  ///< preset-major, then censoring, then psi
};

inline constexpr std::array<double, 3> kTableCensorRates{0.0, 1.0, 4.0};
inline constexpr std::array<double, 2> kTablePsi{0.0, 0.5};

/// Cell k uses seed splitmix64(seed + k).
SimulationTable run_table(SimTable table, std::size_t n, std::size_t reps, std::uint64_t seed,
                          const EstimatorSpec& spec = {}, unsigned threads = 1);

/// Aligned-text rendering with bias x100 (Monte Carlo SE x100), coverage and
/// the censoring-rate range across the psi cells of each row.
std::string render_table(const SimulationTable& t);

}  // namespace hazardiv
