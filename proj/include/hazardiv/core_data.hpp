#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace hazardiv {

/// One observed unit: follow-up time, event indicator, treatment, instrument
/// and baseline covariates (x[0] is the intercept).
struct Observation {
    double y = 0.0;
    int delta = 0;
    int d = 0;
    int z = 0;
    Eigen::VectorXd x;
};

/// Validated, immutable collection of observations stored column-wise.
///
/// Invariants checked at construction: n >= 2, y > 0 and finite, delta/d/z
/// binary, both instrument arms and both treatment arms present, at least
/// one observed event, finite covariates. An intercept column is always the
/// first covariate; input covariates never carry one.
class SurvivalDataset {
public:
    static constexpr const char* kInterceptName = "(Intercept)";

    /// `covariates` excludes the intercept; `covariate_names` names its columns.
    static SurvivalDataset from_columns(std::vector<double> y, std::vector<int> delta,
                                        std::vector<int> d, std::vector<int> z,
                                        const Eigen::MatrixXd& covariates,
                                        std::vector<std::string> covariate_names);

    std::size_t n() const { return y_.size(); }
    /// Number of covariate columns including the intercept.
    std::size_t p() const { return static_cast<std::size_t>(x_.cols()); }

    std::span<const double> y() const { return y_; }
    std::span<const int> delta() const { return delta_; }
    std::span<const int> d() const { return d_; }
    std::span<const int> z() const { return z_; }
    /// n x p design with the intercept in column 0.
    const Eigen::MatrixXd& x() const { return x_; }
    /// Names of all columns of x(), starting with kInterceptName.
    const std::vector<std::string>& covariate_names() const { return names_; }

    Observation observation(std::size_t i) const;

    /// Column index in x() for a named covariate; throws SchemaError if absent.
    std::size_t covariate_index(std::string_view name) const;

    /// Rows in the given order (repeats allowed). Result is revalidated.
    SurvivalDataset take_rows(std::span<const std::size_t> rows) const;

    /// Keep only the named covariates (intercept is always retained).
    SurvivalDataset select_covariates(std::span<const std::string> names) const;

private:
    SurvivalDataset() = default;
    void validate() const;

    std::vector<double> y_;
    std::vector<int> delta_;
    std::vector<int> d_;
    std::vector<int> z_;
    Eigen::MatrixXd x_;
    std::vector<std::string> names_;
};

/// Column names used when reading a CSV. When `covariates` is unset every
/// column not mapped to y/delta/d/z is a covariate, in header order.
struct ColumnMap {
    std::string y = "y";
    std::string delta = "delta";
    std::string d = "d";
    std::string z = "z";
    std::optional<std::vector<std::string>> covariates;
};

SurvivalDataset read_dataset_csv(std::istream& in, const ColumnMap& columns = {});
SurvivalDataset load_dataset(const std::filesystem::path& path, const ColumnMap& columns = {});

/// Writes the core CSV schema (y,delta,d,z,<covariates>) without the intercept.
/// Values use 17 significant digits so reparsing is exact.
void write_dataset_csv(std::ostream& out, const SurvivalDataset& ds);

/// Distinct observed event times in increasing order.
struct EventGrid {
    std::vector<double> times;
};

EventGrid event_grid(const SurvivalDataset& ds);

/// Entry i is 1 iff y_i >= query.
std::vector<int> risk_indicator(const SurvivalDataset& ds, double query);

/// Tie groups of follow-up times in decreasing order, used to form
/// risk-set sums sum_j v_j I(y_j >= y) in one sweep. Tied units share a
/// group so they share a risk set.
class RiskSets {
public:
    explicit RiskSets(std::span<const double> y);

    std::size_t n_groups() const { return group_time_.size(); }
    /// Group of unit i; groups are numbered by decreasing time.
    std::size_t group_of(std::size_t unit) const { return group_of_[unit]; }
    double group_time(std::size_t g) const { return group_time_[g]; }
    /// Units in group g.
    std::span<const std::size_t> members(std::size_t g) const {
        return {order_.data() + start_[g], start_[g + 1] - start_[g]};
    }

    /// Per group g: sum of v over units with y >= group_time(g).
    std::vector<double> cumulative(std::span<const double> v) const;

private:
    std::vector<std::size_t> order_;
    std::vector<std::size_t> start_;
    std::vector<std::size_t> group_of_;
    std::vector<double> group_time_;
};

}  // namespace hazardiv
