#include "hazardiv/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hazardiv/errors.hpp"
#include "hazardiv/numeric.hpp"

namespace hazardiv {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    std::string out(s.substr(b, e - b));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        fields.push_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

double parse_number(const std::string& text, std::size_t row, const std::string& column) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
        throw ValueError("row " + std::to_string(row) + ", column '" + column +
                         "': expected a finite decimal number, got '" + text + "'");
    }
    return value;
}

int parse_binary(const std::string& text, std::size_t row, const std::string& column) {
    const double v = parse_number(text, row, column);
    if (v != 0.0 && v != 1.0) {
        throw ValueError("row " + std::to_string(row) + ", column '" + column +
                         "': expected 0 or 1, got '" + text + "'");
    }
    return static_cast<int>(v);
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw SchemaError("missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
}

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

SurvivalDataset SurvivalDataset::from_columns(std::vector<double> y, std::vector<int> delta,
                                              std::vector<int> d, std::vector<int> z,
                                              const Eigen::MatrixXd& covariates,
                                              std::vector<std::string> covariate_names) {
    const std::size_t n = y.size();
    if (delta.size() != n || d.size() != n || z.size() != n ||
        static_cast<std::size_t>(covariates.rows()) != n) {
        throw ContractError("dataset columns have different lengths");
    }
    if (static_cast<std::size_t>(covariates.cols()) != covariate_names.size()) {
        throw ContractError("covariate matrix and covariate names disagree in width");
    }
    for (const auto& name : covariate_names) {
        if (name == kInterceptName) {
            throw ContractError("covariates must not include an intercept column");
        }
    }
    SurvivalDataset ds;
    ds.y_ = std::move(y);
    ds.delta_ = std::move(delta);
    ds.d_ = std::move(d);
    ds.z_ = std::move(z);
    ds.x_.resize(static_cast<Eigen::Index>(n), covariates.cols() + 1);
    ds.x_.col(0).setOnes();
    if (covariates.cols() > 0) ds.x_.rightCols(covariates.cols()) = covariates;
    ds.names_.reserve(covariate_names.size() + 1);
    ds.names_.emplace_back(kInterceptName);
    for (auto& name : covariate_names) ds.names_.push_back(std::move(name));
    ds.validate();
    return ds;
}

void SurvivalDataset::validate() const {
    const std::size_t n = y_.size();
    if (n < 2) throw ValueError("dataset needs at least 2 observations, got " + std::to_string(n));
    bool z0 = false, z1 = false, d0 = false, d1 = false, event = false;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string row = "row " + std::to_string(i + 1);
        if (!(std::isfinite(y_[i]) && y_[i] > 0.0)) {
            throw ValueError(row + ": follow-up time y must be positive and finite");
        }
        if ((delta_[i] != 0 && delta_[i] != 1) || (d_[i] != 0 && d_[i] != 1) ||
            (z_[i] != 0 && z_[i] != 1)) {
            throw ValueError(row + ": delta, d and z must be 0 or 1");
        }
        for (Eigen::Index k = 0; k < x_.cols(); ++k) {
            if (!std::isfinite(x_(static_cast<Eigen::Index>(i), k))) {
                throw ValueError(row + ": covariate '" + names_[static_cast<std::size_t>(k)] +
                                 "' is not finite");
            }
        }
        (z_[i] ? z1 : z0) = true;
        (d_[i] ? d1 : d0) = true;
        event = event || delta_[i] == 1;
    }
    if (!(z0 && z1)) throw ValueError("both instrument arms (z=0 and z=1) must be present");
    if (!(d0 && d1)) throw ValueError("both treatment arms (d=0 and d=1) must be present");
    if (!event) throw EmptyEventsError("dataset has no observed events (all delta = 0)");
}

Observation SurvivalDataset::observation(std::size_t i) const {
    return Observation{y_.at(i), delta_[i], d_[i], z_[i],
                       x_.row(static_cast<Eigen::Index>(i)).transpose()};
}

std::size_t SurvivalDataset::covariate_index(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw SchemaError("unknown covariate '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - names_.begin());
}

SurvivalDataset SurvivalDataset::take_rows(std::span<const std::size_t> rows) const {
    SurvivalDataset ds;
    ds.names_ = names_;
    ds.x_.resize(static_cast<Eigen::Index>(rows.size()), x_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t i = rows[r];
        if (i >= n()) throw ContractError("row index out of range");
        ds.y_.push_back(y_[i]);
        ds.delta_.push_back(delta_[i]);
        ds.d_.push_back(d_[i]);
        ds.z_.push_back(z_[i]);
        ds.x_.row(static_cast<Eigen::Index>(r)) = x_.row(static_cast<Eigen::Index>(i));
    }
    ds.validate();
    return ds;
}

SurvivalDataset SurvivalDataset::select_covariates(std::span<const std::string> names) const {
    SurvivalDataset ds;
    ds.y_ = y_;
    ds.delta_ = delta_;
    ds.d_ = d_;
    ds.z_ = z_;
    ds.names_.emplace_back(kInterceptName);
    ds.x_.resize(x_.rows(), static_cast<Eigen::Index>(names.size() + 1));
    ds.x_.col(0).setOnes();
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == kInterceptName) throw ContractError("intercept is always included");
        const std::size_t idx = covariate_index(names[k]);
        ds.x_.col(static_cast<Eigen::Index>(k + 1)) = x_.col(static_cast<Eigen::Index>(idx));
        ds.names_.push_back(names[k]);
    }
    return ds;
}

SurvivalDataset read_dataset_csv(std::istream& in, const ColumnMap& columns) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("CSV is empty: header row missing");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
        line.erase(0, 3);
    }
    const std::vector<std::string> header = split_fields(line);

    const std::size_t iy = find_column(header, columns.y);
    const std::size_t idelta = find_column(header, columns.delta);
    const std::size_t id = find_column(header, columns.d);
    const std::size_t iz = find_column(header, columns.z);

    std::vector<std::size_t> cov_idx;
    std::vector<std::string> cov_names;
    if (columns.covariates) {
        for (const auto& name : *columns.covariates) {
            cov_idx.push_back(find_column(header, name));
            cov_names.push_back(name);
        }
    } else {
        for (std::size_t k = 0; k < header.size(); ++k) {
            if (k == iy || k == idelta || k == id || k == iz) continue;
            cov_idx.push_back(k);
            cov_names.push_back(header[k]);
        }
    }

    std::vector<double> y;
    std::vector<int> delta, d, z;
    std::vector<double> cov_values;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const std::vector<std::string> f = split_fields(line);
        if (f.size() != header.size()) {
            throw ValueError("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(f.size()));
        }
        y.push_back(parse_number(f[iy], row, columns.y));
        delta.push_back(parse_binary(f[idelta], row, columns.delta));
        d.push_back(parse_binary(f[id], row, columns.d));
        z.push_back(parse_binary(f[iz], row, columns.z));
        for (std::size_t k = 0; k < cov_idx.size(); ++k) {
            cov_values.push_back(parse_number(f[cov_idx[k]], row, cov_names[k]));
        }
        if (!(y.back() > 0.0)) {
            throw ValueError("row " + std::to_string(row) + ", column '" + columns.y +
                             "': follow-up time must be positive");
        }
    }

    Eigen::MatrixXd cov(static_cast<Eigen::Index>(y.size()),
                        static_cast<Eigen::Index>(cov_idx.size()));
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t k = 0; k < cov_idx.size(); ++k) {
            cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                cov_values[i * cov_idx.size() + k];
        }
    }
    return SurvivalDataset::from_columns(std::move(y), std::move(delta), std::move(d),
                                         std::move(z), cov, std::move(cov_names));
}

SurvivalDataset load_dataset(const std::filesystem::path& path, const ColumnMap& columns) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open data file '" + path.string() + "'");
    return read_dataset_csv(in, columns);
}

void write_dataset_csv(std::ostream& out, const SurvivalDataset& ds) {
    out << "y,delta,d,z";
    const auto& names = ds.covariate_names();
    for (std::size_t k = 1; k < names.size(); ++k) out << ',' << names[k];
    out << '\n';
    const Eigen::MatrixXd& x = ds.x();
    for (std::size_t i = 0; i < ds.n(); ++i) {
        out << format_g17(ds.y()[i]) << ',' << ds.delta()[i] << ',' << ds.d()[i] << ','
            << ds.z()[i];
        for (Eigen::Index k = 1; k < x.cols(); ++k) {
            out << ',' << format_g17(x(static_cast<Eigen::Index>(i), k));
        }
        out << '\n';
    }
}

EventGrid event_grid(const SurvivalDataset& ds) {
    EventGrid grid;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        if (ds.delta()[i] == 1) grid.times.push_back(ds.y()[i]);
    }
    if (grid.times.empty()) throw EmptyEventsError("no observed events: event grid is empty");
    std::sort(grid.times.begin(), grid.times.end());
    grid.times.erase(std::unique(grid.times.begin(), grid.times.end()), grid.times.end());
    return grid;
}

std::vector<int> risk_indicator(const SurvivalDataset& ds, double query) {
    if (!(query > 0.0)) throw DomainError("risk_indicator: query time must be positive");
    std::vector<int> at_risk(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) at_risk[i] = ds.y()[i] >= query ? 1 : 0;
    return at_risk;
}

RiskSets::RiskSets(std::span<const double> y) : order_(y.size()), group_of_(y.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
    for (std::size_t k = 0; k < order_.size(); ++k) {
        const std::size_t i = order_[k];
        if (k == 0 || y[i] != group_time_.back()) {
            start_.push_back(k);
            group_time_.push_back(y[i]);
        }
        group_of_[i] = group_time_.size() - 1;
    }
    start_.push_back(order_.size());
}

std::vector<double> RiskSets::cumulative(std::span<const double> v) const {
    std::vector<double> out(n_groups());
    CompensatedSum acc;
    for (std::size_t g = 0; g < n_groups(); ++g) {
        for (std::size_t unit : members(g)) acc += v[unit];
        out[g] = acc.value();
    }
    return out;
}

}  // namespace hazardiv
