#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "hazardiv/core_data.hpp"
#include "hazardiv/errors.hpp"

using namespace hazardiv;

namespace {

SurvivalDataset parse(const std::string& text, const ColumnMap& map = {}) {
    std::istringstream in(text);
    return read_dataset_csv(in, map);
}

std::string message_of(const std::string& text) {
    try {
        parse(text);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("parse a small CSV and prepend the intercept") {
    const SurvivalDataset ds = parse("y,delta,d,z,x1\n1.5,1,1,0,0.2\n2.0,0,0,1,1.1\n");
    CHECK(ds.n() == 2);
    CHECK(ds.p() == 2);
    CHECK(ds.covariate_names() == std::vector<std::string>{"(Intercept)", "x1"});
    CHECK(ds.x()(0, 0) == 1.0);
    CHECK(ds.x()(1, 1) == 1.1);
    CHECK(ds.y()[0] == 1.5);
    CHECK(ds.d()[1] == 0);
    const Observation o = ds.observation(1);
    CHECK(o.z == 1);
    CHECK(o.x.size() == 2);
}

TEST_CASE("column map, BOM, quotes and whitespace") {
    ColumnMap map;
    map.y = "time";
    map.delta = "status";
    map.d = "smoke";
    map.z = "mother";
    map.covariates = std::vector<std::string>{"age"};
    const SurvivalDataset ds =
        parse("\xEF\xBB\xBF\"time\", status ,smoke,mother,age,ignored\n3,1,1,1,40,9\n4,1,0,0,50,9\n", map);
    CHECK(ds.n() == 2);
    CHECK(ds.covariate_names() == std::vector<std::string>{"(Intercept)", "age"});
    CHECK(ds.x()(1, 1) == 50.0);
}

TEST_CASE("value errors cite row and column") {
    const std::string bad_delta = "y,delta,d,z\n1,1,1,0\n2,0,0,1\n3,2,1,1\n";
    CHECK_THROWS_AS(parse(bad_delta), ValueError);
    CHECK(message_of(bad_delta).find("row 3") != std::string::npos);
    CHECK(message_of(bad_delta).find("delta") != std::string::npos);

    const std::string missing = "y,delta,d,z,x\n1,1,1,0,\n2,0,0,1,1\n";
    CHECK_THROWS_AS(parse(missing), ValueError);
    CHECK(message_of(missing).find("row 1, column 'x'") != std::string::npos);

    CHECK_THROWS_AS(parse("y,delta,d,z\n1,1,1,0\n2,0,0,abc\n"), ValueError);
    CHECK_THROWS_AS(parse("y,delta,d,z\n-1,1,1,0\n2,0,0,1\n"), ValueError);
    CHECK_THROWS_AS(parse("y,delta,d,z\n1,1,1,0\n2,0,0\n"), ValueError);
}

TEST_CASE("missing column is a schema error naming it") {
    CHECK_THROWS_AS(parse("y,delta,d\n1,1,1\n"), SchemaError);
    CHECK(message_of("y,delta,d\n1,1,1\n").find("'z'") != std::string::npos);
    CHECK_THROWS_AS(parse(""), SchemaError);
    CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv"), SchemaError);
}

TEST_CASE("dataset invariants") {
    Eigen::MatrixXd none(3, 0);
    CHECK_THROWS_AS(SurvivalDataset::from_columns({1}, {1}, {1}, {1}, Eigen::MatrixXd(1, 0), {}),
                    ValueError);
    CHECK_THROWS_AS(SurvivalDataset::from_columns({1, 2, 3}, {1, 1, 1}, {1, 0, 1}, {1, 1, 1}, none, {}),
                    ValueError);
    CHECK_THROWS_AS(SurvivalDataset::from_columns({1, 2, 3}, {1, 1, 1}, {1, 1, 1}, {1, 0, 1}, none, {}),
                    ValueError);
    CHECK_THROWS_AS(SurvivalDataset::from_columns({1, 2, 3}, {0, 0, 0}, {1, 0, 1}, {1, 0, 1}, none, {}),
                    EmptyEventsError);
    CHECK_THROWS_AS(SurvivalDataset::from_columns({1, 0, 3}, {1, 0, 0}, {1, 0, 1}, {1, 0, 1}, none, {}),
                    ValueError);
    Eigen::MatrixXd inf(3, 1);
    inf << 1, std::numeric_limits<double>::infinity(), 2;
    CHECK_THROWS_AS(SurvivalDataset::from_columns({1, 2, 3}, {1, 0, 0}, {1, 0, 1}, {1, 0, 1}, inf, {"x"}),
                    ValueError);
}

TEST_CASE("event grid") {
    Eigen::MatrixXd none(4, 0);
    const auto ds = SurvivalDataset::from_columns({1, 2, 2, 3}, {1, 0, 1, 1}, {1, 0, 1, 0},
                                                  {1, 0, 1, 0}, none, {});
    CHECK(event_grid(ds).times == std::vector<double>{1, 2, 3});

    const auto ds2 = SurvivalDataset::from_columns({1, 4, 5}, {1, 1, 0}, {1, 0, 1}, {1, 0, 1},
                                                   Eigen::MatrixXd(3, 0), {});
    CHECK(event_grid(ds2).times == std::vector<double>{1, 4});
}

TEST_CASE("event grid is invariant to row permutation") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    const std::size_t n = 50;
    std::vector<double> y(n);
    std::vector<int> delta(n), d(n), z(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::round(u(gen) * 4) / 4 + 0.25;  // induce ties
        delta[i] = static_cast<int>(i % 3 != 0);
        d[i] = static_cast<int>(i % 2);
        z[i] = static_cast<int>((i / 2) % 2);
    }
    const auto ds = SurvivalDataset::from_columns(y, delta, d, z, Eigen::MatrixXd(n, 0), {});
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    CHECK(event_grid(ds.take_rows(perm)).times == event_grid(ds).times);
}

TEST_CASE("risk indicator") {
    const auto ds = SurvivalDataset::from_columns({1, 2, 3}, {1, 1, 1}, {1, 0, 1}, {1, 0, 1},
                                                  Eigen::MatrixXd(3, 0), {});
    CHECK(risk_indicator(ds, 2) == std::vector<int>{0, 1, 1});
    CHECK(risk_indicator(ds, 0.5) == std::vector<int>{1, 1, 1});
    CHECK(risk_indicator(ds, 4) == std::vector<int>{0, 0, 0});
    CHECK_THROWS_AS(risk_indicator(ds, 0.0), DomainError);
    // monotone nonincreasing in the query time
    std::vector<int> prev = risk_indicator(ds, 0.1);
    for (double q = 0.2; q < 4; q += 0.1) {
        const std::vector<int> cur = risk_indicator(ds, q);
        for (std::size_t i = 0; i < cur.size(); ++i) CHECK(cur[i] <= prev[i]);
        prev = cur;
    }
}

TEST_CASE("risk-set sums match a double loop with ties") {
    const std::vector<double> y{3, 1, 2, 2, 5, 1, 4};
    const std::vector<double> v{0.5, -1, 2, 3, -0.25, 7, 1};
    const RiskSets rs(y);
    const std::vector<double> c = rs.cumulative(v);
    for (std::size_t g = 0; g < rs.n_groups(); ++g) {
        double expect = 0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] >= rs.group_time(g)) expect += v[j];
        }
        CHECK(c[g] == doctest::Approx(expect).epsilon(1e-15));
    }
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(rs.group_time(rs.group_of(i)) == y[i]);
    CHECK(rs.n_groups() == 5);
}

TEST_CASE("CSV round trip is exact") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> nd;
    const std::size_t n = 40;
    std::vector<double> y(n);
    std::vector<int> delta(n), d(n), z(n);
    Eigen::MatrixXd x(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::exp(nd(gen));
        delta[i] = static_cast<int>(i % 4 != 0);
        d[i] = static_cast<int>(i % 2);
        z[i] = static_cast<int>((i / 3) % 2);
        x(static_cast<Eigen::Index>(i), 0) = nd(gen);
        x(static_cast<Eigen::Index>(i), 1) = 1e-300 * nd(gen);
    }
    const auto ds = SurvivalDataset::from_columns(y, delta, d, z, x, {"a", "b"});
    std::ostringstream out;
    write_dataset_csv(out, ds);
    const auto back = parse(out.str());
    CHECK(back.covariate_names() == ds.covariate_names());
    CHECK(std::equal(back.y().begin(), back.y().end(), ds.y().begin()));
    CHECK(back.x() == ds.x());
    std::ostringstream again;
    write_dataset_csv(again, back);
    CHECK(again.str() == out.str());
}

TEST_CASE("covariate selection and row selection") {
    const auto ds = parse("y,delta,d,z,a,b\n1,1,1,0,5,6\n2,0,0,1,7,8\n3,1,1,1,9,10\n");
    const std::vector<std::string> keep{"b"};
    const auto sel = ds.select_covariates(keep);
    CHECK(sel.covariate_names() == std::vector<std::string>{"(Intercept)", "b"});
    CHECK(sel.x()(2, 1) == 10.0);
    CHECK(ds.covariate_index("a") == 1);
    CHECK_THROWS_AS(ds.covariate_index("zzz"), SchemaError);
    const std::vector<std::size_t> rows{2, 0, 1, 1};
    const auto tr = ds.take_rows(rows);
    CHECK(tr.n() == 4);
    CHECK(tr.y()[0] == 3.0);
}
