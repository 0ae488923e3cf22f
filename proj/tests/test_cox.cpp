#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "hazardiv/cox.hpp"
#include "hazardiv/errors.hpp"
#include "hazardiv/simgen.hpp"

using namespace hazardiv;

namespace {

// Breslow partial log-likelihood of a single covariate, by double loop.
double loglik_1d(const std::vector<double>& y, const std::vector<int>& delta,
                 const std::vector<double>& x, double b, const std::vector<double>& w = {}) {
    double ll = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!delta[i]) continue;
        double s = 0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] >= y[i]) s += (w.empty() ? 1.0 : w[j]) * std::exp(b * x[j]);
        }
        ll += (w.empty() ? 1.0 : w[i]) * (b * x[i] - std::log(s));
    }
    return ll;
}

double golden_max(const std::function<double(double)>& f, double lo, double hi) {
    const double r = (std::sqrt(5.0) - 1) / 2;
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    while (b - a > 1e-11) {
        if (f(c) > f(d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    return 0.5 * (a + b);
}

Eigen::MatrixXd column(const std::vector<double>& x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

SurvivalDataset scenario_data(std::size_t n, std::uint64_t seed, double psi) {
    RandomStream rng(seed, 0);
    return to_dataset(simulate_units(preset_scenario('A', 0.0, psi, 1.0, n), rng));
}

}  // namespace

TEST_CASE("symmetric data give a zero coefficient") {
    const std::vector<double> y{1, 1, 2, 2};
    const std::vector<int> delta{1, 1, 1, 1};
    const std::vector<double> x{1, 0, 1, 0};
    const CoxFit f = fit_cox(CoxProblem(column(x), y, delta), {"d"});
    CHECK(f.converged);
    CHECK(std::abs(f.beta(0)) < 1e-10);
}

TEST_CASE("six-row fit matches a golden-section oracle") {
    const std::vector<double> y{1, 2, 2, 3, 4, 5};
    const std::vector<int> delta{1, 1, 0, 1, 1, 0};
    const std::vector<double> x{1, 0, 1, 1, 0, 0};
    const CoxFit f = fit_cox(CoxProblem(column(x), y, delta), {"d"});
    const double oracle = golden_max([&](double b) { return loglik_1d(y, delta, x, b); }, -10, 10);
    CHECK(std::abs(f.beta(0) - oracle) < 1e-6);
    CHECK(f.loglik == doctest::Approx(loglik_1d(y, delta, x, f.beta(0))).epsilon(1e-10));
    // model-based SE from the curvature of the oracle likelihood
    const double h = 1e-4;
    const double curv = -(loglik_1d(y, delta, x, oracle + h) - 2 * loglik_1d(y, delta, x, oracle) +
                          loglik_1d(y, delta, x, oracle - h)) /
                        (h * h);
    CHECK(f.se(0) == doctest::Approx(1 / std::sqrt(curv)).epsilon(1e-4));
}

TEST_CASE("score and information match finite differences") {
    const auto ds = scenario_data(300, 2, 0.5);
    Eigen::MatrixXd design(ds.n(), 3);
    design.col(0) = Eigen::Map<const Eigen::VectorXi>(ds.d().data(), ds.n()).cast<double>();
    design.rightCols(2) = ds.x().rightCols(2);
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    std::vector<double> w(ds.n());
    for (double& v : w) v = u(gen);
    for (const auto& weights : {std::vector<double>{}, w}) {
        const CoxProblem p(design, ds.y(), ds.delta(), weights);
        const Eigen::Vector3d b(0.3, -0.2, 0.1);
        Eigen::Vector3d g;
        Eigen::Matrix3d hs;
        for (int k = 0; k < 3; ++k) {
            Eigen::Vector3d a = b, c = b;
            a(k) += 1e-5;
            c(k) -= 1e-5;
            g(k) = (p.loglik(a) - p.loglik(c)) / 2e-5;
            hs.col(k) = -(p.score(a) - p.score(c)) / 2e-5;
        }
        CHECK((p.score(b) - g).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, g.cwiseAbs().maxCoeff()));
        CHECK((p.information(b) - hs).cwiseAbs().maxCoeff() < 1e-5 * hs.cwiseAbs().maxCoeff());
        Eigen::VectorXd wv = weights.empty() ? Eigen::VectorXd::Ones(ds.n())
                                             : Eigen::Map<const Eigen::VectorXd>(w.data(), ds.n()).eval();
        const Eigen::VectorXd total = p.score_residuals(b).transpose() * wv;
        CHECK((total - p.score(b)).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("weighted one-covariate fit matches a grid and bisection oracle") {
    const auto ds = scenario_data(200, 6, 0.5);
    std::vector<double> y(ds.y().begin(), ds.y().end());
    std::vector<int> delta(ds.delta().begin(), ds.delta().end());
    std::vector<double> x(ds.n()), w(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        x[i] = ds.d()[i];
        w[i] = 0.5 + std::abs(ds.x()(static_cast<Eigen::Index>(i), 2));
    }
    // oracle: score by central difference of the double-loop likelihood, bisected
    auto score = [&](double b) {
        return (loglik_1d(y, delta, x, b + 1e-6, w) - loglik_1d(y, delta, x, b - 1e-6, w)) / 2e-6;
    };
    double lo = -5, hi = 5;
    REQUIRE(score(lo) > 0);
    REQUIRE(score(hi) < 0);
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (score(mid) > 0 ? lo : hi) = mid;
    }
    const CoxFit f = fit_cox(CoxProblem(column(x), y, delta, w), {"d"});
    CHECK(std::abs(f.beta(0) - 0.5 * (lo + hi)) < 1e-6);
}

TEST_CASE("invariances of the fit") {
    const auto ds = scenario_data(400, 10, 0.5);
    const CoxTerms terms{true, {"x2", "x3"}};
    const CoxFit base = fit_cox(ds, terms);
    REQUIRE(base.converged);
    CHECK(base.names == std::vector<std::string>{"d", "x2", "x3"});
    CHECK(!base.robust);

    // shifting a covariate leaves every coefficient unchanged
    Eigen::MatrixXd shifted = ds.x().rightCols(2);
    shifted.col(0).array() += 100.0;
    const auto ds2 = SurvivalDataset::from_columns({ds.y().begin(), ds.y().end()},
                                                   {ds.delta().begin(), ds.delta().end()},
                                                   {ds.d().begin(), ds.d().end()},
                                                   {ds.z().begin(), ds.z().end()}, shifted,
                                                   {"x2", "x3"});
    CHECK((fit_cox(ds2, terms).beta - base.beta).cwiseAbs().maxCoeff() < 1e-8);

    // constant weights: same coefficients; unit weights switch to the robust SE
    const CoxFit c = fit_cox(ds, terms, std::vector<double>(ds.n(), 3.0));
    CHECK((c.beta - base.beta).cwiseAbs().maxCoeff() < 1e-8);
    const CoxFit one = fit_cox(ds, terms, std::vector<double>(ds.n(), 1.0));
    CHECK((one.beta - base.beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(one.robust);
    CHECK((c.se - one.se).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("degenerate Cox inputs") {
    const std::vector<double> y{1, 2, 3, 4};
    const std::vector<int> none{0, 0, 0, 0};
    const std::vector<int> all{1, 1, 1, 1};
    CHECK_THROWS_AS(CoxProblem(column({1, 0, 1, 0}), y, none), EmptyEventsError);
    CHECK_THROWS_AS(fit_cox(CoxProblem(column({1, 1, 1, 1}), y, all), {"c"}), FlatLikelihoodError);
    // treated units always fail first: monotone likelihood
    CHECK_THROWS_AS(fit_cox(CoxProblem(column({1, 1, 0, 0}), y, all), {"d"}), SeparationError);
    CHECK_THROWS_AS(CoxProblem(column({1, 0, 1, 0}), y, all, {1, -1, 1, 1}), InputError);
}

TEST_CASE("stabilised weights and the marginal structural fit") {
    const auto ds = scenario_data(1000, 12, 0.5);
    const std::vector<std::string> conf{"x2"};
    const std::vector<double> w = stabilized_ipw_weights(ds, conf);
    double mean = 0;
    for (double v : w) {
        REQUIRE(v > 0);
        mean += v;
    }
    CHECK(mean / static_cast<double>(w.size()) == doctest::Approx(1.0).epsilon(0.05));
    const CoxFit f = fit_msm_cox_ipw(ds, conf);
    CHECK(f.robust);
    CHECK(f.names == std::vector<std::string>{"d"});
    REQUIRE(f.weights_used.has_value());
    CHECK(f.weights_used->size() == ds.n());
}

TEST_CASE("with treatment independent of confounders the MSM recovers the log hazard ratio") {
    // exponential times, treatment randomised: hazard 2 e^{0.7 D}
    RandomStream rng(77, 0);
    const std::size_t n = 5000;
    std::vector<double> y(n);
    std::vector<int> delta(n, 1), d(n), z(n);
    Eigen::MatrixXd x(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = rng.bernoulli(0.5);
        z[i] = rng.bernoulli(0.5);
        x(static_cast<Eigen::Index>(i), 0) = rng.uniform();
        y[i] = rng.exponential(2.0 * std::exp(0.7 * d[i]));
    }
    const auto ds = SurvivalDataset::from_columns(y, delta, d, z, x, {"x1"});
    const std::vector<std::string> conf{"x1"};
    const CoxFit f = fit_msm_cox_ipw(ds, conf);
    CHECK(std::abs(f.beta(0) - 0.7) < 4 * f.se(0));
    CHECK(std::abs(f.beta(0) - fit_cox(ds, CoxTerms{}).beta(0)) < 0.02);
}
