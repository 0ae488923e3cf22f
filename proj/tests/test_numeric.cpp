#include <doctest.h>

#include <cmath>
#include <vector>

#include "hazardiv/errors.hpp"
#include "hazardiv/numeric.hpp"

using namespace hazardiv;

namespace {

// Quantile by bisection on the erfc-based distribution function.
double quantile_by_bisection(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("normal quantile matches a bisection oracle") {
    for (double p : {1e-12, 1e-6, 0.001, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.999}) {
        CHECK(normal_quantile(p) == doctest::Approx(quantile_by_bisection(p)).epsilon(1e-10));
    }
    CHECK(std::abs(normal_quantile(0.975) - 1.959964) < 5e-7);
    // upper tail: 1 - p carries only ~1e-7 relative precision here
    CHECK(std::abs(normal_quantile(1 - 1e-9) + normal_quantile(1e-9)) < 1e-6);
}

TEST_CASE("normal quantile edge cases") {
    CHECK(std::isinf(normal_quantile(0.0)));
    CHECK(normal_quantile(0.0) < 0);
    CHECK(std::isinf(normal_quantile(1.0)));
    CHECK_THROWS_AS(normal_quantile(-0.1), DomainError);
    CHECK_THROWS_AS(normal_quantile(1.5), DomainError);
}

TEST_CASE("compensated sum keeps cancelled digits") {
    std::vector<double> v{1e16, 1.0, -1e16, 1.0};
    CHECK(compensated_sum(v) == 2.0);
    CHECK(compensated_mean(v) == 0.5);
}

TEST_CASE("logistic helpers") {
    CHECK(expit(0.0) == 0.5);
    CHECK(expit(800.0) == 1.0);
    CHECK(expit(-800.0) == 0.0);
    CHECK(logit(expit(1.3)) == doctest::Approx(1.3).epsilon(1e-14));
    CHECK(log1pexp(1000.0) == doctest::Approx(1000.0));
    CHECK(log1pexp(-1000.0) >= 0.0);
}
