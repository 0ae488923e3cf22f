#pragma once

#include <cmath>
#include <span>

namespace hazardiv {

/// Neumaier-compensated accumulator. Signed IV weights make plain summation
/// lose digits through cancellation.
class CompensatedSum {
public:
    CompensatedSum& operator+=(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
        return *this;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> v) {
    CompensatedSum s;
    for (double x : v) s += x;
    return s.value();
}

inline double compensated_mean(std::span<const double> v) {
    return v.empty() ? 0.0 : compensated_sum(v) / static_cast<double>(v.size());
}

inline double expit(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Standard normal quantile. Rational approximation followed by one Halley
/// step against erfc; absolute error well below 1e-12 on (1e-300, 1 - 1e-16).
double normal_quantile(double p);

/// Standard normal distribution function.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace hazardiv
