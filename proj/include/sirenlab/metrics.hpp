#pragma once

// Prediction-quality metrics and small statistics helpers.

#include <cstddef>
#include <utility>
#include <vector>

namespace sirenlab {

struct MetricReport {
    double rmse = 0.0;                // dB
    double explained_variance = 0.0;  // <= 1
    std::size_t n = 0;
};

double mean(const std::vector<double>& v);
// Divides by n.
double population_variance(const std::vector<double>& v);
// Divides by n - 1; needs n >= 2.
double sample_variance(const std::vector<double>& v);

// Throws ArgumentError on length mismatch or empty input.
double rmse(const std::vector<double>& pred, const std::vector<double>& actual);

// EV = 1 - Var[Y - Yhat] / Var[Y] with population variances. Needs n >= 2;
// Var[Y] == 0 throws UndefinedMetricError.
double explained_variance(const std::vector<double>& pred, const std::vector<double>& actual);

MetricReport metric_report(const std::vector<double>& pred, const std::vector<double>& actual);

// Seed-noise floor from pairs of runs that differ only in seed:
// sqrt( sum (y1 - y2)^2 / (2N) ). Throws ArgumentError on empty input.
double irreducible_error(const std::vector<std::pair<double, double>>& pairs);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;

    double operator()(double x) const { return intercept + slope * x; }
};

// Least squares y ~ a + b x. Throws InsufficientDataError for n < 2 and
// ArgumentError when x is constant.
LinearFit ols(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sirenlab
