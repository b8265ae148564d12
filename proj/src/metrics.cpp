#include "sirenlab/metrics.hpp"

#include <cmath>
#include <string>

#include "sirenlab/errors.hpp"

namespace sirenlab {

namespace {

void check_pair(const std::vector<double>& pred, const std::vector<double>& actual, const char* what) {
    if (pred.size() != actual.size())
        throw ArgumentError(std::string(what) + ": length mismatch (" + std::to_string(pred.size()) + " vs " +
                            std::to_string(actual.size()) + ")");
    if (pred.empty()) throw ArgumentError(std::string(what) + ": empty input");
}

}  // namespace

double mean(const std::vector<double>& v) {
    if (v.empty()) throw ArgumentError("mean: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double population_variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) throw InsufficientDataError("sample_variance: need at least 2 values");
    return population_variance(v) * static_cast<double>(v.size()) / static_cast<double>(v.size() - 1);
}

double rmse(const std::vector<double>& pred, const std::vector<double>& actual) {
    check_pair(pred, actual, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - actual[i]) * (pred[i] - actual[i]);
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double explained_variance(const std::vector<double>& pred, const std::vector<double>& actual) {
    check_pair(pred, actual, "explained_variance");
    if (pred.size() < 2) throw InsufficientDataError("explained_variance: need at least 2 values");
    const double var_y = population_variance(actual);
    if (var_y == 0.0) throw UndefinedMetricError("explained_variance: actual values have zero variance");
    std::vector<double> resid(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) resid[i] = actual[i] - pred[i];
    return 1.0 - population_variance(resid) / var_y;
}

MetricReport metric_report(const std::vector<double>& pred, const std::vector<double>& actual) {
    return {rmse(pred, actual), explained_variance(pred, actual), pred.size()};
}

double irreducible_error(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw ArgumentError("irreducible_error: no pairs");
    double s = 0.0;
    for (const auto& [a, b] : pairs) s += (a - b) * (a - b);
    return std::sqrt(s / (2.0 * static_cast<double>(pairs.size())));
}

LinearFit ols(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ArgumentError("ols: length mismatch");
    if (x.size() < 2) throw InsufficientDataError("ols: need at least 2 points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw ArgumentError("ols: x values are all equal");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
    return f;
}

}  // namespace sirenlab
