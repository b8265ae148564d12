#pragma once

// Gaussian-process regression with kernel
//   k(x, x') = s2 * exp(-|x - x'|^2 / (2 l^2)) + n2 * [x == x']
// on features divided by their training-set standard deviation. The prior
// mean is the training-target mean.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace sirenlab {

struct GpOptions {
    int starts = 8;           // multi-start coordinate search
    int max_iterations = 200;  // coordinate sweeps per start
    std::uint64_t seed = 0;
    std::size_t max_points = 5000;
    double max_jitter = 1e-6;  // largest diagonal jitter tried (relative to s2 + n2)
    // Fix the noise variance instead of optimising it.
    std::optional<double> fixed_noise_variance;
};

struct GpModel {
    double signal_variance = 1.0;  // s2
    double length_scale = 1.0;     // l, in scaled-feature units
    double noise_variance = 1e-2;  // n2
    double prior_mean = 0.0;
    double jitter = 0.0;  // extra diagonal added for the factorisation
    double log_marginal_likelihood = 0.0;

    Eigen::VectorXd feature_scale;  // per-dimension training std (0 -> 1)
    Eigen::MatrixXd X;              // scaled training features, n x d
    Eigen::VectorXd y;              // raw targets
    Eigen::MatrixXd L;              // lower Cholesky factor of K + (n2 + jitter) I
    Eigen::VectorXd alpha;          // (K + n2 I)^-1 (y - prior_mean)

    std::size_t dims() const { return static_cast<std::size_t>(feature_scale.size()); }
};

struct GpPrediction {
    double mean = 0.0;
    double variance = 0.0;  // includes the noise variance
};

// Fits hyperparameters by maximising the log marginal likelihood.
// Throws ArgumentError for bad shapes, SizeError above max_points and
// ConditioningError when the kernel matrix cannot be factorised.
GpModel gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpOptions& options = {});

// Builds a model with the given hyperparameters (no optimisation).
GpModel gp_condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double signal_variance, double length_scale,
                     double noise_variance, double max_jitter = 1e-6);

GpPrediction gp_predict(const GpModel& model, const Eigen::VectorXd& x);
std::vector<GpPrediction> gp_predict_batch(const GpModel& model, const Eigen::MatrixXd& X);

void save_model(const GpModel& m, const std::filesystem::path& path);
GpModel load_gp_model(const std::filesystem::path& path);

}  // namespace sirenlab
