#pragma once

// PSNR regression from SIREN hyperparameters plus per-image features.
// Hyperparameters go through the sinusoidal positional encoding
//   gamma(p) = (sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^10 pi p), cos(2^10 pi p))
//   Gamma(w, d, s, omega0) = gamma(w') ++ gamma(d') ++ gamma(s') ++ gamma(omega0')
// where w' and omega0' are log-scaled and all four are min-max normalised to
// [0,1] over the sampling ranges. That is 4 * 22 = 88 dimensions. The image
// features (codec proxy PSNRs) are appended after standardisation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sirenlab/harness.hpp"
#include "sirenlab/metrics.hpp"
#include "sirenlab/siren.hpp"

namespace sirenlab {

inline constexpr int kPeFrequencies = 11;
inline constexpr int kPeDims = 4 * 2 * kPeFrequencies;  // 88

// Per-scalar encoding of p (22 values).
std::vector<double> encode_scalar(double p);

// Normalisation box for the encoding, derived from a SamplingSpec.
struct PeRanges {
    double log_width_lo = 0.0, log_width_hi = 0.0;
    double depth_lo = 0.0, depth_hi = 0.0;
    double size_lo = 0.0, size_hi = 0.0;
    double log_omega_lo = 0.0, log_omega_hi = 0.0;

    // Width spans [2, width at (depth_min, bpp_max, size_max)], omega0 spans
    // [gamma_min * size_min, gamma_max * size_max].
    static PeRanges from_spec(const SamplingSpec& spec);
};

// 88-dim encoding of (width, depth, size, omega0). A value outside the box
// (beyond 1e-9 relative slack) throws RangeError. A degenerate range maps to 0.5.
std::vector<double> positional_encode(const SirenConfig& c, const PeRanges& ranges);

struct MlpRow {
    SirenConfig config;
    std::vector<double> image_features;
    double target = 0.0;  // max PSNR, dB
};

struct MlpOptions {
    int hidden_layers = 4;
    int hidden_units = 128;
    int epochs = 300;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    double validation_fraction = 0.1;  // the rest is the test split
    std::size_t min_rows = 100;
};

struct FeatureMlp {
    PeRanges ranges;
    int image_feature_count = 0;
    Eigen::VectorXd image_mean, image_scale;  // standardisation of image features
    double target_mean = 0.0, target_scale = 1.0;
    // Input columns replaced by a constant (ablation), with their values.
    std::vector<int> imputed_columns;
    std::vector<double> imputed_values;
    std::vector<Layer> layers;  // ReLU between layers, linear output of size 1

    int best_epoch = 0;
    MetricReport validation;
    MetricReport test;  // held-out split; n == 0 when the split is empty

    int input_dims() const { return kPeDims + image_feature_count; }
};

// Full input vector (encoding ++ standardised image features), with
// imputation applied.
Eigen::VectorXd mlp_input(const FeatureMlp& model, const SirenConfig& c, const std::vector<double>& image_features);

// Trains on a shuffled 80/10/10 split with Adam, keeping the weights of the
// epoch with the lowest validation loss. Fewer than min_rows rows throws
// InsufficientDataError; a non-finite loss throws NumericError.
// `impute_columns` are replaced by their training-split mean.
FeatureMlp mlp_fit(const std::vector<MlpRow>& rows, const PeRanges& ranges, const MlpOptions& options = {},
                   const std::vector<int>& impute_columns = {});

double mlp_predict(const FeatureMlp& model, const SirenConfig& c, const std::vector<double>& image_features);
// Computes proxy_features(image) and predicts.
double mlp_predict(const FeatureMlp& model, const SirenConfig& c, const ImageTensor& image);

struct FeatureGroup {
    std::string name;
    std::vector<int> columns;  // indices into the input vector
};

// Groups of the standard input: width, depth, size, omega0 (22 columns
// each) and image (the appended image features).
std::vector<FeatureGroup> standard_feature_groups(int image_feature_count);

struct AblationRow {
    std::string removed;  // "none" for the baseline
    MetricReport report;  // test split
};

// Retrains once per group with that group constant-imputed, plus the
// baseline. Rows sorted by test RMSE, ascending.
std::vector<AblationRow> feature_ablation(const std::vector<MlpRow>& rows, const PeRanges& ranges,
                                          const std::vector<FeatureGroup>& groups, const MlpOptions& options = {});

void save_model(const FeatureMlp& m, const std::filesystem::path& path);
FeatureMlp load_mlp_model(const std::filesystem::path& path);

}  // namespace sirenlab
