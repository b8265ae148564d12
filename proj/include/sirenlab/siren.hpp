#pragma once

// SIREN image encoder:
//
//   Phi(x) = W_L h_{L-1}(x) + b_L
//   h_l(x) = sin(W_l h_{l-1}(x) + b_l),  l = 1..L-1
//   h_0(x) = omega0 * x
//
// `depth` counts weight matrices (L). Coordinates and colours are both in
// [-1,1]; PSNR is reported on the [0,1] pixel scale.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sirenlab/imaging.hpp"

namespace sirenlab {

struct SirenConfig {
    int width = 28;
    int depth = 10;
    double omega0 = 30.0;
    double gamma = 30.0 / 512.0;
    int image_size = 512;
    std::uint64_t seed = 0;
    int steps = 20000;
    double learning_rate = 1e-3;

    // Builds a config with omega0 = gamma * image_size.
    static SirenConfig make(int width, int depth, double gamma, int image_size, std::uint64_t seed,
                            int steps = 20000, double learning_rate = 1e-3);

    void validate() const;  // throws ArgumentError
    bool operator==(const SirenConfig&) const = default;
};

struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;    // out
};

struct SirenWeights {
    std::vector<Layer> layers;

    int depth() const { return static_cast<int>(layers.size()); }
    int width() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.rows()); }
    std::size_t param_count() const;

    // Checks the 2 -> w -> ... -> w -> 3 chain; throws StructuralError.
    void validate_shapes() const;
    bool all_finite() const;

    // Flat parameter vector: per layer, W column-major then b.
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);

    static SirenWeights zeros(int width, int depth);
    bool operator==(const SirenWeights& other) const;
};

std::size_t param_count(int width, int depth);

// Bits per pixel of a SIREN stored at 16-bit precision.
double siren_bpp(int width, int depth, int image_size);

struct InitPolicy {
    enum class FirstLayer {
        UniformScaled,  // U(-1,1) / sqrt(fan_in)
        Classic,        // U(-1/fan_in, 1/fan_in)
    };
    FirstLayer first_layer = FirstLayer::UniformScaled;
    // Zero every layer after the first (weights and biases).
    bool zero_rest = false;
    // Draw the first layer from this seed instead of the config seed.
    std::optional<std::uint64_t> first_layer_seed;
    // Draw every later layer from this seed instead of the config seed.
    std::optional<std::uint64_t> rest_seed;
};

// Layer l draws from its own stream derive_seed(seed, l), so the first layer
// of one network can be reproduced inside another.
SirenWeights init_siren(const SirenConfig& config, const InitPolicy& policy = {});

// coords: N x 2, returns N x 3.
Eigen::MatrixXd forward(const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords);

struct LossAndGrad {
    double mse = 0.0;
    SirenWeights grads;
};

// Mean over all N*3 entries of the squared error, with exact gradients.
LossAndGrad loss_and_grad(const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords,
                          const Eigen::MatrixXd& targets);

// Forward-only MSE.
double mse_loss(const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords,
                const Eigen::MatrixXd& targets);

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    SirenWeights m;
    SirenWeights v;
    std::int64_t step = 0;

    static AdamState for_weights(const SirenWeights& w);
};

// In-place update of `values` from `grads`; shared by every Adam user.
void adam_update(double* values, const double* grads, double* m, double* v, std::size_t n, double lr,
                 std::int64_t step, const AdamOptions& opt);

void adam_step(SirenWeights& weights, const SirenWeights& grads, AdamState& state, double learning_rate,
               const AdamOptions& opt = {});

// PSNR (dB) from an MSE measured on [-1,1] targets: -10 log10(mse / 4).
// Returns +inf for mse == 0; negative mse throws ArgumentError.
double psnr_from_mse(double mse);
double mse_from_psnr(double psnr);

struct CurvePoint {
    int step = 0;
    double psnr = 0.0;
    bool operator==(const CurvePoint&) const = default;
};

enum class RunStatus { Ok, Divergent, Failed };
std::string to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);

struct TrainRecord {
    std::string id;
    SirenConfig config;
    std::string image_id;
    double max_psnr = 0.0;
    int argmax_step = 0;
    std::vector<CurvePoint> loss_curve;
    std::string best_weights_ref;
    double wallclock_seconds = 0.0;
    RunStatus status = RunStatus::Ok;
    std::string message;

    // PSNR of the curve at `step` (exact match required).
    std::optional<double> psnr_at(int step) const;
    // Best PSNR over curve points with step <= `step`.
    std::optional<double> max_psnr_until(int step) const;

    // Equality ignoring wallclock_seconds.
    bool same_result(const TrainRecord& other) const;
};

struct CurvePolicy {
    int dense_until = 100;  // record every step in [0, dense_until]
    int stride = 10;        // then every `stride` steps, plus the final step
    bool records(int step, int total) const {
        return step <= dense_until || step % stride == 0 || step == total;
    }
};

struct TrainOptions {
    InitPolicy init;
    CurvePolicy curve;
    std::optional<SirenWeights> initial_weights;  // overrides init when set
    std::vector<int> snapshot_steps;               // weights captured after these many updates
    AdamOptions adam;
};

struct TrainResult {
    TrainRecord record;
    SirenWeights best_weights;
    SirenWeights final_weights;
    std::map<int, SirenWeights> snapshots;
};

// Full-batch Adam on all pixels. A non-finite loss stops training and marks
// the record Divergent, keeping the curve and best weights seen so far.
TrainResult train(const SirenConfig& config, const ImageTensor& image, const TrainOptions& options = {});

// PSNR of the network's reconstruction against `image`.
double evaluate_psnr(const SirenWeights& weights, double omega0, const ImageTensor& image);

// --- 16-bit storage -------------------------------------------------------

struct QuantizedWeights {
    std::uint32_t version = 1;
    std::uint32_t depth = 0;
    std::uint32_t width = 0;
    std::vector<std::uint16_t> values;  // per layer, row-major W then b
    std::size_t clamped = 0;            // entries saturated to +-65504
};

QuantizedWeights quantize_weights(const SirenWeights& weights);
SirenWeights dequantize(const QuantizedWeights& q);

// Blob layout (little-endian): "SIRN", u32 version, u32 depth, u32 width,
// then the half-precision values in QuantizedWeights order.
std::vector<std::uint8_t> serialize_blob(const QuantizedWeights& q);
QuantizedWeights parse_blob(const std::vector<std::uint8_t>& bytes);
void write_blob(const QuantizedWeights& q, const std::filesystem::path& path);
QuantizedWeights read_blob(const std::filesystem::path& path);

}  // namespace sirenlab
