#pragma once

// Controlled studies on trained SIRENs: seed variation, first-layer
// attribution and transfer, bootstrap depth selection, power-law fits, codec
// correlation, and the size ladder used by the confident architecture search.
//
// Every study trains through run_jobs, so it honours the worker count and,
// when a cache directory is given, reuses rows from earlier runs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sirenlab/feature_mlp.hpp"
#include "sirenlab/gp.hpp"
#include "sirenlab/harness.hpp"
#include "sirenlab/predictors.hpp"

namespace sirenlab {

struct ExperimentRunner {
    int workers = 1;
    // Manifests are cached as <cache_dir>/<tag>-<policy>-<job set hash>.jsonl.
    std::optional<std::filesystem::path> cache_dir;
    TrainOptions train;  // train.init is replaced by each study's policy
};

// Runs `jobs` under `policy`. Failed jobs throw Error with the job's message.
std::vector<TrainRecord> train_jobs(const ExperimentRunner& runner, const std::string& tag,
                                    const std::vector<Job>& jobs, const std::vector<ImageTensor>& images,
                                    const InitPolicy& policy = {});

// Seed of the k-th run derived from a base config.
std::uint64_t study_seed(std::uint64_t base, std::uint64_t k);

// --- Dataset assembly -----------------------------------------------------

// The images a manifest was trained on, recovered from source images: every
// source is centre-cropped to each record size and kept when its id occurs in
// `records`. Throws ArgumentError when some record's image is not found.
std::vector<ImageTensor> images_for_records(const std::vector<TrainRecord>& records,
                                            const std::vector<ImageTensor>& sources);

// Ok records with finite PSNR, paired with proxy_features of their image
// (computed once per image).
struct FeatureDataset {
    std::vector<TrainRecord> records;
    std::vector<std::vector<double>> image_features;

    std::vector<MlpRow> mlp_rows() const;
    Eigen::MatrixXd gp_design() const;  // rows of gp_features
    Eigen::VectorXd targets() const;
};
FeatureDataset feature_dataset(const std::vector<TrainRecord>& records, const std::vector<ImageTensor>& images);

// Predictor backed by a saved proxy, GP or MLP model file. Extrapolation
// models need a partial training run and are rejected with ArgumentError.
PsnrPredictor load_predictor(const std::filesystem::path& model_path);

// Proxy prediction: codec PSNR at the model's ratio plus its offset.
double proxy_predict(const ProxyModel& m, const ImageTensor& image);

// --- Seed variation -------------------------------------------------------

struct SeedVariation {
    SirenConfig config;  // seed field is the base seed
    std::vector<std::uint64_t> seeds;
    std::vector<double> psnrs;
    double std = 0.0;  // sample standard deviation
    double mean = 0.0;
};

// Trains `config` with `seeds` fresh seeds (>= 2).
SeedVariation seed_variation(const SirenConfig& config, const ImageTensor& image, int seeds,
                             const ExperimentRunner& runner = {}, const InitPolicy& policy = {});

// seed_variation at each width, other fields fixed.
std::vector<SeedVariation> seed_variation_sweep(const SirenConfig& config, const ImageTensor& image,
                                                const std::vector<int>& widths, int seeds,
                                                const ExperimentRunner& runner = {});

// Columns: width, depth, seed, max_psnr. Summary: width, depth, n, mean_psnr, std_psnr.
// Plot: std vs width.
void write_seed_variation(const std::vector<SeedVariation>& rows, const std::filesystem::path& out_dir);

// --- First-layer attribution ----------------------------------------------

struct Attribution {
    std::vector<double> psnrs_all;    // every layer from the run seed
    std::vector<double> psnrs_fixed;  // first layer shared, rest from the run seed
    double std_all = 0.0;
    double std_fixed_first = 0.0;
    double attribution = 0.0;  // 1 - var_fixed / var_all, clamped to [0, 1]
    // One-sided test of var_fixed < var_all: F = var_all / var_fixed with
    // (S-1, S-1) degrees of freedom, p = P(F' >= F).
    double f_statistic = 0.0;
    double p_value = 1.0;
};

// `base` is applied to both groups; the fixed group also sets
// first_layer_seed = shared_first_seed (default: derived from config.seed).
// Needs seeds >= 5. Zero variance in the random group throws
// UndefinedMetricError.
Attribution first_layer_attribution(const SirenConfig& config, const ImageTensor& image, int seeds,
                                    const ExperimentRunner& runner = {}, const InitPolicy& base = {},
                                    std::optional<std::uint64_t> shared_first_seed = std::nullopt);

// Attribution from two PSNR samples.
Attribution attribution_from_samples(std::vector<double> psnrs_all, std::vector<double> psnrs_fixed);

// Columns: group, index, max_psnr. Summary: n, std_all, std_fixed_first,
// attribution, f_statistic, p_value. Plot: PSNR per run index for both groups.
void write_attribution(const Attribution& a, const std::filesystem::path& out_dir);

// --- First-layer transfer -------------------------------------------------

struct PeTransferRow {
    std::size_t source = 0;  // image whose best first layer is reused
    std::size_t target = 0;
    std::uint64_t first_layer_seed = 0;
    double baseline_mean = 0.0;  // random-init mean on the target
    double transfer_mean = 0.0;  // mean with the selected first layer
    double gain() const { return transfer_mean - baseline_mean; }
};

struct PeTransfer {
    std::vector<PeTransferRow> rows;
    double delta_same = 0.0;   // mean gain over source == target
    double delta_cross = 0.0;  // mean gain over source != target
};

// For each image, trains `n_seeds` random inits and keeps the first layer of
// the best run. That layer is then retrained with `retrain_seeds` fresh
// remainders on every image and compared with the random-init mean of the
// target. Images must all have side config.image_size; needs >= 2 images.
PeTransfer pe_transfer(const SirenConfig& config, const std::vector<ImageTensor>& images, int n_seeds,
                       int retrain_seeds, const ExperimentRunner& runner = {});

// Columns: source, target, first_layer_seed, baseline_mean, transfer_mean, gain.
// Summary: delta_same, delta_cross. Plot: gain per source, same vs cross.
void write_pe_transfer(const PeTransfer& t, const std::filesystem::path& out_dir);

// --- Bootstrap depth selection --------------------------------------------

struct DepthInterval {
    int lo = 0;
    int hi = 0;
    std::map<int, double> frequency;  // depth -> share of resamples selecting it
    int resamples = 0;
};

// Each resample draws one PSNR per depth with replacement and records the
// argmax depth (ties toward the smaller depth). Returns the 2.5 and 97.5
// percentiles of the selected depths. Needs >= 2 PSNRs per depth and
// resamples >= 1000.
DepthInterval bootstrap_depth_selection(const std::map<int, std::vector<double>>& psnrs_by_depth, int resamples,
                                        std::uint64_t seed = 0);

// Trains `seeds` runs at each depth (width and the rest from config).
std::map<int, std::vector<double>> depth_sweep(const SirenConfig& config, const ImageTensor& image,
                                               const std::vector<int>& depths, int seeds,
                                               const ExperimentRunner& runner = {});

// Columns: depth, seed_index, max_psnr and depth, frequency. Summary: lo, hi,
// resamples. Plot: selection frequency vs depth.
void write_bootstrap(const std::map<int, std::vector<double>>& psnrs, const DepthInterval& d,
                     const std::filesystem::path& out_dir);

// --- Power law ------------------------------------------------------------

inline constexpr double kDbPerDoublingPerDim = 6.020599913279624;  // 20 log10 2

struct PowerLawFit {
    double slope_per_doubling = 0.0;  // dB per doubling of P
    double intercept = 0.0;           // PSNR at P = 1
    double r2 = 0.0;
    double implied_manifold_dim = 0.0;  // 20 log10(2) / slope

    double operator()(double params) const;
};

// Least squares PSNR ~ log2(P). Needs >= 3 distinct parameter counts
// (ArgumentError otherwise).
PowerLawFit power_law_fit(const std::vector<std::pair<double, double>>& params_psnr);
PowerLawFit power_law_fit(const std::vector<TrainRecord>& records);

struct PowerLawStudy {
    std::vector<TrainRecord> records;
    std::map<std::string, PowerLawFit> per_image;  // by image id
    PowerLawFit mean_fit;                          // on the per-width mean PSNR
};

// Trains config at each width on each image (sides must match).
PowerLawStudy power_law_study(const SirenConfig& config, const std::vector<ImageTensor>& images,
                              const std::vector<int>& widths, const ExperimentRunner& runner = {});

// Columns: image_id, width, depth, params, max_psnr and
// fit, slope_per_doubling, intercept, r2, implied_manifold_dim.
// Plot: PSNR vs parameter count (log axis), one series per image.
void write_power_law(const PowerLawStudy& s, const std::filesystem::path& out_dir);

// --- Codec correlation ----------------------------------------------------

struct CodecCorrelationRow {
    std::string record_id;
    std::string image_id;
    int width = 0;
    int depth = 0;
    int image_size = 0;
    double siren_bpp = 0.0;
    double siren_psnr = 0.0;
    double proxy_psnr = 0.0;      // codec PSNR at the group's ratio plus offset
    double equal_psnr_bpp = 0.0;  // codec rate reaching siren_psnr
};

struct CodecCorrelationGroup {
    int width = 0;
    int depth = 0;
    int image_size = 0;
    ProxyModel proxy;  // fitted within the group
};

struct CodecCorrelation {
    std::vector<CodecCorrelationGroup> groups;
    std::vector<CodecCorrelationRow> rows;
};

// Groups Ok records by architecture (width, depth, size) and fits the codec
// proxy within each group of >= 4 records. Needs >= 10 Ok records overall.
// `images` must contain every record's image. With `table`, codec PSNRs come
// from the imported table instead of the built-in codec.
CodecCorrelation codec_correlation_study(const std::vector<TrainRecord>& records,
                                         const std::vector<ImageTensor>& images, const RdTable* table = nullptr);

// Columns: record_id, image_id, width, depth, image_size, siren_bpp,
// siren_psnr, proxy_psnr, equal_psnr_bpp and width, depth, image_size, ratio,
// offset, rmse, explained_variance, n. Plots: proxy vs SIREN PSNR and
// equal-PSNR bpp vs SIREN bpp.
void write_codec_correlation(const CodecCorrelation& c, const std::filesystem::path& out_dir);

// --- Architecture ladder and confident search -----------------------------

struct LadderRung {
    SirenConfig config;  // template; seed unused
    double size_bits = 0.0;
    double mean_psnr = 0.0;
    std::size_t n_records = 0;
    double rmse = -1.0;  // calibrated prediction RMSE, negative until set
    bool anchor = false;
};

struct ArchLadder {
    std::vector<LadderRung> rungs;

    bool calibrated() const;
    // Sizes strictly increasing, and RMSEs positive when calibrated.
    void validate() const;
};

// Buckets Ok records into `buckets` log-uniform size buckets over their size
// range and keeps, per bucket, the architecture (width, depth, gamma, size)
// with the highest mean PSNR. Empty buckets are skipped and reported through
// `warnings`.
ArchLadder build_ladder(const std::vector<TrainRecord>& records, int buckets = 30,
                        std::vector<std::string>* warnings = nullptr);

// Indices of `anchors` rungs spread evenly over [0, n) including both ends.
std::vector<std::size_t> anchor_indices(std::size_t n, int anchors = 5);

// Fills rmse for non-anchor rungs by linear interpolation in size bits
// between neighbouring anchors.
void interpolate_rmse(ArchLadder& ladder);

struct AnchorCalibration {
    std::size_t rung = 0;
    std::vector<double> predicted;
    std::vector<double> actual;
    double rmse = 0.0;
};

// Trains each anchor rung on every calibration image (resized to the rung's
// size), sets the anchor RMSE to rmse(predicted, actual), and interpolates
// the rest. Needs >= 5 images.
ArchLadder calibrate_rmse(ArchLadder ladder, const std::vector<ImageTensor>& images, const PsnrPredictor& predictor,
                          const ExperimentRunner& runner = {}, int anchors = 5,
                          std::vector<AnchorCalibration>* details = nullptr);

void save_ladder(const ArchLadder& ladder, const std::filesystem::path& path);
ArchLadder load_ladder(const std::filesystem::path& path);

// Index of the first rung with predictions[i] - k * rmses[i] >= target.
// Throws InfeasibleError naming the rung with the highest lower bound.
std::size_t select_rung(const std::vector<double>& predictions, const std::vector<double>& rmses, double target,
                        double k = 2.0);

struct SearchResult {
    std::size_t rung = 0;
    SirenConfig config;
    double predicted = 0.0;
    double rmse = 0.0;
    double lower = 0.0;  // predicted - k * rmse
    double upper = 0.0;  // predicted + k * rmse
};

// Smallest calibrated rung whose predicted PSNR minus k calibrated RMSEs
// reaches `target_psnr`. The image is resized to each rung's size.
SearchResult confident_search(const ImageTensor& image, double target_psnr, const ArchLadder& ladder,
                              const PsnrPredictor& predictor, double k = 2.0);

}  // namespace sirenlab
