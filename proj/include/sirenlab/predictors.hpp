#pragma once

// Encoding-error predictors that do not need a learned model beyond a line:
// step extrapolation and the rate-matched codec proxy. Also the common
// predictor interface used by the architecture search.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sirenlab/codec.hpp"
#include "sirenlab/metrics.hpp"
#include "sirenlab/siren.hpp"

namespace sirenlab {

// Predicted max PSNR (dB) of a SIREN with `config` trained on `image`.
using PsnrPredictor = std::function<double(const SirenConfig& config, const ImageTensor& image)>;

// --- Step extrapolation ---------------------------------------------------

struct ExtrapolationModel {
    int m = 0;  // observed step
    int n = 0;  // predicted step
    LinearFit fit;
    MetricReport report;  // in-sample

    double predict(double psnr_at_m) const { return fit(psnr_at_m); }
};

// Best PSNR reached up to `step` (the running max of the curve, matching the
// max-PSNR convention). Throws ArgumentError if the curve ends before `step`.
double best_psnr_until(const TrainRecord& r, int step);

// OLS of best-PSNR@n on best-PSNR@m over the Ok records. Fewer than 3 usable
// records throws InsufficientDataError.
ExtrapolationModel extrapolate_from_step(const std::vector<TrainRecord>& records, int m, int n);

// --- Codec proxy ----------------------------------------------------------

// Codec PSNR for image index `i` at compression ratio `ratio` (24/bpp).
using CodecPsnrFn = std::function<double(std::size_t i, double ratio)>;

// Built-in codec, rate-matched with 0.2% tolerance and clamped to the
// reachable range, PSNR capped at kPsnrCap.
CodecPsnrFn builtin_codec_psnr(const std::vector<ImageTensor>& images);
// Imported table lookup (see RdTable); images addressed by id.
CodecPsnrFn table_codec_psnr(const RdTable& table, const std::vector<std::string>& image_ids);

struct ProxyModel {
    double ratio = 0.0;
    // Mean of (SIREN PSNR - codec PSNR) on the fitting set; added to the
    // codec PSNR when predicting. It does not affect EV.
    double offset = 0.0;
    MetricReport report;  // in-sample, offset applied

    double predict(double codec_psnr) const { return codec_psnr + offset; }
};

struct ProxySearch {
    double log_ratio_lo = 0.6931471805599453;  // log 2
    double log_ratio_hi = 5.298317366548036;   // log 200
    double tolerance = 1e-4;                   // width of the final log-ratio bracket
};

// Golden-section search over log ratio maximising the EV between codec PSNR
// and SIREN PSNR (ties resolved toward the smaller ratio). Needs >= 4 images.
ProxyModel fit_codec_proxy(std::size_t n_images, const std::vector<double>& siren_psnrs, const CodecPsnrFn& codec,
                           const ProxySearch& search = {});

// --- Feature recipes ------------------------------------------------------

// Hyperparameter features for the GP: log width, depth, log omega0, size.
std::vector<double> hyper_features(const SirenConfig& c);
// proxy_features(image) followed by hyper_features(config).
std::vector<double> gp_features(const SirenConfig& c, const std::vector<double>& proxy);

// --- Model files ----------------------------------------------------------

// Self-describing binary: "SLPM", u32 version, u32 kind, payload.
enum class ModelKind : std::uint32_t { Extrapolation = 1, Proxy = 2, Gp = 3, Mlp = 4 };
std::string to_string(ModelKind k);

// Reads the header of a model file.
ModelKind peek_model_kind(const std::filesystem::path& path);

void save_model(const ExtrapolationModel& m, const std::filesystem::path& path);
void save_model(const ProxyModel& m, const std::filesystem::path& path);
ExtrapolationModel load_extrapolation_model(const std::filesystem::path& path);
ProxyModel load_proxy_model(const std::filesystem::path& path);

}  // namespace sirenlab
