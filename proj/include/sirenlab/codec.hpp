#pragma once

// Quality-parameterised DCT transform codec used as a rate-distortion proxy
// for SIREN encoding error. It never emits a bitstream; the rate is an
// estimate from static code lengths, which makes bits a monotone function
// of quality.
//
// Pipeline: RGB -> YCbCr (JPEG matrix, [0,255] scale), per-channel mean
// removal, edge-replicated padding to a multiple of 8, orthonormal 8x8
// DCT-II per block, uniform quantisation with step = table[k] * scale(q),
// dequantisation, inverse transform, and rounding of the output to 8 bits.
//
// Rate model, per block and channel:
//   DC: signed Exp-Golomb of the quantised level.
//   AC: 1-bit "empty" flag; otherwise a 6-bit end-of-block position, then in
//       zig-zag order 1 bit per zero and signed Exp-Golomb per non-zero level
//       up to the last non-zero coefficient.
//   Plus a fixed header (dimensions and the three channel means).
// Every term is non-increasing in the step size.

#include <filesystem>
#include <string>
#include <vector>

#include "sirenlab/imaging.hpp"

namespace sirenlab {

inline constexpr double kMinQuality = 1e-3;
inline constexpr double kHeaderBits = 64.0;
// Infinite PSNRs are replaced by this value in feature vectors.
inline constexpr double kPsnrCap = 80.0;
// Compression ratios (vs. 24-bit RGB) used for the three proxy features.
inline constexpr double kProxyRatios[3] = {7.0, 25.0, 100.0};

struct RdPoint {
    double bpp = 0.0;
    double psnr = 0.0;
    double quality = 0.0;
    double ratio = 0.0;  // 24 / bpp

    static RdPoint make(double bpp, double psnr, double quality) { return {bpp, psnr, quality, 24.0 / bpp}; }
};

struct CodecResult {
    ImageTensor reconstruction;
    double estimated_bits = 0.0;

    double bpp(const ImageTensor& source) const {
        return estimated_bits / static_cast<double>(source.pixel_count());
    }
};

// Quantisation scale multiplier; log-linear from 0.02 at quality 1 up to
// 0.02 * 10^3 at quality 0.
double quantizer_scale(double quality);

// quality in (0, 1]; throws ArgumentError otherwise.
CodecResult encode_decode(const ImageTensor& img, double quality);
RdPoint codec_point(const ImageTensor& img, double quality);

// Lowest rate the codec reaches (at kMinQuality).
double codec_floor_bpp(const ImageTensor& img);

// Bisection on quality until |bpp - target| <= 2% of target or 40 iterations.
// Throws RangeError when target is below the codec floor.
RdPoint rate_target(const ImageTensor& img, double target_bpp);

// Same as rate_target but clamps unreachable targets to the nearest end of
// the quality range instead of throwing. `rel_tol` replaces the 2% stop rule.
RdPoint rate_target_clamped(const ImageTensor& img, double target_bpp, double rel_tol = 0.02);

// Quality whose PSNR first reaches `target_psnr` (bisection), as an RdPoint.
// Returns the quality-1 point when the target exceeds the codec's ceiling.
RdPoint psnr_target(const ImageTensor& img, double target_psnr);

// Codec PSNR at compression ratios 7, 25 and 100, capped at kPsnrCap.
std::vector<double> proxy_features(const ImageTensor& img);

double cap_psnr(double psnr);

// Rows of an (image, ratio, psnr) table, so externally computed codec
// numbers (e.g. real JPEG2000) can replace the built-in codec.
struct RdRow {
    std::string image_id;
    double ratio = 0.0;
    double bpp = 0.0;
    double psnr = 0.0;
};

// CSV with header "image_id,ratio,bpp,psnr".
void write_rd_csv(const std::vector<RdRow>& rows, const std::filesystem::path& path);
std::vector<RdRow> read_rd_csv(const std::filesystem::path& path);

// Lookup over an imported table: PSNR at `ratio` for `image_id` by linear
// interpolation in log(ratio). Throws RangeError if the image is missing.
class RdTable {
public:
    explicit RdTable(std::vector<RdRow> rows);
    double psnr_at(const std::string& image_id, double ratio) const;
    bool contains(const std::string& image_id) const;

private:
    std::vector<RdRow> rows_;  // sorted by (image_id, ratio)
};

}  // namespace sirenlab
