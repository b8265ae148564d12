#include "sirenlab/codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "sirenlab/csv.hpp"
#include "sirenlab/errors.hpp"

namespace sirenlab {

namespace {

constexpr int kBlock = 8;

// ITU T.81 Annex K tables, row-major.
constexpr std::array<double, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr std::array<double, 64> kChromaTable = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99, 24, 26, 56, 99, 99, 99,
    99, 99, 47, 66, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

constexpr std::array<int, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,  12, 19, 26, 33, 40, 48,
    41, 34, 27, 20, 13, 6,  7,  14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23,
    30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

using Block = std::array<double, 64>;

const std::array<double, 64>& dct_matrix() {
    static const std::array<double, 64> m = [] {
        std::array<double, 64> c{};
        for (int k = 0; k < kBlock; ++k)
            for (int n = 0; n < kBlock; ++n) {
                const double s = k == 0 ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
                c[k * kBlock + n] = s * std::cos(std::numbers::pi * (2 * n + 1) * k / (2.0 * kBlock));
            }
        return c;
    }();
    return m;
}

// out = C * in * C^T (forward) or C^T * in * C (inverse).
Block transform(const Block& in, bool inverse) {
    const auto& c = dct_matrix();
    Block tmp{}, out{};
    for (int i = 0; i < kBlock; ++i)
        for (int j = 0; j < kBlock; ++j) {
            double s = 0.0;
            for (int k = 0; k < kBlock; ++k)
                s += (inverse ? c[k * kBlock + i] : c[i * kBlock + k]) * in[k * kBlock + j];
            tmp[i * kBlock + j] = s;
        }
    for (int i = 0; i < kBlock; ++i)
        for (int j = 0; j < kBlock; ++j) {
            double s = 0.0;
            for (int k = 0; k < kBlock; ++k)
                s += tmp[i * kBlock + k] * (inverse ? c[k * kBlock + j] : c[j * kBlock + k]);
            out[i * kBlock + j] = s;
        }
    return out;
}

double exp_golomb_bits(long long level) {
    const unsigned long long mapped = level > 0 ? 2ULL * level - 1 : 2ULL * static_cast<unsigned long long>(-level);
    return 2.0 * std::floor(std::log2(static_cast<double>(mapped) + 1.0)) + 1.0;
}

// Estimated bits for one quantised block.
double block_bits(const std::array<long long, 64>& levels) {
    double bits = exp_golomb_bits(levels[0]);
    int last = 0;
    for (int z = 1; z < 64; ++z)
        if (levels[kZigzag[z]] != 0) last = z;
    bits += 1.0;  // empty flag
    if (last == 0) return bits;
    bits += 6.0;
    for (int z = 1; z <= last; ++z) {
        const long long v = levels[kZigzag[z]];
        bits += v == 0 ? 1.0 : exp_golomb_bits(v);
    }
    return bits;
}

std::uint8_t round_to_byte(double v255) {
    return static_cast<std::uint8_t>(std::clamp(std::round(v255), 0.0, 255.0));
}

}  // namespace

double quantizer_scale(double quality) { return 0.02 * std::pow(10.0, 3.0 * (1.0 - quality)); }

CodecResult encode_decode(const ImageTensor& img, double quality) {
    if (!(quality > 0.0 && quality <= 1.0)) throw ArgumentError("encode_decode: quality must be in (0, 1]");
    if (img.height < 1 || img.width < 1) throw ArgumentError("encode_decode: empty image");
    const int h = img.height, w = img.width;
    const int ph = (h + kBlock - 1) / kBlock * kBlock;
    const int pw = (w + kBlock - 1) / kBlock * kBlock;
    const double scale = quantizer_scale(quality);

    // YCbCr planes on the [0,255] scale, padded by edge replication.
    std::array<std::vector<double>, 3> planes;
    for (auto& p : planes) p.assign(static_cast<std::size_t>(ph) * pw, 0.0);
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) {
            const int sy = std::min(y, h - 1), sx = std::min(x, w - 1);
            const double r = 255.0 * img.at(sy, sx, 0), g = 255.0 * img.at(sy, sx, 1), b = 255.0 * img.at(sy, sx, 2);
            const std::size_t i = static_cast<std::size_t>(y) * pw + x;
            planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
            planes[1][i] = -0.168736 * r - 0.331264 * g + 0.5 * b;
            planes[2][i] = 0.5 * r - 0.418688 * g - 0.081312 * b;
        }

    CodecResult result;
    result.estimated_bits = kHeaderBits;
    for (int c = 0; c < 3; ++c) {
        auto& plane = planes[c];
        double mean = 0.0;
        for (double v : plane) mean += v;
        mean /= static_cast<double>(plane.size());
        const auto& table = c == 0 ? kLumaTable : kChromaTable;
        for (int by = 0; by < ph; by += kBlock)
            for (int bx = 0; bx < pw; bx += kBlock) {
                Block block{};
                for (int y = 0; y < kBlock; ++y)
                    for (int x = 0; x < kBlock; ++x)
                        block[y * kBlock + x] = plane[static_cast<std::size_t>(by + y) * pw + bx + x] - mean;
                Block coeffs = transform(block, false);
                std::array<long long, 64> levels{};
                for (int k = 0; k < 64; ++k) {
                    const double step = table[k] * scale;
                    levels[k] = std::llround(coeffs[k] / step);
                    coeffs[k] = static_cast<double>(levels[k]) * step;
                }
                result.estimated_bits += block_bits(levels);
                const Block recon = transform(coeffs, true);
                for (int y = 0; y < kBlock; ++y)
                    for (int x = 0; x < kBlock; ++x)
                        plane[static_cast<std::size_t>(by + y) * pw + bx + x] = recon[y * kBlock + x] + mean;
            }
    }

    result.reconstruction = ImageTensor(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * pw + x;
            const double yy = planes[0][i], cb = planes[1][i], cr = planes[2][i];
            const double rgb[3] = {yy + 1.402 * cr, yy - 0.344136 * cb - 0.714136 * cr, yy + 1.772 * cb};
            for (int c = 0; c < 3; ++c) result.reconstruction.at(y, x, c) = round_to_byte(rgb[c]) / 255.0;
        }
    result.reconstruction.rehash();
    return result;
}

RdPoint codec_point(const ImageTensor& img, double quality) {
    const CodecResult r = encode_decode(img, quality);
    return RdPoint::make(r.bpp(img), image_psnr(img, r.reconstruction), quality);
}

double codec_floor_bpp(const ImageTensor& img) { return codec_point(img, kMinQuality).bpp; }

namespace {

RdPoint bisect_rate(const ImageTensor& img, double target_bpp, RdPoint lo_pt, RdPoint hi_pt, double rel_tol) {
    double lo = lo_pt.quality, hi = hi_pt.quality;
    RdPoint best = std::abs(lo_pt.bpp - target_bpp) <= std::abs(hi_pt.bpp - target_bpp) ? lo_pt : hi_pt;
    for (int iter = 0; iter < 40; ++iter) {
        if (std::abs(best.bpp - target_bpp) <= rel_tol * target_bpp) break;
        const double mid = 0.5 * (lo + hi);
        const RdPoint p = codec_point(img, mid);
        if (std::abs(p.bpp - target_bpp) < std::abs(best.bpp - target_bpp)) best = p;
        if (p.bpp < target_bpp)
            lo = mid;
        else
            hi = mid;
    }
    return best;
}

}  // namespace

RdPoint rate_target(const ImageTensor& img, double target_bpp) {
    if (!(target_bpp > 0)) throw ArgumentError("rate_target: target bpp must be > 0");
    const RdPoint floor = codec_point(img, kMinQuality);
    if (target_bpp < floor.bpp * 0.98)
        throw RangeError("rate_target: " + format_double(target_bpp) + " bpp is below the codec floor of " +
                         format_double(floor.bpp) + " bpp");
    const RdPoint ceiling = codec_point(img, 1.0);
    if (target_bpp > ceiling.bpp * 1.02)
        throw RangeError("rate_target: " + format_double(target_bpp) + " bpp is above the codec ceiling of " +
                         format_double(ceiling.bpp) + " bpp");
    return bisect_rate(img, target_bpp, floor, ceiling, 0.02);
}

RdPoint rate_target_clamped(const ImageTensor& img, double target_bpp, double rel_tol) {
    if (!(target_bpp > 0)) throw ArgumentError("rate_target: target bpp must be > 0");
    const RdPoint floor = codec_point(img, kMinQuality);
    if (target_bpp <= floor.bpp) return floor;
    const RdPoint ceiling = codec_point(img, 1.0);
    if (target_bpp >= ceiling.bpp) return ceiling;
    return bisect_rate(img, target_bpp, floor, ceiling, rel_tol);
}

RdPoint psnr_target(const ImageTensor& img, double target_psnr) {
    RdPoint lo = codec_point(img, kMinQuality);
    if (lo.psnr >= target_psnr) return lo;
    RdPoint hi = codec_point(img, 1.0);
    if (hi.psnr < target_psnr) return hi;
    for (int iter = 0; iter < 40; ++iter) {
        const RdPoint mid = codec_point(img, 0.5 * (lo.quality + hi.quality));
        if (mid.psnr >= target_psnr)
            hi = mid;
        else
            lo = mid;
        if (hi.quality - lo.quality < 1e-6) break;
    }
    return hi;
}

double cap_psnr(double psnr) { return std::min(psnr, kPsnrCap); }

std::vector<double> proxy_features(const ImageTensor& img) {
    std::vector<double> features;
    for (double ratio : kProxyRatios) features.push_back(cap_psnr(rate_target_clamped(img, 24.0 / ratio).psnr));
    return features;
}

// --- RD tables ------------------------------------------------------------

void write_rd_csv(const std::vector<RdRow>& rows, const std::filesystem::path& path) {
    CsvWriter out(path, {"image_id", "ratio", "bpp", "psnr"});
    for (const auto& r : rows) {
        out.field(r.image_id).field(r.ratio).field(r.bpp).field(r.psnr);
        out.end_row();
    }
}

std::vector<RdRow> read_rd_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const auto id = t.column("image_id"), ratio = t.column("ratio"), bpp = t.column("bpp"), psnr = t.column("psnr");
    std::vector<RdRow> rows;
    for (const auto& r : t.rows)
        rows.push_back({r[id], parse_double(r[ratio]), parse_double(r[bpp]), parse_double(r[psnr])});
    return rows;
}

RdTable::RdTable(std::vector<RdRow> rows) : rows_(std::move(rows)) {
    std::sort(rows_.begin(), rows_.end(), [](const RdRow& a, const RdRow& b) {
        return a.image_id != b.image_id ? a.image_id < b.image_id : a.ratio < b.ratio;
    });
}

bool RdTable::contains(const std::string& image_id) const {
    return std::binary_search(rows_.begin(), rows_.end(), RdRow{image_id, 0, 0, 0},
                              [](const RdRow& a, const RdRow& b) { return a.image_id < b.image_id; });
}

double RdTable::psnr_at(const std::string& image_id, double ratio) const {
    const auto cmp = [](const RdRow& a, const RdRow& b) { return a.image_id < b.image_id; };
    const auto [first, last] = std::equal_range(rows_.begin(), rows_.end(), RdRow{image_id, 0, 0, 0}, cmp);
    if (first == last) throw RangeError("RD table has no rows for image '" + image_id + "'");
    if (ratio <= first->ratio) return first->psnr;
    if (ratio >= std::prev(last)->ratio) return std::prev(last)->psnr;
    auto hi = std::upper_bound(first, last, ratio, [](double r, const RdRow& row) { return r < row.ratio; });
    auto lo = std::prev(hi);
    const double t = (std::log(ratio) - std::log(lo->ratio)) / (std::log(hi->ratio) - std::log(lo->ratio));
    return lo->psnr + t * (hi->psnr - lo->psnr);
}

}  // namespace sirenlab
