#include "sirenlab/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <png.h>

#include "sirenlab/errors.hpp"
#include "sirenlab/rng.hpp"

namespace sirenlab {

namespace fs = std::filesystem;

ImageTensor::ImageTensor(int h, int w)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0) {}

void ImageTensor::rehash() { id = content_hash(*this); }

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

ImageTensor from_bytes(const std::uint8_t* data, int height, int width) {
    ImageTensor img(height, width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = data[i] / 255.0;
    img.rehash();
    return img;
}

ImageTensor load_png(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    return from_bytes(buffer.data(), static_cast<int>(image.height), static_cast<int>(image.width));
}

// Reads the next whitespace-delimited PNM header token, skipping comments.
bool next_token(std::istream& in, std::string& token) {
    token.clear();
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!token.empty()) return true;
            continue;
        }
        token.push_back(static_cast<char>(ch));
    }
    return !token.empty();
}

ImageTensor load_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const auto fail = [&](const std::string& why) {
        return IoError("cannot decode PPM '" + path.string() + "': " + why);
    };
    std::string magic, tok;
    if (!next_token(in, magic) || (magic != "P6" && magic != "P3")) throw fail("bad magic");
    int dims[3];
    for (int& d : dims) {
        if (!next_token(in, tok)) throw fail("truncated header");
        try {
            d = std::stoi(tok);
        } catch (const std::exception&) {
            throw fail("bad header field '" + tok + "'");
        }
    }
    const int width = dims[0], height = dims[1], maxval = dims[2];
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) throw fail("bad dimensions");

    ImageTensor img(height, width);
    const std::size_t count = img.pixels.size();
    if (magic == "P6") {
        const int bytes_per = maxval < 256 ? 1 : 2;
        std::vector<unsigned char> raw(count * bytes_per);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw fail("truncated pixel data");
        for (std::size_t i = 0; i < count; ++i) {
            const int v = bytes_per == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
            img.pixels[i] = static_cast<double>(v) / maxval;
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            if (!next_token(in, tok)) throw fail("truncated pixel data");
            img.pixels[i] = std::stod(tok) / maxval;
        }
    }
    img.rehash();
    return img;
}

bool has_extension(const fs::path& p, std::initializer_list<const char*> exts) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::any_of(exts.begin(), exts.end(), [&](const char* e) { return ext == e; });
}

// Row weights for an area-weighted box downsample from `src` to `dst` samples.
Eigen::MatrixXd box_weights(int src, int dst) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(dst, src);
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        const double lo = i * scale, hi = (i + 1) * scale;
        for (int j = static_cast<int>(std::floor(lo)); j < src && j < hi; ++j) {
            const double overlap = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
            if (overlap > 0) w(i, j) = overlap / scale;
        }
    }
    return w;
}

// Bilinear interpolation weights with pixel-centre alignment and edge clamping.
Eigen::MatrixXd bilinear_weights(int src, int dst) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(dst, src);
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        const double pos = std::clamp((i + 0.5) * scale - 0.5, 0.0, src - 1.0);
        const int j0 = static_cast<int>(std::floor(pos));
        const int j1 = std::min(j0 + 1, src - 1);
        const double t = pos - j0;
        w(i, j0) += 1.0 - t;
        w(i, j1) += t;
    }
    return w;
}

}  // namespace

std::string content_hash(const ImageTensor& img) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](std::uint8_t byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (int shift = 0; shift < 32; shift += 8) {
        mix(static_cast<std::uint8_t>(img.height >> shift));
        mix(static_cast<std::uint8_t>(img.width >> shift));
    }
    for (double v : img.pixels) mix(to_byte(v));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ImageTensor load_image(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("image not found: '" + path.string() + "'");
    std::ifstream probe(path, std::ios::binary);
    char head[2] = {0, 0};
    probe.read(head, 2);
    probe.close();
    if (head[0] == 'P' && (head[1] == '6' || head[1] == '3')) return load_ppm(path);
    return load_png(path);
}

void save_png(const ImageTensor& img, const fs::path& path) {
    std::vector<std::uint8_t> bytes(img.pixels.size());
    std::transform(img.pixels.begin(), img.pixels.end(), bytes.begin(), to_byte);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
        throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
}

void save_ppm(const ImageTensor& img, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    for (double v : img.pixels) out.put(static_cast<char>(to_byte(v)));
}

std::vector<ImageTensor> load_image_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && has_extension(entry.path(), {".png", ".ppm"}))
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<ImageTensor> images;
    images.reserve(files.size());
    for (const auto& f : files) images.push_back(load_image(f));
    return images;
}

ImageTensor center_crop_resize(const ImageTensor& img, int size) {
    if (size < 1) throw ArgumentError("center_crop_resize: size must be >= 1");
    const int side = std::min(img.height, img.width);
    const int y0 = (img.height - side) / 2;
    const int x0 = (img.width - side) / 2;

    const Eigen::MatrixXd rows = size <= side ? box_weights(side, size) : bilinear_weights(side, size);
    ImageTensor out(size, size);
    Eigen::MatrixXd channel(side, side);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) channel(y, x) = img.at(y0 + y, x0 + x, c);
        const Eigen::MatrixXd resized = rows * channel * rows.transpose();
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) out.at(y, x, c) = resized(y, x);
    }
    out.rehash();
    return out;
}

Eigen::MatrixXd coord_grid(int size) {
    if (size < 1) throw ArgumentError("coord_grid: size must be >= 1");
    const auto axis = [size](int i) { return size == 1 ? 0.0 : -1.0 + 2.0 * i / (size - 1); };
    Eigen::MatrixXd coords(static_cast<Eigen::Index>(size) * size, 2);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            coords(y * size + x, 0) = axis(x);
            coords(y * size + x, 1) = axis(y);
        }
    return coords;
}

Eigen::MatrixXd normalize(const ImageTensor& img) {
    Eigen::MatrixXd t(static_cast<Eigen::Index>(img.pixel_count()), 3);
    for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (int c = 0; c < 3; ++c) t(i, c) = 2.0 * img.pixels[i * 3 + c] - 1.0;
    return t;
}

ImageTensor denormalize(const Eigen::MatrixXd& targets, int height, int width) {
    if (targets.rows() != static_cast<Eigen::Index>(height) * width || targets.cols() != 3)
        throw StructuralError("denormalize: target matrix does not match image shape");
    ImageTensor img(height, width);
    for (Eigen::Index i = 0; i < targets.rows(); ++i)
        for (int c = 0; c < 3; ++c) img.pixels[i * 3 + c] = 0.5 * (targets(i, c) + 1.0);
    img.rehash();
    return img;
}

double image_psnr(const ImageTensor& a, const ImageTensor& b) {
    if (a.height != b.height || a.width != b.width)
        throw StructuralError("image_psnr: image shapes differ");
    double sse = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        sse += d * d;
    }
    const double mse = sse / static_cast<double>(a.pixels.size());
    return mse == 0.0 ? INFINITY : -10.0 * std::log10(mse);
}

double mean_color_psnr(const ImageTensor& img) {
    double mean[3] = {0, 0, 0};
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) mean[c] += img.pixels[i * 3 + c];
    for (double& m : mean) m /= static_cast<double>(n);
    ImageTensor flat(img.height, img.width);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) flat.pixels[i * 3 + c] = mean[c];
    return image_psnr(img, flat);
}

ImageTensor constant_image(int size, double r, double g, double b) {
    ImageTensor img(size, size);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        img.pixels[i * 3 + 0] = r;
        img.pixels[i * 3 + 1] = g;
        img.pixels[i * 3 + 2] = b;
    }
    img.rehash();
    return img;
}

ImageTensor noise_image(int size, std::uint64_t seed) {
    Rng rng(seed);
    ImageTensor img(size, size);
    for (double& v : img.pixels) v = rng.uniform();
    img.rehash();
    return img;
}

ImageTensor synthetic_photo(int size, std::uint64_t seed, double detail) {
    Rng rng(seed);
    detail = std::clamp(detail, 0.0, 1.0);
    const double alpha = 2.2 - 1.2 * detail;  // spectral slope of the background
    constexpr int kWaves = 48;
    const double two_pi = 2.0 * std::numbers::pi;

    ImageTensor img(size, size);
    double base[3] = {rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < img.pixel_count(); ++i) img.pixels[i * 3 + c] = base[c];

    for (int k = 0; k < kWaves; ++k) {
        const double freq = rng.log_uniform(0.5, std::max(1.0, size / 3.0));  // cycles per image
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const double phase = rng.uniform(0.0, two_pi);
        const double amp = 0.18 * std::pow(freq, -alpha / 2.0);
        double tint[3];
        for (double& t : tint) t = rng.uniform(0.3, 1.0);
        const double fx = two_pi * freq * std::cos(theta) / size;
        const double fy = two_pi * freq * std::sin(theta) / size;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double v = amp * std::sin(fx * x + fy * y + phase);
                for (int c = 0; c < 3; ++c) img.at(y, x, c) += tint[c] * v;
            }
    }

    const int shapes = 2 + static_cast<int>(std::lround(6 * detail));
    for (int s = 0; s < shapes; ++s) {
        const double cx = rng.uniform(0, size), cy = rng.uniform(0, size);
        const double radius = rng.uniform(0.08, 0.3) * size;
        const bool disk = rng.uniform() < 0.5;
        const double opacity = rng.uniform(0.3, 0.8);
        double colour[3];
        for (double& col : colour) col = rng.uniform();
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const bool inside = disk ? dx * dx + dy * dy < radius * radius
                                         : std::abs(dx) < radius && std::abs(dy) < 0.6 * radius;
                if (!inside) continue;
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = (1 - opacity) * img.at(y, x, c) + opacity * colour[c];
            }
    }
    for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
    img.rehash();
    return img;
}

}  // namespace sirenlab
