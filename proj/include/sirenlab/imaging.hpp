#pragma once

// RGB image tensors and the pixel/coordinate conventions used for SIREN
// fitting: pixels live in [0,1], network targets in [-1,1], and pixel centres
// map onto a [-1,1]^2 grid.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sirenlab {

class Rng;

struct ImageTensor {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  // row-major HxWx3, values in [0,1]
    std::string id;              // content hash, see content_hash()

    ImageTensor() = default;
    ImageTensor(int h, int w);

    double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    bool square() const { return height == width; }

    // Recomputes `id` from the current pixels.
    void rehash();
};

// FNV-1a over the 8-bit quantized pixels plus the dimensions, as 16 hex digits.
std::string content_hash(const ImageTensor& img);

ImageTensor load_image(const std::filesystem::path& path);  // PNG or PPM (P3/P6)
void save_png(const ImageTensor& img, const std::filesystem::path& path);
void save_ppm(const ImageTensor& img, const std::filesystem::path& path);

// Loads every PNG/PPM in a directory, sorted by filename.
std::vector<ImageTensor> load_image_dir(const std::filesystem::path& dir);

// Largest centred square crop, then box-filter down / bilinear up to size x size.
ImageTensor center_crop_resize(const ImageTensor& img, int size);

// N x 2 coordinates (x, y) of pixel centres in row-major pixel order.
Eigen::MatrixXd coord_grid(int size);

// N x 3 targets 2p - 1, row-major pixel order.
Eigen::MatrixXd normalize(const ImageTensor& img);
// Inverse of normalize() (no clamping).
ImageTensor denormalize(const Eigen::MatrixXd& targets, int height, int width);

// PSNR (dB, peak 1) between two equally sized images; +inf when identical.
double image_psnr(const ImageTensor& a, const ImageTensor& b);

// PSNR of the per-channel mean-colour image against the original.
double mean_color_psnr(const ImageTensor& img);

// Deterministic photo-like test image: a 1/f^alpha colour field with a few
// hard-edged shapes. `detail` in [0,1] raises the high-frequency content.
ImageTensor synthetic_photo(int size, std::uint64_t seed, double detail = 0.5);
ImageTensor constant_image(int size, double r, double g, double b);
ImageTensor noise_image(int size, std::uint64_t seed);

}  // namespace sirenlab
