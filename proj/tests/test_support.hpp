#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include <Eigen/Dense>

#include "sirenlab/rng.hpp"
#include "sirenlab/siren.hpp"

#ifndef SIRENLAB_TEST_DATA
#define SIRENLAB_TEST_DATA "tests/data"
#endif

namespace testsupport {

inline std::filesystem::path data_dir() { return SIRENLAB_TEST_DATA; }
inline std::filesystem::path photo_dir() { return data_dir() / "photos"; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("sirenlab_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline Eigen::MatrixXd random_coords(int n, sirenlab::Rng& rng) {
    Eigen::MatrixXd c(n, 2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j) c(i, j) = rng.uniform(-1.0, 1.0);
    return c;
}

// Scalar-loop evaluation of the network, written independently of the
// library's vectorised forward pass.
inline Eigen::MatrixXd reference_forward(const sirenlab::SirenWeights& w, double omega0, const Eigen::MatrixXd& coords) {
    Eigen::MatrixXd out(coords.rows(), 3);
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        std::vector<double> h = {omega0 * coords(i, 0), omega0 * coords(i, 1)};
        for (std::size_t l = 0; l < w.layers.size(); ++l) {
            const auto& L = w.layers[l];
            std::vector<double> next(static_cast<std::size_t>(L.weight.rows()));
            for (Eigen::Index r = 0; r < L.weight.rows(); ++r) {
                double s = L.bias[r];
                for (Eigen::Index c = 0; c < L.weight.cols(); ++c) s += L.weight(r, c) * h[static_cast<std::size_t>(c)];
                next[static_cast<std::size_t>(r)] = l + 1 < w.layers.size() ? std::sin(s) : s;
            }
            h = std::move(next);
        }
        for (int c = 0; c < 3; ++c) out(i, c) = h[static_cast<std::size_t>(c)];
    }
    return out;
}

inline double reference_mse(const sirenlab::SirenWeights& w, double omega0, const Eigen::MatrixXd& coords,
                            const Eigen::MatrixXd& targets) {
    return (reference_forward(w, omega0, coords) - targets).array().square().mean();
}

inline sirenlab::SirenWeights random_weights(int width, int depth, sirenlab::Rng& rng, double scale = 1.0) {
    sirenlab::SirenWeights w = sirenlab::SirenWeights::zeros(width, depth);
    for (auto& L : w.layers) {
        for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = scale * rng.uniform(-1.0, 1.0);
        for (Eigen::Index i = 0; i < L.bias.size(); ++i) L.bias[i] = scale * rng.uniform(-1.0, 1.0);
    }
    return w;
}

// Central differences of the reference loss, one parameter at a time.
inline Eigen::VectorXd finite_difference_grad(const sirenlab::SirenWeights& w, double omega0,
                                              const Eigen::MatrixXd& coords, const Eigen::MatrixXd& targets,
                                              double h) {
    const Eigen::VectorXd flat = w.flatten();
    Eigen::VectorXd g(flat.size());
    sirenlab::SirenWeights probe = w;
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        Eigen::VectorXd p = flat;
        p[i] += h;
        probe.assign(p);
        const double up = reference_mse(probe, omega0, coords, targets);
        p[i] -= 2 * h;
        probe.assign(p);
        const double down = reference_mse(probe, omega0, coords, targets);
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

// Asymptotic Kolmogorov survival function P(K > x).
inline double kolmogorov_sf(double x) {
    if (x < 0.2) return 1.0;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) s += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * x * x);
    return std::clamp(s, 0.0, 1.0);
}

// One-sample KS test of values in [0,1) against U(0,1).
inline double ks_uniform_p(std::vector<double> u) {
    std::sort(u.begin(), u.end());
    const double n = static_cast<double>(u.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        d = std::max({d, (static_cast<double>(i) + 1) / n - u[i], u[i] - static_cast<double>(i) / n});
    return kolmogorov_sf((std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d);
}

// Chi-square goodness of fit against equal cell probabilities.
inline double chi_square_uniform_p(const std::vector<std::size_t>& counts) {
    double n = 0;
    for (auto c : counts) n += static_cast<double>(c);
    const double e = n / static_cast<double>(counts.size());
    double stat = 0.0;
    for (auto c : counts) stat += (static_cast<double>(c) - e) * (static_cast<double>(c) - e) / e;
    boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace testsupport
