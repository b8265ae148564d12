#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "sirenlab/errors.hpp"
#include "sirenlab/ntk.hpp"
#include "test_support.hpp"

using namespace sirenlab;

namespace {

NtkSpectrum single_mode(double lambda, double c, double eta) {
    NtkSpectrum s;
    s.eigenvalues = Eigen::VectorXd::Constant(1, lambda);
    s.coeffs = Eigen::VectorXd::Constant(1, c);
    s.eta = eta;
    s.n_pixels = 1;
    return s;
}

Eigen::VectorXd flat_outputs(const Eigen::MatrixXd& out) {
    Eigen::VectorXd v(out.size());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (int c = 0; c < 3; ++c) v[3 * i + c] = out(i, c);
    return v;
}

}  // namespace

TEST_SUITE("ntk") {

TEST_CASE("Jacobian matches finite differences of the scalar reference") {
    Rng rng(6);
    const SirenWeights w = init_siren(SirenConfig::make(5, 3, 0.2, 8, 4, 1));
    const double omega0 = 1.6;
    const Eigen::MatrixXd coords = testsupport::random_coords(4, rng);
    const Eigen::MatrixXd J = jacobian(w, omega0, coords);
    REQUIRE(J.rows() == 12);
    REQUIRE(J.cols() == static_cast<Eigen::Index>(w.param_count()));
    const Eigen::VectorXd flat = w.flatten();
    SirenWeights probe = w;
    const double h = 1e-6;
    for (Eigen::Index p = 0; p < flat.size(); ++p) {
        Eigen::VectorXd q = flat;
        q[p] += h;
        probe.assign(q);
        const Eigen::VectorXd up = flat_outputs(testsupport::reference_forward(probe, omega0, coords));
        q[p] -= 2 * h;
        probe.assign(q);
        const Eigen::VectorXd down = flat_outputs(testsupport::reference_forward(probe, omega0, coords));
        const Eigen::VectorXd fd = (up - down) / (2 * h);
        CHECK((J.col(p) - fd).norm() <= 1e-6 * std::max(1.0, fd.norm()));
    }
}

TEST_CASE("kernel trace equals the squared Jacobian norm; budget guard") {
    Rng rng(7);
    const SirenWeights w = init_siren(SirenConfig::make(6, 4, 0.1, 10, 2, 1));
    const Eigen::MatrixXd J = jacobian(w, 1.0, testsupport::random_coords(9, rng));
    const Eigen::MatrixXd theta = empirical_ntk(J);
    const NtkSpectrum s = ntk_spectrum(theta, Eigen::VectorXd::Zero(J.rows()), 0.002, J.rows() / 3);
    CHECK(s.eigenvalues.sum() == doctest::Approx(J.squaredNorm()).epsilon(1e-6));
    for (Eigen::Index k = 1; k < s.eigenvalues.size(); ++k) CHECK(s.eigenvalues[k] <= s.eigenvalues[k - 1]);
    CHECK(kernel_scale_factor(KernelScale::Mse, 100) == doctest::Approx(2.0 / 300.0));
    CHECK(kernel_scale_factor(KernelScale::Sum, 100) == 1.0);
    CHECK_THROWS_AS(jacobian(w, 1.0, coord_grid(64), 1 << 20), SizeError);
}

TEST_CASE("identity kernel decays geometrically; zero step size is flat") {
    NtkSpectrum s;
    s.eigenvalues = Eigen::VectorXd::Ones(4);
    s.coeffs = Eigen::VectorXd::Constant(4, 0.5);
    s.eta = 0.1;
    s.n_pixels = 1;
    const auto curve = ntk_rollout(s, 50);
    for (int t = 0; t <= 50; ++t) CHECK(curve[static_cast<std::size_t>(t)] == doctest::Approx(std::pow(0.81, t)).epsilon(1e-12));

    s.eta = 0.0;
    for (double v : ntk_rollout(s, 20)) CHECK(v == doctest::Approx(1.0));
    CHECK(rollout_mse(s, 3.0) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("stable spectra give monotone curves") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        NtkSpectrum s;
        const int k = static_cast<int>(rng.uniform_int(1, 20));
        s.eta = 0.002;
        s.eigenvalues.resize(k);
        s.coeffs.resize(k);
        for (int i = 0; i < k; ++i) {
            s.eigenvalues[i] = rng.uniform(0.0, 999.0);
            s.coeffs[i] = rng.normal();
        }
        std::sort(s.eigenvalues.data(), s.eigenvalues.data() + k, std::greater<>());
        s.n_pixels = 1;
        const auto c = ntk_rollout(s, 300);
        for (std::size_t t = 1; t < c.size(); ++t) REQUIRE(c[t] <= c[t - 1] * (1 + 1e-12));
        CHECK_FALSE(divergence_step(s).has_value());
    }
}

TEST_CASE("divergence examples") {
    CHECK_FALSE(divergence_step(single_mode(250.0, 1.0, 0.002)).has_value());
    CHECK(divergence_step(single_mode(1100.0, 1.0, 0.002)) == 0);
    CHECK_FALSE(divergence_step(single_mode(1000.0, 1.0, 0.002)).has_value());

    // One small growing mode against a large decaying one.
    NtkSpectrum s;
    s.eta = 0.002;
    s.n_pixels = 1;
    s.eigenvalues.resize(2);
    s.coeffs.resize(2);
    s.eigenvalues << 1100.0, 10.0;
    s.coeffs << 1e-3, 1.0;
    const auto t = divergence_step(s);
    REQUIRE(t.has_value());
    // Oracle: first t with 1e-6 * 1.44^t > 0.98^(2t).
    long long expect = 0;
    while (1e-6 * std::pow(1.44, static_cast<double>(expect)) <= std::pow(0.98, 2.0 * static_cast<double>(expect))) ++expect;
    CHECK(*t == expect);
    CHECK(rollout_loss(s, 200) > rollout_loss(s, 100));

    const DivergenceReport r = divergence_report(single_mode(600.0, 1.0, 0.002));
    CHECK(r.eta_lambda_max == doctest::Approx(1.2));
    CHECK(r.above_one_over_eta);
    CHECK_FALSE(r.above_two_over_eta);
    CHECK_FALSE(r.step.has_value());
    // (1 - 1.2)^2 = 0.04: the overshooting mode still decays.
    CHECK(rollout_loss(single_mode(600.0, 1.0, 0.002), 1) == doctest::Approx(0.04));
}

TEST_CASE("rollout after one step equals an explicit linearised gradient step") {
    Rng rng(9);
    const SirenWeights w = init_siren(SirenConfig::make(4, 3, 0.25, 6, 3, 1));
    const double omega0 = 1.5;
    const Eigen::MatrixXd coords = coord_grid(6);
    Eigen::MatrixXd target(coords.rows(), 3);
    for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = rng.uniform(-1, 1);
    const Eigen::MatrixXd J = jacobian(w, omega0, coords);
    const Eigen::VectorXd y0 = flat_outputs(forward(w, omega0, coords));
    const Eigen::VectorXd y = flat_outputs(target);
    const double eta = 0.01;
    const Eigen::VectorXd step = eta * J.transpose() * (y - y0);
    const Eigen::VectorXd y1 = y0 + J * step;
    const double expected = (y - y1).squaredNorm();
    const NtkSpectrum s = ntk_spectrum(empirical_ntk(J), y - y0, eta, static_cast<std::size_t>(coords.rows()));
    CHECK(rollout_loss(s, 1.0) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(rollout_loss(s, 0.0) == doctest::Approx((y - y0).squaredNorm()).epsilon(1e-10));
}

TEST_CASE("snapshot rollouts start at the snapshot loss") {
    const ImageTensor img = synthetic_photo(8, 5);
    const auto c = SirenConfig::make(6, 3, 0.06, 8, 1, 16);
    SnapshotOptions opt;
    opt.snapshot_steps = {1, 4, 16, 64};
    opt.horizon = 40;
    const SnapshotStudy st = snapshot_extrapolate(c, img, opt);
    REQUIRE(st.curves.size() == 3);
    for (const auto& curve : st.curves) {
        REQUIRE_FALSE(curve.mse.empty());
        CHECK(curve.steps.front() == curve.snapshot_step);
        CHECK(curve.steps.back() == 40);
        CHECK(curve.mse.front() == doctest::Approx(curve.snapshot_mse).epsilon(1e-6));
        CHECK(psnr_from_mse(curve.snapshot_mse) == doctest::Approx(*st.record.psnr_at(curve.snapshot_step)).epsilon(1e-9));
    }
    CHECK(st.dc_psnr == doctest::Approx(mean_color_psnr(img)));

    const auto dir = testsupport::temp_dir("ntk");
    write_snapshot_csv(st, dir / "s.csv");
    CHECK(std::filesystem::file_size(dir / "s.csv") > 0);
}

}  // TEST_SUITE
