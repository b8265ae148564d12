#include <doctest.h>

#include <cmath>
#include <limits>

#include "sirenlab/errors.hpp"
#include "sirenlab/half.hpp"
#include "sirenlab/siren.hpp"
#include "test_support.hpp"

using namespace sirenlab;
using testsupport::finite_difference_grad;
using testsupport::random_weights;
using testsupport::reference_forward;
using testsupport::reference_mse;

TEST_SUITE("siren") {

TEST_CASE("init shapes chain from 2 inputs to 3 outputs") {
    const auto c = SirenConfig::make(3, 2, 0.05, 20, 7, 10);
    const SirenWeights w = init_siren(c);
    REQUIRE(w.layers.size() == 2);
    CHECK(w.layers[0].weight.rows() == 3);
    CHECK(w.layers[0].weight.cols() == 2);
    CHECK(w.layers[0].bias.size() == 3);
    CHECK(w.layers[1].weight.rows() == 3);
    CHECK(w.layers[1].weight.cols() == 3);
    CHECK(w.layers[1].bias.size() == 3);
    CHECK(init_siren(c) == w);
}

TEST_CASE("init bounds follow fan-in") {
    const auto c = SirenConfig::make(28, 10, 0.06, 64, 11, 10);
    const SirenWeights w = init_siren(c);
    const double hidden = std::sqrt(6.0 / 28.0);
    CHECK(hidden == doctest::Approx(0.4629).epsilon(1e-3));
    for (std::size_t l = 1; l < w.layers.size(); ++l) CHECK(w.layers[l].weight.cwiseAbs().maxCoeff() <= hidden);
    CHECK(w.layers[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(2.0));
    // Hidden draws should reach most of their range.
    CHECK(w.layers[1].weight.cwiseAbs().maxCoeff() > 0.9 * hidden);
}

TEST_CASE("different seeds differ, a shared first-layer seed reproduces the first layer") {
    auto a = SirenConfig::make(8, 4, 0.06, 32, 1, 10);
    auto b = a;
    b.seed = 2;
    const SirenWeights wa = init_siren(a), wb = init_siren(b);
    CHECK_FALSE(wa.layers[0].weight.isApprox(wb.layers[0].weight));
    InitPolicy p;
    p.first_layer_seed = a.seed;
    const SirenWeights wc = init_siren(b, p);
    CHECK(wc.layers[0].weight == wa.layers[0].weight);
    CHECK(wc.layers[0].bias == wa.layers[0].bias);
    CHECK(wc.layers[1].weight == wb.layers[1].weight);

    InitPolicy z;
    z.zero_rest = true;
    const SirenWeights wz = init_siren(a, z);
    for (std::size_t l = 1; l < wz.layers.size(); ++l) CHECK(wz.layers[l].weight.isZero(0));
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(SirenConfig::make(4, 1, 0.06, 32, 0, 10).validate(), ArgumentError);
    CHECK_THROWS_AS(SirenConfig::make(0, 3, 0.06, 32, 0, 10).validate(), ArgumentError);
    auto c = SirenConfig::make(4, 3, 0.06, 32, 0, 10);
    CHECK_NOTHROW(c.validate());
    c.omega0 *= 1.001;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("forward: zero network and constant network") {
    Rng rng(3);
    const Eigen::MatrixXd coords = testsupport::random_coords(7, rng);
    CHECK(forward(SirenWeights::zeros(5, 4), 30.0, coords).isZero(0));

    SirenWeights w = SirenWeights::zeros(3, 2);
    w.layers[0].bias << 0.3, -0.7, 1.1;
    w.layers[1].weight.setIdentity();
    w.layers[1].bias << 0.1, 0.2, 0.3;
    const Eigen::MatrixXd out = forward(w, 10.0, coords);
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        CHECK(out(i, 0) == doctest::Approx(std::sin(0.3) + 0.1));
        CHECK(out(i, 1) == doctest::Approx(std::sin(-0.7) + 0.2));
        CHECK(out(i, 2) == doctest::Approx(std::sin(1.1) + 0.3));
    }
}

TEST_CASE("forward matches the scalar reference evaluator") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int width = static_cast<int>(rng.uniform_int(1, 12));
        const int depth = static_cast<int>(rng.uniform_int(2, 6));
        const double omega0 = rng.uniform(0.5, 30.0);
        const SirenWeights w = random_weights(width, depth, rng);
        const Eigen::MatrixXd coords = testsupport::random_coords(5, rng);
        CHECK((forward(w, omega0, coords) - reference_forward(w, omega0, coords)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("forward rejects mismatched shapes") {
    SirenWeights w = SirenWeights::zeros(4, 3);
    w.layers[1].weight.resize(4, 5);
    CHECK_THROWS_AS(forward(w, 1.0, Eigen::MatrixXd::Zero(2, 2)), StructuralError);
    CHECK_THROWS_AS(forward(SirenWeights::zeros(4, 3), 1.0, Eigen::MatrixXd::Zero(2, 3)), StructuralError);
}

TEST_CASE("loss_and_grad: perfect fit and quadratic scaling") {
    Rng rng(9);
    const SirenWeights w = random_weights(6, 3, rng, 0.5);
    const Eigen::MatrixXd coords = testsupport::random_coords(10, rng);
    const Eigen::MatrixXd y = forward(w, 3.0, coords);
    const LossAndGrad lg = loss_and_grad(w, 3.0, coords, y);
    CHECK(lg.mse == 0.0);
    CHECK(lg.grads.flatten().cwiseAbs().maxCoeff() == 0.0);

    const Eigen::MatrixXd t1 = y.array() + 0.1;
    const Eigen::MatrixXd t2 = y.array() + 0.2;
    CHECK(loss_and_grad(w, 3.0, coords, t2).mse == doctest::Approx(4.0 * loss_and_grad(w, 3.0, coords, t1).mse));
    CHECK(mse_loss(w, 3.0, coords, t1) == doctest::Approx(0.01));
}

TEST_CASE("gradients match central finite differences on random nets") {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int width = static_cast<int>(rng.uniform_int(1, 8));
        const int depth = static_cast<int>(rng.uniform_int(2, 4));
        const double omega0 = rng.uniform(0.5, 6.0);
        const SirenWeights w = random_weights(width, depth, rng, 0.8);
        const Eigen::MatrixXd coords = testsupport::random_coords(6, rng);
        Eigen::MatrixXd targets(6, 3);
        for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = rng.uniform(-1.0, 1.0);
        const Eigen::VectorXd analytic = loss_and_grad(w, omega0, coords, targets).grads.flatten();
        const Eigen::VectorXd fd = finite_difference_grad(w, omega0, coords, targets, 1e-4);
        const double rel = (analytic - fd).norm() / std::max(fd.norm(), 1e-12);
        worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("non-finite input raises NumericError") {
    SirenWeights w = SirenWeights::zeros(3, 3);
    w.layers[0].weight(0, 0) = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd coords(1, 2);
    coords << 0.5, 0.5;
    CHECK_THROWS_AS(loss_and_grad(w, 1.0, coords, Eigen::MatrixXd::Zero(1, 3)), NumericError);
}

TEST_CASE("adam: hand-computed first step, zero gradient, sign asymptote") {
    double x = 0.0, g = 1.0, m = 0.0, v = 0.0;
    adam_update(&x, &g, &m, &v, 1, 1e-3, 1, AdamOptions{});
    CHECK(x == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));

    SirenWeights w = SirenWeights::zeros(2, 2);
    w.layers[0].weight.setConstant(0.5);
    const SirenWeights before = w;
    AdamState st = AdamState::for_weights(w);
    adam_step(w, SirenWeights::zeros(2, 2), st, 1e-3);
    CHECK(w == before);
    CHECK(st.step == 1);

    double y = 0.0, gy = -3.0, my = 0.0, vy = 0.0, prev = 0.0, last = 0.0;
    for (int t = 1; t <= 2000; ++t) {
        prev = y;
        adam_update(&y, &gy, &my, &vy, 1, 1e-3, t, AdamOptions{});
        last = y - prev;
    }
    CHECK(last == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("psnr conversions") {
    CHECK(psnr_from_mse(4 * 0.001) == doctest::Approx(30.0));
    CHECK(psnr_from_mse(4 * 0.01) == doctest::Approx(20.0));
    CHECK(psnr_from_mse(0.04) == doctest::Approx(20.0));
    CHECK(std::isinf(psnr_from_mse(0.0)));
    CHECK_THROWS_AS(psnr_from_mse(-1e-3), ArgumentError);
    CHECK(mse_from_psnr(psnr_from_mse(0.123)) == doctest::Approx(0.123));
}

TEST_CASE("parameter counts") {
    CHECK(param_count(28, 10) == 6667);
    CHECK(param_count(1, 2) == 9);
    CHECK(init_siren(SirenConfig::make(28, 10, 0.06, 64, 0, 1)).param_count() == 6667);
    CHECK(6667.0 * 16.0 / (512.0 * 768.0) == doctest::Approx(0.271).epsilon(1e-3));
    CHECK(siren_bpp(28, 10, 512) == doctest::Approx(6667.0 * 16.0 / (512.0 * 512.0)));
}

TEST_CASE("half precision matches Eigen's binary16 conversion") {
    bool clamped = false;
    CHECK(half_to_double(double_to_half(0.0, clamped)) == 0.0);
    CHECK(half_to_double(double_to_half(1.0 / 3.0, clamped)) == 0.333251953125);
    CHECK_FALSE(clamped);
    CHECK(half_to_double(double_to_half(1e6, clamped)) == kHalfMax);
    CHECK(clamped);

    Rng rng(77);
    for (int i = 0; i < 20000; ++i) {
        // Float-representable inputs, so Eigen's float path rounds only once.
        const float xf = static_cast<float>(std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.uniform_int(-26, 15))));
        const double x = xf;
        bool c = false;
        const double ours = half_to_double(double_to_half(x, c));
        const double oracle = static_cast<double>(static_cast<float>(Eigen::half(xf)));
        REQUIRE(ours == oracle);
    }
}

TEST_CASE("quantized blobs round-trip") {
    const SirenWeights w = init_siren(SirenConfig::make(5, 4, 0.06, 16, 3, 1));
    const QuantizedWeights q = quantize_weights(w);
    const SirenWeights d = dequantize(q);
    CHECK(d.width() == 5);
    CHECK(d.depth() == 4);
    CHECK(quantize_weights(d).values == q.values);
    CHECK((d.flatten() - w.flatten()).cwiseAbs().maxCoeff() < 1e-3);

    const auto bytes = serialize_blob(q);
    REQUIRE(bytes.size() == 16 + 2 * q.values.size());
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SIRN");
    CHECK(parse_blob(bytes).values == q.values);
    auto bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(parse_blob(bad), IoError);

    const auto dir = testsupport::temp_dir("blob");
    write_blob(q, dir / "w.sirn");
    CHECK(read_blob(dir / "w.sirn").values == q.values);
}

TEST_CASE("training: constant image, zero steps, determinism, prefix max") {
    const ImageTensor flat = constant_image(16, 0.2, 0.5, 0.7);
    const TrainResult r = train(SirenConfig::make(8, 3, 0.06, 16, 1, 500), flat);
    CHECK(r.record.max_psnr >= 40.0);
    CHECK(r.record.status == RunStatus::Ok);

    const ImageTensor img = synthetic_photo(16, 4);
    const auto c0 = SirenConfig::make(8, 3, 0.1, 16, 5, 0);
    const TrainResult r0 = train(c0, img);
    REQUIRE(r0.record.loss_curve.size() == 1);
    CHECK(r0.record.max_psnr == doctest::Approx(evaluate_psnr(init_siren(c0), c0.omega0, img)).epsilon(1e-12));
    CHECK(r0.record.argmax_step == 0);

    const auto c = SirenConfig::make(8, 3, 0.1, 16, 5, 300);
    const TrainResult a = train(c, img), b = train(c, img);
    CHECK(a.record.same_result(b.record));
    CHECK(a.best_weights == b.best_weights);

    const TrainResult longer = train(SirenConfig::make(8, 3, 0.1, 16, 5, 600), img);
    CHECK(*longer.record.max_psnr_until(300) == a.record.max_psnr);
    CHECK(longer.record.max_psnr >= a.record.max_psnr);
}

TEST_CASE("curve sampling: dense early, strided later, final step") {
    const TrainResult r = train(SirenConfig::make(4, 2, 0.1, 8, 1, 137), synthetic_photo(8, 1));
    std::vector<int> steps;
    for (const auto& p : r.record.loss_curve) steps.push_back(p.step);
    REQUIRE(steps.size() == 101 + 3 + 1);
    CHECK(steps[100] == 100);
    CHECK(steps[101] == 110);
    CHECK(steps.back() == 137);
    double best = -1e300;
    for (const auto& p : r.record.loss_curve) best = std::max(best, p.psnr);
    CHECK(best == r.record.max_psnr);
    CHECK(r.record.psnr_at(r.record.argmax_step) == r.record.max_psnr);
}

TEST_CASE("best weights reproduce the recorded max PSNR") {
    const ImageTensor img = synthetic_photo(16, 9);
    const auto c = SirenConfig::make(12, 3, 0.1, 16, 2, 400);
    const TrainResult r = train(c, img);
    CHECK(evaluate_psnr(r.best_weights, c.omega0, img) == doctest::Approx(r.record.max_psnr).epsilon(1e-9));
    const double q = evaluate_psnr(dequantize(quantize_weights(r.best_weights)), c.omega0, img);
    CHECK(q >= r.record.max_psnr - 0.5);
}

TEST_CASE("a non-finite loss marks the record divergent") {
    const auto c = SirenConfig::make(8, 3, 0.1, 8, 1, 50, 1e308);
    const TrainResult r = train(c, synthetic_photo(8, 2));
    CHECK(r.record.status == RunStatus::Divergent);
    for (const auto& p : r.record.loss_curve) CHECK(std::isfinite(p.psnr));
    CHECK(r.best_weights.all_finite());
}

TEST_CASE("train rejects a mismatched image") {
    CHECK_THROWS_AS(train(SirenConfig::make(4, 2, 0.1, 8, 1, 5), synthetic_photo(16, 1)), ArgumentError);
}

}  // TEST_SUITE
