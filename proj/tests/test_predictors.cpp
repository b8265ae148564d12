#include <doctest.h>

#include <cmath>
#include <fstream>

#include "sirenlab/errors.hpp"
#include "sirenlab/metrics.hpp"
#include "sirenlab/predictors.hpp"
#include "test_support.hpp"

using namespace sirenlab;

namespace {

TrainRecord curve_record(double at_m, double at_n, int m, int n) {
    TrainRecord r;
    r.loss_curve = {{0, 0.0}, {m, at_m}, {n, at_n}};
    r.max_psnr = std::max(at_m, at_n);
    return r;
}

}  // namespace

TEST_SUITE("predictors") {

TEST_CASE("explained variance and RMSE examples") {
    const std::vector<double> y = {20, 25, 31, 40};
    CHECK(explained_variance(y, y) == 1.0);
    CHECK(rmse(y, y) == 0.0);
    CHECK(explained_variance({1, 1}, {0, 2}) == 0.0);
    CHECK(rmse({1, 1}, {0, 2}) == 1.0);
    const double mu = mean(y);
    CHECK(explained_variance(std::vector<double>(4, mu), y) == 0.0);
    CHECK_THROWS_AS(explained_variance({1, 2}, {3, 3}), UndefinedMetricError);
    CHECK_THROWS_AS(rmse({1}, {1, 2}), ArgumentError);
    CHECK_THROWS_AS(explained_variance({1}, {1}), InsufficientDataError);

    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> a, p;
        for (int i = 0; i < 10; ++i) {
            a.push_back(rng.normal());
            p.push_back(rng.normal(0, 3));
        }
        CHECK(explained_variance(p, a) <= 1.0);
    }
    const MetricReport rep = metric_report({1, 1}, {0, 2});
    CHECK(rep.n == 2);
    CHECK(rep.rmse == 1.0);
}

TEST_CASE("variance helpers") {
    CHECK(population_variance({20, 40}) == 100.0);
    CHECK(sample_variance({20, 40}) == 200.0);
    CHECK_THROWS(sample_variance({1}));
}

TEST_CASE("irreducible error: hand example, symmetry, Monte Carlo") {
    CHECK(irreducible_error({{30, 31}, {25, 25}, {40, 38}}) == doctest::Approx(0.912870929).epsilon(1e-9));
    CHECK(irreducible_error({{31, 30}, {38, 40}, {25, 25}}) == irreducible_error({{30, 31}, {25, 25}, {40, 38}}));
    CHECK(irreducible_error({{5, 5}, {7, 7}}) == 0.0);
    CHECK_THROWS_AS(irreducible_error({}), ArgumentError);

    Rng rng(99);
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 10000; ++i) {
        const double truth = rng.uniform(20, 40);
        pairs.emplace_back(truth + rng.normal(0, 0.2), truth + rng.normal(0, 0.2));
    }
    CHECK(irreducible_error(pairs) == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("ordinary least squares") {
    const LinearFit f = ols({0, 1, 2, 3}, {1, 3, 5, 7});
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK_THROWS_AS(ols({1}, {1}), InsufficientDataError);
    CHECK_THROWS_AS(ols({1, 1}, {1, 2}), ArgumentError);
}

TEST_CASE("step extrapolation") {
    std::vector<TrainRecord> converged;
    for (double v : {22.0, 27.5, 31.0, 35.0}) converged.push_back(curve_record(v, v, 100, 1000));
    const ExtrapolationModel c = extrapolate_from_step(converged, 100, 1000);
    CHECK(c.fit.slope == doctest::Approx(1.0));
    CHECK(c.report.explained_variance == doctest::Approx(1.0));

    Rng rng(5);
    std::vector<TrainRecord> planted;
    for (int i = 0; i < 500; ++i) {
        const double x = rng.uniform(18, 40);
        planted.push_back(curve_record(x, 1.1 * x + rng.normal(0, 0.1), 200, 2000));
    }
    const ExtrapolationModel p = extrapolate_from_step(planted, 200, 2000);
    CHECK(p.fit.slope == doctest::Approx(1.1).epsilon(0.02 / 1.1));
    CHECK(p.predict(30.0) == doctest::Approx(33.0).epsilon(0.01));

    CHECK_THROWS_AS(extrapolate_from_step({converged[0], converged[1]}, 100, 1000), InsufficientDataError);
    CHECK_THROWS_AS(best_psnr_until(converged[0], 5000), ArgumentError);
    // Running max: a dip at m does not lower the observed value.
    TrainRecord dip;
    dip.loss_curve = {{0, 10.0}, {50, 25.0}, {100, 20.0}};
    CHECK(best_psnr_until(dip, 100) == 25.0);
}

TEST_CASE("codec proxy recovers a planted ratio") {
    auto images = load_image_dir(testsupport::photo_dir());
    images.resize(12);
    const CodecPsnrFn codec = builtin_codec_psnr(images);
    std::vector<double> planted;
    for (std::size_t i = 0; i < images.size(); ++i) planted.push_back(codec(i, 25.0) - 3.0);
    const ProxyModel m = fit_codec_proxy(images.size(), planted, codec);
    CHECK(m.ratio >= 23.0);
    CHECK(m.ratio <= 27.0);
    CHECK(m.report.explained_variance >= 0.999);
    CHECK(m.offset == doctest::Approx(-3.0).epsilon(0.05));

    CHECK_THROWS_AS(fit_codec_proxy(3, {1, 2, 3}, codec), InsufficientDataError);
    CHECK_THROWS_AS(fit_codec_proxy(4, {30, 30, 30, 30}, codec), UndefinedMetricError);
}

TEST_CASE("table-backed codec lookups") {
    const RdTable t({{"a", 10, 2.4, 30}, {"a", 100, 0.24, 20}, {"b", 10, 2.4, 35}, {"b", 100, 0.24, 25}});
    const CodecPsnrFn f = table_codec_psnr(t, {"a", "b"});
    CHECK(f(0, std::sqrt(1000.0)) == doctest::Approx(25.0));
    CHECK(f(1, 10.0) == doctest::Approx(35.0));
}

TEST_CASE("model files round-trip and are tagged") {
    const auto dir = testsupport::temp_dir("models");
    ExtrapolationModel e;
    e.m = 200;
    e.n = 2000;
    e.fit = {1.05, 0.7, 0.99};
    e.report = {0.3, 0.98, 50};
    save_model(e, dir / "e.bin");
    CHECK(peek_model_kind(dir / "e.bin") == ModelKind::Extrapolation);
    const ExtrapolationModel e2 = load_extrapolation_model(dir / "e.bin");
    CHECK(e2.fit.slope == e.fit.slope);
    CHECK(e2.m == 200);
    CHECK(e2.report.n == 50);

    ProxyModel p;
    p.ratio = 70.6;
    p.offset = -1.25;
    save_model(p, dir / "p.bin");
    CHECK(peek_model_kind(dir / "p.bin") == ModelKind::Proxy);
    CHECK(load_proxy_model(dir / "p.bin").offset == -1.25);
    CHECK_THROWS_AS(load_proxy_model(dir / "e.bin"), IoError);

    std::ofstream(dir / "junk.bin") << "nope";
    CHECK_THROWS_AS(peek_model_kind(dir / "junk.bin"), IoError);
}

TEST_CASE("GP feature recipe") {
    const auto c = SirenConfig::make(28, 10, 0.06, 64, 0, 1);
    const auto h = hyper_features(c);
    REQUIRE(h.size() == 4);
    CHECK(h[0] == doctest::Approx(std::log(28.0)));
    CHECK(h[1] == 10.0);
    CHECK(gp_features(c, {1, 2, 3}).size() == 7);
}

}  // TEST_SUITE
