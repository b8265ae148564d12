#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "sirenlab/errors.hpp"
#include "sirenlab/feature_mlp.hpp"
#include "test_support.hpp"

using namespace sirenlab;

namespace {

SamplingSpec desk_spec() {
    SamplingSpec s;
    s.size_min = 16;
    s.size_max = 64;
    return s;
}

std::vector<MlpRow> planted_rows(int n, std::uint64_t seed, bool constant, int extra_features = 0) {
    Rng rng(seed);
    const SamplingSpec spec = desk_spec();
    std::vector<MlpRow> rows;
    for (int i = 0; i < n; ++i) {
        const int size = static_cast<int>(rng.uniform_int(spec.size_min, spec.size_max));
        const ImageTensor img = constant_image(size, 0, 0, 0);
        MlpRow r;
        r.config = sample_config(spec, rng, img);
        r.image_features = {rng.uniform(15, 45), rng.uniform(15, 45), rng.uniform(15, 45)};
        for (int k = 0; k < extra_features; ++k) r.image_features.push_back(1.0);
        r.target = constant ? 31.0 : 5.0 + 0.6 * r.image_features[0] + 0.3 * r.image_features[1];
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_SUITE("mlp") {

TEST_CASE("scalar encoding examples") {
    const auto z = encode_scalar(0.0);
    REQUIRE(z.size() == 22);
    for (int k = 0; k < kPeFrequencies; ++k) {
        CHECK(z[2 * k] == 0.0);
        CHECK(z[2 * k + 1] == 1.0);
    }
    const auto one = encode_scalar(1.0);
    CHECK(one[1] == doctest::Approx(-1.0));
    for (int k = 0; k < kPeFrequencies; ++k) CHECK(std::abs(one[2 * k]) < 1e-9);
    for (int k = 1; k < kPeFrequencies; ++k) CHECK(one[2 * k + 1] == doctest::Approx(1.0));
    const auto h = encode_scalar(0.5);
    CHECK(h[0] == doctest::Approx(1.0));
    CHECK(std::abs(h[1]) < 1e-12);
    CHECK(std::abs(h[2]) < 1e-12);
    CHECK(h[3] == doctest::Approx(-1.0));
    const double p = 0.37;
    for (int k = 0; k < kPeFrequencies; ++k)
        CHECK(encode_scalar(p)[2 * k] == doctest::Approx(std::sin(std::ldexp(std::numbers::pi * p, k))));
}

TEST_CASE("encoding is 88-dimensional, bounded and injective on a fine grid") {
    const SamplingSpec spec = desk_spec();
    const PeRanges ranges = PeRanges::from_spec(spec);
    Rng rng(8);
    std::set<std::vector<long long>> seen;
    std::set<std::tuple<int, int, int, long long>> configs;
    for (int i = 0; i < 10000; ++i) {
        const int size = static_cast<int>(rng.uniform_int(spec.size_min, spec.size_max));
        SirenConfig c = sample_config(spec, rng, constant_image(size, 0, 0, 0));
        c.gamma = std::round(c.gamma * 1e3) / 1e3;
        c.omega0 = c.gamma * size;
        const auto e = positional_encode(c, ranges);
        REQUIRE(e.size() == static_cast<std::size_t>(kPeDims));
        std::vector<long long> key;
        for (double v : e) {
            CHECK((v >= -1.0 && v <= 1.0));
            key.push_back(std::llround(v * 1e9));
        }
        const bool new_config = configs.insert({c.width, c.depth, size, std::llround(c.gamma * 1e3)}).second;
        CHECK(seen.insert(key).second == new_config);
    }

    SirenConfig wide = SirenConfig::make(100000, 3, 0.06, 32, 0, 1);
    CHECK_THROWS_AS(positional_encode(wide, ranges), RangeError);
}

TEST_CASE("constant targets give constant predictions") {
    const auto rows = planted_rows(150, 1, true);
    MlpOptions opt;
    opt.epochs = 40;
    const FeatureMlp m = mlp_fit(rows, PeRanges::from_spec(desk_spec()), opt);
    for (const auto& r : rows) CHECK(mlp_predict(m, r.config, r.image_features) == doctest::Approx(31.0).epsilon(0.1 / 31));
}

TEST_CASE("a planted linear function of the image features is recovered") {
    // The 88 encoding columns are irrelevant here; the net needs a few
    // thousand rows before it stops fitting them.
    const auto rows = planted_rows(3000, 2, false);
    MlpOptions opt;
    opt.epochs = 150;
    const FeatureMlp m = mlp_fit(rows, PeRanges::from_spec(desk_spec()), opt);
    CHECK(m.test.n == 300);
    CHECK(m.test.explained_variance >= 0.99);
    CHECK(m.validation.explained_variance >= 0.99);
}

TEST_CASE("too few rows, ablation of a constant dummy, save/load") {
    CHECK_THROWS_AS(mlp_fit(planted_rows(50, 3, false), PeRanges::from_spec(desk_spec())), InsufficientDataError);

    const auto rows = planted_rows(300, 4, false, 1);
    MlpOptions opt;
    opt.epochs = 60;
    const PeRanges ranges = PeRanges::from_spec(desk_spec());
    auto groups = standard_feature_groups(4);
    REQUIRE(groups.size() == 5);
    CHECK(groups.back().name == "image");
    CHECK(groups.back().columns.size() == 4);
    std::vector<FeatureGroup> ablate = {{"dummy", {kPeDims + 3}}, groups.back()};
    const auto table = feature_ablation(rows, ranges, ablate, opt);
    REQUIRE(table.size() == 3);
    double base = 0, dummy = 0;
    for (const auto& r : table) {
        if (r.removed == "none") base = r.report.rmse;
        if (r.removed == "dummy") dummy = r.report.rmse;
    }
    CHECK(std::abs(dummy - base) / base < 0.05);
    CHECK(table.back().removed == "image");
    for (std::size_t i = 1; i < table.size(); ++i) CHECK(table[i].report.rmse >= table[i - 1].report.rmse);

    const FeatureMlp m = mlp_fit(rows, ranges, opt);
    const auto dir = testsupport::temp_dir("mlp");
    save_model(m, dir / "m.bin");
    const FeatureMlp back = load_mlp_model(dir / "m.bin");
    CHECK(mlp_predict(back, rows[0].config, rows[0].image_features) ==
          mlp_predict(m, rows[0].config, rows[0].image_features));
}

}  // TEST_SUITE
