#include <doctest.h>

#include <cmath>
#include <set>

#include <boost/math/distributions/fisher_f.hpp>

#include "sirenlab/errors.hpp"
#include "sirenlab/experiments.hpp"
#include "test_support.hpp"

using namespace sirenlab;

namespace {

TrainRecord fake_record(int width, int depth, double gamma, int size, double psnr, std::uint64_t seed) {
    TrainRecord r;
    r.config = SirenConfig::make(width, depth, gamma, size, seed, 100);
    r.max_psnr = psnr;
    r.id = job_id(r.config, "img");
    return r;
}

ArchLadder uniform_ladder(const std::vector<double>& rmses) {
    ArchLadder l;
    for (std::size_t i = 0; i < rmses.size(); ++i) {
        LadderRung r;
        r.config = SirenConfig::make(4 + 4 * static_cast<int>(i), 3, 0.06, 16, 0, 50);
        r.size_bits = 16.0 * static_cast<double>(param_count(r.config.width, 3));
        r.rmse = rmses[i];
        l.rungs.push_back(r);
    }
    return l;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("bootstrap: a dominant depth collapses the interval") {
    std::map<int, std::vector<double>> d = {{4, {20, 21, 20.5}}, {6, {30, 30.2, 29.9}}, {8, {25, 26}}};
    const DepthInterval iv = bootstrap_depth_selection(d, 2000, 1);
    CHECK(iv.lo == 6);
    CHECK(iv.hi == 6);
    CHECK(iv.frequency.at(6) == 1.0);
    CHECK_THROWS_AS(bootstrap_depth_selection(d, 999), ArgumentError);
    d[10] = {40};
    CHECK_THROWS_AS(bootstrap_depth_selection(d, 1000), ArgumentError);
}

TEST_CASE("bootstrap: identical distributions split evenly, ties go to the smaller depth") {
    // Interleaved samples: a draw from either depth beats the other exactly half the time.
    std::map<int, std::vector<double>> d = {{5, {28.1, 28.4, 28.5, 28.8}}, {9, {28.2, 28.3, 28.6, 28.7}}};
    const DepthInterval iv = bootstrap_depth_selection(d, 10000, 7);
    CHECK(std::abs(iv.frequency.at(5) - 0.5) < 0.03);
    CHECK(iv.frequency.at(5) + iv.frequency.at(9) == doctest::Approx(1.0));
    CHECK(iv.lo == 5);
    CHECK(iv.hi == 9);

    const DepthInterval tie = bootstrap_depth_selection({{3, {30, 30}}, {7, {30, 30}}}, 1000, 3);
    CHECK(tie.frequency.at(3) == 1.0);

    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::map<int, std::vector<double>> r;
        for (int depth : {2, 3, 5, 8, 12})
            for (int s = 0; s < 4; ++s) r[depth].push_back(rng.normal(30, 1));
        const DepthInterval x = bootstrap_depth_selection(r, 1000, static_cast<std::uint64_t>(trial));
        CHECK(r.count(x.lo) == 1);
        CHECK(r.count(x.hi) == 1);
        CHECK(x.lo <= x.hi);
    }
}

TEST_CASE("power law: planted line, shift invariance, degenerate input") {
    std::vector<std::pair<double, double>> pts;
    for (double p : {1e3, 4e3, 1.6e4, 6.4e4}) pts.emplace_back(p, 2.0 * std::log2(p) + 5.0);
    const PowerLawFit f = power_law_fit(pts);
    CHECK(f.slope_per_doubling == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(5.0));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK(f.implied_manifold_dim == doctest::Approx(3.0103).epsilon(1e-4));
    CHECK(f(1024.0) == doctest::Approx(25.0));

    Rng rng(2);
    std::vector<std::pair<double, double>> noisy, moved;
    for (int i = 0; i < 12; ++i) {
        const double p = std::exp(rng.uniform(5, 12));
        const double y = 1.7 * std::log2(p) + rng.normal(0, 0.5);
        noisy.emplace_back(p, y);
        moved.emplace_back(p, y + 4.25);
    }
    const PowerLawFit a = power_law_fit(noisy), b = power_law_fit(moved);
    CHECK(b.slope_per_doubling == doctest::Approx(a.slope_per_doubling).epsilon(1e-12));
    CHECK(b.intercept == doctest::Approx(a.intercept + 4.25));
    CHECK(b.r2 == doctest::Approx(a.r2));
    CHECK(a.r2 <= 1.0);

    CHECK_THROWS_AS(power_law_fit({{100, 20}, {100, 21}, {200, 22}}), ArgumentError);

    std::vector<TrainRecord> recs;
    for (int w : {8, 16, 32})
        recs.push_back(fake_record(w, 4, 0.06, 32, 2.0 * std::log2(static_cast<double>(param_count(w, 4))) + 1.0, 0));
    CHECK(power_law_fit(recs).slope_per_doubling == doctest::Approx(2.0));
}

TEST_CASE("confident search: hand example and degenerate confidence") {
    const std::vector<double> preds = {28.0, 29.5, 31.2, 33.0};
    CHECK(select_rung(preds, std::vector<double>(4, 0.5), 30.0) == 2);
    CHECK(select_rung(preds, std::vector<double>(4, 0.0), 30.0) == 2);
    CHECK(select_rung(preds, std::vector<double>(4, 0.0), 29.0) == 1);
    try {
        select_rung(preds, std::vector<double>(4, 0.5), 40.0);
        FAIL("expected InfeasibleError");
    } catch (const InfeasibleError& e) {
        CHECK(std::string(e.what()).find("rung 3") != std::string::npos);
    }
}

TEST_CASE("confident search is monotone in RMSE and in target") {
    Rng rng(1000);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(2, 30));
        std::vector<double> preds, tight, loose;
        double p = rng.uniform(15, 25);
        for (int i = 0; i < n; ++i) {
            p += rng.uniform(0, 2);
            preds.push_back(p);
            const double r = rng.uniform(0.1, 2);
            tight.push_back(r);
            loose.push_back(r + rng.uniform(0, 1));
        }
        const double target = rng.uniform(15, p);
        auto pick = [&](const std::vector<double>& rm, double t) -> std::optional<std::size_t> {
            try {
                return select_rung(preds, rm, t);
            } catch (const InfeasibleError&) {
                return std::nullopt;
            }
        };
        const auto a = pick(tight, target), b = pick(loose, target);
        if (b) {
            REQUIRE(a.has_value());
            CHECK(*a <= *b);
        }
        const auto c = pick(tight, target + rng.uniform(0, 3));
        if (c) {
            REQUIRE(a.has_value());
            CHECK(*a <= *c);
        }
        if (a) CHECK(preds[*a] - 2 * tight[*a] >= target);
    }
}

TEST_CASE("RMSE interpolation between anchors") {
    ArchLadder l;
    for (double bits : {1e5, 1.5e5, 2e5, 3e5}) {
        LadderRung r;
        r.size_bits = bits;
        l.rungs.push_back(r);
    }
    l.rungs[0].rmse = 0.5;
    l.rungs[0].anchor = true;
    l.rungs[2].rmse = 1.0;
    l.rungs[2].anchor = true;
    interpolate_rmse(l);
    CHECK(l.rungs[1].rmse == doctest::Approx(0.75));
    CHECK(l.rungs[3].rmse == doctest::Approx(1.0));
    CHECK(l.calibrated());

    const auto idx = anchor_indices(30, 5);
    CHECK(idx.size() == 5);
    CHECK(idx.front() == 0);
    CHECK(idx.back() == 29);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    CHECK(anchor_indices(3, 5).size() == 3);
}

TEST_CASE("ladder from records: strictly increasing sizes, best architecture per bucket") {
    std::vector<TrainRecord> recs;
    Rng rng(5);
    for (int w = 4; w <= 40; w += 3)
        for (int d : {3, 5})
            for (int s = 0; s < 3; ++s)
                recs.push_back(fake_record(w, d, 0.06, 32, 20 + 0.2 * w - 0.5 * d + rng.normal(0, 0.1), s));
    recs.push_back(fake_record(50, 3, 0.06, 32, 10, 0));
    recs.back().status = RunStatus::Failed;
    std::vector<std::string> warnings;
    const ArchLadder l = build_ladder(recs, 10, &warnings);
    REQUIRE(l.rungs.size() >= 5);
    for (std::size_t i = 1; i < l.rungs.size(); ++i) CHECK(l.rungs[i].size_bits > l.rungs[i - 1].size_bits);
    for (const auto& r : l.rungs) {
        CHECK(r.n_records == 3);
        CHECK(r.size_bits == 16.0 * static_cast<double>(param_count(r.config.width, r.config.depth)));
    }
    CHECK_NOTHROW(l.validate());
    CHECK_FALSE(l.calibrated());

    ArchLadder bad = l;
    std::swap(bad.rungs[0], bad.rungs[1]);
    CHECK_THROWS_AS(bad.validate(), Error);

    const auto dir = testsupport::temp_dir("ladder");
    ArchLadder cal = l;
    for (auto& r : cal.rungs) r.rmse = 0.5;
    save_ladder(cal, dir / "l.json");
    const ArchLadder back = load_ladder(dir / "l.json");
    REQUIRE(back.rungs.size() == cal.rungs.size());
    CHECK(back.rungs[2].config == cal.rungs[2].config);
    CHECK(back.calibrated());
}

TEST_CASE("anchor calibration RMSE is the RMSE of its predictions") {
    std::vector<ImageTensor> imgs;
    for (std::uint64_t s = 0; s < 5; ++s) imgs.push_back(synthetic_photo(16, 40 + s));
    ArchLadder l = uniform_ladder({-1, -1, -1});
    for (auto& r : l.rungs) r.config = SirenConfig::make(r.config.width, 3, 0.1, 12, 0, 30);
    const PsnrPredictor pred = [](const SirenConfig& c, const ImageTensor& img) {
        return 15.0 + 0.1 * c.width + 0.01 * static_cast<double>(img.height);
    };
    std::vector<AnchorCalibration> details;
    const ArchLadder cal = calibrate_rmse(l, imgs, pred, {}, 2, &details);
    REQUIRE(details.size() == 2);
    for (const auto& d : details) {
        CHECK(d.actual.size() == 5);
        CHECK(d.rmse == rmse(d.predicted, d.actual));
        CHECK(cal.rungs[d.rung].rmse == d.rmse);
    }
    CHECK(cal.calibrated());
    CHECK_THROWS_AS(calibrate_rmse(l, {imgs[0]}, pred), InsufficientDataError);

    const SearchResult sr = confident_search(imgs[0], 0.0, cal, pred);
    CHECK(sr.rung == 0);
    CHECK(sr.lower == doctest::Approx(sr.predicted - 2 * sr.rmse));
    CHECK(sr.upper == doctest::Approx(sr.predicted + 2 * sr.rmse));
    CHECK_THROWS_AS(confident_search(imgs[0], 100.0, cal, pred), InfeasibleError);
}

TEST_CASE("attribution statistics") {
    const Attribution a = attribution_from_samples({30.0, 30.4, 29.6, 30.2, 29.8}, {30.0, 30.4, 29.6, 30.2, 29.8});
    CHECK(a.f_statistic == doctest::Approx(1.0));
    CHECK(a.p_value == doctest::Approx(0.5));
    CHECK(a.attribution == 0.0);

    const std::vector<double> all = {30.0, 31.0, 29.0, 30.5, 29.5, 30.8};
    const std::vector<double> fixed = {30.0, 30.2, 29.9, 30.1, 30.05, 29.95};
    const Attribution b = attribution_from_samples(all, fixed);
    const double f = sample_variance(all) / sample_variance(fixed);
    CHECK(b.f_statistic == doctest::Approx(f));
    boost::math::fisher_f dist(5, 5);
    CHECK(b.p_value == doctest::Approx(boost::math::cdf(boost::math::complement(dist, f))));
    CHECK(b.attribution == doctest::Approx(1.0 - 1.0 / f));
    CHECK(b.std_all == doctest::Approx(std::sqrt(sample_variance(all))));

    const Attribution c = attribution_from_samples(all, std::vector<double>(6, 30.0));
    CHECK(c.attribution == 1.0);
    CHECK(c.p_value == 0.0);
    CHECK_THROWS_AS(attribution_from_samples(std::vector<double>(6, 30.0), fixed), UndefinedMetricError);
}

TEST_CASE("attribution by construction: only the first layer varies") {
    const ImageTensor img = synthetic_photo(10, 3);
    const auto c = SirenConfig::make(6, 3, 0.1, 10, 21, 40);
    InitPolicy shared_rest;
    shared_rest.rest_seed = 777;
    const Attribution a = first_layer_attribution(c, img, 5, {}, shared_rest);
    CHECK(a.std_fixed_first == 0.0);
    CHECK(a.attribution == 1.0);
    CHECK(a.std_all > 0.0);
    CHECK_THROWS_AS(first_layer_attribution(c, img, 4), ArgumentError);
}

TEST_CASE("seed variation: degenerate config has zero spread; order does not matter") {
    const ImageTensor img = synthetic_photo(10, 4);
    InitPolicy frozen;
    frozen.first_layer_seed = 5;
    frozen.zero_rest = true;
    const SeedVariation z = seed_variation(SirenConfig::make(6, 3, 0.1, 10, 0, 0), img, 4, {}, frozen);
    CHECK(z.std == 0.0);
    CHECK(z.seeds.size() == 4);
    CHECK(std::set<std::uint64_t>(z.seeds.begin(), z.seeds.end()).size() == 4);

    const SeedVariation v = seed_variation(SirenConfig::make(6, 3, 0.1, 10, 0, 30), img, 4);
    std::vector<double> rev(v.psnrs.rbegin(), v.psnrs.rend());
    CHECK(std::sqrt(sample_variance(rev)) == doctest::Approx(v.std).epsilon(1e-12));
    CHECK(v.std > 0.0);
    CHECK_THROWS_AS(seed_variation(SirenConfig::make(6, 3, 0.1, 10, 0, 30), img, 1), ArgumentError);
}

TEST_CASE("cached study runs are reused") {
    const ImageTensor img = synthetic_photo(10, 6);
    const auto dir = testsupport::temp_dir("cache");
    ExperimentRunner runner;
    runner.cache_dir = dir;
    const std::vector<Job> jobs = {{SirenConfig::make(5, 3, 0.1, 10, 1, 20), img.id},
                                   {SirenConfig::make(5, 3, 0.1, 10, 2, 20), img.id}};
    const auto a = train_jobs(runner, "t", jobs, {img});
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".jsonl") ++files;
    CHECK(files == 1);
    const auto b = train_jobs(runner, "t", jobs, {img});
    REQUIRE(a.size() == 2);
    CHECK(a[0].same_result(b[0]));
    CHECK(b[1].wallclock_seconds == a[1].wallclock_seconds);

    InitPolicy other;
    other.zero_rest = true;
    train_jobs(runner, "t", jobs, {img}, other);
    files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".jsonl") ++files;
    CHECK(files == 2);
}

TEST_CASE("first-layer transfer bookkeeping") {
    const std::vector<ImageTensor> imgs = {synthetic_photo(8, 1), synthetic_photo(8, 2)};
    const PeTransfer t = pe_transfer(SirenConfig::make(5, 3, 0.1, 8, 0, 20), imgs, 5, 2);
    REQUIRE(t.rows.size() == 4);
    double same = 0, cross = 0;
    for (const auto& r : t.rows) (r.source == r.target ? same : cross) += r.gain() / 2.0;
    CHECK(t.delta_same == doctest::Approx(same));
    CHECK(t.delta_cross == doctest::Approx(cross));
    CHECK_THROWS_AS(pe_transfer(SirenConfig::make(5, 3, 0.1, 8, 0, 20), {imgs[0]}, 5, 2), ArgumentError);
}

TEST_CASE("codec correlation needs enough records") {
    std::vector<TrainRecord> few(5, fake_record(8, 3, 0.06, 16, 25, 0));
    CHECK_THROWS_AS(codec_correlation_study(few, {}), InsufficientDataError);
}

}  // TEST_SUITE
