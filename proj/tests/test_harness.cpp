#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sirenlab/errors.hpp"
#include "sirenlab/harness.hpp"
#include "test_support.hpp"

using namespace sirenlab;
using testsupport::chi_square_uniform_p;
using testsupport::ks_uniform_p;

namespace {

std::vector<ImageTensor> tiny_images() { return {synthetic_photo(12, 1), synthetic_photo(12, 2)}; }

std::vector<Job> tiny_jobs(const std::vector<ImageTensor>& imgs) {
    std::vector<Job> jobs;
    for (int k = 0; k < 4; ++k)
        jobs.push_back({SirenConfig::make(4 + k, 3, 0.1, 12, static_cast<std::uint64_t>(k), 60),
                        imgs[static_cast<std::size_t>(k) % imgs.size()].id});
    return jobs;
}

bool same_records(const Manifest& a, const Manifest& b) {
    if (a.records.size() != b.records.size()) return false;
    for (std::size_t i = 0; i < a.records.size(); ++i)
        if (!a.records[i].same_result(b.records[i])) return false;
    return true;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("width from bpp") {
    double root = 0;
    CHECK(width_for_bpp(0.9, 8, 224, &root) == 21);
    CHECK(root == doctest::Approx((-12.0 + std::sqrt(67809.6)) / 12.0));
    // Linear case: 6w + 3 = P.
    CHECK(width_for_bpp(16.0 * 603.0 / (100.0 * 100.0), 2, 100, &root) == 100);
    CHECK(root == doctest::Approx(100.0));
    for (int d = 2; d <= 12; ++d)
        for (int w : {2, 7, 28, 90}) {
            const double bpp = siren_bpp(w, d, 256);
            CHECK(width_for_bpp(bpp, d, 256) == w);
        }
}

TEST_CASE("sampled marginals match the sampling distributions") {
    SamplingSpec spec;
    Rng rng(12345);
    const ImageTensor img = constant_image(256, 0.5, 0.5, 0.5);
    std::vector<double> ug, ub;
    std::vector<std::size_t> depth_counts(11, 0), size_counts(4, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        double bpp = 0;
        const SirenConfig c = sample_config(spec, rng, img, &bpp);
        CHECK(c.image_size == 256);
        CHECK(c.omega0 == doctest::Approx(c.gamma * 256));
        CHECK(c.width >= 2);
        ug.push_back((std::log(c.gamma) - std::log(0.02)) / (std::log(0.12) - std::log(0.02)));
        ub.push_back((std::log(bpp) - std::log(0.5)) / (std::log(9.0) - std::log(0.5)));
        ++depth_counts[static_cast<std::size_t>(c.depth - 2)];
        const int s = sample_image_size(spec, rng);
        REQUIRE((s >= 112 && s <= 512));
        ++size_counts[static_cast<std::size_t>(std::min(3, (s - 112) * 4 / 401))];
    }
    CHECK(ks_uniform_p(ug) > 0.01);
    CHECK(ks_uniform_p(ub) > 0.01);
    CHECK(chi_square_uniform_p(depth_counts) > 0.01);
    CHECK(chi_square_uniform_p(size_counts) > 0.01);
}

TEST_CASE("the KS oracle rejects a skewed sample") {
    Rng rng(1);
    std::vector<double> skew;
    for (int i = 0; i < 10000; ++i) skew.push_back(std::pow(rng.uniform(), 1.1));
    CHECK(ks_uniform_p(skew) < 0.01);
}

TEST_CASE("sample_config rejects out-of-range images and bad specs") {
    SamplingSpec spec;
    Rng rng(0);
    CHECK_THROWS_AS(sample_config(spec, rng, constant_image(64, 0, 0, 0)), ArgumentError);
    spec.gamma_min = 0.5;
    CHECK_THROWS_AS(spec.validate(), ArgumentError);
    SamplingSpec tiny;
    tiny.size_min = tiny.size_max = 16;
    tiny.bpp_min = tiny.bpp_max = 0.01;
    CHECK_THROWS_AS(sample_config(tiny, rng, constant_image(16, 0, 0, 0)), RangeError);
}

TEST_CASE("records round-trip through JSON bit-identically") {
    const auto imgs = tiny_images();
    const Manifest m = run_jobs(tiny_jobs(imgs), imgs, {});
    for (const auto& r : m.records) {
        const TrainRecord back = record_from_json(record_to_json(r));
        CHECK(back.same_result(r));
        CHECK(back.wallclock_seconds == r.wallclock_seconds);
        CHECK(record_to_json(back) == record_to_json(r));
    }
    const auto dir = testsupport::temp_dir("manifest_rt");
    Manifest m2 = m;
    m2.meta.corpus_hash = corpus_hash(imgs);
    save_manifest(m2, dir / "m.jsonl");
    const Manifest loaded = load_manifest(dir / "m.jsonl");
    CHECK(loaded.meta == m2.meta);
    CHECK(same_records(loaded, m2));
}

TEST_CASE("worker count does not change results") {
    const auto imgs = tiny_images();
    const auto jobs = tiny_jobs(imgs);
    RunOptions one, many;
    many.workers = 4;
    const Manifest a = run_jobs(jobs, imgs, one), b = run_jobs(jobs, imgs, many);
    CHECK(same_records(a, b));
    for (std::size_t i = 0; i < jobs.size(); ++i) CHECK(a.records[i].id == job_id(jobs[i].config, jobs[i].image_id));
}

TEST_CASE("kill after 2 of 4 jobs, then resume, equals an uninterrupted run") {
    const auto imgs = tiny_images();
    const auto jobs = tiny_jobs(imgs);
    const auto dir = testsupport::temp_dir("resume");

    RunOptions full;
    full.manifest_path = dir / "full.jsonl";
    full.workers = 2;
    const Manifest whole = run_jobs(jobs, imgs, full);

    RunOptions crash;
    crash.manifest_path = dir / "part.jsonl";
    crash.max_new_jobs = 2;
    run_jobs(jobs, imgs, crash);
    CHECK(load_manifest(dir / "part.jsonl").records.size() == 2);
    // A torn append at the end is dropped on reload.
    std::ofstream(dir / "part.jsonl", std::ios::app) << "{\"kind\":\"record\",\"id\":\"tor";

    int trained = 0;
    RunOptions resume;
    resume.manifest_path = dir / "part.jsonl";
    resume.workers = 3;
    resume.on_record = [&](const TrainRecord&, std::size_t, std::size_t) { ++trained; };
    const Manifest resumed = run_jobs(jobs, imgs, resume);
    CHECK(trained == 2);
    CHECK(same_records(resumed, whole));
    CHECK(same_records(load_manifest(dir / "part.jsonl"), load_manifest(dir / "full.jsonl")));
    for (const auto& r : resumed.records) CHECK(std::filesystem::exists(resumed.blob_path(r)));
    const Manifest back = load_manifest(dir / "part.jsonl");
    CHECK(back.load_weights(back.records[0]).width() == jobs[0].config.width);
}

TEST_CASE("failed jobs are recorded, others proceed; empty job list") {
    const auto imgs = tiny_images();
    auto jobs = tiny_jobs(imgs);
    jobs[1].config = SirenConfig::make(4, 3, 0.1, 16, 9, 10);  // size does not match the 12px image
    const Manifest m = run_jobs(jobs, imgs, {});
    CHECK(m.records[1].status == RunStatus::Failed);
    CHECK_FALSE(m.records[1].message.empty());
    CHECK(m.records[0].status == RunStatus::Ok);
    CHECK(m.ok_count() == 3);

    CHECK(run_jobs({}, imgs, {}).records.empty());
    jobs.push_back(jobs[0]);
    CHECK_THROWS_AS(run_jobs(jobs, imgs, {}), ArgumentError);
}

TEST_CASE("summaries") {
    Manifest m;
    TrainRecord r;
    r.max_psnr = 30.0;
    m.records.push_back(r);
    Summary s = summarize(m);
    CHECK(s.mean_psnr == 30.0);
    CHECK(s.std_psnr == 0.0);

    m.records[0].max_psnr = 20.0;
    r.max_psnr = 40.0;
    m.records.push_back(r);
    r.status = RunStatus::Failed;
    m.records.push_back(r);
    s = summarize(m, 5.0);
    CHECK(s.n == 2);
    CHECK(s.failed == 1);
    CHECK(s.mean_psnr == 30.0);
    CHECK(s.std_psnr == 10.0);
    CHECK(s.histogram.lo == 20.0);
    CHECK(s.histogram.counts.front() == 1);
    CHECK(s.histogram.counts.back() == 1);

    const auto dir = testsupport::temp_dir("hist");
    write_histogram_csv(s, dir / "h.csv");
    CHECK(slurp(dir / "h.csv").find("20") != std::string::npos);

    Manifest bad;
    bad.records.push_back(r);
    CHECK_THROWS_AS(summarize(bad), InsufficientDataError);
}

TEST_CASE("corpus hash ignores order") {
    const auto imgs = tiny_images();
    CHECK(corpus_hash(imgs) == corpus_hash({imgs[1], imgs[0]}));
    CHECK(corpus_hash(imgs) != corpus_hash({imgs[0]}));
}

}  // TEST_SUITE
