#pragma once

// Dataset generation: hyperparameter sampling, a deterministic worker pool
// for training jobs, and the JSON-lines manifest that stores the results.
//
// Manifest layout: `<path>` holds one JSON object per line. The first line is
// the metadata object ({"kind":"meta",...}); every following line is one
// TrainRecord ({"kind":"record",...}). Weight blobs live next to it in
// `<path>.blobs/<record id>.sirn`.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sirenlab/imaging.hpp"
#include "sirenlab/rng.hpp"
#include "sirenlab/siren.hpp"

namespace sirenlab {

struct SamplingSpec {
    int size_min = 112;
    int size_max = 512;
    int depth_min = 2;
    int depth_max = 12;
    double bpp_min = 0.5;  // log-uniform
    double bpp_max = 9.0;
    double gamma_min = 0.02;  // log-uniform
    double gamma_max = 0.12;
    int steps = 20000;
    double learning_rate = 1e-3;

    void validate() const;  // throws ArgumentError
    bool operator==(const SamplingSpec&) const = default;
};

// Width whose parameter count best matches `bpp` at 16 bits per parameter:
// nearest integer to the positive root of (d-2)w^2 + (d+4)w + 3 = bpp*size^2/16.
// Returns the unrounded root through `root` when non-null.
int width_for_bpp(double bpp, int depth, int image_size, double* root = nullptr);

// Image side drawn uniformly from [size_min, size_max].
int sample_image_size(const SamplingSpec& spec, Rng& rng);

// Samples depth, gamma and a target bpp for `image` (whose side must lie in
// [spec.size_min, spec.size_max]). A bpp that maps to a width below 2 is redrawn, up
// to 1000 times, after which RangeError is thrown. The seed is drawn from
// `rng` as well. The accepted target bpp is returned through `target_bpp`.
SirenConfig sample_config(const SamplingSpec& spec, Rng& rng, const ImageTensor& image,
                          double* target_bpp = nullptr);

struct ManifestMeta {
    SamplingSpec spec;
    std::string code_version = "sirenlab-1";
    std::string corpus_hash;
    bool operator==(const ManifestMeta&) const = default;
};

struct Manifest {
    ManifestMeta meta;
    std::vector<TrainRecord> records;
    std::filesystem::path blob_dir;  // empty for in-memory manifests

    const TrainRecord* find(const std::string& id) const;
    // Path of a record's weight blob; throws IoError when there is none.
    std::filesystem::path blob_path(const TrainRecord& r) const;
    SirenWeights load_weights(const TrainRecord& r) const;
    std::size_t ok_count() const;
};

std::filesystem::path blob_dir_for(const std::filesystem::path& manifest_path);

// Hash of the config and image id, 16 hex digits.
std::string job_id(const SirenConfig& config, const std::string& image_id);

// Corpus identity: hash over the sorted image ids.
std::string corpus_hash(const std::vector<ImageTensor>& images);

std::string record_to_json(const TrainRecord& r);
TrainRecord record_from_json(const std::string& line);

void save_manifest(const Manifest& m, const std::filesystem::path& path);
// Reads a manifest. A truncated final line (an interrupted append) is
// dropped; malformed lines elsewhere throw IoError.
Manifest load_manifest(const std::filesystem::path& path);

struct Job {
    SirenConfig config;
    std::string image_id;
};

struct RunOptions {
    int workers = 1;
    // When set, rows are appended here as jobs finish, blobs are written to
    // blob_dir_for(path), existing rows are reused by id, and the file is
    // rewritten in job order once every job is done.
    std::optional<std::filesystem::path> manifest_path;
    ManifestMeta meta;
    TrainOptions train;
    // Stop after this many newly trained jobs without the final rewrite.
    // Used to simulate an interrupted run.
    std::optional<std::size_t> max_new_jobs;
    std::function<void(const TrainRecord&, std::size_t done, std::size_t total)> on_record;
};

// Trains every job exactly once (jobs already present in the manifest are
// skipped) and returns records in job order. Results do not depend on the
// worker count. A job that throws is recorded with status Failed.
Manifest run_jobs(const std::vector<Job>& jobs, const std::vector<ImageTensor>& images, const RunOptions& options);

// Default worker count: SIRENLAB_WORKERS if set and valid, else 1.
int default_workers();

struct Histogram {
    double lo = 0.0;
    double bin_width = 1.0;
    std::vector<std::size_t> counts;
};

struct Summary {
    std::size_t n = 0;       // finite successful records
    std::size_t failed = 0;  // Failed or Divergent
    double mean_psnr = 0.0;
    double std_psnr = 0.0;  // population
    double min_psnr = 0.0;
    double max_psnr = 0.0;
    Histogram histogram;
};

// Population statistics of max PSNR over Ok records, with a histogram of
// `bin_width` dB bins aligned to multiples of the bin width.
// Throws InsufficientDataError when no record succeeded.
Summary summarize(const Manifest& m, double bin_width = 1.0);
void write_histogram_csv(const Summary& s, const std::filesystem::path& path);

}  // namespace sirenlab
