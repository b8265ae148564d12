#include "sirenlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "sirenlab/csv.hpp"
#include "sirenlab/errors.hpp"

namespace sirenlab {

using nlohmann::json;

void SamplingSpec::validate() const {
    if (size_min < 1 || size_max < size_min) throw ArgumentError("sampling spec: bad image size range");
    if (depth_min < 2 || depth_max < depth_min) throw ArgumentError("sampling spec: bad depth range");
    if (!(bpp_min > 0) || bpp_max < bpp_min) throw ArgumentError("sampling spec: bad bpp range");
    if (!(gamma_min > 0) || gamma_max < gamma_min) throw ArgumentError("sampling spec: bad gamma range");
    if (steps < 0) throw ArgumentError("sampling spec: steps must be >= 0");
    if (!(learning_rate > 0)) throw ArgumentError("sampling spec: learning rate must be > 0");
}

int width_for_bpp(double bpp, int depth, int image_size, double* root) {
    if (depth < 2) throw ArgumentError("width_for_bpp: depth must be >= 2");
    const double target = bpp * static_cast<double>(image_size) * image_size / 16.0;
    const double a = depth - 2, b = depth + 4, c = 3.0 - target;
    const double w = a == 0.0 ? -c / b : (-b + std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
    if (root) *root = w;
    return static_cast<int>(std::lround(w));
}

int sample_image_size(const SamplingSpec& spec, Rng& rng) {
    return static_cast<int>(rng.uniform_int(spec.size_min, spec.size_max));
}

SirenConfig sample_config(const SamplingSpec& spec, Rng& rng, const ImageTensor& image, double* target_bpp) {
    spec.validate();
    if (!image.square()) throw ArgumentError("sample_config: image must be square");
    const int size = image.width;
    if (size < spec.size_min || size > spec.size_max)
        throw ArgumentError("sample_config: image side " + std::to_string(size) + " outside the sampling range");
    const int depth = static_cast<int>(rng.uniform_int(spec.depth_min, spec.depth_max));
    const double gamma = rng.log_uniform(spec.gamma_min, spec.gamma_max);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const double bpp = rng.log_uniform(spec.bpp_min, spec.bpp_max);
        const int width = width_for_bpp(bpp, depth, size);
        if (width < 2) continue;
        if (target_bpp) *target_bpp = bpp;
        return SirenConfig::make(width, depth, gamma, size, rng(), spec.steps, spec.learning_rate);
    }
    throw RangeError("sample_config: no bpp in [" + format_double(spec.bpp_min) + ", " + format_double(spec.bpp_max) +
                     "] gives width >= 2 at depth " + std::to_string(depth) + ", size " + std::to_string(size));
}

// --- Manifest -------------------------------------------------------------

const TrainRecord* Manifest::find(const std::string& id) const {
    for (const auto& r : records)
        if (r.id == id) return &r;
    return nullptr;
}

std::filesystem::path Manifest::blob_path(const TrainRecord& r) const {
    if (blob_dir.empty() || r.best_weights_ref.empty())
        throw IoError("record " + r.id + " has no weight blob");
    return blob_dir / r.best_weights_ref;
}

SirenWeights Manifest::load_weights(const TrainRecord& r) const { return dequantize(read_blob(blob_path(r))); }

std::size_t Manifest::ok_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const TrainRecord& r) { return r.status == RunStatus::Ok; }));
}

std::filesystem::path blob_dir_for(const std::filesystem::path& manifest_path) {
    return manifest_path.string() + ".blobs";
}

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Non-finite doubles are stored as the strings "inf", "-inf", "nan".
json num(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

double get_num(const json& j) {
    if (j.is_string()) return parse_double(j.get<std::string>());
    return j.get<double>();
}

json spec_to_json(const SamplingSpec& s) {
    return {{"size_min", s.size_min},   {"size_max", s.size_max},   {"depth_min", s.depth_min},
            {"depth_max", s.depth_max}, {"bpp_min", s.bpp_min},     {"bpp_max", s.bpp_max},
            {"gamma_min", s.gamma_min}, {"gamma_max", s.gamma_max}, {"steps", s.steps},
            {"learning_rate", s.learning_rate}};
}

SamplingSpec spec_from_json(const json& j) {
    SamplingSpec s;
    s.size_min = j.at("size_min");
    s.size_max = j.at("size_max");
    s.depth_min = j.at("depth_min");
    s.depth_max = j.at("depth_max");
    s.bpp_min = j.at("bpp_min");
    s.bpp_max = j.at("bpp_max");
    s.gamma_min = j.at("gamma_min");
    s.gamma_max = j.at("gamma_max");
    s.steps = j.at("steps");
    s.learning_rate = j.at("learning_rate");
    return s;
}

std::string meta_to_json(const ManifestMeta& m) {
    return json{{"kind", "meta"}, {"code_version", m.code_version}, {"corpus_hash", m.corpus_hash},
                {"spec", spec_to_json(m.spec)}}
        .dump();
}

}  // namespace

std::string job_id(const SirenConfig& c, const std::string& image_id) {
    std::ostringstream key;
    key << c.width << '|' << c.depth << '|' << format_double(c.omega0) << '|' << format_double(c.gamma) << '|'
        << c.image_size << '|' << c.seed << '|' << c.steps << '|' << format_double(c.learning_rate) << '|'
        << image_id;
    return hex16(fnv1a(key.str()));
}

std::string corpus_hash(const std::vector<ImageTensor>& images) {
    std::vector<std::string> ids;
    for (const auto& img : images) ids.push_back(img.id);
    std::sort(ids.begin(), ids.end());
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& id : ids) h = fnv1a(id + ";", h);
    return hex16(h);
}

std::string record_to_json(const TrainRecord& r) {
    const SirenConfig& c = r.config;
    json curve = json::array();
    for (const auto& p : r.loss_curve) curve.push_back({p.step, num(p.psnr)});
    json j = {{"kind", "record"},
              {"id", r.id},
              {"image_id", r.image_id},
              {"config",
               {{"width", c.width},
                {"depth", c.depth},
                {"omega0", c.omega0},
                {"gamma", c.gamma},
                {"image_size", c.image_size},
                {"seed", c.seed},
                {"steps", c.steps},
                {"learning_rate", c.learning_rate}}},
              {"max_psnr", num(r.max_psnr)},
              {"argmax_step", r.argmax_step},
              {"curve", std::move(curve)},
              {"weights", r.best_weights_ref},
              {"wallclock_seconds", r.wallclock_seconds},
              {"status", to_string(r.status)},
              {"message", r.message}};
    return j.dump();
}

TrainRecord record_from_json(const std::string& line) {
    try {
        const json j = json::parse(line);
        if (j.at("kind") != "record") throw IoError("manifest line is not a record");
        TrainRecord r;
        r.id = j.at("id");
        r.image_id = j.at("image_id");
        const json& c = j.at("config");
        r.config.width = c.at("width");
        r.config.depth = c.at("depth");
        r.config.omega0 = c.at("omega0");
        r.config.gamma = c.at("gamma");
        r.config.image_size = c.at("image_size");
        r.config.seed = c.at("seed");
        r.config.steps = c.at("steps");
        r.config.learning_rate = c.at("learning_rate");
        r.max_psnr = get_num(j.at("max_psnr"));
        r.argmax_step = j.at("argmax_step");
        for (const auto& p : j.at("curve")) r.loss_curve.push_back({p.at(0).get<int>(), get_num(p.at(1))});
        r.best_weights_ref = j.at("weights");
        r.wallclock_seconds = j.at("wallclock_seconds");
        r.status = run_status_from_string(j.at("status"));
        r.message = j.at("message");
        return r;
    } catch (const json::exception& e) {
        throw IoError(std::string("bad manifest record: ") + e.what());
    }
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
        out << meta_to_json(m.meta) << '\n';
        for (const auto& r : m.records) out << record_to_json(r) << '\n';
        if (!out) throw IoError("write failed for manifest '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    bool last_complete = true;
    while (std::getline(in, line)) {
        last_complete = !in.eof();
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) throw IoError("empty manifest '" + path.string() + "'");

    Manifest m;
    m.blob_dir = blob_dir_for(path);
    try {
        const json meta = json::parse(lines[0]);
        if (meta.at("kind") != "meta") throw IoError("manifest '" + path.string() + "' lacks a meta line");
        m.meta.code_version = meta.at("code_version");
        m.meta.corpus_hash = meta.at("corpus_hash");
        m.meta.spec = spec_from_json(meta.at("spec"));
    } catch (const json::exception& e) {
        throw IoError("manifest '" + path.string() + "': bad meta line: " + e.what());
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        try {
            m.records.push_back(record_from_json(lines[i]));
        } catch (const IoError&) {
            if (i + 1 == lines.size() && !last_complete) break;  // interrupted append
            throw IoError("manifest '" + path.string() + "': malformed line " + std::to_string(i + 1));
        }
    }
    return m;
}

// --- Worker pool ----------------------------------------------------------

int default_workers() {
    if (const char* env = std::getenv("SIRENLAB_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<int>(v);
    }
    return 1;
}

Manifest run_jobs(const std::vector<Job>& jobs, const std::vector<ImageTensor>& images, const RunOptions& options) {
    if (options.workers < 1) throw ArgumentError("run_jobs: workers must be >= 1");
    std::unordered_map<std::string, const ImageTensor*> by_id;
    for (const auto& img : images) by_id.emplace(img.id, &img);

    std::vector<std::string> ids;
    std::unordered_set<std::string> seen;
    for (const auto& job : jobs) {
        if (!by_id.count(job.image_id)) throw ArgumentError("run_jobs: unknown image id " + job.image_id);
        ids.push_back(job_id(job.config, job.image_id));
        if (!seen.insert(ids.back()).second)
            throw ArgumentError("run_jobs: duplicate job " + ids.back() + " (same config and image)");
    }

    Manifest manifest;
    manifest.meta = options.meta;
    std::unordered_map<std::string, TrainRecord> done;
    std::ofstream append;
    if (options.manifest_path) {
        const auto& path = *options.manifest_path;
        manifest.blob_dir = blob_dir_for(path);
        std::filesystem::create_directories(manifest.blob_dir);
        if (std::filesystem::exists(path)) {
            Manifest existing = load_manifest(path);
            for (auto& r : existing.records) done.emplace(r.id, std::move(r));
        }
        // Rewrite what is known so far (drops a torn final line) and append from there.
        Manifest current = manifest;
        for (const auto& id : ids)
            if (auto it = done.find(id); it != done.end()) current.records.push_back(it->second);
        save_manifest(current, path);
        append.open(path, std::ios::app);
        if (!append) throw IoError("cannot append to manifest '" + path.string() + "'");
    }

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < jobs.size(); ++i)
        if (!done.count(ids[i])) pending.push_back(i);
    const bool truncated = options.max_new_jobs && *options.max_new_jobs < pending.size();
    if (truncated) pending.resize(*options.max_new_jobs);

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::size_t completed = done.size();

    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= pending.size()) return;
            const std::size_t i = pending[k];
            const Job& job = jobs[i];
            TrainRecord rec;
            try {
                TrainResult res = train(job.config, *by_id.at(job.image_id), options.train);
                rec = std::move(res.record);
                rec.id = ids[i];
                if (!res.best_weights.layers.empty() && !manifest.blob_dir.empty()) {
                    rec.best_weights_ref = rec.id + ".sirn";
                    write_blob(quantize_weights(res.best_weights), manifest.blob_dir / rec.best_weights_ref);
                }
            } catch (const std::exception& e) {
                rec = TrainRecord{};
                rec.id = ids[i];
                rec.config = job.config;
                rec.image_id = job.image_id;
                rec.max_psnr = std::nan("");
                rec.status = RunStatus::Failed;
                rec.message = e.what();
            }
            std::lock_guard lock(mu);
            if (append.is_open()) append << record_to_json(rec) << '\n' << std::flush;
            ++completed;
            if (options.on_record) options.on_record(rec, completed, jobs.size());
            done.emplace(rec.id, std::move(rec));
        }
    };

    const int n_threads = std::min<int>(options.workers, static_cast<int>(std::max<std::size_t>(pending.size(), 1)));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    append.close();

    for (const auto& id : ids)
        if (auto it = done.find(id); it != done.end()) manifest.records.push_back(it->second);
    if (options.manifest_path && !truncated) save_manifest(manifest, *options.manifest_path);
    return manifest;
}

// --- Summary --------------------------------------------------------------

Summary summarize(const Manifest& m, double bin_width) {
    if (!(bin_width > 0)) throw ArgumentError("summarize: bin width must be > 0");
    Summary s;
    std::vector<double> v;
    for (const auto& r : m.records) {
        if (r.status == RunStatus::Ok && std::isfinite(r.max_psnr))
            v.push_back(r.max_psnr);
        else if (r.status != RunStatus::Ok)
            ++s.failed;
    }
    if (v.empty()) throw InsufficientDataError("summarize: manifest has no successful records");
    s.n = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean_psnr = sum / static_cast<double>(s.n);
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean_psnr) * (x - s.mean_psnr);
    s.std_psnr = std::sqrt(ss / static_cast<double>(s.n));
    s.min_psnr = *std::min_element(v.begin(), v.end());
    s.max_psnr = *std::max_element(v.begin(), v.end());

    s.histogram.bin_width = bin_width;
    s.histogram.lo = std::floor(s.min_psnr / bin_width) * bin_width;
    const auto bins = static_cast<std::size_t>(std::floor((s.max_psnr - s.histogram.lo) / bin_width)) + 1;
    s.histogram.counts.assign(bins, 0);
    for (double x : v) {
        const auto b = static_cast<std::size_t>(std::floor((x - s.histogram.lo) / bin_width));
        ++s.histogram.counts[std::min(b, bins - 1)];
    }
    return s;
}

void write_histogram_csv(const Summary& s, const std::filesystem::path& path) {
    CsvWriter out(path, {"bin_lo", "bin_hi", "count"});
    for (std::size_t i = 0; i < s.histogram.counts.size(); ++i) {
        const double lo = s.histogram.lo + static_cast<double>(i) * s.histogram.bin_width;
        out.field(lo).field(lo + s.histogram.bin_width).field(s.histogram.counts[i]);
        out.end_row();
    }
}

}  // namespace sirenlab
