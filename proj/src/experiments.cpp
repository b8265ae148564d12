#include "sirenlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <boost/math/distributions/fisher_f.hpp>
#include <nlohmann/json.hpp>

#include "sirenlab/csv.hpp"
#include "sirenlab/errors.hpp"
#include "sirenlab/metrics.hpp"
#include "sirenlab/rng.hpp"
#include "sirenlab/svg_plot.hpp"

namespace sirenlab {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string policy_tag(const InitPolicy& p) {
    std::string s = p.first_layer == InitPolicy::FirstLayer::Classic ? "c" : "u";
    if (p.zero_rest) s += "z";
    s += p.first_layer_seed ? "f" + hex(*p.first_layer_seed) : "f-";
    s += p.rest_seed ? "r" + hex(*p.rest_seed) : "r-";
    return s;
}

// FNV-1a over the job ids, so each distinct job set gets its own cache file.
std::string job_set_tag(const std::vector<Job>& jobs) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& j : jobs)
        for (char c : job_id(j.config, j.image_id)) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
    return hex(h).substr(0, 8);
}

double sample_std(const std::vector<double>& v) { return std::sqrt(sample_variance(v)); }

void require_side(const ImageTensor& img, int size, const char* who) {
    if (img.height != size || img.width != size)
        throw ArgumentError(std::string(who) + ": image side must equal config.image_size");
}

// Resized copy unless the image already has the side.
ImageTensor at_size(const ImageTensor& img, int size) {
    if (img.height == size && img.width == size) return img;
    return center_crop_resize(img, size);
}

}  // namespace

std::vector<TrainRecord> train_jobs(const ExperimentRunner& runner, const std::string& tag,
                                    const std::vector<Job>& jobs, const std::vector<ImageTensor>& images,
                                    const InitPolicy& policy) {
    RunOptions opts;
    opts.workers = runner.workers;
    opts.train = runner.train;
    opts.train.init = policy;
    opts.meta.corpus_hash = corpus_hash(images);
    if (runner.cache_dir) {
        std::filesystem::create_directories(*runner.cache_dir);
        opts.manifest_path = *runner.cache_dir / (tag + "-" + policy_tag(policy) + "-" + job_set_tag(jobs) + ".jsonl");
    }
    Manifest m = run_jobs(jobs, images, opts);
    for (const auto& r : m.records)
        if (r.status == RunStatus::Failed) throw Error(tag + ": training job " + r.id + " failed: " + r.message);
    return std::move(m.records);
}

std::uint64_t study_seed(std::uint64_t base, std::uint64_t k) { return derive_seed(base ^ 0x5eed5eed5eedULL, k); }

// --- Dataset assembly -----------------------------------------------------

std::vector<ImageTensor> images_for_records(const std::vector<TrainRecord>& records,
                                            const std::vector<ImageTensor>& sources) {
    std::set<std::string> wanted;
    std::set<int> sizes;
    for (const auto& r : records) {
        wanted.insert(r.image_id);
        sizes.insert(r.config.image_size);
    }
    std::vector<ImageTensor> out;
    std::set<std::string> found;
    for (int size : sizes)
        for (const auto& src : sources) {
            ImageTensor img = at_size(src, size);
            if (wanted.count(img.id) && found.insert(img.id).second) out.push_back(std::move(img));
        }
    for (const auto& id : wanted)
        if (!found.count(id)) throw ArgumentError("no source image matches record image " + id);
    return out;
}

FeatureDataset feature_dataset(const std::vector<TrainRecord>& records, const std::vector<ImageTensor>& images) {
    std::unordered_map<std::string, const ImageTensor*> by_id;
    for (const auto& img : images) by_id.emplace(img.id, &img);
    std::unordered_map<std::string, std::vector<double>> feats;
    FeatureDataset out;
    for (const auto& r : records) {
        if (r.status != RunStatus::Ok || !std::isfinite(r.max_psnr)) continue;
        auto it = by_id.find(r.image_id);
        if (it == by_id.end()) throw ArgumentError("feature_dataset: missing image " + r.image_id);
        auto f = feats.find(r.image_id);
        if (f == feats.end()) f = feats.emplace(r.image_id, proxy_features(*it->second)).first;
        out.records.push_back(r);
        out.image_features.push_back(f->second);
    }
    return out;
}

std::vector<MlpRow> FeatureDataset::mlp_rows() const {
    std::vector<MlpRow> rows;
    for (std::size_t i = 0; i < records.size(); ++i)
        rows.push_back({records[i].config, image_features[i], records[i].max_psnr});
    return rows;
}

Eigen::MatrixXd FeatureDataset::gp_design() const {
    if (records.empty()) return {};
    const auto first = gp_features(records[0].config, image_features[0]);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(first.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto f = gp_features(records[i].config, image_features[i]);
        for (std::size_t j = 0; j < f.size(); ++j)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[j];
    }
    return X;
}

Eigen::VectorXd FeatureDataset::targets() const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i) y[static_cast<Eigen::Index>(i)] = records[i].max_psnr;
    return y;
}

double proxy_predict(const ProxyModel& m, const ImageTensor& image) {
    return m.predict(cap_psnr(rate_target_clamped(image, 24.0 / m.ratio, 0.002).psnr));
}

PsnrPredictor load_predictor(const std::filesystem::path& model_path) {
    switch (peek_model_kind(model_path)) {
        case ModelKind::Proxy: {
            const ProxyModel m = load_proxy_model(model_path);
            return [m](const SirenConfig&, const ImageTensor& img) { return proxy_predict(m, img); };
        }
        case ModelKind::Gp: {
            auto m = std::make_shared<const GpModel>(load_gp_model(model_path));
            return [m](const SirenConfig& c, const ImageTensor& img) {
                const auto f = gp_features(c, proxy_features(img));
                return gp_predict(*m, Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size())))
                    .mean;
            };
        }
        case ModelKind::Mlp: {
            auto m = std::make_shared<const FeatureMlp>(load_mlp_model(model_path));
            return [m](const SirenConfig& c, const ImageTensor& img) { return mlp_predict(*m, c, img); };
        }
        case ModelKind::Extrapolation:
            break;
    }
    throw ArgumentError("'" + model_path.string() + "' is an extrapolation model; it cannot predict from an image");
}

// --- Seed variation -------------------------------------------------------

SeedVariation seed_variation(const SirenConfig& config, const ImageTensor& image, int seeds,
                             const ExperimentRunner& runner, const InitPolicy& policy) {
    if (seeds < 2) throw ArgumentError("seed_variation: need at least 2 seeds");
    config.validate();
    require_side(image, config.image_size, "seed_variation");
    SeedVariation out;
    out.config = config;
    std::vector<Job> jobs;
    for (int k = 0; k < seeds; ++k) {
        SirenConfig c = config;
        c.seed = study_seed(config.seed, static_cast<std::uint64_t>(k));
        out.seeds.push_back(c.seed);
        jobs.push_back({c, image.id});
    }
    for (const auto& r : train_jobs(runner, "seed-variation", jobs, {image}, policy)) out.psnrs.push_back(r.max_psnr);
    out.std = sample_std(out.psnrs);
    out.mean = mean(out.psnrs);
    return out;
}

std::vector<SeedVariation> seed_variation_sweep(const SirenConfig& config, const ImageTensor& image,
                                                const std::vector<int>& widths, int seeds,
                                                const ExperimentRunner& runner) {
    std::vector<SeedVariation> out;
    for (int w : widths) {
        SirenConfig c = config;
        c.width = w;
        out.push_back(seed_variation(c, image, seeds, runner));
    }
    return out;
}

void write_seed_variation(const std::vector<SeedVariation>& rows, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        CsvWriter csv(out_dir / "seed_variation.csv", {"width", "depth", "seed", "max_psnr"});
        for (const auto& r : rows)
            for (std::size_t k = 0; k < r.psnrs.size(); ++k) {
                csv.field(r.config.width).field(r.config.depth).field(hex(r.seeds[k])).field(r.psnrs[k]);
                csv.end_row();
            }
    }
    CsvWriter csv(out_dir / "seed_variation_summary.csv", {"width", "depth", "n", "mean_psnr", "std_psnr"});
    Series s{"sample std", {}, {}, true, true};
    for (const auto& r : rows) {
        csv.field(r.config.width).field(r.config.depth).field(r.psnrs.size()).field(r.mean).field(r.std);
        csv.end_row();
        s.x.push_back(r.config.width);
        s.y.push_back(r.std);
    }
    write_svg({"PSNR spread over seeds", "width", "std of max PSNR (dB)", true, {s}}, out_dir / "seed_variation.svg");
}

// --- First-layer attribution ----------------------------------------------

Attribution attribution_from_samples(std::vector<double> psnrs_all, std::vector<double> psnrs_fixed) {
    if (psnrs_all.size() < 2 || psnrs_fixed.size() < 2)
        throw ArgumentError("first_layer_attribution: need at least 2 runs per group");
    Attribution a;
    a.psnrs_all = std::move(psnrs_all);
    a.psnrs_fixed = std::move(psnrs_fixed);
    const double var_all = sample_variance(a.psnrs_all);
    const double var_fixed = sample_variance(a.psnrs_fixed);
    if (var_all == 0.0)
        throw UndefinedMetricError("first_layer_attribution: PSNR variance over random seeds is zero");
    a.std_all = std::sqrt(var_all);
    a.std_fixed_first = std::sqrt(var_fixed);
    a.attribution = std::clamp(1.0 - var_fixed / var_all, 0.0, 1.0);
    if (var_fixed == 0.0) {
        a.f_statistic = std::numeric_limits<double>::infinity();
        a.p_value = 0.0;
    } else {
        a.f_statistic = var_all / var_fixed;
        const boost::math::fisher_f_distribution<double> f(static_cast<double>(a.psnrs_all.size() - 1),
                                                           static_cast<double>(a.psnrs_fixed.size() - 1));
        a.p_value = boost::math::cdf(boost::math::complement(f, a.f_statistic));
    }
    return a;
}

Attribution first_layer_attribution(const SirenConfig& config, const ImageTensor& image, int seeds,
                                    const ExperimentRunner& runner, const InitPolicy& base,
                                    std::optional<std::uint64_t> shared_first_seed) {
    if (seeds < 5) throw ArgumentError("first_layer_attribution: need at least 5 seeds");
    config.validate();
    require_side(image, config.image_size, "first_layer_attribution");
    std::vector<Job> jobs;
    for (int k = 0; k < seeds; ++k) {
        SirenConfig c = config;
        c.seed = study_seed(config.seed, static_cast<std::uint64_t>(k));
        jobs.push_back({c, image.id});
    }
    InitPolicy fixed = base;
    fixed.first_layer_seed = shared_first_seed.value_or(derive_seed(config.seed, 0xf1257ULL));

    std::vector<double> all, shared;
    for (const auto& r : train_jobs(runner, "first-layer", jobs, {image}, base)) all.push_back(r.max_psnr);
    for (const auto& r : train_jobs(runner, "first-layer", jobs, {image}, fixed)) shared.push_back(r.max_psnr);
    return attribution_from_samples(std::move(all), std::move(shared));
}

void write_attribution(const Attribution& a, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    Series all{"all layers random", {}, {}, false, true}, fixed{"first layer shared", {}, {}, false, true};
    {
        CsvWriter csv(out_dir / "first_layer.csv", {"group", "index", "max_psnr"});
        for (std::size_t k = 0; k < a.psnrs_all.size(); ++k) {
            csv.field("all").field(k).field(a.psnrs_all[k]);
            csv.end_row();
            all.x.push_back(static_cast<double>(k));
            all.y.push_back(a.psnrs_all[k]);
        }
        for (std::size_t k = 0; k < a.psnrs_fixed.size(); ++k) {
            csv.field("fixed_first").field(k).field(a.psnrs_fixed[k]);
            csv.end_row();
            fixed.x.push_back(static_cast<double>(k));
            fixed.y.push_back(a.psnrs_fixed[k]);
        }
    }
    CsvWriter csv(out_dir / "first_layer_summary.csv",
                  {"n", "std_all", "std_fixed_first", "attribution", "f_statistic", "p_value"});
    csv.field(a.psnrs_all.size()).field(a.std_all).field(a.std_fixed_first).field(a.attribution);
    csv.field(a.f_statistic).field(a.p_value);
    csv.end_row();
    write_svg({"Max PSNR per run", "run index", "max PSNR (dB)", false, {all, fixed}}, out_dir / "first_layer.svg");
}

// --- First-layer transfer -------------------------------------------------

PeTransfer pe_transfer(const SirenConfig& config, const std::vector<ImageTensor>& images, int n_seeds,
                       int retrain_seeds, const ExperimentRunner& runner) {
    if (images.size() < 2) throw ArgumentError("pe_transfer: need at least 2 images");
    if (n_seeds < 1 || retrain_seeds < 1) throw ArgumentError("pe_transfer: seed counts must be >= 1");
    config.validate();
    for (const auto& img : images) require_side(img, config.image_size, "pe_transfer");
    const std::size_t n = images.size();

    // Random-init runs: the baseline, and the pool the first layer is picked from.
    std::vector<Job> jobs;
    for (const auto& img : images)
        for (int k = 0; k < n_seeds; ++k) {
            SirenConfig c = config;
            c.seed = study_seed(config.seed, static_cast<std::uint64_t>(k));
            jobs.push_back({c, img.id});
        }
    const auto selection = train_jobs(runner, "pe-select", jobs, images);
    std::vector<double> baseline(n);
    std::vector<std::uint64_t> best_seed(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v;
        double best = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < n_seeds; ++k) {
            const auto& r = selection[i * static_cast<std::size_t>(n_seeds) + static_cast<std::size_t>(k)];
            v.push_back(r.max_psnr);
            if (r.max_psnr > best) {
                best = r.max_psnr;
                best_seed[i] = r.config.seed;
            }
        }
        baseline[i] = mean(v);
    }

    PeTransfer out;
    double same = 0.0, cross = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        InitPolicy policy;
        policy.first_layer_seed = best_seed[i];
        std::vector<Job> retrain;
        for (const auto& img : images)
            for (int m = 0; m < retrain_seeds; ++m) {
                SirenConfig c = config;
                c.seed = study_seed(config.seed, 100000 + static_cast<std::uint64_t>(m));
                retrain.push_back({c, img.id});
            }
        const auto recs = train_jobs(runner, "pe-retrain", retrain, images, policy);
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> v;
            for (int m = 0; m < retrain_seeds; ++m)
                v.push_back(recs[j * static_cast<std::size_t>(retrain_seeds) + static_cast<std::size_t>(m)].max_psnr);
            PeTransferRow row{i, j, best_seed[i], baseline[j], mean(v)};
            (i == j ? same : cross) += row.gain();
            out.rows.push_back(row);
        }
    }
    out.delta_same = same / static_cast<double>(n);
    out.delta_cross = cross / static_cast<double>(n * (n - 1));
    return out;
}

void write_pe_transfer(const PeTransfer& t, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    Series same{"same image", {}, {}, false, true}, cross{"other images", {}, {}, false, true};
    {
        CsvWriter csv(out_dir / "pe_transfer.csv",
                      {"source", "target", "first_layer_seed", "baseline_mean", "transfer_mean", "gain"});
        for (const auto& r : t.rows) {
            csv.field(r.source).field(r.target).field(hex(r.first_layer_seed)).field(r.baseline_mean);
            csv.field(r.transfer_mean).field(r.gain());
            csv.end_row();
            Series& s = r.source == r.target ? same : cross;
            s.x.push_back(static_cast<double>(r.source));
            s.y.push_back(r.gain());
        }
    }
    CsvWriter csv(out_dir / "pe_transfer_summary.csv", {"delta_same", "delta_cross"});
    csv.field(t.delta_same).field(t.delta_cross);
    csv.end_row();
    write_svg({"Gain from a selected first layer", "source image", "PSNR gain (dB)", false, {same, cross}},
              out_dir / "pe_transfer.svg");
}

// --- Bootstrap depth selection --------------------------------------------

DepthInterval bootstrap_depth_selection(const std::map<int, std::vector<double>>& psnrs_by_depth, int resamples,
                                        std::uint64_t seed) {
    if (psnrs_by_depth.empty()) throw ArgumentError("bootstrap_depth_selection: no depths");
    if (resamples < 1000) throw ArgumentError("bootstrap_depth_selection: need at least 1000 resamples");
    for (const auto& [d, v] : psnrs_by_depth)
        if (v.size() < 2)
            throw ArgumentError("bootstrap_depth_selection: depth " + std::to_string(d) + " has fewer than 2 PSNRs");

    Rng rng(seed);
    std::vector<int> picks;
    picks.reserve(static_cast<std::size_t>(resamples));
    for (int b = 0; b < resamples; ++b) {
        int best_depth = 0;
        double best = -std::numeric_limits<double>::infinity();
        // Ascending depth order with a strict comparison keeps ties at the smaller depth.
        for (const auto& [d, v] : psnrs_by_depth) {
            const double x = v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(v.size()) - 1))];
            if (x > best) {
                best = x;
                best_depth = d;
            }
        }
        picks.push_back(best_depth);
    }

    DepthInterval out;
    out.resamples = resamples;
    for (const auto& kv : psnrs_by_depth) out.frequency[kv.first] = 0.0;
    for (int d : picks) out.frequency[d] += 1.0;
    for (auto& kv : out.frequency) kv.second /= resamples;
    std::sort(picks.begin(), picks.end());
    // Nearest-rank percentiles.
    auto rank = [&](double q) {
        const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(resamples)));
        return picks[std::clamp<std::size_t>(k, 1, picks.size()) - 1];
    };
    out.lo = rank(0.025);
    out.hi = rank(0.975);
    return out;
}

std::map<int, std::vector<double>> depth_sweep(const SirenConfig& config, const ImageTensor& image,
                                               const std::vector<int>& depths, int seeds,
                                               const ExperimentRunner& runner) {
    std::map<int, std::vector<double>> out;
    for (int d : depths) {
        SirenConfig c = config;
        c.depth = d;
        out[d] = seed_variation(c, image, seeds, runner).psnrs;
    }
    return out;
}

void write_bootstrap(const std::map<int, std::vector<double>>& psnrs, const DepthInterval& d,
                     const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    {
        CsvWriter csv(out_dir / "bootstrap_psnrs.csv", {"depth", "seed_index", "max_psnr"});
        for (const auto& [depth, v] : psnrs)
            for (std::size_t k = 0; k < v.size(); ++k) {
                csv.field(depth).field(k).field(v[k]);
                csv.end_row();
            }
    }
    Series s{"selection frequency", {}, {}, true, true};
    {
        CsvWriter csv(out_dir / "bootstrap_depth.csv", {"depth", "frequency"});
        for (const auto& [depth, f] : d.frequency) {
            csv.field(depth).field(f);
            csv.end_row();
            s.x.push_back(depth);
            s.y.push_back(f);
        }
    }
    CsvWriter csv(out_dir / "bootstrap_summary.csv", {"lo", "hi", "resamples"});
    csv.field(d.lo).field(d.hi).field(d.resamples);
    csv.end_row();
    write_svg({"Bootstrap choice of depth", "depth", "share of resamples", false, {s}}, out_dir / "bootstrap_depth.svg");
}

// --- Power law ------------------------------------------------------------

double PowerLawFit::operator()(double params) const { return intercept + slope_per_doubling * std::log2(params); }

PowerLawFit power_law_fit(const std::vector<std::pair<double, double>>& params_psnr) {
    std::set<double> distinct;
    std::vector<double> x, y;
    for (const auto& [p, psnr] : params_psnr) {
        if (!(p > 0) || !std::isfinite(psnr)) throw ArgumentError("power_law_fit: parameter counts must be > 0");
        distinct.insert(p);
        x.push_back(std::log2(p));
        y.push_back(psnr);
    }
    if (distinct.size() < 3) throw ArgumentError("power_law_fit: need at least 3 distinct parameter counts");
    const LinearFit f = ols(x, y);
    PowerLawFit out;
    out.slope_per_doubling = f.slope;
    out.intercept = f.intercept;
    out.r2 = f.r2;
    out.implied_manifold_dim = kDbPerDoublingPerDim / f.slope;
    return out;
}

PowerLawFit power_law_fit(const std::vector<TrainRecord>& records) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : records)
        if (r.status != RunStatus::Failed)
            pts.emplace_back(static_cast<double>(param_count(r.config.width, r.config.depth)), r.max_psnr);
    return power_law_fit(pts);
}

PowerLawStudy power_law_study(const SirenConfig& config, const std::vector<ImageTensor>& images,
                              const std::vector<int>& widths, const ExperimentRunner& runner) {
    if (images.empty()) throw ArgumentError("power_law_study: no images");
    config.validate();
    std::vector<Job> jobs;
    for (const auto& img : images) {
        require_side(img, config.image_size, "power_law_study");
        for (int w : widths) {
            SirenConfig c = config;
            c.width = w;
            jobs.push_back({c, img.id});
        }
    }
    PowerLawStudy out;
    out.records = train_jobs(runner, "power-law", jobs, images);
    std::map<int, std::vector<double>> by_width;
    for (const auto& img : images) {
        std::vector<TrainRecord> mine;
        for (const auto& r : out.records)
            if (r.image_id == img.id) {
                mine.push_back(r);
                by_width[r.config.width].push_back(r.max_psnr);
            }
        out.per_image[img.id] = power_law_fit(mine);
    }
    std::vector<std::pair<double, double>> pts;
    for (const auto& [w, v] : by_width) pts.emplace_back(static_cast<double>(param_count(w, config.depth)), mean(v));
    out.mean_fit = power_law_fit(pts);
    return out;
}

void write_power_law(const PowerLawStudy& s, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::map<std::string, Series> series;
    {
        CsvWriter csv(out_dir / "power_law.csv", {"image_id", "width", "depth", "params", "max_psnr"});
        for (const auto& r : s.records) {
            const auto p = param_count(r.config.width, r.config.depth);
            csv.field(r.image_id).field(r.config.width).field(r.config.depth).field(p).field(r.max_psnr);
            csv.end_row();
            auto& ser = series[r.image_id];
            ser.label = r.image_id.substr(0, 8);
            ser.markers = true;
            ser.x.push_back(static_cast<double>(p));
            ser.y.push_back(r.max_psnr);
        }
    }
    CsvWriter csv(out_dir / "power_law_fit.csv",
                  {"fit", "slope_per_doubling", "intercept", "r2", "implied_manifold_dim"});
    auto row = [&](const std::string& name, const PowerLawFit& f) {
        csv.field(name).field(f.slope_per_doubling).field(f.intercept).field(f.r2).field(f.implied_manifold_dim);
        csv.end_row();
    };
    for (const auto& [id, f] : s.per_image) row(id, f);
    row("mean", s.mean_fit);
    Plot plot{"PSNR vs parameter count", "parameters", "max PSNR (dB)", true, {}};
    for (auto& [id, ser] : series) plot.series.push_back(std::move(ser));
    write_svg(plot, out_dir / "power_law.svg");
}

// --- Codec correlation ----------------------------------------------------

namespace {

// Rate (bpp) at which an imported codec curve reaches `psnr`; PSNR falls
// with the ratio, so bisect on log ratio over [2, 200].
double table_equal_psnr_bpp(const RdTable& table, const std::string& id, double psnr) {
    double lo = std::log(2.0), hi = std::log(200.0);
    if (table.psnr_at(id, std::exp(lo)) <= psnr) return 24.0 / std::exp(lo);
    if (table.psnr_at(id, std::exp(hi)) >= psnr) return 24.0 / std::exp(hi);
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (table.psnr_at(id, std::exp(mid)) >= psnr ? lo : hi) = mid;
    }
    return 24.0 / std::exp(0.5 * (lo + hi));
}

}  // namespace

CodecCorrelation codec_correlation_study(const std::vector<TrainRecord>& records,
                                         const std::vector<ImageTensor>& images, const RdTable* table) {
    std::unordered_map<std::string, const ImageTensor*> by_id;
    for (const auto& img : images) by_id.emplace(img.id, &img);

    std::vector<const TrainRecord*> ok;
    for (const auto& r : records)
        if (r.status == RunStatus::Ok && std::isfinite(r.max_psnr)) ok.push_back(&r);
    if (ok.size() < 10) throw InsufficientDataError("codec_correlation_study: need at least 10 successful records");
    for (const auto* r : ok)
        if (!by_id.count(r->image_id))
            throw ArgumentError("codec_correlation_study: missing image " + r->image_id);

    std::map<std::tuple<int, int, int>, std::vector<const TrainRecord*>> groups;
    for (const auto* r : ok) groups[{r->config.width, r->config.depth, r->config.image_size}].push_back(r);

    CodecCorrelation out;
    for (const auto& [key, recs] : groups) {
        const auto [width, depth, size] = key;
        std::vector<ImageTensor> imgs;
        std::vector<std::string> ids;
        std::vector<double> psnrs;
        for (const auto* r : recs) {
            imgs.push_back(at_size(*by_id.at(r->image_id), size));
            ids.push_back(r->image_id);
            psnrs.push_back(r->max_psnr);
        }
        const CodecPsnrFn codec = table ? table_codec_psnr(*table, ids) : builtin_codec_psnr(imgs);

        std::optional<ProxyModel> proxy;
        if (recs.size() >= 4 && population_variance(psnrs) > 0.0) {
            proxy = fit_codec_proxy(recs.size(), psnrs, codec);
            out.groups.push_back({width, depth, size, *proxy});
        }
        for (std::size_t i = 0; i < recs.size(); ++i) {
            CodecCorrelationRow row;
            row.record_id = recs[i]->id;
            row.image_id = ids[i];
            row.width = width;
            row.depth = depth;
            row.image_size = size;
            row.siren_bpp = siren_bpp(width, depth, size);
            row.siren_psnr = psnrs[i];
            row.proxy_psnr = proxy ? proxy->predict(codec(i, proxy->ratio)) : kNan;
            row.equal_psnr_bpp =
                table ? table_equal_psnr_bpp(*table, ids[i], psnrs[i]) : psnr_target(imgs[i], psnrs[i]).bpp;
            out.rows.push_back(row);
        }
    }
    return out;
}

void write_codec_correlation(const CodecCorrelation& c, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    Series scatter{"records", {}, {}, false, true};
    std::map<std::string, Series> by_image;
    {
        CsvWriter csv(out_dir / "codec_correlation.csv",
                      {"record_id", "image_id", "width", "depth", "image_size", "siren_bpp", "siren_psnr",
                       "proxy_psnr", "equal_psnr_bpp"});
        for (const auto& r : c.rows) {
            csv.field(r.record_id).field(r.image_id).field(r.width).field(r.depth).field(r.image_size);
            csv.field(r.siren_bpp).field(r.siren_psnr).field(r.proxy_psnr).field(r.equal_psnr_bpp);
            csv.end_row();
            scatter.x.push_back(r.siren_psnr);
            scatter.y.push_back(r.proxy_psnr);
            auto& s = by_image[r.image_id];
            s.label = r.image_id.substr(0, 8);
            s.markers = true;
            s.x.push_back(r.siren_bpp);
            s.y.push_back(r.equal_psnr_bpp);
        }
    }
    CsvWriter csv(out_dir / "codec_groups.csv",
                  {"width", "depth", "image_size", "ratio", "offset", "rmse", "explained_variance", "n"});
    for (const auto& g : c.groups) {
        csv.field(g.width).field(g.depth).field(g.image_size).field(g.proxy.ratio).field(g.proxy.offset);
        csv.field(g.proxy.report.rmse).field(g.proxy.report.explained_variance).field(g.proxy.report.n);
        csv.end_row();
    }
    write_svg({"Codec proxy vs SIREN", "SIREN PSNR (dB)", "proxy PSNR (dB)", false, {scatter}},
              out_dir / "codec_correlation.svg");
    Plot bpp{"Codec rate at equal PSNR", "SIREN bpp", "codec bpp", false, {}};
    for (auto& [id, s] : by_image) {
        std::vector<std::size_t> order(s.x.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
        Series sorted{s.label, {}, {}, true, true};
        for (auto k : order) {
            sorted.x.push_back(s.x[k]);
            sorted.y.push_back(s.y[k]);
        }
        bpp.series.push_back(std::move(sorted));
    }
    write_svg(bpp, out_dir / "codec_equal_bpp.svg");
}

// --- Architecture ladder --------------------------------------------------

bool ArchLadder::calibrated() const {
    return !rungs.empty() && std::all_of(rungs.begin(), rungs.end(), [](const auto& r) { return r.rmse >= 0.0; });
}

void ArchLadder::validate() const {
    for (std::size_t i = 1; i < rungs.size(); ++i)
        if (!(rungs[i].size_bits > rungs[i - 1].size_bits))
            throw StructuralError("ladder sizes must be strictly increasing");
    for (const auto& r : rungs)
        if (r.rmse >= 0.0 && !(r.rmse > 0.0)) throw StructuralError("ladder RMSEs must be positive");
}

ArchLadder build_ladder(const std::vector<TrainRecord>& records, int buckets, std::vector<std::string>* warnings) {
    if (buckets < 1) throw ArgumentError("build_ladder: buckets must be >= 1");
    struct Arch {
        SirenConfig config;
        double bits = 0.0;
        double sum = 0.0;
        std::size_t n = 0;
    };
    std::map<std::tuple<int, int, double, int>, Arch> archs;
    for (const auto& r : records) {
        if (r.status != RunStatus::Ok || !std::isfinite(r.max_psnr)) continue;
        const auto& c = r.config;
        auto& a = archs[{c.width, c.depth, c.gamma, c.image_size}];
        if (a.n == 0) {
            a.config = c;
            a.config.seed = 0;
            a.bits = 16.0 * static_cast<double>(param_count(c.width, c.depth));
        }
        a.sum += r.max_psnr;
        ++a.n;
    }
    if (archs.empty()) throw InsufficientDataError("build_ladder: no successful records");

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [k, a] : archs) {
        lo = std::min(lo, std::log(a.bits));
        hi = std::max(hi, std::log(a.bits));
    }
    std::vector<const Arch*> best(static_cast<std::size_t>(buckets), nullptr);
    for (const auto& [k, a] : archs) {
        int b = hi > lo ? static_cast<int>(std::floor((std::log(a.bits) - lo) / (hi - lo) * buckets)) : 0;
        b = std::clamp(b, 0, buckets - 1);
        auto& slot = best[static_cast<std::size_t>(b)];
        if (!slot || a.sum / a.n > slot->sum / slot->n) slot = &a;
    }
    ArchLadder ladder;
    for (int b = 0; b < buckets; ++b) {
        const Arch* a = best[static_cast<std::size_t>(b)];
        if (!a) {
            if (warnings) warnings->push_back("size bucket " + std::to_string(b) + " is empty");
            continue;
        }
        if (!ladder.rungs.empty() && !(a->bits > ladder.rungs.back().size_bits)) continue;
        ladder.rungs.push_back({a->config, a->bits, a->sum / static_cast<double>(a->n), a->n});
    }
    return ladder;
}

std::vector<std::size_t> anchor_indices(std::size_t n, int anchors) {
    if (n == 0) return {};
    if (anchors < 2) throw ArgumentError("anchor_indices: need at least 2 anchors");
    std::vector<std::size_t> out;
    for (int k = 0; k < anchors; ++k) {
        const double pos = static_cast<double>(k) * static_cast<double>(n - 1) / (anchors - 1);
        const auto i = static_cast<std::size_t>(std::lround(pos));
        if (out.empty() || out.back() != i) out.push_back(i);
    }
    return out;
}

void interpolate_rmse(ArchLadder& ladder) {
    std::vector<std::size_t> anchors;
    for (std::size_t i = 0; i < ladder.rungs.size(); ++i)
        if (ladder.rungs[i].anchor) anchors.push_back(i);
    if (anchors.empty()) throw InsufficientDataError("interpolate_rmse: ladder has no anchors");
    for (std::size_t i = 0; i < ladder.rungs.size(); ++i) {
        auto& r = ladder.rungs[i];
        if (r.anchor) continue;
        const auto hi = std::lower_bound(anchors.begin(), anchors.end(), i);
        if (hi == anchors.begin()) {
            r.rmse = ladder.rungs[anchors.front()].rmse;
        } else if (hi == anchors.end()) {
            r.rmse = ladder.rungs[anchors.back()].rmse;
        } else {
            const auto& a = ladder.rungs[*(hi - 1)];
            const auto& b = ladder.rungs[*hi];
            const double t = (r.size_bits - a.size_bits) / (b.size_bits - a.size_bits);
            r.rmse = a.rmse + t * (b.rmse - a.rmse);
        }
    }
}

ArchLadder calibrate_rmse(ArchLadder ladder, const std::vector<ImageTensor>& images, const PsnrPredictor& predictor,
                          const ExperimentRunner& runner, int anchors, std::vector<AnchorCalibration>* details) {
    if (images.size() < 5) throw InsufficientDataError("calibrate_rmse: need at least 5 calibration images");
    if (ladder.rungs.empty()) throw InsufficientDataError("calibrate_rmse: empty ladder");
    ladder.validate();

    const auto idx = anchor_indices(ladder.rungs.size(), anchors);
    std::map<int, std::vector<ImageTensor>> resized;
    for (auto i : idx) {
        const int size = ladder.rungs[i].config.image_size;
        if (!resized.count(size))
            for (const auto& img : images) resized[size].push_back(at_size(img, size));
    }
    std::vector<ImageTensor> all_images;
    std::set<std::string> seen;
    for (const auto& [size, v] : resized)
        for (const auto& img : v)
            if (seen.insert(img.id).second) all_images.push_back(img);

    std::vector<Job> jobs;
    for (auto i : idx)
        for (std::size_t j = 0; j < images.size(); ++j) {
            SirenConfig c = ladder.rungs[i].config;
            c.seed = study_seed(0xca1b, j);
            jobs.push_back({c, resized.at(c.image_size)[j].id});
        }
    const auto recs = train_jobs(runner, "calibrate", jobs, all_images);

    std::vector<AnchorCalibration> cal;
    std::size_t k = 0;
    for (auto i : idx) {
        AnchorCalibration a;
        a.rung = i;
        for (std::size_t j = 0; j < images.size(); ++j, ++k) {
            const auto& r = recs[k];
            a.predicted.push_back(predictor(r.config, resized.at(r.config.image_size)[j]));
            a.actual.push_back(r.max_psnr);
        }
        a.rmse = rmse(a.predicted, a.actual);
        ladder.rungs[i].rmse = a.rmse;
        ladder.rungs[i].anchor = true;
        cal.push_back(std::move(a));
    }
    interpolate_rmse(ladder);
    if (details) *details = std::move(cal);
    return ladder;
}

void save_ladder(const ArchLadder& ladder, const std::filesystem::path& path) {
    nlohmann::json rungs = nlohmann::json::array();
    for (const auto& r : ladder.rungs) {
        rungs.push_back({{"width", r.config.width},
                         {"depth", r.config.depth},
                         {"omega0", r.config.omega0},
                         {"gamma", r.config.gamma},
                         {"image_size", r.config.image_size},
                         {"steps", r.config.steps},
                         {"learning_rate", r.config.learning_rate},
                         {"size_bits", r.size_bits},
                         {"mean_psnr", r.mean_psnr},
                         {"n_records", r.n_records},
                         {"rmse", r.rmse},
                         {"anchor", r.anchor}});
    }
    const nlohmann::json doc = {{"kind", "ladder"}, {"rungs", rungs}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write ladder '" + path.string() + "'");
    out << doc.dump(2) << '\n';
}

ArchLadder load_ladder(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read ladder '" + path.string() + "'");
    ArchLadder ladder;
    try {
        const auto doc = nlohmann::json::parse(in);
        if (doc.value("kind", "") != "ladder") throw IoError("'" + path.string() + "' is not a ladder file");
        for (const auto& j : doc.at("rungs")) {
            LadderRung r;
            r.config.width = j.at("width").get<int>();
            r.config.depth = j.at("depth").get<int>();
            r.config.omega0 = j.at("omega0").get<double>();
            r.config.gamma = j.at("gamma").get<double>();
            r.config.image_size = j.at("image_size").get<int>();
            r.config.steps = j.at("steps").get<int>();
            r.config.learning_rate = j.at("learning_rate").get<double>();
            r.config.seed = 0;
            r.size_bits = j.at("size_bits").get<double>();
            r.mean_psnr = j.at("mean_psnr").get<double>();
            r.n_records = j.at("n_records").get<std::size_t>();
            r.rmse = j.at("rmse").get<double>();
            r.anchor = j.at("anchor").get<bool>();
            ladder.rungs.push_back(r);
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed ladder '" + path.string() + "': " + e.what());
    }
    ladder.validate();
    return ladder;
}

// --- Confident search -----------------------------------------------------

std::size_t select_rung(const std::vector<double>& predictions, const std::vector<double>& rmses, double target,
                        double k) {
    if (predictions.empty() || predictions.size() != rmses.size())
        throw ArgumentError("select_rung: need one RMSE per prediction");
    std::size_t best = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double lower = predictions[i] - k * rmses[i];
        if (lower >= target) return i;
        if (lower > predictions[best] - k * rmses[best]) best = i;
    }
    std::ostringstream msg;
    msg << "no rung reaches " << target << " dB with " << k << " RMSE margin; best is rung " << best
        << " with lower bound " << predictions[best] - k * rmses[best] << " dB";
    throw InfeasibleError(msg.str());
}

SearchResult confident_search(const ImageTensor& image, double target_psnr, const ArchLadder& ladder,
                              const PsnrPredictor& predictor, double k) {
    if (!ladder.calibrated()) throw ArgumentError("confident_search: ladder is not calibrated");
    std::vector<double> pred, err;
    for (const auto& r : ladder.rungs) {
        pred.push_back(predictor(r.config, at_size(image, r.config.image_size)));
        err.push_back(r.rmse);
    }
    const std::size_t i = select_rung(pred, err, target_psnr, k);
    const auto& r = ladder.rungs[i];
    return {i, r.config, pred[i], r.rmse, pred[i] - k * r.rmse, pred[i] + k * r.rmse};
}

}  // namespace sirenlab
