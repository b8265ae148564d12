// sirenlab: command-line front end for training, dataset generation,
// prediction, NTK analysis, the controlled experiments and the search.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sirenlab/codec.hpp"
#include "sirenlab/csv.hpp"
#include "sirenlab/errors.hpp"
#include "sirenlab/experiments.hpp"
#include "sirenlab/feature_mlp.hpp"
#include "sirenlab/gp.hpp"
#include "sirenlab/harness.hpp"
#include "sirenlab/metrics.hpp"
#include "sirenlab/ntk.hpp"
#include "sirenlab/predictors.hpp"
#include "sirenlab/svg_plot.hpp"

namespace fs = std::filesystem;
using namespace sirenlab;

namespace {

struct Common {
    int workers = default_workers();
    fs::path out = "out";
};

struct ArchFlags {
    int width = 28;
    int depth = 10;
    double gamma = 30.0 / 512.0;
    int size = 512;
    int steps = 20000;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    SirenConfig config() const { return SirenConfig::make(width, depth, gamma, size, seed, steps, lr); }

    void add(CLI::App* app) {
        app->add_option("--width", width, "hidden width");
        app->add_option("--depth", depth, "number of weight layers");
        app->add_option("--gamma", gamma, "omega0 / image size");
        app->add_option("--size", size, "image side after centre crop");
        app->add_option("--steps", steps, "training steps");
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--seed", seed, "random seed");
    }
};

std::vector<ImageTensor> load_images(const fs::path& p) {
    if (fs::is_directory(p)) return load_image_dir(p);
    return {load_image(p)};
}

ImageTensor load_sized(const fs::path& p, int size) { return center_crop_resize(load_image(p), size); }

std::vector<TrainRecord> load_records(const fs::path& manifest) { return load_manifest(manifest).records; }

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const std::size_t comma = s.find(',', pos);
        const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ArgumentError("bad integer list '" + s + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw ArgumentError("empty integer list");
    return out;
}

void write_curve(const TrainRecord& r, const fs::path& dir) {
    CsvWriter csv(dir / ("curve_" + r.id + ".csv"), {"step", "psnr"});
    Series s{"PSNR", {}, {}, true, false};
    for (const auto& p : r.loss_curve) {
        csv.field(p.step).field(p.psnr);
        csv.end_row();
        s.x.push_back(p.step);
        s.y.push_back(p.psnr);
    }
    write_svg({"Training curve", "step", "PSNR (dB)", false, {s}}, dir / ("curve_" + r.id + ".svg"));
}

void write_summary(const Summary& s, const fs::path& dir) {
    write_histogram_csv(s, dir / "histogram.csv");
    Series bars{"records", {}, {}, true, true};
    for (std::size_t i = 0; i < s.histogram.counts.size(); ++i) {
        bars.x.push_back(s.histogram.lo + (static_cast<double>(i) + 0.5) * s.histogram.bin_width);
        bars.y.push_back(static_cast<double>(s.histogram.counts[i]));
    }
    write_svg({"Max PSNR histogram", "PSNR (dB)", "count", false, {bars}}, dir / "histogram.svg");
    std::printf("n %zu failed %zu mean_psnr %.4f std_psnr %.4f min %.4f max %.4f\n", s.n, s.failed, s.mean_psnr,
                s.std_psnr, s.min_psnr, s.max_psnr);
}

// Deterministic train/test split of n items: every k-th goes to test.
std::vector<bool> test_mask(std::size_t n, double fraction) {
    std::vector<bool> mask(n, false);
    if (fraction <= 0) return mask;
    const auto every = static_cast<std::size_t>(std::max(1.0, std::round(1.0 / fraction)));
    for (std::size_t i = every - 1; i < n; i += every) mask[i] = true;
    return mask;
}

// --- Subcommands ----------------------------------------------------------

void cmd_train(const Common& co, const ArchFlags& a, const fs::path& image_path) {
    const ImageTensor img = load_sized(image_path, a.size);
    fs::create_directories(co.out);
    RunOptions opts;
    opts.workers = 1;
    opts.manifest_path = co.out / "manifest.jsonl";
    if (fs::exists(*opts.manifest_path)) opts.meta = load_manifest(*opts.manifest_path).meta;
    opts.meta.corpus_hash = corpus_hash({img});
    std::vector<Job> jobs;
    // Keep rows from earlier train invocations in the same manifest.
    std::vector<ImageTensor> images = {img};
    if (fs::exists(*opts.manifest_path))
        for (const auto& r : load_records(*opts.manifest_path))
            if (r.image_id == img.id && !(r.config == a.config())) jobs.push_back({r.config, r.image_id});
    jobs.push_back({a.config(), img.id});
    const Manifest m = run_jobs(jobs, images, opts);
    const TrainRecord& r = m.records.back();
    write_curve(r, co.out);
    if (r.status == RunStatus::Failed) throw Error("training failed: " + r.message);
    std::printf("id %s max_psnr %.4f argmax_step %d status %s\n", r.id.c_str(), r.max_psnr, r.argmax_step,
                to_string(r.status).c_str());
}

struct GenFlags {
    fs::path images;
    int count = 100;
    SamplingSpec spec;
    std::uint64_t seed = 0;
    std::optional<std::size_t> max_jobs;
};

void cmd_gen_dataset(const Common& co, const GenFlags& g) {
    g.spec.validate();
    const auto sources = load_images(g.images);
    if (sources.empty()) throw ArgumentError("no images in " + g.images.string());
    Rng rng(g.seed);
    std::vector<Job> jobs;
    std::vector<ImageTensor> images;
    std::set<std::string> have;
    for (int k = 0; k < g.count; ++k) {
        const auto& src = sources[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(sources.size()) - 1))];
        ImageTensor img = center_crop_resize(src, sample_image_size(g.spec, rng));
        SirenConfig c = sample_config(g.spec, rng, img);
        jobs.push_back({c, img.id});
        if (have.insert(img.id).second) images.push_back(std::move(img));
    }
    fs::create_directories(co.out);
    RunOptions opts;
    opts.workers = co.workers;
    opts.manifest_path = co.out / "manifest.jsonl";
    opts.meta.spec = g.spec;
    opts.meta.corpus_hash = corpus_hash(sources);
    opts.max_new_jobs = g.max_jobs;
    opts.on_record = [](const TrainRecord& r, std::size_t done, std::size_t total) {
        std::fprintf(stderr, "[%zu/%zu] %s %.3f dB\n", done, total, r.id.c_str(), r.max_psnr);
    };
    const Manifest m = run_jobs(jobs, images, opts);
    if (m.records.size() < jobs.size()) {
        std::printf("stopped after %zu of %zu jobs; rerun to resume\n", m.records.size(), jobs.size());
        return;
    }
    write_summary(summarize(m), co.out);
}

void cmd_summarize(const Common& co, const fs::path& manifest, double bin_width) {
    fs::create_directories(co.out);
    write_summary(summarize(load_manifest(manifest), bin_width), co.out);
}

FeatureDataset dataset_from(const fs::path& manifest, const fs::path& images) {
    const auto records = load_records(manifest);
    return feature_dataset(records, images_for_records(records, load_images(images)));
}

void cmd_fit_extrapolate(const Common& co, const fs::path& manifest, int m, int n) {
    const ExtrapolationModel model = extrapolate_from_step(load_records(manifest), m, n);
    fs::create_directories(co.out);
    save_model(model, co.out / "extrapolate.bin");
    std::printf("m %d n %d slope %.6f intercept %.6f rmse %.4f explained_variance %.4f n_records %zu\n", m, n,
                model.fit.slope, model.fit.intercept, model.report.rmse, model.report.explained_variance,
                model.report.n);
}

void cmd_fit_proxy(const Common& co, const fs::path& manifest, const fs::path& image_dir,
                   const std::optional<fs::path>& rd_table) {
    const auto records = load_records(manifest);
    const auto images = images_for_records(records, load_images(image_dir));
    std::map<std::string, const ImageTensor*> by_id;
    for (const auto& img : images) by_id.emplace(img.id, &img);
    std::vector<ImageTensor> imgs;
    std::vector<std::string> ids;
    std::vector<double> psnrs;
    std::vector<const TrainRecord*> used;
    for (const auto& r : records)
        if (r.status == RunStatus::Ok && std::isfinite(r.max_psnr)) {
            imgs.push_back(*by_id.at(r.image_id));
            ids.push_back(r.image_id);
            psnrs.push_back(r.max_psnr);
            used.push_back(&r);
        }
    std::optional<RdTable> table;
    if (rd_table) table.emplace(read_rd_csv(*rd_table));
    const CodecPsnrFn codec = table ? table_codec_psnr(*table, ids) : builtin_codec_psnr(imgs);
    const ProxyModel model = fit_codec_proxy(imgs.size(), psnrs, codec);
    fs::create_directories(co.out);
    save_model(model, co.out / "proxy.bin");
    CsvWriter csv(co.out / "proxy_fit.csv", {"record_id", "siren_psnr", "proxy_psnr"});
    for (std::size_t i = 0; i < used.size(); ++i) {
        csv.field(used[i]->id).field(psnrs[i]).field(model.predict(codec(i, model.ratio)));
        csv.end_row();
    }
    std::printf("ratio %.4f offset %.4f rmse %.4f explained_variance %.4f n %zu\n", model.ratio, model.offset,
                model.report.rmse, model.report.explained_variance, model.report.n);
}

struct GpFlags {
    fs::path manifest, images;
    GpOptions gp;
    double test_fraction = 0.2;
};

void cmd_fit_gp(const Common& co, const GpFlags& f) {
    const FeatureDataset ds = dataset_from(f.manifest, f.images);
    const Eigen::MatrixXd X = ds.gp_design();
    const Eigen::VectorXd y = ds.targets();
    const auto mask = test_mask(ds.records.size(), f.test_fraction);
    std::vector<Eigen::Index> tr, te;
    for (std::size_t i = 0; i < mask.size(); ++i) (mask[i] ? te : tr).push_back(static_cast<Eigen::Index>(i));
    const GpModel model = gp_fit(X(tr, Eigen::all), y(tr), f.gp);
    fs::create_directories(co.out);
    save_model(model, co.out / "gp.bin");
    std::printf("signal_variance %.6g length_scale %.6g noise_variance %.6g log_marginal_likelihood %.4f n_train %zu\n",
                model.signal_variance, model.length_scale, model.noise_variance, model.log_marginal_likelihood,
                tr.size());
    if (te.empty()) return;
    CsvWriter csv(co.out / "gp_test.csv", {"record_id", "actual", "mean", "std"});
    std::vector<double> pred, actual;
    for (auto i : te) {
        const GpPrediction p = gp_predict(model, X.row(i).transpose().eval());
        csv.field(ds.records[static_cast<std::size_t>(i)].id).field(y[i]).field(p.mean).field(std::sqrt(p.variance));
        csv.end_row();
        pred.push_back(p.mean);
        actual.push_back(y[i]);
    }
    const MetricReport rep = metric_report(pred, actual);
    write_svg({"GP predictions (test)", "actual PSNR (dB)", "predicted PSNR (dB)", false,
               {{"test records", actual, pred, false, true}}},
              co.out / "gp_test.svg");
    std::printf("test rmse %.4f explained_variance %.4f n %zu\n", rep.rmse, rep.explained_variance, rep.n);
}

struct MlpFlags {
    fs::path manifest, images;
    MlpOptions mlp;
};

PeRanges ranges_for(const fs::path& manifest) { return PeRanges::from_spec(load_manifest(manifest).meta.spec); }

void cmd_fit_mlp(const Common& co, const MlpFlags& f) {
    const FeatureDataset ds = dataset_from(f.manifest, f.images);
    const FeatureMlp model = mlp_fit(ds.mlp_rows(), ranges_for(f.manifest), f.mlp);
    fs::create_directories(co.out);
    save_model(model, co.out / "mlp.bin");
    CsvWriter csv(co.out / "mlp_report.csv", {"split", "rmse", "explained_variance", "n"});
    for (const auto& [name, r] : {std::pair{"validation", model.validation}, std::pair{"test", model.test}}) {
        csv.field(name).field(r.rmse).field(r.explained_variance).field(r.n);
        csv.end_row();
    }
    std::printf("best_epoch %d validation_rmse %.4f test_rmse %.4f test_explained_variance %.4f\n", model.best_epoch,
                model.validation.rmse, model.test.rmse, model.test.explained_variance);
}

void cmd_ablate(const Common& co, const MlpFlags& f) {
    const FeatureDataset ds = dataset_from(f.manifest, f.images);
    const int k = ds.image_features.empty() ? 0 : static_cast<int>(ds.image_features[0].size());
    const auto rows = feature_ablation(ds.mlp_rows(), ranges_for(f.manifest), standard_feature_groups(k), f.mlp);
    fs::create_directories(co.out);
    CsvWriter csv(co.out / "ablation.csv", {"removed", "rmse", "explained_variance", "n"});
    Series s{"test RMSE", {}, {}, false, true};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        csv.field(r.removed).field(r.report.rmse).field(r.report.explained_variance).field(r.report.n);
        csv.end_row();
        s.x.push_back(static_cast<double>(i));
        s.y.push_back(r.report.rmse);
        std::printf("%-8s rmse %.4f explained_variance %.4f\n", r.removed.c_str(), r.report.rmse,
                    r.report.explained_variance);
    }
    write_svg({"Feature ablation (rows of ablation.csv)", "row", "test RMSE (dB)", false, {s}}, co.out / "ablation.svg");
}

struct PredictFlags {
    fs::path model;
    std::optional<fs::path> image, manifest;
    std::optional<double> psnr_at_m;
    ArchFlags arch;
};

void cmd_predict(const Common& co, const PredictFlags& f) {
    fs::create_directories(co.out);
    const ModelKind kind = peek_model_kind(f.model);
    if (kind == ModelKind::Extrapolation) {
        const ExtrapolationModel m = load_extrapolation_model(f.model);
        if (f.psnr_at_m) {
            std::printf("predicted_psnr %.4f\n", m.predict(*f.psnr_at_m));
            return;
        }
        if (!f.manifest) throw ArgumentError("extrapolation needs --psnr-at-m or --manifest");
        CsvWriter csv(co.out / "prediction.csv", {"record_id", "psnr_at_m", "predicted", "actual"});
        std::vector<double> pred, actual;
        for (const auto& r : load_records(*f.manifest)) {
            if (r.status != RunStatus::Ok) continue;
            const double x = best_psnr_until(r, m.m);
            const double a = best_psnr_until(r, m.n);
            csv.field(r.id).field(x).field(m.predict(x)).field(a);
            csv.end_row();
            pred.push_back(m.predict(x));
            actual.push_back(a);
        }
        const MetricReport rep = metric_report(pred, actual);
        std::printf("rmse %.4f explained_variance %.4f n %zu\n", rep.rmse, rep.explained_variance, rep.n);
        return;
    }
    if (!f.image) throw ArgumentError(to_string(kind) + " prediction needs --image");
    const SirenConfig c = f.arch.config();
    const ImageTensor img = load_sized(*f.image, c.image_size);
    CsvWriter csv(co.out / "prediction.csv", {"model", "width", "depth", "omega0", "size", "predicted", "std"});
    double mean = 0.0, sd = std::nan("");
    if (kind == ModelKind::Gp) {
        const GpModel m = load_gp_model(f.model);
        const auto x = gp_features(c, proxy_features(img));
        const GpPrediction p = gp_predict(m, Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
        mean = p.mean;
        sd = std::sqrt(p.variance);
    } else {
        mean = load_predictor(f.model)(c, img);
    }
    csv.field(to_string(kind)).field(c.width).field(c.depth).field(c.omega0).field(c.image_size).field(mean).field(sd);
    csv.end_row();
    if (std::isfinite(sd))
        std::printf("predicted_psnr %.4f std %.4f\n", mean, sd);
    else
        std::printf("predicted_psnr %.4f\n", mean);
}

struct NtkFlags {
    fs::path image;
    ArchFlags arch;
    std::string snapshots = "1,2,4,8,16,32,64,128,256,512,1024,2048,4096,8192,16384,32768";
    double eta = 0.002;
    int horizon = 0;
    std::string scale = "mse";
    std::size_t budget_mb = 1024;
};

void cmd_ntk(const Common& co, const NtkFlags& f) {
    const SirenConfig c = f.arch.config();
    const ImageTensor img = load_sized(f.image, c.image_size);
    SnapshotOptions o;
    o.snapshot_steps = parse_int_list(f.snapshots);
    o.eta = f.eta;
    o.horizon = f.horizon;
    o.scale = f.scale == "sum" ? KernelScale::Sum : KernelScale::Mse;
    o.budget_bytes = f.budget_mb << 20;
    const SnapshotStudy st = snapshot_extrapolate(c, img, o);
    fs::create_directories(co.out);
    write_snapshot_csv(st, co.out / "ntk_curves.csv");
    CsvWriter csv(co.out / "ntk_divergence.csv", {"snapshot_step", "snapshot_mse", "eta_lambda_max",
                                                  "above_one_over_eta", "above_two_over_eta", "divergence_step"});
    Plot plot{"NTK rollouts vs training", "step", "PSNR (dB)", true, {}};
    Series truth{"training", {}, {}, true, false};
    for (const auto& p : st.record.loss_curve) {
        truth.x.push_back(p.step);
        truth.y.push_back(p.psnr);
    }
    plot.series.push_back(truth);
    for (const auto& cv : st.curves) {
        csv.field(cv.snapshot_step).field(cv.snapshot_mse).field(cv.divergence.eta_lambda_max);
        csv.field(cv.divergence.above_one_over_eta ? 1 : 0).field(cv.divergence.above_two_over_eta ? 1 : 0);
        csv.field(cv.divergence.step ? std::to_string(*cv.divergence.step) : std::string());
        csv.end_row();
        std::vector<double> x(cv.steps.begin(), cv.steps.end());
        plot.series.push_back({"from " + std::to_string(cv.snapshot_step), x, cv.psnr, true, false});
    }
    plot.series.push_back({"mean colour", {1.0, static_cast<double>(std::max(c.steps, f.horizon))},
                           {st.dc_psnr, st.dc_psnr}, true, false});
    write_svg(plot, co.out / "ntk.svg");
    std::printf("true_max_psnr %.4f dc_psnr %.4f curves %zu\n", st.record.max_psnr, st.dc_psnr, st.curves.size());
}

struct ExpFlags {
    std::string kind;
    fs::path images;
    ArchFlags arch;
    int seeds = 10;
    std::string widths = "8,16,32,64";
    std::string depths = "2,3,4,5,6,7,8,9,10,11,12";
    int resamples = 10000;
    int n_seeds = 10;
    int retrain_seeds = 5;
    std::optional<fs::path> manifest, rd_table, cache;
};

void cmd_experiment(const Common& co, const ExpFlags& f) {
    ExperimentRunner runner;
    runner.workers = co.workers;
    runner.cache_dir = f.cache;
    const SirenConfig c = f.arch.config();
    auto sized = [&] {
        std::vector<ImageTensor> v;
        for (const auto& img : load_images(f.images)) v.push_back(center_crop_resize(img, c.image_size));
        if (v.empty()) throw ArgumentError("no images in " + f.images.string());
        return v;
    };
    fs::create_directories(co.out);
    if (f.kind == "seed-variation") {
        const auto rows = seed_variation_sweep(c, sized().front(), parse_int_list(f.widths), f.seeds, runner);
        write_seed_variation(rows, co.out);
        for (const auto& r : rows) std::printf("width %d std %.4f mean %.4f\n", r.config.width, r.std, r.mean);
    } else if (f.kind == "first-layer") {
        const Attribution a = first_layer_attribution(c, sized().front(), f.seeds, runner);
        write_attribution(a, co.out);
        std::printf("std_all %.4f std_fixed_first %.4f attribution %.4f f %.4f p %.4g\n", a.std_all,
                    a.std_fixed_first, a.attribution, a.f_statistic, a.p_value);
    } else if (f.kind == "pe-transfer") {
        const PeTransfer t = pe_transfer(c, sized(), f.n_seeds, f.retrain_seeds, runner);
        write_pe_transfer(t, co.out);
        std::printf("delta_same %.4f delta_cross %.4f\n", t.delta_same, t.delta_cross);
    } else if (f.kind == "bootstrap-depth") {
        const auto psnrs = depth_sweep(c, sized().front(), parse_int_list(f.depths), f.seeds, runner);
        const DepthInterval d = bootstrap_depth_selection(psnrs, f.resamples, c.seed);
        write_bootstrap(psnrs, d, co.out);
        std::printf("depth_interval %d %d\n", d.lo, d.hi);
    } else if (f.kind == "power-law") {
        const PowerLawStudy s = power_law_study(c, sized(), parse_int_list(f.widths), runner);
        write_power_law(s, co.out);
        std::printf("slope_per_doubling %.4f r2 %.4f implied_manifold_dim %.4f\n", s.mean_fit.slope_per_doubling,
                    s.mean_fit.r2, s.mean_fit.implied_manifold_dim);
    } else if (f.kind == "codec-correlation") {
        if (!f.manifest) throw ArgumentError("codec-correlation needs --manifest");
        const auto records = load_records(*f.manifest);
        std::optional<RdTable> table;
        if (f.rd_table) table.emplace(read_rd_csv(*f.rd_table));
        const CodecCorrelation cc = codec_correlation_study(
            records, images_for_records(records, load_images(f.images)), table ? &*table : nullptr);
        write_codec_correlation(cc, co.out);
        for (const auto& g : cc.groups)
            std::printf("width %d depth %d size %d ratio %.3f explained_variance %.4f n %zu\n", g.width, g.depth,
                        g.image_size, g.proxy.ratio, g.proxy.report.explained_variance, g.proxy.report.n);
    } else {
        throw ArgumentError("unknown experiment '" + f.kind + "'");
    }
}

struct LadderFlags {
    fs::path manifest, images, model;
    int buckets = 30;
    int anchors = 5;
};

void cmd_ladder(const Common& co, const LadderFlags& f) {
    std::vector<std::string> warnings;
    ArchLadder ladder = build_ladder(load_records(f.manifest), f.buckets, &warnings);
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    ExperimentRunner runner;
    runner.workers = co.workers;
    runner.cache_dir = co.out / "cache";
    std::vector<AnchorCalibration> cal;
    ladder = calibrate_rmse(ladder, load_images(f.images), load_predictor(f.model), runner, f.anchors, &cal);
    fs::create_directories(co.out);
    save_ladder(ladder, co.out / "ladder.json");
    CsvWriter csv(co.out / "ladder.csv",
                  {"rung", "width", "depth", "omega0", "size", "size_bits", "mean_psnr", "rmse", "anchor"});
    Series s{"calibrated RMSE", {}, {}, true, true};
    for (std::size_t i = 0; i < ladder.rungs.size(); ++i) {
        const auto& r = ladder.rungs[i];
        csv.field(i).field(r.config.width).field(r.config.depth).field(r.config.omega0).field(r.config.image_size);
        csv.field(r.size_bits).field(r.mean_psnr).field(r.rmse).field(r.anchor ? 1 : 0);
        csv.end_row();
        s.x.push_back(r.size_bits);
        s.y.push_back(r.rmse);
    }
    write_svg({"Ladder RMSE", "size (bits)", "RMSE (dB)", true, {s}}, co.out / "ladder.svg");
    std::printf("rungs %zu anchors %zu\n", ladder.rungs.size(), cal.size());
}

struct SearchFlags {
    fs::path image, ladder, model;
    double target = 30.0;
    double k = 2.0;
};

void cmd_search(const Common& co, const SearchFlags& f) {
    const ArchLadder ladder = load_ladder(f.ladder);
    const SearchResult r = confident_search(load_image(f.image), f.target, ladder, load_predictor(f.model), f.k);
    fs::create_directories(co.out);
    CsvWriter csv(co.out / "search.csv", {"rung", "width", "depth", "omega0", "size", "predicted", "rmse", "lower", "upper"});
    csv.field(r.rung).field(r.config.width).field(r.config.depth).field(r.config.omega0).field(r.config.image_size);
    csv.field(r.predicted).field(r.rmse).field(r.lower).field(r.upper);
    csv.end_row();
    std::printf("rung %zu width %d depth %d omega0 %.4f predicted_psnr %.4f interval [%.4f, %.4f]\n", r.rung,
                r.config.width, r.config.depth, r.config.omega0, r.predicted, r.lower, r.upper);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sirenlab: predict how well a SIREN fits an image"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value file; keys match long flags, sections or dotted keys select subcommands");
    Common co;
    app.add_option("--workers", co.workers, "parallel training jobs (default from SIRENLAB_WORKERS)")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", co.out, "output directory");

    std::function<void()> run;

    ArchFlags train_arch;
    fs::path train_image;
    auto* train = app.add_subcommand("train", "train one SIREN; appends to <out>/manifest.jsonl, writes curve_<id>.csv (step,psnr)");
    train->add_option("--image", train_image, "input image (PNG or PPM)")->required()->check(CLI::ExistingFile);
    train_arch.add(train);
    train->callback([&] { run = [&] { cmd_train(co, train_arch, train_image); }; });

    GenFlags gen;
    auto* gd = app.add_subcommand("gen-dataset", "sample configs and train them; writes <out>/manifest.jsonl and histogram.csv (bin_lo,bin_hi,count)");
    gd->add_option("--images", gen.images, "image file or directory")->required()->check(CLI::ExistingPath);
    gd->add_option("--count", gen.count, "number of SIRENs");
    gd->add_option("--size-min", gen.spec.size_min, "smallest image side");
    gd->add_option("--size-max", gen.spec.size_max, "largest image side");
    gd->add_option("--depth-min", gen.spec.depth_min, "smallest depth");
    gd->add_option("--depth-max", gen.spec.depth_max, "largest depth");
    gd->add_option("--bpp-min", gen.spec.bpp_min, "smallest bpp (log-uniform)");
    gd->add_option("--bpp-max", gen.spec.bpp_max, "largest bpp");
    gd->add_option("--gamma-min", gen.spec.gamma_min, "smallest gamma (log-uniform)");
    gd->add_option("--gamma-max", gen.spec.gamma_max, "largest gamma");
    gd->add_option("--steps", gen.spec.steps, "training steps");
    gd->add_option("--lr", gen.spec.learning_rate, "Adam learning rate");
    gd->add_option("--seed", gen.seed, "sampling seed");
    gd->add_option("--max-jobs", gen.max_jobs, "stop after this many new jobs (resume later)");
    gd->callback([&] { run = [&] { cmd_gen_dataset(co, gen); }; });

    fs::path sum_manifest;
    double bin_width = 1.0;
    auto* sum = app.add_subcommand("summarize", "PSNR statistics of a manifest; writes histogram.csv (bin_lo,bin_hi,count)");
    sum->add_option("--manifest", sum_manifest, "manifest file")->required()->check(CLI::ExistingFile);
    sum->add_option("--bin-width", bin_width, "histogram bin width (dB)");
    sum->callback([&] { run = [&] { cmd_summarize(co, sum_manifest, bin_width); }; });

    PredictFlags pf;
    auto* pred = app.add_subcommand("predict", "predict max PSNR with a saved model (extrapolate, proxy, gp or mlp); writes prediction.csv");
    pred->add_option("--model", pf.model, "model file from a fit-* command")->required()->check(CLI::ExistingFile);
    pred->add_option("--image", pf.image, "image (proxy, gp, mlp)")->check(CLI::ExistingFile);
    pred->add_option("--manifest", pf.manifest, "records to extrapolate")->check(CLI::ExistingFile);
    pred->add_option("--psnr-at-m", pf.psnr_at_m, "observed best PSNR at step m (extrapolate)");
    pf.arch.add(pred);
    pred->callback([&] { run = [&] { cmd_predict(co, pf); }; });

    fs::path ex_manifest;
    int ex_m = 200, ex_n = 2000;
    auto* fe = app.add_subcommand("fit-extrapolate", "fit PSNR@n from PSNR@m; writes extrapolate.bin");
    fe->add_option("--manifest", ex_manifest, "manifest file")->required()->check(CLI::ExistingFile);
    fe->add_option("--m", ex_m, "observed step");
    fe->add_option("--n", ex_n, "predicted step");
    fe->callback([&] { run = [&] { cmd_fit_extrapolate(co, ex_manifest, ex_m, ex_n); }; });

    fs::path fp_manifest, fp_images;
    std::optional<fs::path> fp_table;
    auto* fpx = app.add_subcommand("fit-proxy", "fit the rate-matched codec proxy; writes proxy.bin and proxy_fit.csv (record_id,siren_psnr,proxy_psnr)");
    fpx->add_option("--manifest", fp_manifest, "manifest file")->required()->check(CLI::ExistingFile);
    fpx->add_option("--images", fp_images, "source images of the manifest")->required()->check(CLI::ExistingPath);
    fpx->add_option("--rd-table", fp_table, "external codec table (image_id,ratio,bpp,psnr)")->check(CLI::ExistingFile);
    fpx->callback([&] { run = [&] { cmd_fit_proxy(co, fp_manifest, fp_images, fp_table); }; });

    GpFlags gf;
    auto* fg = app.add_subcommand("fit-gp", "fit the GP on codec features and hyperparameters; writes gp.bin and gp_test.csv (record_id,actual,mean,std)");
    fg->add_option("--manifest", gf.manifest, "manifest file")->required()->check(CLI::ExistingFile);
    fg->add_option("--images", gf.images, "source images of the manifest")->required()->check(CLI::ExistingPath);
    fg->add_option("--starts", gf.gp.starts, "hyperparameter search starts");
    fg->add_option("--max-points", gf.gp.max_points, "largest training set");
    fg->add_option("--seed", gf.gp.seed, "search seed");
    fg->add_option("--test-fraction", gf.test_fraction, "share of records held out");
    fg->callback([&] { run = [&] { cmd_fit_gp(co, gf); }; });

    MlpFlags mf;
    auto add_mlp = [&](CLI::App* s) {
        s->add_option("--manifest", mf.manifest, "manifest file")->required()->check(CLI::ExistingFile);
        s->add_option("--images", mf.images, "source images of the manifest")->required()->check(CLI::ExistingPath);
        s->add_option("--layers", mf.mlp.hidden_layers, "hidden layers");
        s->add_option("--units", mf.mlp.hidden_units, "units per hidden layer");
        s->add_option("--epochs", mf.mlp.epochs, "training epochs");
        s->add_option("--batch", mf.mlp.batch_size, "minibatch size");
        s->add_option("--lr", mf.mlp.learning_rate, "Adam learning rate");
        s->add_option("--seed", mf.mlp.seed, "split and init seed");
    };
    auto* fm = app.add_subcommand("fit-mlp", "fit the feature MLP; writes mlp.bin and mlp_report.csv (split,rmse,explained_variance,n)");
    add_mlp(fm);
    fm->callback([&] { run = [&] { cmd_fit_mlp(co, mf); }; });
    auto* ab = app.add_subcommand("ablate", "retrain the MLP without each feature group; writes ablation.csv (removed,rmse,explained_variance,n)");
    add_mlp(ab);
    ab->callback([&] { run = [&] { cmd_ablate(co, mf); }; });

    NtkFlags nf;
    nf.arch.width = 8;
    nf.arch.depth = 4;
    nf.arch.gamma = 0.02;
    nf.arch.size = 24;
    nf.arch.steps = 2000;
    auto* ntk = app.add_subcommand("ntk", "empirical-NTK rollouts from weight snapshots; writes ntk_curves.csv (step,true_mse,true_psnr,rollout_mse_<s>,rollout_psnr_<s>) and ntk_divergence.csv");
    ntk->add_option("--image", nf.image, "input image")->required()->check(CLI::ExistingFile);
    nf.arch.add(ntk);
    ntk->add_option("--snapshots", nf.snapshots, "comma-separated snapshot steps");
    ntk->add_option("--eta", nf.eta, "gradient-descent rate of the rollout");
    ntk->add_option("--horizon", nf.horizon, "last rollout step (at least --steps)");
    ntk->add_option("--scale", nf.scale, "kernel scale: mse (2/3N J J^T) or sum (J J^T)")->check(CLI::IsMember({"mse", "sum"}));
    ntk->add_option("--budget-mb", nf.budget_mb, "memory budget for the Jacobian and kernel");
    ntk->callback([&] { run = [&] { cmd_ntk(co, nf); }; });

    ExpFlags xf;
    xf.arch.width = 16;
    xf.arch.depth = 5;
    xf.arch.gamma = 0.06;
    xf.arch.size = 32;
    xf.arch.steps = 2000;
    auto* exp = app.add_subcommand("experiment", "controlled studies; each writes CSV tables and an SVG plot");
    exp->add_option("kind", xf.kind, "seed-variation | first-layer | pe-transfer | bootstrap-depth | power-law | codec-correlation")
        ->required()
        ->check(CLI::IsMember({"seed-variation", "first-layer", "pe-transfer", "bootstrap-depth", "power-law", "codec-correlation"}));
    exp->add_option("--images", xf.images, "image file or directory (first image for single-image studies)")->required()->check(CLI::ExistingPath);
    xf.arch.add(exp);
    exp->add_option("--seeds", xf.seeds, "seeds per setting");
    exp->add_option("--widths", xf.widths, "comma-separated widths (seed-variation, power-law)");
    exp->add_option("--depths", xf.depths, "comma-separated depths (bootstrap-depth)");
    exp->add_option("--resamples", xf.resamples, "bootstrap resamples");
    exp->add_option("--n-seeds", xf.n_seeds, "first layers to choose from (pe-transfer)");
    exp->add_option("--retrain-seeds", xf.retrain_seeds, "retrains per image (pe-transfer)");
    exp->add_option("--manifest", xf.manifest, "records for codec-correlation")->check(CLI::ExistingFile);
    exp->add_option("--rd-table", xf.rd_table, "external codec table")->check(CLI::ExistingFile);
    exp->add_option("--cache", xf.cache, "directory for cached training manifests");
    exp->callback([&] { run = [&] { cmd_experiment(co, xf); }; });

    LadderFlags lf;
    auto* lad = app.add_subcommand("ladder", "build and calibrate the size ladder; writes ladder.json and ladder.csv");
    lad->add_option("--manifest", lf.manifest, "manifest spanning the size range")->required()->check(CLI::ExistingFile);
    lad->add_option("--images", lf.images, "held-out calibration images")->required()->check(CLI::ExistingPath);
    lad->add_option("--model", lf.model, "proxy, gp or mlp model file")->required()->check(CLI::ExistingFile);
    lad->add_option("--buckets", lf.buckets, "log-uniform size buckets");
    lad->add_option("--anchors", lf.anchors, "calibrated rungs");
    lad->callback([&] { run = [&] { cmd_ladder(co, lf); }; });

    SearchFlags sf;
    auto* search = app.add_subcommand("search", "smallest rung whose prediction minus k RMSEs reaches the target; writes search.csv");
    search->add_option("--image", sf.image, "target image")->required()->check(CLI::ExistingFile);
    search->add_option("--target-psnr", sf.target, "required PSNR (dB)");
    search->add_option("--ladder", sf.ladder, "ladder.json")->required()->check(CLI::ExistingFile);
    search->add_option("--model", sf.model, "proxy, gp or mlp model file")->required()->check(CLI::ExistingFile);
    search->add_option("--k", sf.k, "confidence multiple of the RMSE");
    search->callback([&] { run = [&] { cmd_search(co, sf); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        run();
    } catch (const sirenlab::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
