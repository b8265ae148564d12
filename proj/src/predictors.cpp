#include "sirenlab/predictors.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "binio.hpp"
#include "sirenlab/errors.hpp"

namespace sirenlab {

double best_psnr_until(const TrainRecord& r, int step) {
    if (r.loss_curve.empty() || r.loss_curve.back().step < step)
        throw ArgumentError("record " + r.id + ": curve does not reach step " + std::to_string(step));
    return *r.max_psnr_until(step);
}

ExtrapolationModel extrapolate_from_step(const std::vector<TrainRecord>& records, int m, int n) {
    if (m < 0 || n < m) throw ArgumentError("extrapolate_from_step: need 0 <= m <= n");
    std::vector<double> x, y;
    for (const auto& r : records) {
        if (r.status != RunStatus::Ok) continue;
        x.push_back(best_psnr_until(r, m));
        y.push_back(best_psnr_until(r, n));
    }
    if (x.size() < 3)
        throw InsufficientDataError("extrapolate_from_step: " + std::to_string(x.size()) +
                                    " usable records, need at least 3");
    ExtrapolationModel model;
    model.m = m;
    model.n = n;
    const double var_x = population_variance(x);
    if (var_x == 0.0) {
        model.fit = {0.0, mean(y), 0.0};
    } else {
        model.fit = ols(x, y);
    }
    std::vector<double> pred;
    for (double v : x) pred.push_back(model.predict(v));
    model.report = metric_report(pred, y);
    return model;
}

CodecPsnrFn builtin_codec_psnr(const std::vector<ImageTensor>& images) {
    return [&images](std::size_t i, double ratio) {
        return cap_psnr(rate_target_clamped(images.at(i), 24.0 / ratio, 0.002).psnr);
    };
}

CodecPsnrFn table_codec_psnr(const RdTable& table, const std::vector<std::string>& image_ids) {
    return [&table, image_ids](std::size_t i, double ratio) { return table.psnr_at(image_ids.at(i), ratio); };
}

ProxyModel fit_codec_proxy(std::size_t n_images, const std::vector<double>& siren_psnrs, const CodecPsnrFn& codec,
                           const ProxySearch& search) {
    if (n_images < 4) throw InsufficientDataError("fit_codec_proxy: need at least 4 images");
    if (siren_psnrs.size() != n_images) throw ArgumentError("fit_codec_proxy: one SIREN PSNR per image required");
    if (population_variance(siren_psnrs) == 0.0)
        throw UndefinedMetricError("fit_codec_proxy: SIREN PSNRs have zero variance");

    std::map<double, double> seen;  // log ratio -> EV
    auto ev_at = [&](double log_ratio) {
        if (auto it = seen.find(log_ratio); it != seen.end()) return it->second;
        std::vector<double> pred(n_images);
        for (std::size_t i = 0; i < n_images; ++i) pred[i] = codec(i, std::exp(log_ratio));
        const double ev = explained_variance(pred, siren_psnrs);
        seen.emplace(log_ratio, ev);
        return ev;
    };

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = search.log_ratio_lo, b = search.log_ratio_hi;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = ev_at(c), fd = ev_at(d);
    for (int iter = 0; iter < 200 && b - a > search.tolerance; ++iter) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ev_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ev_at(d);
        }
    }
    ev_at(a);
    ev_at(b);

    // Best evaluated point; the map is ordered by ratio so strict > keeps the smaller one.
    double best_log = 0.0, best_ev = -std::numeric_limits<double>::infinity();
    for (const auto& [lr, ev] : seen)
        if (ev > best_ev) {
            best_ev = ev;
            best_log = lr;
        }

    ProxyModel model;
    model.ratio = std::exp(best_log);
    std::vector<double> codec_psnr(n_images), diff(n_images);
    for (std::size_t i = 0; i < n_images; ++i) {
        codec_psnr[i] = codec(i, model.ratio);
        diff[i] = siren_psnrs[i] - codec_psnr[i];
    }
    model.offset = mean(diff);
    std::vector<double> pred(n_images);
    for (std::size_t i = 0; i < n_images; ++i) pred[i] = model.predict(codec_psnr[i]);
    model.report = metric_report(pred, siren_psnrs);
    return model;
}

std::vector<double> hyper_features(const SirenConfig& c) {
    return {std::log(static_cast<double>(c.width)), static_cast<double>(c.depth), std::log(c.omega0),
            static_cast<double>(c.image_size)};
}

std::vector<double> gp_features(const SirenConfig& c, const std::vector<double>& proxy) {
    std::vector<double> f = proxy;
    const auto h = hyper_features(c);
    f.insert(f.end(), h.begin(), h.end());
    return f;
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Extrapolation: return "extrapolate";
        case ModelKind::Proxy: return "proxy";
        case ModelKind::Gp: return "gp";
        case ModelKind::Mlp: return "mlp";
    }
    return "unknown";
}

ModelKind peek_model_kind(const std::filesystem::path& path) {
    binio::Reader r(path);
    r.expect("SLPM", 4);
    if (const auto v = r.u32(); v != binio::kModelVersion)
        throw IoError("'" + path.string() + "': unsupported model version " + std::to_string(v));
    const auto k = r.u32();
    if (k < 1 || k > 4) throw IoError("'" + path.string() + "': unknown model kind " + std::to_string(k));
    return static_cast<ModelKind>(k);
}

namespace {

void put_report(binio::Writer& w, const MetricReport& r) {
    w.f64(r.rmse);
    w.f64(r.explained_variance);
    w.u64(r.n);
}

MetricReport get_report(binio::Reader& r) {
    MetricReport m;
    m.rmse = r.f64();
    m.explained_variance = r.f64();
    m.n = r.u64();
    return m;
}

}  // namespace

void save_model(const ExtrapolationModel& m, const std::filesystem::path& path) {
    binio::Writer w;
    binio::model_header(w, static_cast<std::uint32_t>(ModelKind::Extrapolation));
    w.i32(m.m);
    w.i32(m.n);
    w.f64(m.fit.slope);
    w.f64(m.fit.intercept);
    w.f64(m.fit.r2);
    put_report(w, m.report);
    w.save(path);
}

void save_model(const ProxyModel& m, const std::filesystem::path& path) {
    binio::Writer w;
    binio::model_header(w, static_cast<std::uint32_t>(ModelKind::Proxy));
    w.f64(m.ratio);
    w.f64(m.offset);
    put_report(w, m.report);
    w.save(path);
}

ExtrapolationModel load_extrapolation_model(const std::filesystem::path& path) {
    binio::Reader r(path);
    binio::check_model_header(r, static_cast<std::uint32_t>(ModelKind::Extrapolation));
    ExtrapolationModel m;
    m.m = r.i32();
    m.n = r.i32();
    m.fit.slope = r.f64();
    m.fit.intercept = r.f64();
    m.fit.r2 = r.f64();
    m.report = get_report(r);
    return m;
}

ProxyModel load_proxy_model(const std::filesystem::path& path) {
    binio::Reader r(path);
    binio::check_model_header(r, static_cast<std::uint32_t>(ModelKind::Proxy));
    ProxyModel m;
    m.ratio = r.f64();
    m.offset = r.f64();
    m.report = get_report(r);
    return m;
}

}  // namespace sirenlab
