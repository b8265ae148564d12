#include "sirenlab/feature_mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "binio.hpp"
#include "sirenlab/codec.hpp"
#include "sirenlab/errors.hpp"
#include "sirenlab/predictors.hpp"
#include "sirenlab/rng.hpp"

namespace sirenlab {

std::vector<double> encode_scalar(double p) {
    std::vector<double> out;
    out.reserve(2 * kPeFrequencies);
    for (int k = 0; k < kPeFrequencies; ++k) {
        const double a = std::ldexp(std::numbers::pi * p, k);
        out.push_back(std::sin(a));
        out.push_back(std::cos(a));
    }
    return out;
}

PeRanges PeRanges::from_spec(const SamplingSpec& spec) {
    spec.validate();
    PeRanges r;
    const int max_width = std::max(2, width_for_bpp(spec.bpp_max, spec.depth_min, spec.size_max));
    r.log_width_lo = std::log(2.0);
    r.log_width_hi = std::log(static_cast<double>(max_width));
    r.depth_lo = spec.depth_min;
    r.depth_hi = spec.depth_max;
    r.size_lo = spec.size_min;
    r.size_hi = spec.size_max;
    r.log_omega_lo = std::log(spec.gamma_min * spec.size_min);
    r.log_omega_hi = std::log(spec.gamma_max * spec.size_max);
    return r;
}

namespace {

double unit(double v, double lo, double hi, const char* name) {
    const double slack = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
    if (v < lo - slack || v > hi + slack)
        throw RangeError(std::string("positional_encode: ") + name + " outside the sampling range");
    if (hi == lo) return 0.5;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

}  // namespace

std::vector<double> positional_encode(const SirenConfig& c, const PeRanges& r) {
    const double p[4] = {
        unit(std::log(static_cast<double>(c.width)), r.log_width_lo, r.log_width_hi, "width"),
        unit(c.depth, r.depth_lo, r.depth_hi, "depth"),
        unit(c.image_size, r.size_lo, r.size_hi, "image size"),
        unit(std::log(c.omega0), r.log_omega_lo, r.log_omega_hi, "omega0"),
    };
    std::vector<double> out;
    out.reserve(kPeDims);
    for (double v : p) {
        const auto e = encode_scalar(v);
        out.insert(out.end(), e.begin(), e.end());
    }
    return out;
}

Eigen::VectorXd mlp_input(const FeatureMlp& m, const SirenConfig& c, const std::vector<double>& image_features) {
    if (static_cast<int>(image_features.size()) != m.image_feature_count)
        throw StructuralError("mlp: expected " + std::to_string(m.image_feature_count) + " image features, got " +
                              std::to_string(image_features.size()));
    Eigen::VectorXd x(m.input_dims());
    const auto pe = positional_encode(c, m.ranges);
    for (int i = 0; i < kPeDims; ++i) x[i] = pe[i];
    for (int i = 0; i < m.image_feature_count; ++i)
        x[kPeDims + i] = (image_features[i] - m.image_mean[i]) / m.image_scale[i];
    for (std::size_t k = 0; k < m.imputed_columns.size(); ++k) x[m.imputed_columns[k]] = m.imputed_values[k];
    return x;
}

namespace {

// Column-per-sample forward pass; returns the 1 x B output and fills the
// pre-activations of every hidden layer.
Eigen::MatrixXd run(const std::vector<Layer>& layers, const Eigen::MatrixXd& X, std::vector<Eigen::MatrixXd>* pre,
                    std::vector<Eigen::MatrixXd>* acts) {
    Eigen::MatrixXd a = X;
    if (acts) acts->assign(1, X);
    if (pre) pre->clear();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::MatrixXd z = layers[l].weight * a;
        z.colwise() += layers[l].bias;
        if (l + 1 == layers.size()) return z;
        if (pre) pre->push_back(z);
        a = z.cwiseMax(0.0);
        if (acts) acts->push_back(a);
    }
    return a;
}

double batch_loss(const std::vector<Layer>& layers, const Eigen::MatrixXd& X, const Eigen::RowVectorXd& t) {
    if (X.cols() == 0) return 0.0;
    return (run(layers, X, nullptr, nullptr) - t).squaredNorm() / static_cast<double>(X.cols());
}

MetricReport report_or_rmse(const std::vector<double>& pred, const std::vector<double>& actual) {
    MetricReport r;
    r.n = pred.size();
    if (pred.empty()) return r;
    r.rmse = rmse(pred, actual);
    r.explained_variance = pred.size() >= 2 && population_variance(actual) > 0.0
                               ? explained_variance(pred, actual)
                               : std::numeric_limits<double>::quiet_NaN();
    return r;
}

}  // namespace

FeatureMlp mlp_fit(const std::vector<MlpRow>& rows, const PeRanges& ranges, const MlpOptions& opt,
                   const std::vector<int>& impute_columns) {
    if (rows.size() < opt.min_rows)
        throw InsufficientDataError("mlp_fit: " + std::to_string(rows.size()) + " rows, need at least " +
                                    std::to_string(opt.min_rows));
    if (opt.hidden_layers < 1 || opt.hidden_units < 1 || opt.epochs < 1 || opt.batch_size < 1)
        throw ArgumentError("mlp_fit: bad network options");
    if (!(opt.train_fraction > 0) || opt.validation_fraction <= 0 || opt.train_fraction + opt.validation_fraction > 1)
        throw ArgumentError("mlp_fit: bad split fractions");

    FeatureMlp m;
    m.ranges = ranges;
    m.image_feature_count = static_cast<int>(rows.front().image_features.size());
    const int dims = m.input_dims();
    for (int c : impute_columns)
        if (c < 0 || c >= dims) throw ArgumentError("mlp_fit: impute column out of range");

    // Split.
    const std::size_t n = rows.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(opt.seed, 0x4d4c50));
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(opt.train_fraction * n)));
    const auto n_val =
        std::max<std::size_t>(1, std::min(n - n_train, static_cast<std::size_t>(std::floor(opt.validation_fraction * n))));
    const std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
    const std::vector<std::size_t> val_idx(order.begin() + n_train, order.begin() + n_train + n_val);
    const std::vector<std::size_t> test_idx(order.begin() + n_train + n_val, order.end());

    // Standardisation from the training split.
    m.image_mean = Eigen::VectorXd::Zero(m.image_feature_count);
    m.image_scale = Eigen::VectorXd::Ones(m.image_feature_count);
    for (int k = 0; k < m.image_feature_count; ++k) {
        std::vector<double> v;
        for (auto i : train_idx) {
            if (static_cast<int>(rows[i].image_features.size()) != m.image_feature_count)
                throw StructuralError("mlp_fit: rows have differing image feature counts");
            v.push_back(rows[i].image_features[k]);
        }
        m.image_mean[k] = mean(v);
        const double sd = std::sqrt(population_variance(v));
        m.image_scale[k] = sd > 0.0 ? sd : 1.0;
    }
    {
        std::vector<double> t;
        for (auto i : train_idx) t.push_back(rows[i].target);
        m.target_mean = mean(t);
        const double sd = std::sqrt(population_variance(t));
        m.target_scale = sd > 0.0 ? sd : 1.0;
    }

    Eigen::MatrixXd X(dims, static_cast<Eigen::Index>(n));
    Eigen::RowVectorXd T(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        X.col(static_cast<Eigen::Index>(i)) = mlp_input(m, rows[i].config, rows[i].image_features);
        T[static_cast<Eigen::Index>(i)] = (rows[i].target - m.target_mean) / m.target_scale;
    }
    for (int c : impute_columns) {
        double s = 0.0;
        for (auto i : train_idx) s += X(c, static_cast<Eigen::Index>(i));
        const double v = s / static_cast<double>(train_idx.size());
        X.row(c).setConstant(v);
        m.imputed_columns.push_back(c);
        m.imputed_values.push_back(v);
    }
    auto gather = [&](const std::vector<std::size_t>& idx, Eigen::MatrixXd& Xs, Eigen::RowVectorXd& Ts) {
        Xs.resize(dims, static_cast<Eigen::Index>(idx.size()));
        Ts.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            Xs.col(static_cast<Eigen::Index>(k)) = X.col(static_cast<Eigen::Index>(idx[k]));
            Ts[static_cast<Eigen::Index>(k)] = T[static_cast<Eigen::Index>(idx[k])];
        }
    };
    Eigen::MatrixXd X_val;
    Eigen::RowVectorXd T_val;
    gather(val_idx, X_val, T_val);

    // Network: He-uniform hidden layers, zero linear output (so the initial
    // prediction is the target mean).
    std::vector<Layer> layers;
    int fan_in = dims;
    for (int l = 0; l <= opt.hidden_layers; ++l) {
        const bool out = l == opt.hidden_layers;
        const int fan_out = out ? 1 : opt.hidden_units;
        Layer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
        const double bound = out ? 0.0 : std::sqrt(6.0 / fan_in);
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
        layers.push_back(std::move(layer));
        fan_in = fan_out;
    }
    std::vector<Layer> adam_m, adam_v;
    for (const auto& l : layers) {
        adam_m.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
        adam_v.push_back(adam_m.back());
    }
    const AdamOptions adam;
    std::int64_t step = 0;

    std::vector<Layer> best = layers;
    double best_val = batch_loss(layers, X_val, T_val);
    m.best_epoch = 0;

    std::vector<std::size_t> perm = train_idx;
    std::vector<Eigen::MatrixXd> pre, acts;
    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        for (std::size_t i = perm.size() - 1; i > 0; --i)
            std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
        for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(opt.batch_size)) {
            const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(opt.batch_size));
            Eigen::MatrixXd Xb;
            Eigen::RowVectorXd Tb;
            gather(std::vector<std::size_t>(perm.begin() + start, perm.begin() + end), Xb, Tb);
            const Eigen::MatrixXd out = run(layers, Xb, &pre, &acts);
            Eigen::MatrixXd delta = 2.0 * (out - Tb) / static_cast<double>(Xb.cols());
            if (!delta.allFinite()) throw NumericError("mlp_fit: non-finite loss at epoch " + std::to_string(epoch));
            ++step;
            for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
                const Eigen::MatrixXd gW = delta * acts[l].transpose();
                const Eigen::VectorXd gb = delta.rowwise().sum();
                if (l > 0) delta = (layers[l].weight.transpose() * delta).cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
                adam_update(layers[l].weight.data(), gW.data(), adam_m[l].weight.data(), adam_v[l].weight.data(),
                            static_cast<std::size_t>(gW.size()), opt.learning_rate, step, adam);
                adam_update(layers[l].bias.data(), gb.data(), adam_m[l].bias.data(), adam_v[l].bias.data(),
                            static_cast<std::size_t>(gb.size()), opt.learning_rate, step, adam);
            }
        }
        const double val = batch_loss(layers, X_val, T_val);
        if (!std::isfinite(val)) throw NumericError("mlp_fit: non-finite validation loss at epoch " + std::to_string(epoch));
        if (val < best_val) {
            best_val = val;
            best = layers;
            m.best_epoch = epoch;
        }
    }
    m.layers = std::move(best);

    auto evaluate = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> pred, actual;
        for (auto i : idx) {
            const Eigen::MatrixXd out = run(m.layers, X.col(static_cast<Eigen::Index>(i)), nullptr, nullptr);
            pred.push_back(out(0, 0) * m.target_scale + m.target_mean);
            actual.push_back(rows[i].target);
        }
        return report_or_rmse(pred, actual);
    };
    m.validation = evaluate(val_idx);
    m.test = evaluate(test_idx);
    return m;
}

double mlp_predict(const FeatureMlp& m, const SirenConfig& c, const std::vector<double>& image_features) {
    const Eigen::MatrixXd out = run(m.layers, mlp_input(m, c, image_features), nullptr, nullptr);
    return out(0, 0) * m.target_scale + m.target_mean;
}

double mlp_predict(const FeatureMlp& m, const SirenConfig& c, const ImageTensor& image) {
    return mlp_predict(m, c, proxy_features(image));
}

std::vector<FeatureGroup> standard_feature_groups(int image_feature_count) {
    std::vector<FeatureGroup> groups;
    const char* names[4] = {"width", "depth", "size", "omega0"};
    for (int g = 0; g < 4; ++g) {
        FeatureGroup fg{names[g], {}};
        for (int k = 0; k < 2 * kPeFrequencies; ++k) fg.columns.push_back(g * 2 * kPeFrequencies + k);
        groups.push_back(fg);
    }
    FeatureGroup image{"image", {}};
    for (int k = 0; k < image_feature_count; ++k) image.columns.push_back(kPeDims + k);
    groups.push_back(image);
    return groups;
}

std::vector<AblationRow> feature_ablation(const std::vector<MlpRow>& rows, const PeRanges& ranges,
                                          const std::vector<FeatureGroup>& groups, const MlpOptions& options) {
    std::vector<AblationRow> out;
    out.push_back({"none", mlp_fit(rows, ranges, options).test});
    for (const auto& g : groups) out.push_back({g.name, mlp_fit(rows, ranges, options, g.columns).test});
    std::stable_sort(out.begin(), out.end(),
                     [](const AblationRow& a, const AblationRow& b) { return a.report.rmse < b.report.rmse; });
    return out;
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

void save_model(const FeatureMlp& m, const std::filesystem::path& path) {
    binio::Writer w;
    binio::model_header(w, static_cast<std::uint32_t>(ModelKind::Mlp));
    const PeRanges& r = m.ranges;
    for (double v : {r.log_width_lo, r.log_width_hi, r.depth_lo, r.depth_hi, r.size_lo, r.size_hi, r.log_omega_lo,
                     r.log_omega_hi})
        w.f64(v);
    w.i32(m.image_feature_count);
    w.vec(m.image_mean);
    w.vec(m.image_scale);
    w.f64(m.target_mean);
    w.f64(m.target_scale);
    w.u32(static_cast<std::uint32_t>(m.imputed_columns.size()));
    for (std::size_t k = 0; k < m.imputed_columns.size(); ++k) {
        w.i32(m.imputed_columns[k]);
        w.f64(m.imputed_values[k]);
    }
    w.u32(static_cast<std::uint32_t>(m.layers.size()));
    for (const auto& l : m.layers) {
        w.mat(l.weight);
        w.vec(l.bias);
    }
    w.i32(m.best_epoch);
    put_report(w, m.validation);
    put_report(w, m.test);
    w.save(path);
}

FeatureMlp load_mlp_model(const std::filesystem::path& path) {
    binio::Reader r(path);
    binio::check_model_header(r, static_cast<std::uint32_t>(ModelKind::Mlp));
    FeatureMlp m;
    PeRanges& g = m.ranges;
    for (double* v : {&g.log_width_lo, &g.log_width_hi, &g.depth_lo, &g.depth_hi, &g.size_lo, &g.size_hi,
                      &g.log_omega_lo, &g.log_omega_hi})
        *v = r.f64();
    m.image_feature_count = r.i32();
    m.image_mean = r.vec();
    m.image_scale = r.vec();
    m.target_mean = r.f64();
    m.target_scale = r.f64();
    const std::uint32_t n_imp = r.u32();
    for (std::uint32_t k = 0; k < n_imp; ++k) {
        m.imputed_columns.push_back(r.i32());
        m.imputed_values.push_back(r.f64());
    }
    const std::uint32_t n_layers = r.u32();
    for (std::uint32_t k = 0; k < n_layers; ++k) {
        Layer l;
        l.weight = r.mat();
        l.bias = r.vec();
        m.layers.push_back(std::move(l));
    }
    m.best_epoch = r.i32();
    m.validation = get_report(r);
    m.test = get_report(r);
    if (m.layers.empty() || m.layers.front().weight.cols() != m.input_dims() ||
        m.image_mean.size() != m.image_feature_count)
        throw IoError("'" + path.string() + "': inconsistent MLP model");
    return m;
}

}  // namespace sirenlab
