#include "sirenlab/gp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "binio.hpp"
#include "sirenlab/errors.hpp"
#include "sirenlab/predictors.hpp"
#include "sirenlab/rng.hpp"

namespace sirenlab {

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& X) {
    const Eigen::VectorXd norms = X.rowwise().squaredNorm();
    Eigen::MatrixXd D = (-2.0 * X * X.transpose()).colwise() + norms;
    D.rowwise() += norms.transpose();
    return D.cwiseMax(0.0);
}

struct Factor {
    Eigen::MatrixXd L;
    double jitter = 0.0;
    bool ok = false;
};

// Cholesky of K + noise I, escalating a diagonal jitter until it succeeds.
Factor factorize(const Eigen::MatrixXd& K, double noise, double scale, double max_jitter) {
    Factor f;
    const Eigen::Index n = K.rows();
    for (int e = -13; e <= 0; ++e) {
        const double jitter = e == -13 ? 0.0 : std::pow(10.0, e) * scale;
        if (jitter > max_jitter * scale) break;
        f.L = K;
        f.L.diagonal().array() += noise + jitter;
        Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(f.L);
        if (llt.info() != Eigen::Success) continue;
        bool finite_positive = true;
        for (Eigen::Index i = 0; i < n && finite_positive; ++i) finite_positive = std::isfinite(f.L(i, i)) && f.L(i, i) > 0.0;
        if (!finite_positive) continue;
        f.L.triangularView<Eigen::StrictlyUpper>().setZero();
        f.jitter = jitter;
        f.ok = true;
        return f;
    }
    return f;
}

struct Objective {
    const Eigen::MatrixXd& D;
    const Eigen::VectorXd& r;  // standardised targets
    double max_jitter;

    // theta = (log s2, log l, log n2); returns -inf when the factorisation fails.
    double operator()(const std::array<double, 3>& theta) const {
        const double s2 = std::exp(theta[0]), l = std::exp(theta[1]), n2 = std::exp(theta[2]);
        const Eigen::MatrixXd K = s2 * (-D.array() / (2.0 * l * l)).exp();
        const Factor f = factorize(K, n2, s2 + n2, max_jitter);
        if (!f.ok) return -std::numeric_limits<double>::infinity();
        const Eigen::VectorXd a = f.L.triangularView<Eigen::Lower>().solve(r);
        const double n = static_cast<double>(r.size());
        return -0.5 * a.squaredNorm() - f.L.diagonal().array().log().sum() - 0.5 * n * std::log(2.0 * std::numbers::pi);
    }
};

void check_shapes(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() == 0 || X.cols() == 0) throw ArgumentError("gp: empty training set");
    if (X.rows() != y.size()) throw ArgumentError("gp: feature rows and targets differ in count");
    if (!X.allFinite() || !y.allFinite()) throw ArgumentError("gp: non-finite training data");
}

// Factorises the kernel of m.X and fills L, alpha and the likelihood.
void finish(GpModel& m, double max_jitter) {
    const double l2 = m.length_scale * m.length_scale;
    const Eigen::MatrixXd K = m.signal_variance * (-squared_distances(m.X).array() / (2.0 * l2)).exp();
    const Factor f = factorize(K, m.noise_variance, m.signal_variance + m.noise_variance, max_jitter);
    if (!f.ok)
        throw ConditioningError("gp: kernel matrix is not positive definite even with jitter " +
                                std::to_string(max_jitter));
    m.L = f.L;
    m.jitter = f.jitter;
    m.prior_mean = m.y.mean();
    const Eigen::VectorXd resid = m.y.array() - m.prior_mean;
    const Eigen::VectorXd a = m.L.triangularView<Eigen::Lower>().solve(resid);
    m.alpha = m.L.transpose().triangularView<Eigen::Upper>().solve(a);
    m.log_marginal_likelihood = -0.5 * a.squaredNorm() - m.L.diagonal().array().log().sum() -
                                0.5 * static_cast<double>(m.y.size()) * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd column_std(const Eigen::MatrixXd& X) {
    Eigen::VectorXd scale(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double mu = X.col(j).mean();
        const double sd = std::sqrt((X.col(j).array() - mu).square().mean());
        scale[j] = sd > 0.0 ? sd : 1.0;
    }
    return scale;
}

}  // namespace

GpModel gp_condition(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double signal_variance, double length_scale,
                     double noise_variance, double max_jitter) {
    check_shapes(X, y);
    if (!(signal_variance > 0) || !(length_scale > 0) || !(noise_variance >= 0))
        throw ArgumentError("gp: hyperparameters must be positive");
    GpModel m;
    m.signal_variance = signal_variance;
    m.length_scale = length_scale;
    m.noise_variance = noise_variance;
    m.feature_scale = column_std(X);
    m.X = X.array().rowwise() / m.feature_scale.transpose().array();
    m.y = y;
    finish(m, max_jitter);
    return m;
}

GpModel gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GpOptions& options) {
    check_shapes(X, y);
    if (static_cast<std::size_t>(X.rows()) > options.max_points)
        throw SizeError("gp_fit: " + std::to_string(X.rows()) + " points exceeds the limit of " +
                        std::to_string(options.max_points));
    if (options.starts < 1 || options.max_iterations < 1) throw ArgumentError("gp_fit: bad search options");

    // Search in units where the targets have unit variance.
    const double y_mean = y.mean();
    double y_sd = std::sqrt((y.array() - y_mean).square().mean());
    if (!(y_sd > 0.0)) y_sd = 1.0;
    const Eigen::VectorXd r = (y.array() - y_mean) / y_sd;

    const Eigen::VectorXd scale = column_std(X);
    const Eigen::MatrixXd Xs = X.array().rowwise() / scale.transpose().array();
    const Eigen::MatrixXd D = squared_distances(Xs);
    const Objective objective{D, r, options.max_jitter};

    const std::array<double, 3> lo = {std::log(1e-3), std::log(1e-2), std::log(1e-6)};
    const std::array<double, 3> hi = {std::log(1e2), std::log(1e2), std::log(10.0)};
    const bool fixed_noise = options.fixed_noise_variance.has_value();
    const double fixed_log_n2 = fixed_noise ? std::log(std::max(*options.fixed_noise_variance / (y_sd * y_sd), 1e-300)) : 0.0;
    const int n_coords = fixed_noise ? 2 : 3;

    Rng rng(derive_seed(options.seed, 0x9b));
    std::array<double, 3> best_theta{};
    double best = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < options.starts; ++s) {
        std::array<double, 3> theta;
        if (s == 0) {
            theta = {0.0, std::log(std::sqrt(static_cast<double>(X.cols()))), std::log(0.1)};
        } else {
            for (int k = 0; k < 3; ++k) theta[k] = rng.uniform(lo[k], hi[k]);
        }
        if (fixed_noise) theta[2] = fixed_log_n2;
        double value = objective(theta);
        double step = 1.0;
        for (int iter = 0; iter < options.max_iterations && step >= 1e-2; ++iter) {
            bool improved = false;
            for (int k = 0; k < n_coords; ++k) {
                for (const double dir : {step, -step}) {
                    std::array<double, 3> trial = theta;
                    trial[k] = std::clamp(trial[k] + dir, lo[k], hi[k]);
                    if (trial[k] == theta[k]) continue;
                    const double v = objective(trial);
                    if (v > value + 1e-10) {
                        theta = trial;
                        value = v;
                        improved = true;
                        break;
                    }
                }
            }
            if (!improved) step *= 0.5;
        }
        if (value > best) {
            best = value;
            best_theta = theta;
        }
    }
    if (!std::isfinite(best)) throw ConditioningError("gp_fit: no hyperparameters gave a factorisable kernel");

    const double v2 = y_sd * y_sd;
    return gp_condition(X, y, std::exp(best_theta[0]) * v2, std::exp(best_theta[1]), std::exp(best_theta[2]) * v2,
                        options.max_jitter);
}

GpPrediction gp_predict(const GpModel& m, const Eigen::VectorXd& x) {
    if (static_cast<std::size_t>(x.size()) != m.dims())
        throw ArgumentError("gp_predict: expected " + std::to_string(m.dims()) + " features, got " +
                            std::to_string(x.size()));
    const Eigen::RowVectorXd xs = (x.array() / m.feature_scale.array()).transpose();
    const Eigen::VectorXd d2 = (m.X.rowwise() - xs).rowwise().squaredNorm();
    const Eigen::VectorXd k = m.signal_variance * (-d2.array() / (2.0 * m.length_scale * m.length_scale)).exp();
    GpPrediction p;
    p.mean = m.prior_mean + k.dot(m.alpha);
    const Eigen::VectorXd v = m.L.triangularView<Eigen::Lower>().solve(k);
    p.variance = std::max(m.signal_variance - v.squaredNorm(), 0.0) + m.noise_variance;
    return p;
}

std::vector<GpPrediction> gp_predict_batch(const GpModel& m, const Eigen::MatrixXd& X) {
    std::vector<GpPrediction> out;
    out.reserve(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.push_back(gp_predict(m, Eigen::VectorXd(X.row(i).transpose())));
    return out;
}

void save_model(const GpModel& m, const std::filesystem::path& path) {
    binio::Writer w;
    binio::model_header(w, static_cast<std::uint32_t>(ModelKind::Gp));
    w.f64(m.signal_variance);
    w.f64(m.length_scale);
    w.f64(m.noise_variance);
    w.vec(m.feature_scale);
    w.mat(m.X);
    w.vec(m.y);
    w.save(path);
}

GpModel load_gp_model(const std::filesystem::path& path) {
    binio::Reader r(path);
    binio::check_model_header(r, static_cast<std::uint32_t>(ModelKind::Gp));
    GpModel m;
    m.signal_variance = r.f64();
    m.length_scale = r.f64();
    m.noise_variance = r.f64();
    m.feature_scale = r.vec();
    m.X = r.mat();
    m.y = r.vec();
    if (m.X.cols() != m.feature_scale.size() || m.X.rows() != m.y.size() || m.y.size() == 0)
        throw IoError("'" + path.string() + "': inconsistent GP model");
    finish(m, 1e-6);
    return m;
}

}  // namespace sirenlab
