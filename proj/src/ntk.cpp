#include "sirenlab/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "sirenlab/csv.hpp"
#include "sirenlab/errors.hpp"

namespace sirenlab {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string mib(std::size_t bytes) { return std::to_string(bytes >> 20) + " MiB"; }

}  // namespace

Eigen::MatrixXd jacobian(const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords,
                         std::size_t budget_bytes) {
    weights.validate_shapes();
    if (coords.cols() != 2) throw StructuralError("jacobian: coords must be N x 2");
    if (!coords.allFinite()) throw ArgumentError("jacobian: non-finite coordinates");
    const auto n = static_cast<std::size_t>(coords.rows());
    const std::size_t p = weights.param_count();
    const std::size_t need = 3 * n * p * sizeof(double) + 9 * n * n * sizeof(double);
    if (need > budget_bytes)
        throw SizeError("jacobian: " + std::to_string(n) + " pixels x " + std::to_string(p) + " parameters needs " +
                        mib(need) + " for the Jacobian and kernel, over the " + mib(budget_bytes) +
                        " budget; use a smaller image");

    // Forward pass keeping h_l (l = 0..L-1) and cos(z_l) (l = 1..L-1), feature-major.
    const int L = weights.depth();
    std::vector<Eigen::MatrixXd> h(L), cosz(L);
    h[0] = omega0 * coords.transpose();
    for (int l = 1; l < L; ++l) {
        const Layer& layer = weights.layers[l - 1];
        Eigen::MatrixXd z = layer.weight * h[l - 1];
        z.colwise() += layer.bias;
        h[l] = z.array().sin();
        cosz[l] = z.array().cos();
    }

    std::vector<std::size_t> offset(L);
    for (int l = 0, off = 0; l < L; ++l) {
        offset[l] = static_cast<std::size_t>(off);
        off += static_cast<int>(weights.layers[l].weight.size() + weights.layers[l].bias.size());
    }

    RowMajor J = RowMajor::Zero(static_cast<Eigen::Index>(3 * n), static_cast<Eigen::Index>(p));
    for (int c = 0; c < 3; ++c) {
        // delta: d output_c / d z_l, (out_l x N). For the output layer it is e_c.
        Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(n));
        delta.row(c).setOnes();
        for (int l = L - 1; l >= 0; --l) {
            const Layer& layer = weights.layers[l];
            const Eigen::Index out = layer.weight.rows(), in = layer.weight.cols();
            const Eigen::MatrixXd& hin = h[l];
            for (std::size_t i = 0; i < n; ++i) {
                double* row = J.row(static_cast<Eigen::Index>(3 * i + c)).data() + offset[l];
                const auto ii = static_cast<Eigen::Index>(i);
                for (Eigen::Index b = 0; b < in; ++b) {
                    const double hb = hin(b, ii);
                    for (Eigen::Index a = 0; a < out; ++a) row[a + b * out] = delta(a, ii) * hb;
                }
                for (Eigen::Index a = 0; a < out; ++a) row[out * in + a] = delta(a, ii);
            }
            if (l > 0) delta = (layer.weight.transpose() * delta).cwiseProduct(cosz[l]);
        }
    }
    return J;
}

Eigen::MatrixXd empirical_ntk(const Eigen::MatrixXd& J, double scale) {
    if (!J.allFinite()) throw ArgumentError("empirical_ntk: non-finite Jacobian");
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(J.rows(), J.rows());
    theta.selfadjointView<Eigen::Lower>().rankUpdate(J, scale);
    theta.triangularView<Eigen::StrictlyUpper>() = theta.transpose();
    return theta;
}

double kernel_scale_factor(KernelScale s, std::size_t n_pixels) {
    return s == KernelScale::Sum ? 1.0 : 2.0 / (3.0 * static_cast<double>(n_pixels));
}

NtkSpectrum ntk_spectrum(const Eigen::MatrixXd& theta, const Eigen::VectorXd& residual, double eta,
                         std::size_t n_pixels) {
    if (theta.rows() != theta.cols() || theta.rows() != residual.size())
        throw StructuralError("ntk_spectrum: kernel and residual sizes differ");
    if (!(eta >= 0)) throw ArgumentError("ntk_spectrum: eta must be >= 0");
    const Eigen::MatrixXd sym = 0.5 * (theta + theta.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericError("ntk_spectrum: eigendecomposition failed");
    NtkSpectrum s;
    s.eigenvalues = es.eigenvalues().reverse();
    s.coeffs = (es.eigenvectors().transpose() * residual).reverse();
    s.eta = eta;
    s.n_pixels = n_pixels;
    return s;
}

namespace {

// log of sum_k c_k^2 |1 - eta lambda_k|^(2t) over modes selected by `keep`.
template <class Keep>
double log_loss(const NtkSpectrum& s, double t, Keep keep) {
    std::vector<double> logs;
    for (Eigen::Index k = 0; k < s.eigenvalues.size(); ++k) {
        const double c = s.coeffs[k];
        if (c == 0.0 || !keep(k)) continue;
        const double base = std::abs(1.0 - s.eta * s.eigenvalues[k]);
        if (t == 0.0) {
            logs.push_back(2.0 * std::log(std::abs(c)));
        } else if (base > 0.0) {
            logs.push_back(2.0 * std::log(std::abs(c)) + 2.0 * t * std::log(base));
        }
    }
    if (logs.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(logs.begin(), logs.end());
    if (!std::isfinite(m)) return m;
    double sum = 0.0;
    for (double v : logs) sum += std::exp(v - m);
    return m + std::log(sum);
}

}  // namespace

double rollout_loss(const NtkSpectrum& s, double t) {
    if (!(t >= 0)) throw ArgumentError("rollout_loss: t must be >= 0");
    return std::exp(log_loss(s, t, [](Eigen::Index) { return true; }));
}

std::vector<double> ntk_rollout(const NtkSpectrum& s, int steps) {
    if (steps < 0) throw ArgumentError("ntk_rollout: steps must be >= 0");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    for (int t = 0; t <= steps; ++t) out.push_back(rollout_loss(s, t));
    return out;
}

double rollout_mse(const NtkSpectrum& s, double t) {
    return rollout_loss(s, t) / (3.0 * static_cast<double>(s.n_pixels));
}

std::optional<long long> divergence_step(const NtkSpectrum& s) {
    if (!(s.eta * s.lambda_max() > 2.0)) return std::nullopt;
    auto growing = [&](Eigen::Index k) { return s.eta * s.eigenvalues[k] > 2.0; };
    auto rest = [&](Eigen::Index k) { return !(s.eta * s.eigenvalues[k] > 2.0); };
    auto diverged = [&](double t) { return log_loss(s, t, growing) > log_loss(s, t, rest); };
    if (!std::isfinite(log_loss(s, 0.0, growing))) return std::nullopt;  // no residual in growing modes
    if (diverged(0.0)) return 0;
    long long hi = 1;
    while (!diverged(static_cast<double>(hi))) {
        if (hi > (1LL << 60)) return std::nullopt;
        hi *= 2;
    }
    long long lo = hi / 2;  // not diverged at lo
    while (hi - lo > 1) {
        const long long mid = lo + (hi - lo) / 2;
        if (diverged(static_cast<double>(mid)))
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

DivergenceReport divergence_report(const NtkSpectrum& s) {
    DivergenceReport r;
    r.eta_lambda_max = s.eta * s.lambda_max();
    r.above_one_over_eta = r.eta_lambda_max > 1.0;
    r.above_two_over_eta = r.eta_lambda_max > 2.0;
    r.step = divergence_step(s);
    return r;
}

SnapshotStudy snapshot_extrapolate(const SirenConfig& config, const ImageTensor& image, const SnapshotOptions& options) {
    config.validate();
    std::vector<int> snaps;
    for (int s : options.snapshot_steps)
        if (s >= 0 && s <= config.steps) snaps.push_back(s);
    std::sort(snaps.begin(), snaps.end());
    snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());

    const std::size_t n = image.pixel_count();
    const Eigen::MatrixXd coords = coord_grid(config.image_size);
    const Eigen::MatrixXd targets = normalize(image);
    {
        // Fail before training when the kernel cannot fit.
        const std::size_t p = param_count(config.width, config.depth);
        if (3 * n * p * sizeof(double) + 9 * n * n * sizeof(double) > options.budget_bytes)
            (void)jacobian(SirenWeights::zeros(config.width, config.depth), config.omega0, coords, options.budget_bytes);
    }

    TrainOptions topt = options.train;
    topt.snapshot_steps = snaps;
    TrainResult run = train(config, image, topt);

    SnapshotStudy study;
    study.record = run.record;
    study.dc_psnr = mean_color_psnr(image);

    const int horizon = std::max(options.horizon, config.steps);
    std::vector<int> grid;
    for (const auto& p : run.record.loss_curve) grid.push_back(p.step);
    const int stride = std::max(1, topt.curve.stride);
    for (int s = (config.steps / stride + 1) * stride; s < horizon; s += stride) grid.push_back(s);
    if (horizon > config.steps) grid.push_back(horizon);

    const double factor = kernel_scale_factor(options.scale, n);
    for (int s : snaps) {
        auto it = run.snapshots.find(s);
        if (it == run.snapshots.end()) continue;  // training stopped early
        const SirenWeights& w = it->second;
        const Eigen::MatrixXd y0 = forward(w, config.omega0, coords);
        Eigen::VectorXd resid(static_cast<Eigen::Index>(3 * n));
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) {
                const auto ii = static_cast<Eigen::Index>(i);
                resid[static_cast<Eigen::Index>(3 * i + c)] = targets(ii, c) - y0(ii, c);
            }
        const Eigen::MatrixXd J = jacobian(w, config.omega0, coords, options.budget_bytes);
        const NtkSpectrum spec = ntk_spectrum(empirical_ntk(J, factor), resid, options.eta, n);

        RolloutCurve curve;
        curve.snapshot_step = s;
        curve.snapshot_mse = resid.squaredNorm() / (3.0 * static_cast<double>(n));
        curve.divergence = divergence_report(spec);
        for (int step : grid) {
            if (step < s) continue;
            const double mse = rollout_mse(spec, step - s);
            curve.steps.push_back(step);
            curve.mse.push_back(mse);
            curve.psnr.push_back(psnr_from_mse(mse));
        }
        study.curves.push_back(std::move(curve));
    }
    return study;
}

void write_snapshot_csv(const SnapshotStudy& study, const std::filesystem::path& path) {
    std::vector<std::string> header = {"step", "true_mse", "true_psnr"};
    for (const auto& c : study.curves) {
        header.push_back("rollout_mse_" + std::to_string(c.snapshot_step));
        header.push_back("rollout_psnr_" + std::to_string(c.snapshot_step));
    }
    std::set<int> steps;
    std::map<int, double> truth;
    for (const auto& p : study.record.loss_curve) {
        steps.insert(p.step);
        truth[p.step] = p.psnr;
    }
    std::vector<std::map<int, std::size_t>> index(study.curves.size());
    for (std::size_t k = 0; k < study.curves.size(); ++k)
        for (std::size_t j = 0; j < study.curves[k].steps.size(); ++j) {
            steps.insert(study.curves[k].steps[j]);
            index[k][study.curves[k].steps[j]] = j;
        }

    CsvWriter out(path, header);
    for (int step : steps) {
        out.field(step);
        if (auto it = truth.find(step); it != truth.end())
            out.field(mse_from_psnr(it->second)).field(it->second);
        else
            out.field(std::string()).field(std::string());
        for (std::size_t k = 0; k < study.curves.size(); ++k) {
            if (auto it = index[k].find(step); it != index[k].end())
                out.field(study.curves[k].mse[it->second]).field(study.curves[k].psnr[it->second]);
            else
                out.field(std::string()).field(std::string());
        }
        out.end_row();
    }
}

}  // namespace sirenlab
