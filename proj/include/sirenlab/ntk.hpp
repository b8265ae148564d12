#pragma once

// Empirical neural tangent kernel of a SIREN and the linearised learning
// curve
//   L(t) = || (I - eta Theta)^t (y - y0) ||^2 = sum_k c_k^2 (1 - eta lambda_k)^(2t)
// with Theta = Q diag(lambda) Q^T and c = Q^T (y - y0).
//
// Outputs are ordered (pixel, channel): row 3*i + c of the Jacobian is the
// gradient of channel c at pixel i. Columns follow SirenWeights::flatten().
//
// Memory: the Jacobian takes 24 N P bytes and the kernel 72 N^2 bytes for N
// pixels and P parameters (a 32x32 image gives a 75 MB kernel).

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sirenlab/imaging.hpp"
#include "sirenlab/siren.hpp"

namespace sirenlab {

inline constexpr std::size_t kDefaultNtkBudget = std::size_t{1} << 30;  // bytes

// 3N x P Jacobian. Throws SizeError when the Jacobian or the kernel built
// from it would exceed `budget_bytes`.
Eigen::MatrixXd jacobian(const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords,
                         std::size_t budget_bytes = kDefaultNtkBudget);

// Theta = scale * J J^T.
Eigen::MatrixXd empirical_ntk(const Eigen::MatrixXd& J, double scale = 1.0);

// How Theta relates to the training loss.
enum class KernelScale {
    Sum,  // Theta = J J^T: gradient descent on 0.5 * ||f - y||^2, as in the rollout formula
    Mse,  // Theta = (2 / 3N) J J^T: gradient descent on the mean squared error used in training
};
double kernel_scale_factor(KernelScale s, std::size_t n_pixels);

struct NtkSpectrum {
    Eigen::VectorXd eigenvalues;  // descending
    Eigen::VectorXd coeffs;       // Q^T (y - y0), same order
    double eta = 0.002;
    std::size_t n_pixels = 0;

    double lambda_max() const { return eigenvalues.size() ? eigenvalues[0] : 0.0; }
};

// Symmetrises Theta, eigendecomposes it, and projects the residual y - y0
// (length 3N, (pixel, channel) order).
NtkSpectrum ntk_spectrum(const Eigen::MatrixXd& theta, const Eigen::VectorXd& residual, double eta,
                         std::size_t n_pixels);

// L(t), evaluated term-wise in log space. t may be any non-negative real.
double rollout_loss(const NtkSpectrum& s, double t);
// L(0), ..., L(steps).
std::vector<double> ntk_rollout(const NtkSpectrum& s, int steps);
// Mean squared error per output entry: L(t) / 3N.
double rollout_mse(const NtkSpectrum& s, double t);

// First t >= 0 at which the modes with |1 - eta lambda| > 1 carry more
// squared residual than the rest, or nullopt when eta * lambda_max <= 2.
std::optional<long long> divergence_step(const NtkSpectrum& s);

struct DivergenceReport {
    double eta_lambda_max = 0.0;
    bool above_one_over_eta = false;  // some mode overshoots (eta lambda > 1)
    bool above_two_over_eta = false;  // some mode grows (eta lambda > 2)
    std::optional<long long> step;
};
DivergenceReport divergence_report(const NtkSpectrum& s);

// --- Snapshot study -------------------------------------------------------

struct SnapshotOptions {
    std::vector<int> snapshot_steps = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384, 32768};
    double eta = 0.002;
    KernelScale scale = KernelScale::Mse;
    // Rollouts continue to this step (at least config.steps).
    int horizon = 0;
    std::size_t budget_bytes = kDefaultNtkBudget;
    TrainOptions train;
};

struct RolloutCurve {
    int snapshot_step = 0;
    double snapshot_mse = 0.0;  // true loss of the snapshot weights
    std::vector<int> steps;     // absolute training steps, starting at snapshot_step
    std::vector<double> mse;
    std::vector<double> psnr;
    DivergenceReport divergence;
};

struct SnapshotStudy {
    TrainRecord record;  // the real training run
    std::vector<RolloutCurve> curves;
    double dc_psnr = 0.0;  // mean-colour baseline of the image
};

// Trains `config` on `image`, capturing weights at each snapshot step that is
// <= config.steps, and rolls L(t) forward from each snapshot.
SnapshotStudy snapshot_extrapolate(const SirenConfig& config, const ImageTensor& image,
                                   const SnapshotOptions& options = {});

// Columns: step, true_mse, true_psnr, then rollout_mse_<s>, rollout_psnr_<s>
// per snapshot s. Cells with no value are empty.
void write_snapshot_csv(const SnapshotStudy& study, const std::filesystem::path& path);

}  // namespace sirenlab
