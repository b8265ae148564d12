#include "sirenlab/siren.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "sirenlab/errors.hpp"
#include "sirenlab/half.hpp"
#include "sirenlab/rng.hpp"
#include "sirenlab/vecmath.hpp"

namespace sirenlab {

SirenConfig SirenConfig::make(int width, int depth, double gamma, int image_size, std::uint64_t seed,
                              int steps, double learning_rate) {
    SirenConfig c;
    c.width = width;
    c.depth = depth;
    c.gamma = gamma;
    c.image_size = image_size;
    c.omega0 = gamma * image_size;
    c.seed = seed;
    c.steps = steps;
    c.learning_rate = learning_rate;
    return c;
}

void SirenConfig::validate() const {
    if (depth < 2) throw ArgumentError("SirenConfig: depth must be >= 2");
    if (width < 1) throw ArgumentError("SirenConfig: width must be >= 1");
    if (image_size < 1) throw ArgumentError("SirenConfig: image_size must be >= 1");
    if (steps < 0) throw ArgumentError("SirenConfig: steps must be >= 0");
    if (!(learning_rate > 0)) throw ArgumentError("SirenConfig: learning_rate must be > 0");
    if (!(omega0 > 0) || !(gamma > 0)) throw ArgumentError("SirenConfig: omega0 and gamma must be > 0");
    const double expected = gamma * image_size;
    if (std::abs(omega0 - expected) > 1e-9 * std::abs(expected))
        throw ArgumentError("SirenConfig: omega0 must equal gamma * image_size");
}

std::size_t param_count(int width, int depth) {
    if (depth < 2) throw ArgumentError("param_count: depth must be >= 2");
    const auto w = static_cast<std::size_t>(width);
    return 3 * w + static_cast<std::size_t>(depth - 2) * (w * w + w) + (3 * w + 3);
}

double siren_bpp(int width, int depth, int image_size) {
    return 16.0 * static_cast<double>(param_count(width, depth)) /
           (static_cast<double>(image_size) * image_size);
}

// --- SirenWeights ---------------------------------------------------------

std::size_t SirenWeights::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

void SirenWeights::validate_shapes() const {
    if (layers.size() < 2) throw StructuralError("SirenWeights: need at least two layers");
    Eigen::Index in = 2;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weight.cols() != in)
            throw StructuralError("SirenWeights: layer " + std::to_string(l + 1) + " expects " +
                                  std::to_string(in) + " inputs, has " + std::to_string(layer.weight.cols()));
        if (layer.bias.size() != layer.weight.rows())
            throw StructuralError("SirenWeights: bias size mismatch in layer " + std::to_string(l + 1));
        in = layer.weight.rows();
    }
    if (in != 3) throw StructuralError("SirenWeights: output layer must have 3 rows");
}

bool SirenWeights::all_finite() const {
    for (const auto& l : layers)
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

Eigen::VectorXd SirenWeights::flatten() const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(param_count()));
    Eigen::Index pos = 0;
    for (const auto& l : layers) {
        flat.segment(pos, l.weight.size()) = Eigen::Map<const Eigen::VectorXd>(l.weight.data(), l.weight.size());
        pos += l.weight.size();
        flat.segment(pos, l.bias.size()) = l.bias;
        pos += l.bias.size();
    }
    return flat;
}

void SirenWeights::assign(const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(param_count()))
        throw StructuralError("SirenWeights::assign: flat vector size mismatch");
    Eigen::Index pos = 0;
    for (auto& l : layers) {
        Eigen::Map<Eigen::VectorXd>(l.weight.data(), l.weight.size()) = flat.segment(pos, l.weight.size());
        pos += l.weight.size();
        l.bias = flat.segment(pos, l.bias.size());
        pos += l.bias.size();
    }
}

SirenWeights SirenWeights::zeros(int width, int depth) {
    SirenWeights w;
    w.layers.reserve(static_cast<std::size_t>(depth));
    for (int l = 0; l < depth; ++l) {
        const int in = l == 0 ? 2 : width;
        const int out = l == depth - 1 ? 3 : width;
        w.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    }
    return w;
}

bool SirenWeights::operator==(const SirenWeights& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& a = layers[l];
        const auto& b = other.layers[l];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
            a.bias.size() != b.bias.size())
            return false;
        if (std::memcmp(a.weight.data(), b.weight.data(), sizeof(double) * a.weight.size()) != 0 ||
            std::memcmp(a.bias.data(), b.bias.data(), sizeof(double) * a.bias.size()) != 0)
            return false;
    }
    return true;
}

// --- Initialization -------------------------------------------------------

SirenWeights init_siren(const SirenConfig& config, const InitPolicy& policy) {
    config.validate();
    SirenWeights w = SirenWeights::zeros(config.width, config.depth);
    for (int l = 0; l < config.depth; ++l) {
        const bool first = l == 0;
        if (!first && policy.zero_rest) continue;
        const std::uint64_t base = first ? policy.first_layer_seed.value_or(config.seed)
                                         : policy.rest_seed.value_or(config.seed);
        Rng rng(derive_seed(base, static_cast<std::uint64_t>(l)));
        auto& layer = w.layers[static_cast<std::size_t>(l)];
        const double fan_in = static_cast<double>(layer.weight.cols());
        double bound;
        if (first)
            bound = policy.first_layer == InitPolicy::FirstLayer::Classic ? 1.0 / fan_in : 1.0 / std::sqrt(fan_in);
        else
            bound = std::sqrt(6.0 / fan_in);
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
        const double bias_bound = 1.0 / std::sqrt(fan_in);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-bias_bound, bias_bound);
    }
    return w;
}

// --- Forward / backward ---------------------------------------------------

namespace {

void check_inputs(const SirenWeights& weights, const Eigen::MatrixXd& coords) {
    weights.validate_shapes();
    if (coords.cols() != 2) throw StructuralError("coords must be N x 2");
}

// Feature-major activations: each column is one sample.
struct Activations {
    std::vector<Eigen::MatrixXd> h;    // h[0] = omega0 * x^T, h[l] = sin(z_l)
    std::vector<Eigen::MatrixXd> cos;  // cos(z_l) for hidden layers
    Eigen::MatrixXd out;               // 3 x N
};

// Buffers reused across training steps; Eigen only reallocates on a size change.
struct Workspace {
    Activations a;
    Eigen::MatrixXd residual;
    Eigen::MatrixXd back;
    std::vector<Eigen::MatrixXd> delta;  // d mse / d pre-activation, per layer
};

void run_forward(Activations& a, const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords,
                 bool keep_cos) {
    const auto depth = weights.layers.size();
    a.h.resize(depth);
    a.h[0].noalias() = omega0 * coords.transpose();
    if (keep_cos) a.cos.resize(depth - 1);
    for (std::size_t l = 0; l + 1 < depth; ++l) {
        const auto& layer = weights.layers[l];
        Eigen::MatrixXd& z = a.h[l + 1];
        z.noalias() = layer.weight * a.h[l];
        z.colwise() += layer.bias;
        const auto n = static_cast<std::size_t>(z.size());
        if (keep_cos) {
            a.cos[l].resize(z.rows(), z.cols());
            vec_sincos(z.data(), z.data(), a.cos[l].data(), n);
        } else {
            vec_sin(z.data(), z.data(), n);
        }
    }
    const auto& last = weights.layers.back();
    a.out.noalias() = last.weight * a.h.back();
    a.out.colwise() += last.bias;
}

[[noreturn]] void report_non_finite(const Activations& a, const SirenWeights& weights) {
    for (std::size_t l = 1; l < a.h.size(); ++l)
        if (!a.h[l].allFinite())
            throw NumericError("non-finite activation in layer " + std::to_string(l), static_cast<int>(l));
    if (!a.out.allFinite())
        throw NumericError("non-finite output in layer " + std::to_string(weights.depth()), weights.depth());
    throw NumericError("non-finite loss", weights.depth());
}

void check_targets(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& targets) {
    if (targets.rows() != coords.rows() || targets.cols() != 3)
        throw StructuralError("targets must be N x 3 with N matching coords");
}

double mse_into(Workspace& ws, const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords,
                const Eigen::MatrixXd& targets) {
    run_forward(ws.a, weights, omega0, coords, false);
    const double mse = (ws.a.out - targets.transpose()).squaredNorm() / static_cast<double>(ws.a.out.size());
    if (!std::isfinite(mse)) report_non_finite(ws.a, weights);
    return mse;
}

void loss_and_grad_into(Workspace& ws, LossAndGrad& result, const SirenWeights& weights, double omega0,
                        const Eigen::MatrixXd& coords, const Eigen::MatrixXd& targets) {
    run_forward(ws.a, weights, omega0, coords, true);
    ws.residual.noalias() = ws.a.out - targets.transpose();
    const double count = static_cast<double>(ws.residual.size());
    result.mse = ws.residual.squaredNorm() / count;
    if (!std::isfinite(result.mse)) report_non_finite(ws.a, weights);

    const auto depth = weights.layers.size();
    result.grads.layers.resize(depth);
    ws.delta.resize(depth);
    ws.delta[depth - 1].noalias() = (2.0 / count) * ws.residual;
    for (std::size_t l = depth; l-- > 0;) {
        auto& g = result.grads.layers[l];
        g.weight.noalias() = ws.delta[l] * ws.a.h[l].transpose();
        g.bias = ws.delta[l].rowwise().sum();
        if (l == 0) break;
        ws.back.noalias() = weights.layers[l].weight.transpose() * ws.delta[l];
        ws.delta[l - 1].noalias() = ws.back.cwiseProduct(ws.a.cos[l - 1]);
    }
}

}  // namespace

Eigen::MatrixXd forward(const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords) {
    check_inputs(weights, coords);
    Activations a;
    run_forward(a, weights, omega0, coords, false);
    return a.out.transpose();
}

double mse_loss(const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords,
                const Eigen::MatrixXd& targets) {
    check_inputs(weights, coords);
    check_targets(coords, targets);
    Workspace ws;
    return mse_into(ws, weights, omega0, coords, targets);
}

LossAndGrad loss_and_grad(const SirenWeights& weights, double omega0, const Eigen::MatrixXd& coords,
                          const Eigen::MatrixXd& targets) {
    check_inputs(weights, coords);
    check_targets(coords, targets);
    Workspace ws;
    LossAndGrad result;
    loss_and_grad_into(ws, result, weights, omega0, coords, targets);
    return result;
}

// --- Adam -----------------------------------------------------------------

AdamState AdamState::for_weights(const SirenWeights& w) {
    AdamState s;
    s.m = SirenWeights::zeros(w.width(), w.depth());
    s.v = s.m;
    return s;
}

void adam_update(double* values, const double* grads, double* m, double* v, std::size_t n, double lr,
                 std::int64_t step, const AdamOptions& opt) {
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * grads[i];
        v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        values[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
}

void adam_step(SirenWeights& weights, const SirenWeights& grads, AdamState& state, double learning_rate,
               const AdamOptions& opt) {
    if (state.m.layers.size() != weights.layers.size() || grads.layers.size() != weights.layers.size())
        throw StructuralError("adam_step: optimizer state does not match weights");
    ++state.step;
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        auto& w = weights.layers[l];
        const auto& g = grads.layers[l];
        auto& m = state.m.layers[l];
        auto& v = state.v.layers[l];
        if (g.weight.size() != w.weight.size() || m.weight.size() != w.weight.size())
            throw StructuralError("adam_step: layer " + std::to_string(l + 1) + " size mismatch");
        adam_update(w.weight.data(), g.weight.data(), m.weight.data(), v.weight.data(),
                    static_cast<std::size_t>(w.weight.size()), learning_rate, state.step, opt);
        adam_update(w.bias.data(), g.bias.data(), m.bias.data(), v.bias.data(),
                    static_cast<std::size_t>(w.bias.size()), learning_rate, state.step, opt);
    }
}

// --- PSNR -----------------------------------------------------------------

double psnr_from_mse(double mse) {
    if (std::isnan(mse) || mse < 0) throw ArgumentError("psnr_from_mse: mse must be >= 0");
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse / 4.0);
}

double mse_from_psnr(double psnr) { return 4.0 * std::pow(10.0, -psnr / 10.0); }

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Ok: return "ok";
        case RunStatus::Divergent: return "divergent";
        case RunStatus::Failed: return "failed";
    }
    return "failed";
}

RunStatus run_status_from_string(const std::string& s) {
    if (s == "ok") return RunStatus::Ok;
    if (s == "divergent") return RunStatus::Divergent;
    if (s == "failed") return RunStatus::Failed;
    throw ArgumentError("unknown run status '" + s + "'");
}

std::optional<double> TrainRecord::psnr_at(int step) const {
    for (const auto& p : loss_curve)
        if (p.step == step) return p.psnr;
    return std::nullopt;
}

std::optional<double> TrainRecord::max_psnr_until(int step) const {
    std::optional<double> best;
    for (const auto& p : loss_curve)
        if (p.step <= step && (!best || p.psnr > *best)) best = p.psnr;
    return best;
}

namespace {

// NaN-aware bitwise comparison of doubles.
bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

bool TrainRecord::same_result(const TrainRecord& o) const {
    if (loss_curve.size() != o.loss_curve.size()) return false;
    for (std::size_t i = 0; i < loss_curve.size(); ++i)
        if (loss_curve[i].step != o.loss_curve[i].step || !same_bits(loss_curve[i].psnr, o.loss_curve[i].psnr))
            return false;
    return id == o.id && config == o.config && image_id == o.image_id && same_bits(max_psnr, o.max_psnr) &&
           argmax_step == o.argmax_step && best_weights_ref == o.best_weights_ref && status == o.status &&
           message == o.message;
}

// --- Training -------------------------------------------------------------

TrainResult train(const SirenConfig& config, const ImageTensor& image, const TrainOptions& options) {
    config.validate();
    if (image.height != config.image_size || image.width != config.image_size)
        throw ArgumentError("train: image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                            ", config expects " + std::to_string(config.image_size) + " square");
    const auto start = std::chrono::steady_clock::now();

    const Eigen::MatrixXd coords = coord_grid(config.image_size);
    const Eigen::MatrixXd targets = normalize(image);

    TrainResult result;
    SirenWeights weights = options.initial_weights ? *options.initial_weights : init_siren(config, options.init);
    weights.validate_shapes();
    if (weights.width() != config.width || weights.depth() != config.depth)
        throw StructuralError("train: initial weights do not match config");

    TrainRecord& rec = result.record;
    rec.config = config;
    rec.image_id = image.id;
    rec.max_psnr = -std::numeric_limits<double>::infinity();
    rec.argmax_step = 0;

    check_inputs(weights, coords);
    AdamState state = AdamState::for_weights(weights);
    Workspace ws;
    LossAndGrad lg;
    for (int step = 0; step <= config.steps; ++step) {
        if (std::find(options.snapshot_steps.begin(), options.snapshot_steps.end(), step) !=
            options.snapshot_steps.end())
            result.snapshots.emplace(step, weights);

        const bool last = step == config.steps;
        double mse;
        try {
            if (last) {
                mse = mse_into(ws, weights, config.omega0, coords, targets);
            } else {
                loss_and_grad_into(ws, lg, weights, config.omega0, coords, targets);
                mse = lg.mse;
            }
            if (!last && !lg.grads.all_finite())
                throw NumericError("non-finite gradient at step " + std::to_string(step));
        } catch (const NumericError& e) {
            rec.status = RunStatus::Divergent;
            rec.message = "step " + std::to_string(step) + ": " + e.what();
            break;
        }

        const double psnr = psnr_from_mse(mse);
        if (options.curve.records(step, config.steps)) rec.loss_curve.push_back({step, psnr});
        if (psnr > rec.max_psnr) {
            rec.max_psnr = psnr;
            rec.argmax_step = step;
            result.best_weights = weights;
        }
        if (last) break;
        adam_step(weights, lg.grads, state, config.learning_rate, options.adam);
    }
    result.final_weights = std::move(weights);
    rec.wallclock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

double evaluate_psnr(const SirenWeights& weights, double omega0, const ImageTensor& image) {
    if (!image.square()) throw ArgumentError("evaluate_psnr: image must be square");
    return psnr_from_mse(mse_loss(weights, omega0, coord_grid(image.height), normalize(image)));
}

// --- Quantization ---------------------------------------------------------

QuantizedWeights quantize_weights(const SirenWeights& weights) {
    weights.validate_shapes();
    QuantizedWeights q;
    q.depth = static_cast<std::uint32_t>(weights.depth());
    q.width = static_cast<std::uint32_t>(weights.width());
    q.values.reserve(weights.param_count());
    const auto push = [&q](double v) {
        bool clamped = false;
        q.values.push_back(double_to_half(v, clamped));
        if (clamped) ++q.clamped;
    };
    for (const auto& l : weights.layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) push(l.weight(r, c));
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) push(l.bias[i]);
    }
    return q;
}

SirenWeights dequantize(const QuantizedWeights& q) {
    if (q.depth < 2 || q.width < 1) throw StructuralError("dequantize: bad header");
    SirenWeights w = SirenWeights::zeros(static_cast<int>(q.width), static_cast<int>(q.depth));
    if (q.values.size() != w.param_count())
        throw StructuralError("dequantize: expected " + std::to_string(w.param_count()) + " values, got " +
                              std::to_string(q.values.size()));
    std::size_t pos = 0;
    for (auto& l : w.layers) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = half_to_double(q.values[pos++]);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = half_to_double(q.values[pos++]);
    }
    return w;
}

namespace {

constexpr char kBlobMagic[4] = {'S', 'I', 'R', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_blob(const QuantizedWeights& q) {
    std::vector<std::uint8_t> out(kBlobMagic, kBlobMagic + 4);
    put_u32(out, q.version);
    put_u32(out, q.depth);
    put_u32(out, q.width);
    out.reserve(out.size() + 2 * q.values.size());
    for (std::uint16_t v : q.values) {
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    return out;
}

QuantizedWeights parse_blob(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kBlobMagic, 4) != 0)
        throw IoError("weight blob: bad magic");
    QuantizedWeights q;
    q.version = get_u32(bytes, 4);
    if (q.version != 1) throw IoError("weight blob: unsupported version " + std::to_string(q.version));
    q.depth = get_u32(bytes, 8);
    q.width = get_u32(bytes, 12);
    if (q.depth < 2 || q.width < 1) throw IoError("weight blob: bad header");
    const std::size_t expected = param_count(static_cast<int>(q.width), static_cast<int>(q.depth));
    if (bytes.size() != 16 + 2 * expected) throw IoError("weight blob: truncated or oversized payload");
    q.values.resize(expected);
    for (std::size_t i = 0; i < expected; ++i)
        q.values[i] = static_cast<std::uint16_t>(bytes[16 + 2 * i] | (bytes[17 + 2 * i] << 8));
    return q;
}

void write_blob(const QuantizedWeights& q, const std::filesystem::path& path) {
    const auto bytes = serialize_blob(q);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write weight blob '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

QuantizedWeights read_blob(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight blob '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_blob(bytes);
}

}  // namespace sirenlab
