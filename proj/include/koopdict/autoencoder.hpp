#pragma once

// Dense multilayer-perceptron autoencoder trained by minibatch gradient
// descent on the mean squared reconstruction error.
//
// Layer l (l = 1..L-1) computes x^(l) = g(b^(l-1) + W^(l-1) x^(l-1)) with
// W^(l-1) of shape K^(l) x K^(l-1). The encoder is layers 1..latent_index, the
// decoder the remainder. Internally samples are columns; the public batch API
// takes one sample per row.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopdict/error.hpp"

namespace koopdict::ae {

enum class Activation : std::uint8_t { sigmoid = 0, relu = 1, linear = 2 };
enum class OutputActivation : std::uint8_t { same = 0, linear = 1, sigmoid = 2 };
enum class Optimizer { sgd, adam };

struct LayerSpec {
    std::vector<int> sizes;
    int latent_index = 1;
    Activation activation = Activation::sigmoid;
    OutputActivation output_activation = OutputActivation::sigmoid;

    /// input -> hidden... -> latent -> reversed hidden... -> input
    static LayerSpec symmetric(int input, const std::vector<int>& hidden, int latent,
                               Activation act = Activation::sigmoid,
                               OutputActivation out = OutputActivation::sigmoid) {
        LayerSpec s;
        s.sizes.push_back(input);
        s.sizes.insert(s.sizes.end(), hidden.begin(), hidden.end());
        s.latent_index = static_cast<int>(s.sizes.size());
        s.sizes.push_back(latent);
        s.sizes.insert(s.sizes.end(), hidden.rbegin(), hidden.rend());
        s.sizes.push_back(input);
        s.activation = act;
        s.output_activation = out;
        s.validate();
        return s;
    }

    void validate() const {
        if (sizes.size() < 3) throw InvalidArgument("layer spec needs at least input, latent and output layers");
        for (int k : sizes)
            if (k < 1) throw InvalidArgument("layer sizes must be positive");
        if (sizes.front() != sizes.back()) throw InvalidArgument("autoencoder input and output sizes differ");
        if (latent_index <= 0 || latent_index >= static_cast<int>(sizes.size()) - 1)
            throw InvalidArgument("latent layer must be strictly interior");
        if (sizes[static_cast<std::size_t>(latent_index)] >= sizes.front())
            throw InvalidArgument("latent size must be smaller than the input size");
    }

    int input_size() const { return sizes.front(); }
    int latent_size() const { return sizes[static_cast<std::size_t>(latent_index)]; }
    /// Number of weight layers (transitions).
    int depth() const { return static_cast<int>(sizes.size()) - 1; }

    /// Activation applied when producing layer `l` (1-based over non-input layers).
    Activation activation_at(int l) const {
        if (l < depth()) return activation;
        switch (output_activation) {
            case OutputActivation::linear: return Activation::linear;
            case OutputActivation::sigmoid: return Activation::sigmoid;
            case OutputActivation::same: break;
        }
        return activation;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 1; l < sizes.size(); ++l)
            n += static_cast<std::size_t>(sizes[l]) * static_cast<std::size_t>(sizes[l - 1]) +
                 static_cast<std::size_t>(sizes[l]);
        return n;
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct MlpParams {
    LayerSpec spec;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    std::uint64_t seed = 0;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        return n;
    }

    void check_shapes() const {
        spec.validate();
        if (weights.size() != static_cast<std::size_t>(spec.depth()) || biases.size() != weights.size())
            throw InvalidArgument("parameter layer count does not match spec");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l].rows() != spec.sizes[l + 1] || weights[l].cols() != spec.sizes[l] ||
                biases[l].size() != spec.sizes[l + 1])
                throw InvalidArgument("parameter shapes inconsistent at layer " + std::to_string(l));
        }
    }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

struct TrainConfig {
    int epochs = 2000;
    double learning_rate = 0.05;
    int batch_size = 32;
    std::uint64_t seed = 42;
    Optimizer optimizer = Optimizer::sgd;

    /// Learning-rate default for each optimizer (SGD 0.05, Adam 1e-3).
    static double default_learning_rate(Optimizer opt) { return opt == Optimizer::adam ? 1e-3 : 0.05; }

    void validate() const {
        if (epochs < 0) throw InvalidArgument("train: epochs must be >= 0");
        if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning rate must be > 0");
        if (batch_size < 1) throw InvalidArgument("train: batch size must be >= 1");
    }
};

struct TrainReport {
    std::vector<double> epoch_loss;
    double final_accuracy = std::numeric_limits<double>::quiet_NaN();
    double wall_seconds = 0.0;
};

namespace detail {

inline void activate(Activation a, Eigen::MatrixXd& z) {
    switch (a) {
        case Activation::sigmoid: z = (1.0 + (-z.array()).exp()).inverse().matrix(); break;
        case Activation::relu: z = z.cwiseMax(0.0); break;
        case Activation::linear: break;
    }
}

/// Derivative expressed through the layer output.
inline Eigen::ArrayXXd activation_slope(Activation a, const Eigen::MatrixXd& out) {
    switch (a) {
        case Activation::sigmoid: return out.array() * (1.0 - out.array());
        case Activation::relu: return (out.array() > 0.0).cast<double>();
        case Activation::linear: break;
    }
    return Eigen::ArrayXXd::Ones(out.rows(), out.cols());
}

/// Runs layers first+1 .. last on column samples `x` (which sits at layer `first`).
/// Returns the outputs of every layer visited, starting with `x` itself.
inline std::vector<Eigen::MatrixXd> propagate(const MlpParams& p, const Eigen::MatrixXd& x, int first, int last) {
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(static_cast<std::size_t>(last - first + 1));
    acts.push_back(x);
    for (int l = first + 1; l <= last; ++l) {
        const auto li = static_cast<std::size_t>(l - 1);
        Eigen::MatrixXd z = p.weights[li] * acts.back();
        z.colwise() += p.biases[li];
        activate(p.spec.activation_at(l), z);
        if (!z.allFinite()) throw NumericError("non-finite activation at layer " + std::to_string(l));
        acts.push_back(std::move(z));
    }
    return acts;
}

inline Eigen::MatrixXd run(const MlpParams& p, const Eigen::MatrixXd& x, int first, int last) {
    Eigen::MatrixXd cur = x;
    for (int l = first + 1; l <= last; ++l) {
        const auto li = static_cast<std::size_t>(l - 1);
        Eigen::MatrixXd z = p.weights[li] * cur;
        z.colwise() += p.biases[li];
        activate(p.spec.activation_at(l), z);
        if (!z.allFinite()) throw NumericError("non-finite activation at layer " + std::to_string(l));
        cur = std::move(z);
    }
    return cur;
}

/// Loss and gradients for column samples (mean over columns of squared norms).
inline double loss_and_gradients(const MlpParams& p, const Eigen::MatrixXd& x, Gradients& g) {
    const int depth = p.spec.depth();
    const auto acts = propagate(p, x, 0, depth);
    const double inv_b = 1.0 / static_cast<double>(x.cols());
    const Eigen::MatrixXd diff = acts.back() - x;
    const double loss = diff.squaredNorm() * inv_b;

    g.weights.resize(static_cast<std::size_t>(depth));
    g.biases.resize(static_cast<std::size_t>(depth));
    Eigen::MatrixXd delta =
        ((2.0 * inv_b) * diff.array() * activation_slope(p.spec.activation_at(depth), acts.back())).matrix();
    for (int l = depth; l >= 1; --l) {
        const auto li = static_cast<std::size_t>(l - 1);
        g.weights[li].noalias() = delta * acts[li].transpose();
        g.biases[li] = delta.rowwise().sum();
        if (l > 1) {
            Eigen::MatrixXd back = p.weights[li].transpose() * delta;
            delta = (back.array() * activation_slope(p.spec.activation_at(l - 1), acts[li])).matrix();
        }
    }
    return loss;
}

inline double uniform01(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline void check_rows(const MlpParams& p, const Eigen::MatrixXd& x, int layer) {
    if (x.cols() != p.spec.sizes[static_cast<std::size_t>(layer)])
        throw InvalidArgument("expected " + std::to_string(p.spec.sizes[static_cast<std::size_t>(layer)]) +
                              " features, got " + std::to_string(x.cols()));
}

}  // namespace detail

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
inline MlpParams initialize(const LayerSpec& spec, std::uint64_t seed) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    p.seed = seed;
    std::mt19937_64 gen(seed);
    for (std::size_t l = 1; l < spec.sizes.size(); ++l) {
        const int out = spec.sizes[l];
        const int in = spec.sizes[l - 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        Eigen::MatrixXd w(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) w(r, c) = (2.0 * detail::uniform01(gen) - 1.0) * limit;
        p.weights.push_back(std::move(w));
        p.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    return p;
}

struct ForwardResult {
    Eigen::VectorXd output;
    /// Layer outputs, index 0 being the input itself.
    std::vector<Eigen::VectorXd> activations;
};

inline ForwardResult forward(const MlpParams& p, const Eigen::VectorXd& x) {
    if (x.size() != p.spec.input_size()) throw InvalidArgument("forward: input size mismatch");
    const auto acts = detail::propagate(p, x, 0, p.spec.depth());
    ForwardResult r;
    for (const auto& a : acts) r.activations.emplace_back(a.col(0));
    r.output = r.activations.back();
    return r;
}

inline Eigen::VectorXd encode(const MlpParams& p, const Eigen::VectorXd& x) {
    if (x.size() != p.spec.input_size()) throw InvalidArgument("encode: input size mismatch");
    return detail::run(p, x, 0, p.spec.latent_index).col(0);
}

inline Eigen::VectorXd decode(const MlpParams& p, const Eigen::VectorXd& z) {
    if (z.size() != p.spec.latent_size()) throw InvalidArgument("decode: latent size mismatch");
    return detail::run(p, z, p.spec.latent_index, p.spec.depth()).col(0);
}

/// Row-per-sample batch versions.
inline Eigen::MatrixXd encode_batch(const MlpParams& p, const Eigen::MatrixXd& x) {
    detail::check_rows(p, x, 0);
    return detail::run(p, x.transpose(), 0, p.spec.latent_index).transpose();
}

inline Eigen::MatrixXd decode_batch(const MlpParams& p, const Eigen::MatrixXd& z) {
    detail::check_rows(p, z, p.spec.latent_index);
    return detail::run(p, z.transpose(), p.spec.latent_index, p.spec.depth()).transpose();
}

inline Eigen::MatrixXd reconstruct_batch(const MlpParams& p, const Eigen::MatrixXd& x) {
    detail::check_rows(p, x, 0);
    return detail::run(p, x.transpose(), 0, p.spec.depth()).transpose();
}

/// (1/N) sum_n ||xhat_n - x_n||^2 over a row-per-sample batch.
inline double mse_loss(const MlpParams& p, const Eigen::MatrixXd& batch) {
    if (batch.rows() == 0) throw InvalidArgument("mse_loss: empty batch");
    const Eigen::MatrixXd recon = reconstruct_batch(p, batch);
    return (recon - batch).squaredNorm() / static_cast<double>(batch.rows());
}

/// Exact reverse-mode gradient of mse_loss.
inline Gradients backprop_gradients(const MlpParams& p, const Eigen::MatrixXd& batch) {
    if (batch.rows() == 0) throw InvalidArgument("backprop_gradients: empty batch");
    detail::check_rows(p, batch, 0);
    Gradients g;
    detail::loss_and_gradients(p, batch.transpose(), g);
    for (std::size_t l = 0; l < g.weights.size(); ++l)
        if (!g.weights[l].allFinite() || !g.biases[l].allFinite())
            throw NumericError("non-finite gradient at layer " + std::to_string(l + 1));
    return g;
}

/// 1 - sum ||xhat - x||^2 / sum ||x - mean||^2.
inline double accuracy(const MlpParams& p, const Eigen::MatrixXd& data) {
    if (data.rows() == 0) throw InvalidArgument("accuracy: empty data");
    if ((data.colwise().maxCoeff() - data.colwise().minCoeff()).isZero(0.0))
        throw InvalidArgument("accuracy: data has zero variance");
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const double total = (data.rowwise() - mean).squaredNorm();
    const Eigen::MatrixXd recon = reconstruct_batch(p, data);
    return 1.0 - (recon - data).squaredNorm() / total;
}

namespace detail {

struct AdamState {
    std::vector<Eigen::MatrixXd> mw, vw;
    std::vector<Eigen::VectorXd> mb, vb;
    long t = 0;

    explicit AdamState(const MlpParams& p) {
        for (std::size_t l = 0; l < p.weights.size(); ++l) {
            mw.push_back(Eigen::MatrixXd::Zero(p.weights[l].rows(), p.weights[l].cols()));
            vw.push_back(mw.back());
            mb.push_back(Eigen::VectorXd::Zero(p.biases[l].size()));
            vb.push_back(mb.back());
        }
    }
};

template <class Param, class Moment>
void adam_update(Param& theta, const Param& grad, Moment& m, Moment& v, double lr, double c1, double c2) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

}  // namespace detail

/// Minibatch training on row-per-sample data already scaled into [0, 1].
/// Deterministic for a given (spec, data, cfg).
inline std::pair<MlpParams, TrainReport> train(const LayerSpec& spec, const Eigen::MatrixXd& data,
                                               const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (data.rows() == 0) throw InvalidArgument("train: empty data");
    if (data.cols() != spec.input_size()) throw InvalidArgument("train: data width does not match input layer");
    if (!data.allFinite() || data.minCoeff() < -1e-12 || data.maxCoeff() > 1.0 + 1e-12)
        throw InvalidArgument("train: data must be scaled into [0, 1]");

    const auto start = std::chrono::steady_clock::now();
    MlpParams p = initialize(spec, cfg.seed);
    TrainReport report;
    if (cfg.epochs == 0) return {std::move(p), std::move(report)};

    const Eigen::MatrixXd cols = data.transpose();
    const Eigen::Index n = cols.cols();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Shuffling draws from a stream separate from initialization.
    std::mt19937_64 gen(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    detail::AdamState adam(p);
    Gradients g;
    Eigen::MatrixXd batch;
    report.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[gen() % (i + 1)]);

        double epoch_sum = 0.0;
        for (Eigen::Index s = 0; s < n; s += cfg.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - s);
            batch.resize(cols.rows(), b);
            for (Eigen::Index c = 0; c < b; ++c) batch.col(c) = cols.col(order[static_cast<std::size_t>(s + c)]);

            const double loss = detail::loss_and_gradients(p, batch, g);
            if (!std::isfinite(loss))
                throw NumericError("training diverged at epoch " + std::to_string(epoch));
            epoch_sum += loss * static_cast<double>(b);

            if (cfg.optimizer == Optimizer::sgd) {
                for (std::size_t l = 0; l < p.weights.size(); ++l) {
                    p.weights[l] -= cfg.learning_rate * g.weights[l];
                    p.biases[l] -= cfg.learning_rate * g.biases[l];
                }
            } else {
                ++adam.t;
                const double c1 = 1.0 - std::pow(0.9, static_cast<double>(adam.t));
                const double c2 = 1.0 - std::pow(0.999, static_cast<double>(adam.t));
                for (std::size_t l = 0; l < p.weights.size(); ++l) {
                    detail::adam_update(p.weights[l], g.weights[l], adam.mw[l], adam.vw[l], cfg.learning_rate, c1, c2);
                    detail::adam_update(p.biases[l], g.biases[l], adam.mb[l], adam.vb[l], cfg.learning_rate, c1, c2);
                }
            }
        }
        const double epoch_loss = epoch_sum / static_cast<double>(n);
        if (!std::isfinite(epoch_loss)) throw NumericError("training diverged at epoch " + std::to_string(epoch));
        report.epoch_loss.push_back(epoch_loss);
    }

    if (!(data.colwise().maxCoeff() - data.colwise().minCoeff()).isZero(0.0))
        report.final_accuracy = accuracy(p, data);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(p), std::move(report)};
}

// ---------------------------------------------------------------------------
// persistence
//
// Little-endian layout:
//   char[8]  magic "KDMLP\0\0\1"
//   u32      layer count L
//   u32[L]   layer sizes
//   u32      latent index
//   u8       hidden activation, u8 output activation, u16 reserved (0)
//   u64      seed
//   per transition l: f64[K_l * K_{l-1}] weights (row-major), f64[K_l] biases

namespace detail {

inline constexpr char kMagic[8] = {'K', 'D', 'M', 'L', 'P', '\0', '\0', '\1'};

template <class U>
void put_le(std::ostream& out, U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

template <class U>
U get_le(std::istream& in) {
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) throw Error("model file truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
    return v;
}

}  // namespace detail

inline void save_model(const std::filesystem::path& path, const MlpParams& p) {
    p.check_shapes();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(detail::kMagic, sizeof detail::kMagic);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.spec.sizes.size()));
    for (int k : p.spec.sizes) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(k));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.spec.latent_index));
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.spec.activation));
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.spec.output_activation));
    detail::put_le<std::uint16_t>(out, 0);
    detail::put_le<std::uint64_t>(out, p.seed);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const auto& w = p.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) detail::put_le(out, std::bit_cast<std::uint64_t>(w(r, c)));
        for (Eigen::Index r = 0; r < p.biases[l].size(); ++r)
            detail::put_le(out, std::bit_cast<std::uint64_t>(p.biases[l][r]));
    }
    if (!out) throw Error("failed writing " + path.string());
}

inline MlpParams load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, detail::kMagic, sizeof magic) != 0)
        throw Error(path.string() + " is not a koopdict model file");
    MlpParams p;
    const auto n_layers = detail::get_le<std::uint32_t>(in);
    if (n_layers < 3 || n_layers > 4096) throw Error("model file: implausible layer count");
    for (std::uint32_t i = 0; i < n_layers; ++i) p.spec.sizes.push_back(static_cast<int>(detail::get_le<std::uint32_t>(in)));
    p.spec.latent_index = static_cast<int>(detail::get_le<std::uint32_t>(in));
    const auto act = detail::get_le<std::uint8_t>(in);
    const auto out_act = detail::get_le<std::uint8_t>(in);
    if (act > 2 || out_act > 2) throw Error("model file: unknown activation tag");
    p.spec.activation = static_cast<Activation>(act);
    p.spec.output_activation = static_cast<OutputActivation>(out_act);
    (void)detail::get_le<std::uint16_t>(in);
    p.seed = detail::get_le<std::uint64_t>(in);
    p.spec.validate();
    for (std::size_t l = 1; l < p.spec.sizes.size(); ++l) {
        Eigen::MatrixXd w(p.spec.sizes[l], p.spec.sizes[l - 1]);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
        Eigen::VectorXd b(p.spec.sizes[l]);
        for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw Error("model file: trailing bytes");
    return p;
}

}  // namespace koopdict::ae
