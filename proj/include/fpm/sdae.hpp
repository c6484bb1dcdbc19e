#pragma once

// Stacked denoising autoencoder: corruption, plain and per-sample weighted
// reconstruction losses, analytic backpropagation, minibatch SGD, encoding
// and per-feature reconstruction errors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpm/error.hpp"
#include "fpm/numcore.hpp"

namespace fpm {

using nlohmann::json;

struct LayerSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    ActivationKind activation = ActivationKind::Identity;
};

struct Layer {
    Matrix W; // in x out
    std::vector<double> b;
    ActivationKind activation = ActivationKind::Identity;

    LayerSpec spec() const { return {W.rows(), W.cols(), activation}; }
};

enum class ActivationPreset { PaperFpm, PaperAppendix, IdentityOut };

inline std::string_view to_string(ActivationPreset p) {
    switch (p) {
    case ActivationPreset::PaperFpm: return "paper-fpm";
    case ActivationPreset::PaperAppendix: return "paper-appendix";
    case ActivationPreset::IdentityOut: return "identity-out";
    }
    return "identity-out";
}

inline ActivationPreset activation_preset_from_string(std::string_view s) {
    if (s == "paper-fpm") return ActivationPreset::PaperFpm;
    if (s == "paper-appendix") return ActivationPreset::PaperAppendix;
    if (s == "identity-out") return ActivationPreset::IdentityOut;
    fail(ErrorKind::InvalidConfig, "unknown activation preset '" + std::string(s) + "'");
}

inline ActivationKind output_activation(ActivationPreset p) {
    switch (p) {
    case ActivationPreset::PaperFpm: return ActivationKind::Sigmoid;
    case ActivationPreset::PaperAppendix: return ActivationKind::Tanh;
    case ActivationPreset::IdentityOut: return ActivationKind::Identity;
    }
    return ActivationKind::Identity;
}

struct AutoencoderModel {
    std::vector<Layer> layers;
    std::size_t encoder_depth = 0; // representation = output of layers[encoder_depth - 1]
    ActivationPreset preset = ActivationPreset::IdentityOut;
    std::uint64_t seed = 0;

    std::size_t data_width() const { return layers.empty() ? 0 : layers.front().W.rows(); }
    std::size_t rep_dim() const { return encoder_depth ? layers[encoder_depth - 1].W.cols() : 0; }

    friend bool operator==(const AutoencoderModel& a, const AutoencoderModel& b) {
        if (a.layers.size() != b.layers.size() || a.encoder_depth != b.encoder_depth || a.preset != b.preset ||
            a.seed != b.seed)
            return false;
        for (std::size_t l = 0; l < a.layers.size(); ++l)
            if (a.layers[l].W != b.layers[l].W || a.layers[l].b != b.layers[l].b ||
                a.layers[l].activation != b.layers[l].activation)
                return false;
        return true;
    }
};

inline void validate(const AutoencoderModel& m) {
    if (m.layers.empty()) fail(ErrorKind::InvalidWidth, "model has no layers");
    if (m.encoder_depth < 1 || m.encoder_depth > m.layers.size())
        fail(ErrorKind::InvalidWidth, "encoder depth out of range");
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const Layer& L = m.layers[l];
        if (L.W.rows() == 0 || L.W.cols() == 0) fail(ErrorKind::InvalidWidth, "layer with zero width");
        if (L.b.size() != L.W.cols()) fail(ErrorKind::DimensionMismatch, "bias length differs from layer width");
        if (l > 0 && m.layers[l - 1].W.cols() != L.W.rows())
            fail(ErrorKind::DimensionMismatch, "layer " + std::to_string(l) + " input width does not chain");
    }
    if (m.layers.back().W.cols() != m.data_width())
        fail(ErrorKind::DimensionMismatch, "output width differs from data width");
}

/// Layers from explicit specs; weights uniform in ±sqrt(6/(fan_in+fan_out)), biases zero.
inline AutoencoderModel init_model(const std::vector<LayerSpec>& specs, std::size_t encoder_depth,
                                   ActivationPreset preset, std::uint64_t seed) {
    AutoencoderModel m;
    m.encoder_depth = encoder_depth;
    m.preset = preset;
    m.seed = seed;
    Rng rng(seed);
    for (const auto& s : specs) {
        if (s.in == 0 || s.out == 0) fail(ErrorKind::InvalidWidth, "layer widths must be >= 1");
        Layer L;
        L.W = Matrix(s.in, s.out);
        const double lim = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
        for (double& v : L.W.data()) v = rng.uniform(-lim, lim);
        L.b.assign(s.out, 0.0);
        L.activation = s.activation;
        m.layers.push_back(std::move(L));
    }
    validate(m);
    return m;
}

/// Symmetric stack data -> hidden... -> rep -> hidden... -> data. ReLU everywhere
/// except the output layer, whose activation comes from the preset.
inline AutoencoderModel init_model(std::size_t data_width, std::size_t rep_dim,
                                   const std::vector<std::size_t>& encoder_hidden,
                                   const std::vector<std::size_t>& decoder_hidden, ActivationPreset preset,
                                   std::uint64_t seed) {
    if (data_width == 0 || rep_dim == 0) fail(ErrorKind::InvalidWidth, "data width and rep_dim must be >= 1");
    std::vector<std::size_t> widths{data_width};
    widths.insert(widths.end(), encoder_hidden.begin(), encoder_hidden.end());
    widths.push_back(rep_dim);
    const std::size_t depth = widths.size() - 1;
    widths.insert(widths.end(), decoder_hidden.begin(), decoder_hidden.end());
    widths.push_back(data_width);
    std::vector<LayerSpec> specs;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const bool last = l + 2 == widths.size();
        specs.push_back({widths[l], widths[l + 1], last ? output_activation(preset) : ActivationKind::ReLU});
    }
    return init_model(specs, depth, preset, seed);
}

// ---------------------------------------------------------------------------
// Corruption

inline Matrix corrupt_mask(const Matrix& x, double keep, Rng& rng) {
    const Matrix m = bernoulli_mask(rng, x.rows(), x.cols(), keep);
    Matrix out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= m.data()[i];
    return out;
}

inline Matrix corrupt_gaussian(const Matrix& x, double noise_factor, Rng& rng) {
    if (!(noise_factor >= 0.0)) fail(ErrorKind::InvalidHyperparameter, "noise factor must be >= 0");
    Matrix out = x;
    for (double& v : out.data()) v += noise_factor * rng.normal();
    return out;
}

// ---------------------------------------------------------------------------
// Forward / losses / backward

struct ForwardPass {
    std::vector<Matrix> pre;  // pre[l] = acts[l] * W_l + b_l
    std::vector<Matrix> acts; // acts[0] = input, acts[l+1] = f_l(pre[l])

    const Matrix& output() const { return acts.back(); }
};

inline Matrix affine(const Matrix& x, const Layer& L) {
    Matrix z = matmul(x, L.W);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double* r = z.row(i).data();
        for (std::size_t j = 0; j < z.cols(); ++j) r[j] += L.b[j];
    }
    return z;
}

inline ForwardPass forward(const AutoencoderModel& m, const Matrix& x, std::size_t upto = SIZE_MAX) {
    if (x.cols() != m.data_width())
        fail(ErrorKind::DimensionMismatch, "input width " + std::to_string(x.cols()) + " != model width " +
                                               std::to_string(m.data_width()));
    ForwardPass f;
    const std::size_t n = std::min(upto, m.layers.size());
    f.pre.reserve(n);
    f.acts.reserve(n + 1);
    f.acts.push_back(x);
    for (std::size_t l = 0; l < n; ++l) {
        f.pre.push_back(affine(f.acts.back(), m.layers[l]));
        f.acts.push_back(activate(f.pre.back(), m.layers[l].activation));
    }
    return f;
}

inline Matrix reconstruct(const AutoencoderModel& m, const Matrix& x) { return forward(m, x).output(); }

inline Matrix encode(const AutoencoderModel& m, const Matrix& x) {
    return forward(m, x, m.encoder_depth).output();
}

inline void check_weights(const std::vector<double>& w, std::size_t n) {
    if (w.size() != n)
        fail(ErrorKind::DimensionMismatch, "weight count " + std::to_string(w.size()) + " != rows " + std::to_string(n));
    for (double v : w)
        if (!(v >= 0.0)) fail(ErrorKind::NegativeWeight, "sample weight " + std::to_string(v));
}

/// Per-sample squared Euclidean errors.
inline std::vector<double> sample_errors(const Matrix& x, const Matrix& xr) {
    require_same_shape(x, xr, "reconstruction");
    std::vector<double> e(x.rows(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* a = x.row(i).data();
        const double* b = xr.row(i).data();
        double s = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double d = a[j] - b[j];
            s += d * d;
        }
        e[i] = s;
    }
    return e;
}

/// (1/n) * sum_i ||x_i - x'_i||^2 (mean over samples, sum over features).
inline double mse_loss(const Matrix& x, const Matrix& xr) {
    const auto e = sample_errors(x, xr);
    if (e.empty()) return 0.0;
    double s = 0.0;
    for (double v : e) s += v;
    return s / static_cast<double>(e.size());
}

inline double weighted_loss(const Matrix& x, const Matrix& xr, const std::vector<double>& w) {
    const auto e = sample_errors(x, xr);
    check_weights(w, e.size());
    if (e.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += w[i] * e[i];
    return s / static_cast<double>(e.size());
}

struct LatentPenalty {
    double value = 0.0;
    Matrix grad; // d value / d z, same shape as z
    bool skipped = false;
};

/// Mean over group pairs of the squared distance between group-mean latent
/// vectors. Fewer than two groups present gives 0 and skipped = true.
inline LatentPenalty latent_penalty(const Matrix& z, const std::vector<int>& groups) {
    if (groups.size() != z.rows()) fail(ErrorKind::DimensionMismatch, "group count differs from latent rows");
    LatentPenalty out;
    out.grad = Matrix(z.rows(), z.cols());
    std::vector<int> ids(groups);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) {
        out.skipped = true;
        return out;
    }
    const std::size_t G = ids.size(), d = z.cols();
    Matrix means(G, d);
    std::vector<double> counts(G, 0.0);
    std::vector<std::size_t> slot(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        slot[i] = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), groups[i]) - ids.begin());
        counts[slot[i]] += 1.0;
        for (std::size_t j = 0; j < d; ++j) means(slot[i], j) += z(i, j);
    }
    for (std::size_t g = 0; g < G; ++g)
        for (std::size_t j = 0; j < d; ++j) means(g, j) /= counts[g];
    const double pairs = static_cast<double>(G * (G - 1) / 2);
    // d/dmean_a = sum_{b != a} 2 (mean_a - mean_b) / pairs
    Matrix dmean(G, d);
    for (std::size_t a = 0; a < G; ++a)
        for (std::size_t b = a + 1; b < G; ++b)
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = means(a, j) - means(b, j);
                out.value += diff * diff;
                dmean(a, j) += 2.0 * diff / pairs;
                dmean(b, j) -= 2.0 * diff / pairs;
            }
    out.value /= pairs;
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) out.grad(i, j) = dmean(slot[i], j) / counts[slot[i]];
    return out;
}

inline double latent_penalty_value(const std::vector<std::vector<double>>& group_means) {
    const std::size_t G = group_means.size();
    if (G < 2) return 0.0;
    double s = 0.0;
    for (std::size_t a = 0; a < G; ++a)
        for (std::size_t b = a + 1; b < G; ++b) {
            if (group_means[a].size() != group_means[b].size())
                fail(ErrorKind::DimensionMismatch, "group mean widths differ");
            for (std::size_t j = 0; j < group_means[a].size(); ++j) {
                const double d = group_means[a][j] - group_means[b][j];
                s += d * d;
            }
        }
    return s / static_cast<double>(G * (G - 1) / 2);
}

struct Gradients {
    std::vector<Matrix> dW;
    std::vector<std::vector<double>> db;
};

/// Gradients of weighted_loss(target, output) + lambda * latent_penalty(z)
/// w.r.t. every parameter. The penalty term enters at the representation
/// layer and therefore only reaches the encoder.
inline Gradients backward(const AutoencoderModel& m, const ForwardPass& f, const Matrix& target,
                          const std::vector<double>& w, const Matrix* latent_grad = nullptr,
                          double lambda = 0.0) {
    const std::size_t L = m.layers.size();
    if (f.pre.size() != L) fail(ErrorKind::DimensionMismatch, "forward pass is partial");
    const Matrix& out = f.output();
    require_same_shape(target, out, "backward target");
    check_weights(w, out.rows());
    const double n = static_cast<double>(out.rows());
    Matrix g(out.rows(), out.cols());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        const double c = -2.0 * w[i] / n;
        for (std::size_t j = 0; j < out.cols(); ++j) g(i, j) = c * (target(i, j) - out(i, j));
    }
    Gradients grads;
    grads.dW.resize(L);
    grads.db.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        if (latent_grad && lambda != 0.0 && l + 1 == m.encoder_depth) {
            require_same_shape(*latent_grad, g, "latent gradient");
            for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += lambda * latent_grad->data()[i];
        }
        const ActivationKind act = m.layers[l].activation;
        if (act != ActivationKind::Identity) {
            const Matrix& z = f.pre[l];
            for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= activation_derivative(act, z.data()[i]);
        }
        grads.dW[l] = matmul_tn(f.acts[l], g);
        auto& db = grads.db[l];
        db.assign(g.cols(), 0.0);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) db[j] += g(i, j);
        if (l > 0) g = matmul(g, transpose(m.layers[l].W)); // same summation order as a dot product, but vectorises
    }
    return grads;
}

inline void sgd_step(AutoencoderModel& m, const Gradients& g, double lr) {
    if (g.dW.size() != m.layers.size() || g.db.size() != m.layers.size())
        fail(ErrorKind::DimensionMismatch, "gradient layer count differs from model");
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        Layer& L = m.layers[l];
        require_same_shape(L.W, g.dW[l], "weight gradient");
        if (g.db[l].size() != L.b.size()) fail(ErrorKind::DimensionMismatch, "bias gradient length");
        auto& W = L.W.data();
        const auto& dW = g.dW[l].data();
        for (std::size_t i = 0; i < W.size(); ++i) W[i] -= lr * dW[i];
        for (std::size_t j = 0; j < L.b.size(); ++j) L.b[j] -= lr * g.db[l][j];
    }
}

// ---------------------------------------------------------------------------
// Training

enum class LossKind { Plain, Weighted };
enum class NoiseKind { Mask, Gaussian };

inline std::string_view to_string(LossKind k) { return k == LossKind::Plain ? "plain" : "weighted"; }
inline std::string_view to_string(NoiseKind k) { return k == NoiseKind::Mask ? "mask" : "gaussian"; }

inline LossKind loss_kind_from_string(std::string_view s) {
    if (s == "plain") return LossKind::Plain;
    if (s == "weighted") return LossKind::Weighted;
    fail(ErrorKind::InvalidConfig, "unknown loss kind '" + std::string(s) + "'");
}

inline NoiseKind noise_kind_from_string(std::string_view s) {
    if (s == "mask") return NoiseKind::Mask;
    if (s == "gaussian") return NoiseKind::Gaussian;
    fail(ErrorKind::InvalidConfig, "unknown noise kind '" + std::string(s) + "'");
}

struct TrainConfig {
    LossKind loss_kind = LossKind::Plain;
    NoiseKind noise_kind = NoiseKind::Mask;
    double noise = 0.95; // keep-probability for mask, factor for gaussian
    double learning_rate = 0.001;
    std::size_t epochs = 100;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    double lambda = 0.0;

    /// Weighted loss, gaussian corruption 0.05, lr 0.01, batch 32.
    static TrainConfig fpm() {
        TrainConfig c;
        c.loss_kind = LossKind::Weighted;
        c.noise_kind = NoiseKind::Gaussian;
        c.noise = 0.05;
        c.learning_rate = 0.01;
        c.batch_size = 32;
        return c;
    }

    /// Plain loss, masking with keep-probability 0.95, lr 0.001, batch 128.
    static TrainConfig sdae() { return {}; }

    /// Baseline hyperparameters with reweighing weights in the loss.
    static TrainConfig rw_sdae() {
        TrainConfig c;
        c.loss_kind = LossKind::Weighted;
        return c;
    }

    void validate() const {
        if (!(learning_rate > 0.0)) fail(ErrorKind::InvalidHyperparameter, "learning rate must be > 0");
        if (batch_size < 1) fail(ErrorKind::InvalidHyperparameter, "batch size must be >= 1");
        if (!(lambda >= 0.0)) fail(ErrorKind::InvalidHyperparameter, "lambda must be >= 0");
        if (noise_kind == NoiseKind::Mask && !(noise >= 0.0 && noise <= 1.0))
            fail(ErrorKind::InvalidProbability, "mask keep-probability must be in [0,1]");
        if (noise_kind == NoiseKind::Gaussian && !(noise >= 0.0))
            fail(ErrorKind::InvalidHyperparameter, "noise factor must be >= 0");
    }
};

struct LossReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    double reconstruction_loss = 0.0;          // plain, clean training data
    double weighted_reconstruction_loss = 0.0; // with the training weights
    std::vector<double> feature_errors;
    std::size_t penalty_skipped_batches = 0;
};

struct TrainData {
    const Matrix& x;
    std::vector<double> weights;  // empty = all ones
    std::vector<int> groups;      // needed only when lambda > 0
};

inline Matrix corrupt(const Matrix& x, const TrainConfig& cfg, Rng& rng) {
    return cfg.noise_kind == NoiseKind::Mask ? corrupt_mask(x, cfg.noise, rng) : corrupt_gaussian(x, cfg.noise, rng);
}

inline std::vector<double> per_feature_errors(const AutoencoderModel& m, const Matrix& x);

/// Minibatch SGD. Each epoch shuffles the rows, corrupts every batch, and
/// fits the reconstruction of the clean batch. train_loss[e] is the row-weighted
/// mean of the batch objectives; val_loss[e] the plain loss on clean val data.
inline LossReport train(AutoencoderModel& m, const TrainData& data, const Matrix* val, const TrainConfig& cfg,
                        const std::function<void(std::size_t, double, double)>& on_epoch = {}) {
    cfg.validate();
    validate(m);
    const Matrix& x = data.x;
    const std::size_t n = x.rows();
    if (x.cols() != m.data_width()) fail(ErrorKind::DimensionMismatch, "training data width differs from model");
    if (val && val->cols() != m.data_width()) fail(ErrorKind::DimensionMismatch, "validation width differs from model");
    std::vector<double> w = data.weights;
    if (cfg.loss_kind == LossKind::Plain || w.empty()) w.assign(n, 1.0);
    check_weights(w, n);
    const bool penalise = cfg.lambda > 0.0;
    if (penalise && data.groups.size() != n)
        fail(ErrorKind::DimensionMismatch, "latent penalty needs one group id per training row");

    LossReport rep;
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const Matrix clean = x.select_rows(idx);
            std::vector<double> bw(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) bw[i] = w[idx[i]];
            const ForwardPass f = forward(m, corrupt(clean, cfg, rng));
            double obj = weighted_loss(clean, f.output(), bw);
            Gradients g;
            if (penalise) {
                std::vector<int> bg(idx.size());
                for (std::size_t i = 0; i < idx.size(); ++i) bg[i] = data.groups[idx[i]];
                const LatentPenalty p = latent_penalty(f.acts[m.encoder_depth], bg);
                rep.penalty_skipped_batches += p.skipped;
                obj += cfg.lambda * p.value;
                g = backward(m, f, clean, bw, &p.grad, cfg.lambda);
            } else {
                g = backward(m, f, clean, bw);
            }
            sgd_step(m, g, cfg.learning_rate);
            total += obj * static_cast<double>(idx.size());
        }
        rep.train_loss.push_back(n ? total / static_cast<double>(n) : 0.0);
        rep.val_loss.push_back(val && val->rows() ? mse_loss(*val, reconstruct(m, *val)) : 0.0);
        if (on_epoch) on_epoch(epoch, rep.train_loss.back(), rep.val_loss.back());
    }
    if (n) {
        const Matrix xr = reconstruct(m, x);
        rep.reconstruction_loss = mse_loss(x, xr);
        rep.weighted_reconstruction_loss = weighted_loss(x, xr, w);
        rep.feature_errors = per_feature_errors(m, x);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Per-feature reconstruction errors

inline std::vector<double> per_feature_errors(const Matrix& x, const Matrix& xr) {
    require_same_shape(x, xr, "per-feature errors");
    std::vector<double> e(x.cols(), 0.0);
    if (x.rows() == 0) return e;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double d = x(i, j) - xr(i, j);
            e[j] += d * d;
        }
    for (double& v : e) v /= static_cast<double>(x.rows());
    return e;
}

inline std::vector<double> per_feature_errors(const AutoencoderModel& m, const Matrix& x) {
    return per_feature_errors(x, reconstruct(m, x));
}

/// Feature indices ordered by ascending error (ties by index); best = first top_n,
/// worst = last top_n in descending order.
struct FeatureRanking {
    std::vector<std::size_t> best;
    std::vector<std::size_t> worst;
};

inline FeatureRanking rank_features(const std::vector<double>& errors, std::size_t top_n) {
    std::vector<std::size_t> idx(errors.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return errors[a] < errors[b]; });
    const std::size_t k = std::min(top_n, idx.size());
    FeatureRanking r;
    r.best.assign(idx.begin(), idx.begin() + static_cast<long>(k));
    r.worst.assign(idx.rbegin(), idx.rbegin() + static_cast<long>(k));
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json to_json(const TrainConfig& c) {
    return {{"loss_kind", to_string(c.loss_kind)},
            {"noise_kind", to_string(c.noise_kind)},
            {"noise", c.noise},
            {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"lambda", c.lambda}};
}

inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.loss_kind = loss_kind_from_string(j.at("loss_kind").get<std::string>());
    c.noise_kind = noise_kind_from_string(j.at("noise_kind").get<std::string>());
    c.noise = j.at("noise").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.lambda = j.at("lambda").get<double>();
    return c;
}

inline json to_json(const LossReport& r) {
    return {{"train_loss", r.train_loss},
            {"val_loss", r.val_loss},
            {"reconstruction_loss", r.reconstruction_loss},
            {"weighted_reconstruction_loss", r.weighted_reconstruction_loss},
            {"feature_errors", r.feature_errors},
            {"penalty_skipped_batches", r.penalty_skipped_batches}};
}

inline LossReport loss_report_from_json(const json& j) {
    LossReport r;
    r.train_loss = j.at("train_loss").get<std::vector<double>>();
    r.val_loss = j.at("val_loss").get<std::vector<double>>();
    r.reconstruction_loss = j.at("reconstruction_loss").get<double>();
    r.weighted_reconstruction_loss = j.at("weighted_reconstruction_loss").get<double>();
    r.feature_errors = j.at("feature_errors").get<std::vector<double>>();
    r.penalty_skipped_batches = j.value("penalty_skipped_batches", std::size_t{0});
    return r;
}

inline json to_json(const AutoencoderModel& m) {
    json layers = json::array();
    for (const auto& L : m.layers)
        layers.push_back({{"in", L.W.rows()},
                          {"out", L.W.cols()},
                          {"activation", to_string(L.activation)},
                          {"W", L.W.data()},
                          {"b", L.b}});
    return {{"activation_preset", to_string(m.preset)},
            {"encoder_depth", m.encoder_depth},
            {"seed", m.seed},
            {"layers", layers}};
}

inline AutoencoderModel autoencoder_from_json(const json& j) {
    AutoencoderModel m;
    m.preset = activation_preset_from_string(j.at("activation_preset").get<std::string>());
    m.encoder_depth = j.at("encoder_depth").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& jl : j.at("layers")) {
        Layer L;
        L.W = Matrix(jl.at("in").get<std::size_t>(), jl.at("out").get<std::size_t>(),
                     jl.at("W").get<std::vector<double>>());
        L.b = jl.at("b").get<std::vector<double>>();
        L.activation = activation_from_string(jl.at("activation").get<std::string>());
        m.layers.push_back(std::move(L));
    }
    validate(m);
    return m;
}

struct Checkpoint {
    AutoencoderModel model;
    TrainConfig config;
    LossReport report;
    std::string preset; // sdae | fpm | rw-sdae
};

inline json to_json(const Checkpoint& c) {
    return {{"schema_version", 1},
            {"preset", c.preset},
            {"model", to_json(c.model)},
            {"train_config", to_json(c.config)},
            {"loss_report", to_json(c.report)}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
    Checkpoint c;
    c.preset = j.at("preset").get<std::string>();
    c.model = autoencoder_from_json(j.at("model"));
    c.config = train_config_from_json(j.at("train_config"));
    c.report = loss_report_from_json(j.at("loss_report"));
    return c;
}

} // namespace fpm
