#include <cmath>

#include <gtest/gtest.h>

#include "fpm/sdae.hpp"
#include "grad_check.hpp"

using namespace fpm;
using namespace fpm::testing;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m = gaussian(rng, r, c);
    for (double& v : m.data()) v *= scale;
    return m;
}

} // namespace

TEST(Init, LayerWidthsAndDeterminism) {
    const AutoencoderModel m = init_model(100, 500, {500, 500}, {500, 500}, ActivationPreset::PaperAppendix, 3);
    const std::vector<std::size_t> widths{100, 500, 500, 500, 500, 500, 100};
    ASSERT_EQ(m.layers.size(), 6u);
    for (std::size_t l = 0; l < 6; ++l) {
        EXPECT_EQ(m.layers[l].W.rows(), widths[l]);
        EXPECT_EQ(m.layers[l].W.cols(), widths[l + 1]);
        EXPECT_EQ(m.layers[l].activation, l == 5 ? ActivationKind::Tanh : ActivationKind::ReLU);
        for (double b : m.layers[l].b) EXPECT_EQ(b, 0.0);
        const double lim = std::sqrt(6.0 / static_cast<double>(widths[l] + widths[l + 1]));
        for (double v : m.layers[l].W.data()) ASSERT_LE(std::abs(v), lim);
    }
    EXPECT_EQ(m.encoder_depth, 3u);
    EXPECT_EQ(m.rep_dim(), 500u);
    EXPECT_EQ(init_model(100, 500, {500, 500}, {500, 500}, ActivationPreset::PaperAppendix, 3), m);
    EXPECT_THROW(init_model(0, 5, {}, {}, ActivationPreset::IdentityOut, 1), Error);
    EXPECT_THROW(init_model(4, 5, {0}, {}, ActivationPreset::IdentityOut, 1), Error);
}

TEST(Init, ZeroInputGivesZeroThroughReluInterior) {
    const AutoencoderModel m = init_model(6, 4, {5}, {5}, ActivationPreset::IdentityOut, 8);
    const ForwardPass f = forward(m, Matrix(3, 6));
    for (double v : f.output().data()) EXPECT_EQ(v, 0.0);
}

TEST(Corruption, MaskExtremesAndRate) {
    Rng rng(4);
    const Matrix x = random_matrix(rng, 200, 500);
    EXPECT_EQ(corrupt_mask(x, 1.0, rng), x);
    const Matrix none = corrupt_mask(x, 0.0, rng);
    for (double v : none.data()) EXPECT_EQ(v, 0.0);
    const Matrix c = corrupt_mask(x, 0.95, rng);
    std::size_t zeroed = 0;
    for (double v : c.data()) zeroed += v == 0.0;
    EXPECT_NEAR(static_cast<double>(zeroed) / static_cast<double>(x.size()), 0.05, 0.003);
    EXPECT_THROW(corrupt_mask(x, 1.2, rng), Error);
}

TEST(Corruption, GaussianHalfNormalMean) {
    Rng rng(6);
    const Matrix x = random_matrix(rng, 100, 1000);
    EXPECT_EQ(corrupt_gaussian(x, 0.0, rng), x);
    const Matrix c = corrupt_gaussian(x, 0.05, rng);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(c.data()[i] - x.data()[i]);
    const double expected = 0.05 * std::sqrt(2.0 / M_PI);
    EXPECT_NEAR(s / static_cast<double>(x.size()), expected, 0.0005);
    Rng a(1), b(1);
    EXPECT_EQ(corrupt_gaussian(x, 0.05, a), corrupt_gaussian(x, 0.05, b));
}

TEST(Forward, TrivialModels) {
    AutoencoderModel zero = init_model(4, 2, {}, {}, ActivationPreset::IdentityOut, 1);
    for (auto& L : zero.layers) std::fill(L.W.data().begin(), L.W.data().end(), 0.0);
    Rng rng(2);
    const Matrix x = random_matrix(rng, 3, 4);
    const Matrix r = reconstruct(zero, x);
    for (double v : r.data()) EXPECT_EQ(v, 0.0);

    AutoencoderModel id;
    id.layers.push_back({Matrix::identity(4), std::vector<double>(4, 0.0), ActivationKind::Identity});
    id.encoder_depth = 1;
    EXPECT_EQ(reconstruct(id, x), x);
    EXPECT_THROW(forward(id, Matrix(2, 3)), Error);
}

TEST(Forward, BatchEqualsRowByRow) {
    const AutoencoderModel m = init_model(6, 3, {4}, {4}, ActivationPreset::PaperFpm, 12);
    Rng rng(3);
    const Matrix x = random_matrix(rng, 3, 6);
    const Matrix batch = reconstruct(m, x);
    const Matrix z = encode(m, x);
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t idx[] = {i};
        const Matrix one = x.select_rows(idx);
        const Matrix r = reconstruct(m, one);
        const Matrix zi = encode(m, one);
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(r(0, j), batch(i, j));
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(zi(0, j), z(i, j));
    }
    EXPECT_EQ(z.cols(), 3u);
}

TEST(Loss, HandValues) {
    const Matrix x{{1, 2}};
    const Matrix zero{{0, 0}};
    EXPECT_EQ(mse_loss(x, x), 0.0);
    EXPECT_DOUBLE_EQ(mse_loss(x, zero), 5.0);
    EXPECT_DOUBLE_EQ(mse_loss(Matrix{{1, 2}, {1, 2}}, Matrix{{0, 0}, {0, 0}}), 5.0);
    EXPECT_DOUBLE_EQ(weighted_loss(x, zero, {2.0}), 10.0);
    EXPECT_EQ(weighted_loss(x, x, {3.5}), 0.0);
    EXPECT_THROW(weighted_loss(x, zero, {-1.0}), Error);
    EXPECT_THROW(weighted_loss(x, zero, {1.0, 1.0}), Error);
    EXPECT_THROW(mse_loss(x, Matrix{{1, 2, 3}}), Error);
}

TEST(Loss, UnitWeightsMatchPlain) {
    Rng rng(21);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 1 + rng.below(40), d = 1 + rng.below(30);
        const Matrix a = random_matrix(rng, n, d), b = random_matrix(rng, n, d);
        EXPECT_NEAR(weighted_loss(a, b, std::vector<double>(n, 1.0)), mse_loss(a, b), 1e-12);
    }
}

TEST(LatentPenalty, HandValues) {
    EXPECT_DOUBLE_EQ(latent_penalty_value({{0, 0}, {3, 4}}), 25.0);
    EXPECT_EQ(latent_penalty_value({{1, 2}, {1, 2}}), 0.0);
    const Matrix z{{0, 0}, {0, 0}, {3, 4}};
    const LatentPenalty p = latent_penalty(z, {0, 0, 1});
    EXPECT_DOUBLE_EQ(p.value, 25.0);
    EXPECT_FALSE(p.skipped);
    const LatentPenalty single = latent_penalty(z, {2, 2, 2});
    EXPECT_TRUE(single.skipped);
    EXPECT_EQ(single.value, 0.0);
}

TEST(Backward, PerfectReconstructionHasZeroGradient) {
    const AutoencoderModel m = init_model(5, 2, {3}, {3}, ActivationPreset::IdentityOut, 4);
    Rng rng(5);
    const Matrix x = random_matrix(rng, 4, 5);
    const ForwardPass f = forward(m, x);
    const Gradients g = backward(m, f, f.output(), std::vector<double>(4, 1.0));
    for (const auto& dW : g.dW)
        for (double v : dW.data()) EXPECT_EQ(v, 0.0);
    for (const auto& db : g.db)
        for (double v : db) EXPECT_EQ(v, 0.0);
}

TEST(Backward, DoublingWeightsDoublesGradients) {
    const AutoencoderModel m = small_net(ActivationPreset::PaperFpm, 7);
    Rng rng(8);
    const Matrix x = random_matrix(rng, 4, 7);
    const ForwardPass f = forward(m, x);
    const std::vector<double> w{0.5, 1.0, 2.0, 0.25};
    std::vector<double> w2(w);
    for (double& v : w2) v *= 2.0;
    const Gradients a = backward(m, f, x, w), b = backward(m, f, x, w2);
    for (std::size_t l = 0; l < a.dW.size(); ++l) {
        for (std::size_t i = 0; i < a.dW[l].size(); ++i) EXPECT_EQ(b.dW[l].data()[i], 2.0 * a.dW[l].data()[i]);
        for (std::size_t j = 0; j < a.db[l].size(); ++j) EXPECT_EQ(b.db[l][j], 2.0 * a.db[l][j]);
    }
}

TEST(Backward, MatchesFiniteDifferencesForEveryPreset) {
    std::uint64_t seed = 100;
    for (auto preset : {ActivationPreset::PaperFpm, ActivationPreset::PaperAppendix, ActivationPreset::IdentityOut})
        for (auto loss : {LossKind::Plain, LossKind::Weighted})
            for (auto noise : {NoiseKind::Mask, NoiseKind::Gaussian}) {
                ++seed;
                const AutoencoderModel m = small_net(preset, seed);
                Rng rng(seed);
                const Matrix x = random_matrix(rng, 6, 7);
                TrainConfig cfg;
                cfg.noise_kind = noise;
                cfg.noise = noise == NoiseKind::Mask ? 0.8 : 0.3;
                const Matrix input = corrupt(x, cfg, rng);
                std::vector<double> w(6, 1.0);
                if (loss == LossKind::Weighted)
                    for (double& v : w) v = rng.uniform(0.1, 3.0);
                const GradCheck r = check_gradients(m, input, x, w, {}, 0.0);
                EXPECT_LE(r.worst, 1e-5) << to_string(preset) << "/" << to_string(loss) << "/" << to_string(noise);
                EXPECT_GT(r.checked, 100u);
            }
}

TEST(Backward, LatentPenaltyGradientMatchesFiniteDifferences) {
    const AutoencoderModel m = small_net(ActivationPreset::IdentityOut, 55);
    Rng rng(56);
    const Matrix x = random_matrix(rng, 8, 7);
    const GradCheck r = check_gradients(m, x, x, std::vector<double>(8, 1.0), {0, 1, 2, 0, 1, 2, 0, 1}, 0.7);
    EXPECT_LE(r.worst, 1e-5);
    EXPECT_GT(r.checked, 100u);
}

TEST(Sgd, StepArithmetic) {
    AutoencoderModel m;
    m.layers.push_back({Matrix{{1.0}}, {0.0}, ActivationKind::Identity});
    m.encoder_depth = 1;
    const AutoencoderModel before = m;
    Gradients g{{Matrix{{0.5}}}, {{0.0}}};
    sgd_step(m, g, 0.0);
    EXPECT_EQ(m, before);
    sgd_step(m, Gradients{{Matrix{{0.0}}}, {{0.0}}}, 0.1);
    EXPECT_EQ(m, before);
    sgd_step(m, g, 0.1);
    EXPECT_DOUBLE_EQ(m.layers[0].W(0, 0), 0.95);
    EXPECT_THROW(sgd_step(m, Gradients{{Matrix{{0.0, 1.0}}}, {{0.0}}}, 0.1), Error);
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
    AutoencoderModel m = init_model(5, 2, {3}, {3}, ActivationPreset::IdentityOut, 4);
    const AutoencoderModel before = m;
    Rng rng(1);
    const Matrix x = random_matrix(rng, 10, 5);
    TrainConfig cfg;
    cfg.epochs = 0;
    const LossReport r = train(m, {x, {}, {}}, &x, cfg);
    EXPECT_EQ(m, before);
    EXPECT_TRUE(r.train_loss.empty());
    EXPECT_TRUE(r.val_loss.empty());
}

TEST(Train, MemorisesRepeatedVector) {
    Rng rng(31);
    const Matrix v = random_matrix(rng, 1, 10);
    Matrix x(200, 10);
    for (std::size_t i = 0; i < 200; ++i)
        for (std::size_t j = 0; j < 10; ++j) x(i, j) = v(0, j);
    AutoencoderModel m = init_model(10, 4, {8}, {8}, ActivationPreset::IdentityOut, 2);
    const double initial = mse_loss(x, reconstruct(m, x));
    TrainConfig cfg;
    cfg.noise = 1.0; // keep everything: no corruption
    cfg.learning_rate = 0.01;
    cfg.epochs = 200;
    cfg.batch_size = 32;
    const LossReport r = train(m, {x, {}, {}}, nullptr, cfg);
    EXPECT_LT(r.reconstruction_loss, 0.01 * initial);
    ASSERT_EQ(r.train_loss.size(), 200u);
    for (double l : r.train_loss) EXPECT_GE(l, 0.0);
}

TEST(Train, DeterministicAndUniformWeightsMatchPlain) {
    Rng rng(9);
    const Matrix x = random_matrix(rng, 50, 6);
    const Matrix val = random_matrix(rng, 10, 6);
    const AutoencoderModel init = init_model(6, 3, {5}, {5}, ActivationPreset::IdentityOut, 7);
    TrainConfig plain = TrainConfig::fpm();
    plain.loss_kind = LossKind::Plain;
    plain.epochs = 5;
    plain.seed = 13;
    TrainConfig weighted = plain;
    weighted.loss_kind = LossKind::Weighted;

    AutoencoderModel a = init, b = init, c = init;
    const LossReport ra = train(a, {x, {}, {}}, &val, plain);
    const LossReport rb = train(b, {x, std::vector<double>(50, 1.0), {}}, &val, weighted);
    const LossReport rc = train(c, {x, {}, {}}, &val, plain);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    EXPECT_EQ(ra.train_loss, rb.train_loss);
    EXPECT_EQ(ra.val_loss, rc.val_loss);
    EXPECT_NE(a, init);
}

TEST(Train, ZeroLambdaIsBitExactWithoutPenalty) {
    Rng rng(19);
    const Matrix x = random_matrix(rng, 40, 6);
    std::vector<int> groups(40);
    for (std::size_t i = 0; i < 40; ++i) groups[i] = static_cast<int>(i % 2);
    const AutoencoderModel init = init_model(6, 3, {5}, {5}, ActivationPreset::IdentityOut, 7);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    AutoencoderModel a = init, b = init, c = init;
    train(a, {x, {}, {}}, nullptr, cfg);
    train(b, {x, {}, groups}, nullptr, cfg);
    EXPECT_EQ(a, b);
    cfg.lambda = 0.5;
    const LossReport r = train(c, {x, {}, groups}, nullptr, cfg);
    EXPECT_NE(a, c);
    EXPECT_EQ(r.penalty_skipped_batches, 0u);
}

TEST(Train, LossIsMeasuredAgainstCleanInput) {
    // With the input fully masked the network sees zeros; the best it can do is
    // the per-feature mean of the clean data, so the loss stays near the clean
    // variance instead of collapsing to zero (which matching the corrupted input
    // would allow).
    Rng rng(41);
    const Matrix x = random_matrix(rng, 64, 4, 2.0);
    AutoencoderModel m = init_model(4, 2, {3}, {3}, ActivationPreset::IdentityOut, 3);
    TrainConfig cfg;
    cfg.noise = 0.0;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.01;
    const LossReport r = train(m, {x, {}, {}}, nullptr, cfg);
    std::vector<double> mean(4, 0.0);
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 4; ++j) mean[j] += x(i, j) / 64.0;
    double var = 0.0;
    for (std::size_t i = 0; i < 64; ++i)
        for (std::size_t j = 0; j < 4; ++j) var += (x(i, j) - mean[j]) * (x(i, j) - mean[j]) / 64.0;
    EXPECT_GE(r.train_loss.back(), 0.9 * var);
}

TEST(Encode, IndependentOfNoiseSettings) {
    Rng rng(2);
    const Matrix x = random_matrix(rng, 5, 6);
    const AutoencoderModel m = init_model(6, 3, {4}, {4}, ActivationPreset::PaperFpm, 1);
    EXPECT_EQ(encode(m, x), encode(m, x));
    EXPECT_EQ(encode(m, x).cols(), 3u);
}

TEST(FeatureErrors, HandValuesAndIdentity) {
    const Matrix x{{0, 1}, {0, 3}};
    const Matrix xr{{0, 0}, {0, 0}};
    EXPECT_EQ(per_feature_errors(x, xr), (std::vector<double>{0.0, 5.0}));
    EXPECT_EQ(per_feature_errors(x, x), (std::vector<double>{0.0, 0.0}));
    Rng rng(3);
    const Matrix a = random_matrix(rng, 30, 9), b = random_matrix(rng, 30, 9);
    const auto e = per_feature_errors(a, b);
    double mean = 0.0;
    for (double v : e) mean += v / 9.0;
    EXPECT_NEAR(mean, mse_loss(a, b) / 9.0, 1e-12);
    const FeatureRanking r = rank_features(e, 3);
    ASSERT_EQ(r.best.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(e[r.best[i]], e[r.worst[i]]);
    for (std::size_t i = 1; i < 3; ++i) {
        EXPECT_LE(e[r.best[i - 1]], e[r.best[i]]);
        EXPECT_GE(e[r.worst[i - 1]], e[r.worst[i]]);
    }
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng(5);
    const Matrix x = random_matrix(rng, 40, 6);
    Checkpoint c;
    c.model = init_model(6, 3, {5}, {5}, ActivationPreset::PaperAppendix, 77);
    c.config = TrainConfig::fpm();
    c.config.epochs = 3;
    c.report = train(c.model, {x, std::vector<double>(40, 1.5), {}}, &x, c.config);
    c.preset = "fpm";
    const Checkpoint back = checkpoint_from_json(json::parse(to_json(c).dump()));
    EXPECT_EQ(back.model, c.model);
    EXPECT_EQ(back.report.train_loss, c.report.train_loss);
    EXPECT_EQ(back.report.feature_errors, c.report.feature_errors);
    EXPECT_EQ(back.config.learning_rate, 0.01);
    EXPECT_EQ(back.config.batch_size, 32u);
    EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
    EXPECT_EQ(reconstruct(back.model, x), reconstruct(c.model, x));
}
