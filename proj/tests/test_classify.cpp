#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "fpm/classify.hpp"

using namespace fpm;

namespace {

double gini(double pos, double n) {
    if (n == 0) return 0.0;
    const double p = pos / n;
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

// Gini gain of splitting on x[f] <= thr, counted directly.
double gini_gain(const Matrix& X, const std::vector<int>& y, std::size_t f, double thr) {
    double nl = 0, pl = 0, nr = 0, pr = 0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
        if (X(i, f) <= thr) nl += 1, pl += y[i];
        else nr += 1, pr += y[i];
    }
    const double n = nl + nr;
    return gini(pl + pr, n) - (nl / n) * gini(pl, nl) - (nr / n) * gini(pr, nr);
}

struct Blobs {
    Matrix X;
    std::vector<int> y;
};

Blobs blobs(std::size_t n, std::uint64_t seed, double sep = 4.0) {
    Rng rng(seed);
    Blobs b{Matrix(n, 2), std::vector<int>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        b.y[i] = static_cast<int>(rng.below(2));
        const double c = b.y[i] ? sep / 2 : -sep / 2;
        b.X(i, 0) = c + 0.5 * rng.normal();
        b.X(i, 1) = c + 0.5 * rng.normal();
    }
    return b;
}

} // namespace

TEST(Tree, PureLabelsGiveSingleLeaf) {
    const Matrix X{{1}, {2}, {3}};
    const Tree t = fit_tree(X, {1, 1, 1}, {});
    EXPECT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(accuracy({1, 1, 1}, predict(wrap_tree(t, 1), X)), 1.0);
}

TEST(Tree, OneDimensionalSplitAtMidpoint) {
    const Matrix X{{0}, {1}, {2}, {3}};
    const std::vector<int> y{0, 0, 1, 1};
    const Tree t = fit_tree(X, y, {});
    ASSERT_EQ(t.nodes.size(), 3u);
    EXPECT_EQ(t.nodes[0].feature, 0);
    EXPECT_EQ(t.nodes[0].threshold, 1.5);
    EXPECT_EQ(accuracy(y, predict(wrap_tree(t, 1), X)), 1.0);
}

TEST(Tree, DepthZeroPredictsMajorityRate) {
    const Matrix X{{0}, {1}, {2}, {3}};
    ClassifierParams p;
    p.max_depth = 0;
    const Tree t = fit_tree(X, {0, 1, 1, 1}, p);
    ASSERT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(t.nodes[0].value, 0.75);
    EXPECT_THROW(fit_tree(Matrix(0, 2), {}, p), Error);
}

TEST(Tree, TiesGoToLowestFeatureThenThreshold) {
    // both features separate perfectly; feature 0 must win
    const Matrix X{{0, 10}, {1, 11}, {2, 12}, {3, 13}};
    const Tree t = fit_tree(X, {0, 0, 1, 1}, {});
    EXPECT_EQ(t.nodes[0].feature, 0);
    // symmetric labels: thresholds 0.5 and 2.5 tie; the lower one wins
    const Matrix Z{{0}, {1}, {2}, {3}};
    const Tree u = fit_tree(Z, {1, 0, 0, 1}, ClassifierParams{.max_depth = 1});
    EXPECT_EQ(u.nodes[0].threshold, 0.5);
}

TEST(Tree, RootGainMatchesExhaustiveSearch) {
    Rng rng(99);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(11), d = 1 + rng.below(3);
        Matrix X(n, d);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t f = 0; f < d; ++f) X(i, f) = static_cast<double>(rng.below(5));
            y[i] = static_cast<int>(rng.below(2));
        }
        double best = 0.0;
        for (std::size_t f = 0; f < d; ++f) {
            std::set<double> vals;
            for (std::size_t i = 0; i < n; ++i) vals.insert(X(i, f));
            for (auto it = vals.begin(); std::next(it) != vals.end(); ++it)
                best = std::max(best, gini_gain(X, y, f, (*it + *std::next(it)) / 2));
        }
        const Tree t = fit_tree(X, y, ClassifierParams{.max_depth = 1});
        const double got = t.nodes[0].leaf() ? 0.0 : gini_gain(X, y, static_cast<std::size_t>(t.nodes[0].feature), t.nodes[0].threshold);
        EXPECT_NEAR(got, best, 1e-12) << "trial " << trial;
    }
}

TEST(Tree, RespectsDepthAndLeafSize) {
    const Blobs b = blobs(300, 4, 0.5);
    ClassifierParams p;
    p.max_depth = 3;
    p.min_samples_leaf = 10;
    const Tree t = fit_tree(b.X, b.y, p);
    EXPECT_LE(t.depth(), 3u);
    std::vector<double> count(t.nodes.size(), 0);
    for (std::size_t i = 0; i < b.X.rows(); ++i) count[t.leaf_of(b.X.row(i))] += 1;
    for (std::size_t k = 0; k < t.nodes.size(); ++k)
        if (t.nodes[k].leaf()) {
            EXPECT_GE(count[k], 10);
        }
}

TEST(Forest, DegenerateForestEqualsTree) {
    const Blobs b = blobs(120, 8, 1.0);
    ClassifierParams p;
    p.n_trees = 1;
    p.bootstrap = false;
    p.feature_fraction = 1.0;
    const ClassifierModel f = fit_forest(b.X, b.y, p);
    const Tree t = fit_tree(b.X, b.y, p);
    EXPECT_EQ(to_json(f.trees[0]), to_json(t));
}

TEST(Forest, DeterministicAndAccurateOnBlobs) {
    const Blobs train = blobs(400, 1), test = blobs(200, 2);
    ClassifierParams p;
    p.n_trees = 20;
    p.seed = 5;
    const ClassifierModel a = fit_forest(train.X, train.y, p), b = fit_forest(train.X, train.y, p);
    EXPECT_EQ(to_json(a), to_json(b));
    EXPECT_GE(accuracy(test.y, predict(a, test.X)), 0.95);
    EXPECT_EQ(a.tree_seeds[3], 8u);
}

TEST(Gbm, ZeroRoundsGiveBaseRate) {
    const Matrix X{{0}, {1}, {2}, {3}};
    ClassifierParams p;
    p.n_rounds = 0;
    const ClassifierModel m = fit_gbm(X, {0, 1, 1, 1}, p);
    for (double s : predict_proba(m, X)) EXPECT_NEAR(s, 0.75, 1e-15);
    try {
        fit_gbm(X, {1, 1, 1, 1}, p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateLabels);
    }
}

TEST(Gbm, SeparableConvergesWithMonotoneLoss) {
    Matrix X(40, 1);
    std::vector<int> y(40);
    for (std::size_t i = 0; i < 40; ++i) X(i, 0) = static_cast<double>(i), y[i] = i >= 17;
    ClassifierParams p;
    p.n_rounds = 50;
    p.shrinkage = 0.1;
    const ClassifierModel m = fit_gbm(X, y, p);
    EXPECT_EQ(accuracy(y, predict(m, X)), 1.0);
    ASSERT_EQ(m.train_loss.size(), 50u);
    for (std::size_t r = 1; r < 50; ++r) EXPECT_LE(m.train_loss[r], m.train_loss[r - 1] + 1e-9);
}

TEST(Gbm, MonotoneLossOnNoisyData) {
    const Blobs b = blobs(300, 12, 1.0);
    ClassifierParams p;
    p.n_rounds = 40;
    const ClassifierModel m = fit_gbm(b.X, b.y, p);
    for (std::size_t r = 1; r < m.train_loss.size(); ++r) EXPECT_LE(m.train_loss[r], m.train_loss[r - 1] + 1e-9);
}

TEST(Logistic, ZeroVarianceFeaturesBalancedLabels) {
    Matrix X(100, 3, 0.0);
    std::vector<int> y(100);
    for (std::size_t i = 0; i < 100; ++i) y[i] = static_cast<int>(i % 2);
    ClassifierParams p;
    p.learning_rate = 0.01;
    const ClassifierModel m = fit_logistic(X, y, p);
    EXPECT_NEAR(m.bias, 0.0, 0.05);
    for (double s : predict_proba(m, X)) EXPECT_NEAR(s, 0.5, 0.02);
}

TEST(Logistic, SeparableAndDeterministic) {
    Rng rng(3);
    auto make = [&](std::size_t n) {
        Blobs b{Matrix(n, 1), std::vector<int>(n)};
        for (std::size_t i = 0; i < n; ++i) {
            b.X(i, 0) = rng.uniform(-3, 3);
            b.y[i] = b.X(i, 0) > 0.2;
        }
        return b;
    };
    const Blobs train = make(400), test = make(200);
    ClassifierParams p;
    p.seed = 9;
    const ClassifierModel a = fit_logistic(train.X, train.y, p), b = fit_logistic(train.X, train.y, p);
    EXPECT_EQ(a.coef, b.coef);
    EXPECT_EQ(a.bias, b.bias);
    EXPECT_GE(accuracy(test.y, predict(a, test.X)), 0.95);
}

TEST(Predict, ThresholdsAndWidth) {
    const Blobs b = blobs(60, 6);
    const ClassifierModel m = fit_gbm(b.X, b.y, ClassifierParams{.n_rounds = 5});
    const auto scores = predict_proba(m, b.X);
    for (int v : predict(m, b.X, 0.0)) EXPECT_EQ(v, 1);
    const auto at1 = predict(m, b.X, 1.0);
    const auto at5 = predict(m, b.X);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        EXPECT_TRUE(scores[i] >= 0.0 && scores[i] <= 1.0);
        if (scores[i] < 1.0) {
            EXPECT_EQ(at1[i], 0);
        }
        EXPECT_EQ(at5[i], scores[i] >= 0.5 ? 1 : 0);
    }
    EXPECT_THROW(predict_proba(m, Matrix(2, 3)), Error);
}

TEST(Accuracy, HandValues) {
    EXPECT_EQ(accuracy({1, 0, 1}, {1, 0, 1}), 1.0);
    EXPECT_EQ(accuracy({1, 0, 1}, {0, 1, 0}), 0.0);
    EXPECT_EQ(accuracy({1, 0, 1, 0}, {1, 1, 1, 0}), 0.75);
    EXPECT_THROW(accuracy({1}, {1, 0}), Error);
}

TEST(Auroc, HandValues) {
    EXPECT_EQ(auroc({0, 0, 1, 1}, {0.1, 0.4, 0.35, 0.8}), 0.75);
    EXPECT_EQ(auroc({0, 0, 1, 1}, {0.1, 0.2, 0.3, 0.4}), 1.0);
    EXPECT_EQ(auroc({0, 1, 0, 1}, {0.3, 0.3, 0.3, 0.3}), 0.5);
    EXPECT_THROW(auroc({1, 1}, {0.2, 0.3}), Error);
}

TEST(Auroc, RankSumEqualsPairCountingExactly) {
    Rng rng(17);
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = 2 + rng.below(150);
        std::vector<int> y(n);
        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
            s[i] = static_cast<double>(rng.below(20)) / 20.0; // plenty of ties
        }
        EXPECT_EQ(auroc(y, s), auroc_pairs(y, s));
        std::vector<double> mono(s);
        for (double& v : mono) v = std::exp(3.0 * v) - 7.0;
        EXPECT_EQ(auroc(y, mono), auroc(y, s));
    }
}

TEST(Persistence, AllKindsRoundTrip) {
    const Blobs b = blobs(80, 10, 1.0);
    ClassifierParams p;
    p.n_trees = 3;
    p.n_rounds = 4;
    p.epochs = 3;
    for (auto kind : {ModelKind::Tree, ModelKind::Forest, ModelKind::Gbm, ModelKind::Logistic}) {
        const ClassifierModel m = fit_classifier(kind, b.X, b.y, p);
        const ClassifierModel back = classifier_from_json(json::parse(to_json(m).dump()));
        EXPECT_EQ(predict_proba(back, b.X), predict_proba(m, b.X)) << to_string(kind);
        EXPECT_EQ(to_json(back).dump(), to_json(m).dump());
    }
}
