#pragma once

// Downstream mortality classifiers: CART decision tree, random forest,
// Newton-step gradient boosting and SGD logistic regression, plus accuracy
// and AUROC.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpm/error.hpp"
#include "fpm/numcore.hpp"

namespace fpm {

using nlohmann::json;

struct ClassifierParams {
    std::size_t max_depth = 6;
    double min_samples_leaf = 1;
    std::size_t n_trees = 100;
    double feature_fraction = 0.0; // per-split share of features for forests; 0 = sqrt(d)/d
    bool bootstrap = true;
    double shrinkage = 0.1;
    std::size_t n_rounds = 100;
    std::size_t gbm_depth = 3;
    double learning_rate = 0.05;
    std::size_t epochs = 20;
    double l2 = 0.0;
    double threshold = 0.5;
    std::uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    std::size_t leaf_of(std::span<const double> x) const {
        std::size_t n = 0;
        while (!nodes[n].leaf())
            n = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[n].feature)] <= nodes[n].threshold
                                             ? nodes[n].left
                                             : nodes[n].right);
        return n;
    }
    double predict(std::span<const double> x) const { return nodes[leaf_of(x)].value; }

    std::size_t depth() const {
        std::vector<std::size_t> d(nodes.size(), 0);
        std::size_t best = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (!nodes[i].leaf()) {
                d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
                d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
                best = std::max(best, d[i] + 1);
            }
        return best;
    }
};

enum class SplitCriterion { Gini, SquaredError };

namespace detail {

struct Stats {
    double w = 0.0, s = 0.0, s2 = 0.0;

    void add(double wi, double yi) {
        w += wi;
        s += wi * yi;
        s2 += wi * yi * yi;
    }
};

// Weighted impurity (impurity times node weight).
inline double impurity(const Stats& st, SplitCriterion c) {
    if (st.w <= 0.0) return 0.0;
    if (c == SplitCriterion::Gini) {
        const double p = st.s / st.w;
        return st.w * (1.0 - p * p - (1.0 - p) * (1.0 - p));
    }
    return std::max(0.0, st.s2 - st.s * st.s / st.w);
}

inline Stats minus(const Stats& a, const Stats& b) { return {a.w - b.w, a.s - b.s, a.s2 - b.s2}; }

/// Sample order per feature, ascending by value then row index.
inline std::vector<std::vector<std::uint32_t>> presort(const Matrix& X) {
    std::vector<std::vector<std::uint32_t>> order(X.cols());
    for (std::size_t f = 0; f < X.cols(); ++f) {
        auto& o = order[f];
        o.resize(X.rows());
        std::iota(o.begin(), o.end(), 0u);
        std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
    }
    return order;
}

struct Candidate {
    double child_impurity = std::numeric_limits<double>::infinity();
    int feature = -1;
    double threshold = 0.0;
};

/// Level-wise exact greedy tree growth. Every frontier node is split in one
/// pass over each presorted feature. Candidates are visited by ascending
/// feature then ascending threshold and only a strictly better split replaces
/// the incumbent, so ties resolve to the lowest feature and threshold.
/// Leaf values are weighted means of y.
inline Tree grow(const Matrix& X, const std::vector<double>& y, const std::vector<double>& w,
                 const std::vector<std::vector<std::uint32_t>>& order, std::size_t max_depth, double min_leaf,
                 SplitCriterion crit, double feature_fraction, Rng* rng) {
    const std::size_t n = X.rows(), d = X.cols();
    Tree t;
    std::vector<int> node_of(n, -1);
    Stats root;
    for (std::size_t i = 0; i < n; ++i)
        if (w[i] > 0.0) {
            node_of[i] = 0;
            root.add(w[i], y[i]);
        }
    if (root.w <= 0.0) fail(ErrorKind::EmptyData, "no samples with positive weight");
    t.nodes.push_back({-1, 0.0, -1, -1, root.s / root.w});
    std::vector<Stats> stats{root};
    std::vector<std::size_t> frontier{0};
    std::size_t k = d;
    if (feature_fraction > 0.0 && feature_fraction < 1.0)
        k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(feature_fraction * static_cast<double>(d))));

    for (std::size_t depth = 0; depth < max_depth && !frontier.empty(); ++depth) {
        std::vector<int> slot(t.nodes.size(), -1);
        std::vector<std::size_t> live;
        for (std::size_t nd : frontier) {
            const Stats& st = stats[nd];
            if (st.w < 2.0 * min_leaf || impurity(st, crit) <= 0.0) continue;
            slot[nd] = static_cast<int>(live.size());
            live.push_back(nd);
        }
        if (live.empty()) break;
        const std::size_t L = live.size();
        std::vector<std::vector<char>> allowed(L);
        if (k < d) {
            std::vector<std::size_t> feats(d);
            for (std::size_t s = 0; s < L; ++s) {
                std::iota(feats.begin(), feats.end(), std::size_t{0});
                for (std::size_t j = 0; j < k; ++j) std::swap(feats[j], feats[j + rng->below(d - j)]);
                allowed[s].assign(d, 0);
                for (std::size_t j = 0; j < k; ++j) allowed[s][feats[j]] = 1;
            }
        }
        std::vector<Candidate> best(L);
        std::vector<Stats> run(L);
        std::vector<double> prev(L);
        std::vector<char> seen(L);
        for (std::size_t f = 0; f < d; ++f) {
            std::fill(run.begin(), run.end(), Stats{});
            std::fill(seen.begin(), seen.end(), 0);
            for (std::uint32_t i : order[f]) {
                const int nd = node_of[i];
                if (nd < 0) continue;
                const int s = slot[static_cast<std::size_t>(nd)];
                if (s < 0) continue;
                const auto si = static_cast<std::size_t>(s);
                if (k < d && !allowed[si][f]) continue;
                const double x = X(i, f);
                if (seen[si] && x > prev[si]) {
                    const Stats& total = stats[static_cast<std::size_t>(nd)];
                    const Stats right = minus(total, run[si]);
                    if (run[si].w >= min_leaf && right.w >= min_leaf) {
                        const double imp = impurity(run[si], crit) + impurity(right, crit);
                        if (imp < best[si].child_impurity) {
                            double thr = prev[si] + (x - prev[si]) / 2.0;
                            if (!(thr < x)) thr = prev[si];
                            best[si] = {imp, static_cast<int>(f), thr};
                        }
                    }
                }
                run[si].add(w[i], y[i]);
                prev[si] = x;
                seen[si] = 1;
            }
        }
        std::vector<std::size_t> next;
        std::vector<int> left_of(t.nodes.size(), -1);
        for (std::size_t s = 0; s < L; ++s) {
            const std::size_t nd = live[s];
            if (best[s].feature < 0 || !(best[s].child_impurity < impurity(stats[nd], crit))) continue;
            const int li = static_cast<int>(t.nodes.size());
            t.nodes[nd].feature = best[s].feature;
            t.nodes[nd].threshold = best[s].threshold;
            t.nodes[nd].left = li;
            t.nodes[nd].right = li + 1;
            t.nodes.push_back({});
            t.nodes.push_back({});
            stats.resize(t.nodes.size());
            left_of.resize(t.nodes.size(), -1);
            left_of[nd] = li;
            next.push_back(static_cast<std::size_t>(li));
            next.push_back(static_cast<std::size_t>(li + 1));
        }
        for (std::size_t i = 0; i < n; ++i) {
            const int nd = node_of[i];
            if (nd < 0 || left_of[static_cast<std::size_t>(nd)] < 0) continue;
            const TreeNode& node = t.nodes[static_cast<std::size_t>(nd)];
            const int child = X(i, static_cast<std::size_t>(node.feature)) <= node.threshold ? node.left : node.right;
            node_of[i] = child;
            stats[static_cast<std::size_t>(child)].add(w[i], y[i]);
        }
        for (std::size_t c : next) t.nodes[c].value = stats[c].w > 0.0 ? stats[c].s / stats[c].w : 0.0;
        frontier = std::move(next);
    }
    return t;
}

inline void check_xy(const Matrix& X, const std::vector<int>& y) {
    if (X.rows() == 0) fail(ErrorKind::EmptyData, "no training samples");
    if (y.size() != X.rows()) fail(ErrorKind::LengthMismatch, "labels and rows differ in length");
    for (int v : y)
        if (v != 0 && v != 1) fail(ErrorKind::Parse, "labels must be binary");
}

inline std::vector<double> to_double(const std::vector<int>& y) { return {y.begin(), y.end()}; }

} // namespace detail

/// CART with Gini impurity; leaf score = positive fraction.
inline Tree fit_tree(const Matrix& X, const std::vector<int>& y, const ClassifierParams& p) {
    detail::check_xy(X, y);
    return detail::grow(X, detail::to_double(y), std::vector<double>(X.rows(), 1.0), detail::presort(X), p.max_depth,
                        p.min_samples_leaf, SplitCriterion::Gini, 1.0, nullptr);
}

enum class ModelKind { Tree, Forest, Gbm, Logistic };

inline std::string_view to_string(ModelKind k) {
    switch (k) {
    case ModelKind::Tree: return "tree";
    case ModelKind::Forest: return "forest";
    case ModelKind::Gbm: return "gbm";
    case ModelKind::Logistic: return "logistic";
    }
    return "tree";
}

inline ModelKind model_kind_from_string(std::string_view s) {
    if (s == "tree") return ModelKind::Tree;
    if (s == "forest") return ModelKind::Forest;
    if (s == "gbm") return ModelKind::Gbm;
    if (s == "logistic") return ModelKind::Logistic;
    fail(ErrorKind::InvalidConfig, "unknown classifier '" + std::string(s) + "'");
}

struct ClassifierModel {
    ModelKind kind = ModelKind::Tree;
    std::size_t n_features = 0;
    std::vector<Tree> trees;             // tree: 1, forest: n_trees, gbm: rounds
    std::vector<std::uint64_t> tree_seeds; // forest
    double init = 0.0;                   // gbm initial log-odds
    double shrinkage = 1.0;              // gbm
    std::vector<double> coef;            // logistic
    double bias = 0.0;                   // logistic
    std::vector<double> train_loss;      // gbm: logistic loss after each round
};

inline ClassifierModel wrap_tree(Tree t, std::size_t d) {
    ClassifierModel m;
    m.kind = ModelKind::Tree;
    m.n_features = d;
    m.trees.push_back(std::move(t));
    return m;
}

/// Bootstrap resampling and per-split feature subsampling; tree t uses seed + t.
inline ClassifierModel fit_forest(const Matrix& X, const std::vector<int>& y, const ClassifierParams& p) {
    detail::check_xy(X, y);
    if (p.n_trees < 1) fail(ErrorKind::InvalidHyperparameter, "n_trees must be >= 1");
    const auto order = detail::presort(X);
    const auto yd = detail::to_double(y);
    const double frac = p.feature_fraction > 0.0 ? p.feature_fraction
                                                 : std::sqrt(static_cast<double>(X.cols())) / static_cast<double>(X.cols());
    ClassifierModel m;
    m.kind = ModelKind::Forest;
    m.n_features = X.cols();
    for (std::size_t t = 0; t < p.n_trees; ++t) {
        const std::uint64_t seed = p.seed + t;
        Rng rng(seed);
        std::vector<double> w(X.rows(), p.bootstrap ? 0.0 : 1.0);
        if (p.bootstrap)
            for (std::size_t i = 0; i < X.rows(); ++i) w[rng.below(X.rows())] += 1.0;
        m.trees.push_back(detail::grow(X, yd, w, order, p.max_depth, p.min_samples_leaf, SplitCriterion::Gini, frac, &rng));
        m.tree_seeds.push_back(seed);
    }
    return m;
}

inline double logistic_loss(const std::vector<int>& y, const std::vector<double>& F) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        // log(1 + e^F) - y F, computed stably
        const double f = F[i];
        s += (f > 0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f))) - y[i] * f;
    }
    return s / static_cast<double>(y.size());
}

/// Logistic-loss boosting: regression trees on residuals y - p, Newton leaf
/// values sum(r) / sum(p(1-p)), added with shrinkage.
inline ClassifierModel fit_gbm(const Matrix& X, const std::vector<int>& y, const ClassifierParams& p) {
    detail::check_xy(X, y);
    const std::size_t n = X.rows();
    double pos = 0.0;
    for (int v : y) pos += v;
    if (pos == 0.0 || pos == static_cast<double>(n))
        fail(ErrorKind::DegenerateLabels, "gradient boosting needs both classes");
    ClassifierModel m;
    m.kind = ModelKind::Gbm;
    m.n_features = X.cols();
    m.shrinkage = p.shrinkage;
    const double base = pos / static_cast<double>(n);
    m.init = std::log(base / (1.0 - base));
    std::vector<double> F(n, m.init), r(n), h(n);
    const std::vector<double> ones(n, 1.0);
    const auto order = detail::presort(X);
    for (std::size_t round = 0; round < p.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double pi = sigmoid(F[i]);
            r[i] = y[i] - pi;
            h[i] = pi * (1.0 - pi);
        }
        Tree t = detail::grow(X, r, ones, order, std::min(p.gbm_depth, p.max_depth), p.min_samples_leaf,
                              SplitCriterion::SquaredError, 1.0, nullptr);
        std::vector<double> num(t.nodes.size(), 0.0), den(t.nodes.size(), 0.0);
        std::vector<std::size_t> leaf(n);
        for (std::size_t i = 0; i < n; ++i) {
            leaf[i] = t.leaf_of(X.row(i));
            num[leaf[i]] += r[i];
            den[leaf[i]] += h[i];
        }
        for (std::size_t k = 0; k < t.nodes.size(); ++k)
            if (t.nodes[k].leaf()) t.nodes[k].value = den[k] > 0.0 ? num[k] / den[k] : 0.0;
        for (std::size_t i = 0; i < n; ++i) F[i] += m.shrinkage * t.nodes[leaf[i]].value;
        m.trees.push_back(std::move(t));
        m.train_loss.push_back(logistic_loss(y, F));
    }
    return m;
}

/// Plain SGD on the logistic loss with seeded shuffling; weights start at zero.
inline ClassifierModel fit_logistic(const Matrix& X, const std::vector<int>& y, const ClassifierParams& p) {
    detail::check_xy(X, y);
    ClassifierModel m;
    m.kind = ModelKind::Logistic;
    m.n_features = X.cols();
    m.coef.assign(X.cols(), 0.0);
    Rng rng(p.seed);
    std::vector<std::size_t> order(X.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t e = 0; e < p.epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            const auto x = X.row(i);
            double z = m.bias;
            for (std::size_t j = 0; j < x.size(); ++j) z += m.coef[j] * x[j];
            const double g = sigmoid(z) - y[i];
            for (std::size_t j = 0; j < x.size(); ++j) m.coef[j] -= p.learning_rate * (g * x[j] + p.l2 * m.coef[j]);
            m.bias -= p.learning_rate * g;
        }
    }
    return m;
}

inline ClassifierModel fit_classifier(ModelKind kind, const Matrix& X, const std::vector<int>& y,
                                      const ClassifierParams& p) {
    switch (kind) {
    case ModelKind::Tree: return wrap_tree(fit_tree(X, y, p), X.cols());
    case ModelKind::Forest: return fit_forest(X, y, p);
    case ModelKind::Gbm: return fit_gbm(X, y, p);
    case ModelKind::Logistic: return fit_logistic(X, y, p);
    }
    fail(ErrorKind::InvalidConfig, "unknown classifier");
}

inline std::vector<double> predict_proba(const ClassifierModel& m, const Matrix& X) {
    if (X.cols() != m.n_features)
        fail(ErrorKind::DimensionMismatch, "feature width " + std::to_string(X.cols()) + " != trained width " +
                                               std::to_string(m.n_features));
    std::vector<double> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const auto x = X.row(i);
        switch (m.kind) {
        case ModelKind::Tree: out[i] = m.trees.front().predict(x); break;
        case ModelKind::Forest: {
            double s = 0.0;
            for (const auto& t : m.trees) s += t.predict(x);
            out[i] = s / static_cast<double>(m.trees.size());
            break;
        }
        case ModelKind::Gbm: {
            double f = m.init;
            for (const auto& t : m.trees) f += m.shrinkage * t.predict(x);
            out[i] = sigmoid(f);
            break;
        }
        case ModelKind::Logistic: {
            double z = m.bias;
            for (std::size_t j = 0; j < x.size(); ++j) z += m.coef[j] * x[j];
            out[i] = sigmoid(z);
            break;
        }
        }
    }
    return out;
}

inline std::vector<int> threshold_scores(const std::vector<double>& scores, double threshold = 0.5) {
    std::vector<int> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
    return out;
}

inline std::vector<int> predict(const ClassifierModel& m, const Matrix& X, double threshold = 0.5) {
    return threshold_scores(predict_proba(m, X), threshold);
}

inline double accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
    if (y_true.size() != y_pred.size()) fail(ErrorKind::LengthMismatch, "accuracy: lengths differ");
    if (y_true.empty()) fail(ErrorKind::EmptyData, "accuracy of nothing");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) hit += y_true[i] == y_pred[i];
    return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

/// Mann-Whitney AUROC from the rank sum with average ranks for ties.
inline double auroc(const std::vector<int>& y, const std::vector<double>& scores) {
    if (y.size() != scores.size()) fail(ErrorKind::LengthMismatch, "auroc: lengths differ");
    double n1 = 0.0;
    for (int v : y) n1 += v == 1;
    const double n0 = static_cast<double>(y.size()) - n1;
    if (n1 == 0.0 || n0 == 0.0) fail(ErrorKind::SingleClass, "auroc needs both classes");
    std::vector<std::size_t> idx(y.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (y[idx[k]] == 1) rank_sum += avg;
        i = j;
    }
    return (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

/// Same statistic by exhaustive pair counting.
inline double auroc_pairs(const std::vector<int>& y, const std::vector<double>& scores) {
    if (y.size() != scores.size()) fail(ErrorKind::LengthMismatch, "auroc: lengths differ");
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] != 0) continue;
            pairs += 1.0;
            wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    }
    if (pairs == 0.0) fail(ErrorKind::SingleClass, "auroc needs both classes");
    return wins / pairs;
}

// ---------------------------------------------------------------------------
// Persistence

inline json to_json(const Tree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes)
        nodes.push_back(n.leaf() ? json{{"value", n.value}}
                                 : json{{"feature", n.feature},
                                        {"threshold", n.threshold},
                                        {"left", n.left},
                                        {"right", n.right},
                                        {"value", n.value}});
    return {{"nodes", nodes}};
}

inline Tree tree_from_json(const json& j) {
    Tree t;
    for (const auto& jn : j.at("nodes")) {
        TreeNode n;
        n.value = jn.at("value").get<double>();
        if (jn.contains("feature")) {
            n.feature = jn.at("feature").get<int>();
            n.threshold = jn.at("threshold").get<double>();
            n.left = jn.at("left").get<int>();
            n.right = jn.at("right").get<int>();
        }
        t.nodes.push_back(n);
    }
    for (const auto& n : t.nodes)
        if (!n.leaf() && (n.left <= 0 || n.right <= 0 || static_cast<std::size_t>(std::max(n.left, n.right)) >= t.nodes.size()))
            fail(ErrorKind::Parse, "tree node child index out of range");
    return t;
}

inline json to_json(const ClassifierModel& m) {
    json j{{"kind", to_string(m.kind)}, {"n_features", m.n_features}};
    json trees = json::array();
    for (const auto& t : m.trees) trees.push_back(to_json(t));
    switch (m.kind) {
    case ModelKind::Tree: j["tree"] = trees.at(0); break;
    case ModelKind::Forest:
        j["trees"] = trees;
        j["tree_seeds"] = m.tree_seeds;
        break;
    case ModelKind::Gbm:
        j["trees"] = trees;
        j["init"] = m.init;
        j["shrinkage"] = m.shrinkage;
        j["train_loss"] = m.train_loss;
        break;
    case ModelKind::Logistic:
        j["coef"] = m.coef;
        j["bias"] = m.bias;
        break;
    }
    return j;
}

inline ClassifierModel classifier_from_json(const json& j) {
    ClassifierModel m;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    m.n_features = j.at("n_features").get<std::size_t>();
    switch (m.kind) {
    case ModelKind::Tree: m.trees.push_back(tree_from_json(j.at("tree"))); break;
    case ModelKind::Forest:
        for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
        m.tree_seeds = j.at("tree_seeds").get<std::vector<std::uint64_t>>();
        break;
    case ModelKind::Gbm:
        for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
        m.init = j.at("init").get<double>();
        m.shrinkage = j.at("shrinkage").get<double>();
        m.train_loss = j.value("train_loss", std::vector<double>{});
        break;
    case ModelKind::Logistic:
        m.coef = j.at("coef").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        break;
    }
    return m;
}

} // namespace fpm
