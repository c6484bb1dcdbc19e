#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpm/classify.hpp"
#include "fpm/csv.hpp"
#include "fpm/error.hpp"
#include "fpm/fairness.hpp"
#include "fpm/numcore.hpp"
#include "fpm/preprocess.hpp"
#include "fpm/sdae.hpp"
#include "fpm/textmodel.hpp"

namespace fpm {

using nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;
inline const std::vector<std::string> kPresets{"sdae", "fpm", "rw-sdae"};

// ---------------------------------------------------------------------------
// Configuration

struct SynthNotesConfig {
    bool enabled = false;
    std::size_t topics = 8;
    std::size_t vocabulary = 200;
    std::size_t max_notes = 3;
    std::size_t words_per_note = 40;
    double missing_fraction = 0.0;
    double label_tilt = 2.0;
    double group_tilt = 1.0;
};

struct ThresholdSpec {
    bool prevalence = true;
    double value = 0.5;
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    std::string matrix;
    std::string notes;
    std::string out = "out";

    std::string group_column;
    std::string privileged_group = "male";
    SplitFractions split;
    SynthConfig synth;
    SynthNotesConfig synth_notes;

    std::string preset = "fpm";
    std::string weight_by = "group";
    std::size_t rep_dim = 32;
    std::vector<std::size_t> encoder_hidden{64, 64};
    std::vector<std::size_t> decoder_hidden{64, 64};
    std::string activation_preset = "identity-out";
    std::optional<std::string> noise_kind;
    std::optional<double> noise;
    std::optional<double> learning_rate;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    double lambda = 0.0;
    bool resample = false;

    std::size_t topics_k = 10;
    std::optional<double> topics_alpha; // 50 / K when unset
    double topics_beta = 0.01;
    std::size_t topics_sweeps = 200;
    std::size_t topics_infer_sweeps = 50;

    std::string classifier = "gbm";
    ClassifierParams clf;
    ThresholdSpec threshold;

    std::string task = "30d";

    std::vector<std::string> experiment_presets = kPresets;
    std::vector<std::string> experiment_tasks{"30d", "60d", "90d", "365d"};
    std::vector<std::string> table1_classifiers{"tree", "forest", "gbm"};
    std::string reference_preset = "fpm";
    std::size_t top_n = 10;

    double alpha() const { return topics_alpha ? *topics_alpha : 50.0 / static_cast<double>(topics_k); }
    std::string group_column_or_default() const { return group_column.empty() ? "group" : group_column; }

    void validate() const {
        auto check_preset = [](const std::string& p) {
            if (std::find(kPresets.begin(), kPresets.end(), p) == kPresets.end())
                fail(ErrorKind::InvalidConfig, "unknown model preset '" + p + "' (sdae, fpm, rw-sdae)");
        };
        check_preset(preset);
        for (const auto& p : experiment_presets) check_preset(p);
        check_preset(reference_preset);
        weight_by_from_string(weight_by);
        activation_preset_from_string(activation_preset);
        if (noise_kind) noise_kind_from_string(*noise_kind);
        model_kind_from_string(classifier);
        for (const auto& c : table1_classifiers) model_kind_from_string(c);
        horizon_from_string(task);
        for (const auto& t : experiment_tasks) horizon_from_string(t);
        if (rep_dim == 0) fail(ErrorKind::InvalidWidth, "rep_dim must be >= 1");
        for (auto w : encoder_hidden)
            if (w == 0) fail(ErrorKind::InvalidWidth, "hidden widths must be >= 1");
        for (auto w : decoder_hidden)
            if (w == 0) fail(ErrorKind::InvalidWidth, "hidden widths must be >= 1");
        if (topics_k < 2) fail(ErrorKind::InvalidHyperparameter, "topics.k must be >= 2");
        if (!(alpha() > 0.0) || !(topics_beta > 0.0)) fail(ErrorKind::InvalidHyperparameter, "LDA alpha and beta must be > 0");
        if (!threshold.prevalence && !(threshold.value >= 0.0 && threshold.value <= 1.0))
            fail(ErrorKind::InvalidProbability, "classifier threshold must lie in [0,1]");
        if (!(synth_notes.missing_fraction >= 0.0 && synth_notes.missing_fraction <= 1.0))
            fail(ErrorKind::InvalidProbability, "synthetic_notes.missing_fraction must lie in [0,1]");
        if (synth_notes.enabled && (synth_notes.topics == 0 || synth_notes.vocabulary < synth_notes.topics))
            fail(ErrorKind::InvalidConfig, "synthetic_notes needs 1 <= topics <= vocabulary");
    }
};

namespace detail {

/// Reads an object field by field and rejects keys nobody asked for.
class StrictObject {
public:
    StrictObject(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
        if (j_.is_null()) j_ = json::object();
        if (!j_.is_object()) fail(ErrorKind::InvalidConfig, where() + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& dst) {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.insert(key);
        try {
            dst = it->template get<T>();
        } catch (const json::exception& e) {
            fail(ErrorKind::InvalidConfig, "config key '" + path_ + key + "': " + e.what());
        }
    }

    template <typename T>
    void get(const char* key, std::optional<T>& dst) {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.insert(key);
        if (it->is_null()) {
            dst.reset();
            return;
        }
        T v{};
        get(key, v);
        dst = v;
    }

    json raw(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? json() : *it;
    }

    StrictObject child(const char* key) { return {raw(key), path_ + key + "."}; }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k)) fail(ErrorKind::InvalidConfig, "unknown config key '" + path_ + k + "'");
    }

private:
    std::string where() const { return path_.empty() ? "config" : "config key '" + path_.substr(0, path_.size() - 1) + "'"; }

    json j_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace detail

inline PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    detail::StrictObject root(j, "");
    root.get("seed", c.seed);
    root.get("task", c.task);

    auto paths = root.child("paths");
    paths.get("matrix", c.matrix);
    paths.get("notes", c.notes);
    paths.get("out", c.out);
    paths.finish();

    auto data = root.child("data");
    data.get("group_column", c.group_column);
    data.get("privileged_group", c.privileged_group);
    {
        auto s = data.child("split");
        s.get("train", c.split.train);
        s.get("val", c.split.val);
        s.get("test", c.split.test);
        s.finish();
    }
    {
        auto s = data.child("synth");
        s.get("n_patients", c.synth.n_patients);
        s.get("group_names", c.synth.group_names);
        s.get("group_proportions", c.synth.group_proportions);
        json rates = s.raw("mortality");
        if (!rates.is_null()) {
            try {
                c.synth.mortality.clear();
                for (const auto& r : rates) c.synth.mortality.push_back(r.get<std::array<double, 4>>());
            } catch (const json::exception& e) {
                fail(ErrorKind::InvalidConfig, std::string("config key 'data.synth.mortality': ") + e.what());
            }
        }
        s.get("n_numeric", c.synth.n_numeric);
        s.get("n_categorical", c.synth.n_categorical);
        s.get("n_categories", c.synth.n_categories);
        s.get("group_effect", c.synth.group_effect);
        s.get("label_effect", c.synth.label_effect);
        s.finish();
    }
    {
        auto s = data.child("synthetic_notes");
        s.get("enabled", c.synth_notes.enabled);
        s.get("topics", c.synth_notes.topics);
        s.get("vocabulary", c.synth_notes.vocabulary);
        s.get("max_notes", c.synth_notes.max_notes);
        s.get("words_per_note", c.synth_notes.words_per_note);
        s.get("missing_fraction", c.synth_notes.missing_fraction);
        s.get("label_tilt", c.synth_notes.label_tilt);
        s.get("group_tilt", c.synth_notes.group_tilt);
        s.finish();
    }
    data.finish();

    auto model = root.child("model");
    model.get("preset", c.preset);
    model.get("weight_by", c.weight_by);
    model.get("rep_dim", c.rep_dim);
    model.get("encoder_hidden", c.encoder_hidden);
    model.get("decoder_hidden", c.decoder_hidden);
    model.get("activation_preset", c.activation_preset);
    model.get("noise_kind", c.noise_kind);
    model.get("noise", c.noise);
    model.get("learning_rate", c.learning_rate);
    model.get("epochs", c.epochs);
    model.get("batch_size", c.batch_size);
    model.get("lambda", c.lambda);
    model.get("resample", c.resample);
    model.finish();

    auto topics = root.child("topics");
    topics.get("k", c.topics_k);
    topics.get("alpha", c.topics_alpha);
    topics.get("beta", c.topics_beta);
    topics.get("sweeps", c.topics_sweeps);
    topics.get("infer_sweeps", c.topics_infer_sweeps);
    topics.finish();

    auto clf = root.child("classifier");
    clf.get("kind", c.classifier);
    clf.get("max_depth", c.clf.max_depth);
    clf.get("min_samples_leaf", c.clf.min_samples_leaf);
    clf.get("n_trees", c.clf.n_trees);
    clf.get("feature_fraction", c.clf.feature_fraction);
    clf.get("bootstrap", c.clf.bootstrap);
    clf.get("shrinkage", c.clf.shrinkage);
    clf.get("n_rounds", c.clf.n_rounds);
    clf.get("gbm_depth", c.clf.gbm_depth);
    clf.get("learning_rate", c.clf.learning_rate);
    clf.get("epochs", c.clf.epochs);
    clf.get("l2", c.clf.l2);
    {
        json t = clf.raw("threshold");
        if (t.is_string()) {
            if (t.get<std::string>() != "prevalence")
                fail(ErrorKind::InvalidConfig, "classifier.threshold must be a number or \"prevalence\"");
            c.threshold = {true, 0.5};
        } else if (t.is_number()) {
            c.threshold = {false, t.get<double>()};
        } else if (!t.is_null()) {
            fail(ErrorKind::InvalidConfig, "classifier.threshold must be a number or \"prevalence\"");
        }
    }
    clf.finish();

    auto exp = root.child("experiment");
    exp.get("presets", c.experiment_presets);
    exp.get("tasks", c.experiment_tasks);
    exp.get("table1_classifiers", c.table1_classifiers);
    exp.get("reference_preset", c.reference_preset);
    exp.get("top_n", c.top_n);
    exp.finish();

    root.finish();
    c.validate();
    return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IO, "cannot open config '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, path + ": " + e.what());
    }
    return pipeline_config_from_json(j);
}

inline json to_json(const PipelineConfig& c) {
    auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
    json synth = to_json(c.synth);
    synth.erase("seed");
    return {
        {"seed", c.seed},
        {"task", c.task},
        {"paths", {{"matrix", c.matrix}, {"notes", c.notes}, {"out", c.out}}},
        {"data",
         {{"group_column", c.group_column},
          {"privileged_group", c.privileged_group},
          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
          {"synth", synth},
          {"synthetic_notes",
           {{"enabled", c.synth_notes.enabled},
            {"topics", c.synth_notes.topics},
            {"vocabulary", c.synth_notes.vocabulary},
            {"max_notes", c.synth_notes.max_notes},
            {"words_per_note", c.synth_notes.words_per_note},
            {"missing_fraction", c.synth_notes.missing_fraction},
            {"label_tilt", c.synth_notes.label_tilt},
            {"group_tilt", c.synth_notes.group_tilt}}}}},
        {"model",
         {{"preset", c.preset},
          {"weight_by", c.weight_by},
          {"rep_dim", c.rep_dim},
          {"encoder_hidden", c.encoder_hidden},
          {"decoder_hidden", c.decoder_hidden},
          {"activation_preset", c.activation_preset},
          {"noise_kind", opt(c.noise_kind)},
          {"noise", opt(c.noise)},
          {"learning_rate", opt(c.learning_rate)},
          {"epochs", opt(c.epochs)},
          {"batch_size", opt(c.batch_size)},
          {"lambda", c.lambda},
          {"resample", c.resample}}},
        {"topics",
         {{"k", c.topics_k},
          {"alpha", opt(c.topics_alpha)},
          {"beta", c.topics_beta},
          {"sweeps", c.topics_sweeps},
          {"infer_sweeps", c.topics_infer_sweeps}}},
        {"classifier",
         {{"kind", c.classifier},
          {"max_depth", c.clf.max_depth},
          {"min_samples_leaf", c.clf.min_samples_leaf},
          {"n_trees", c.clf.n_trees},
          {"feature_fraction", c.clf.feature_fraction},
          {"bootstrap", c.clf.bootstrap},
          {"shrinkage", c.clf.shrinkage},
          {"n_rounds", c.clf.n_rounds},
          {"gbm_depth", c.clf.gbm_depth},
          {"learning_rate", c.clf.learning_rate},
          {"epochs", c.clf.epochs},
          {"l2", c.clf.l2},
          {"threshold", c.threshold.prevalence ? json("prevalence") : json(c.threshold.value)}}},
        {"experiment",
         {{"presets", c.experiment_presets},
          {"tasks", c.experiment_tasks},
          {"table1_classifiers", c.table1_classifiers},
          {"reference_preset", c.reference_preset},
          {"top_n", c.top_n}}},
    };
}

/// Stage seeds: every stage hashes its name together with the root seed.
inline std::uint64_t stage_seed(const PipelineConfig& c, std::string_view stage) { return derive_seed(c.seed, stage); }

/// Preset defaults with explicit overrides applied on top.
inline TrainConfig resolve_train_config(const PipelineConfig& c, const std::string& preset) {
    TrainConfig t = preset == "fpm" ? TrainConfig::fpm() : preset == "rw-sdae" ? TrainConfig::rw_sdae() : TrainConfig::sdae();
    if (c.resample && preset != "sdae") t.loss_kind = LossKind::Plain;
    if (c.noise_kind) {
        const NoiseKind k = noise_kind_from_string(*c.noise_kind);
        if (k != t.noise_kind && !c.noise) t.noise = k == NoiseKind::Mask ? 0.95 : 0.05;
        t.noise_kind = k;
    }
    if (c.noise) t.noise = *c.noise;
    if (c.learning_rate) t.learning_rate = *c.learning_rate;
    if (c.epochs) t.epochs = *c.epochs;
    if (c.batch_size) t.batch_size = *c.batch_size;
    t.lambda = c.lambda;
    t.seed = stage_seed(c, "train");
    t.validate();
    return t;
}

// ---------------------------------------------------------------------------
// Filesystem helpers

inline void ensure_dir(const std::string& dir) {
    if (dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::IO, "cannot create directory '" + dir + "': " + ec.message());
}

inline std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

/// Creates the parent directory of `path` and returns `path`.
inline std::string prepare(const std::string& path) {
    ensure_dir(std::filesystem::path(path).parent_path().string());
    return path;
}

inline void write_text(const std::string& path, const std::string& text) {
    prepare(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IO, "cannot write '" + path + "'");
    out << text;
    if (!out) fail(ErrorKind::IO, "write failed for '" + path + "'");
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IO, "cannot open '" + path + "'");
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, path + ": " + e.what());
    }
}

/// Runs one stage and prefixes any failure with the stage name.
template <typename F>
auto run_stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        std::string msg = e.what();
        const std::string kind = std::string(to_string(e.kind())) + ": ";
        if (msg.rfind(kind, 0) == 0) msg.erase(0, kind.size());
        throw Error(e.kind(), "stage '" + name + "': " + msg);
    }
}

inline std::string fixed4(double v) { return csv::format_fixed(v, 4); }
inline std::string fixed4(const std::optional<double>& v) { return v ? fixed4(*v) : std::string("n/a"); }

// ---------------------------------------------------------------------------
// Synthetic data

inline FeatureMatrix run_synth(const PipelineConfig& c) {
    SynthConfig s = c.synth;
    s.seed = stage_seed(c, "synth");
    return synth_generate(s);
}

/// Topic k favours words [k·core, (k+1)·core). A patient's mixture is a
/// Dirichlet(0.5) draw tilted towards topic 0 when deceased at 30 days and
/// towards topic 1 outside the first group. Words are "w<index>".
inline std::vector<text::Note> synth_notes(const FeatureMatrix& fm, const SynthNotesConfig& cfg, std::uint64_t seed) {
    if (cfg.topics == 0 || cfg.vocabulary < cfg.topics) fail(ErrorKind::InvalidConfig, "synthetic notes need 1 <= topics <= vocabulary");
    Rng rng(seed);
    const std::size_t K = cfg.topics, V = cfg.vocabulary, core = V / K;
    std::vector<std::vector<double>> topics;
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> t(V, 0.02);
        for (std::size_t w = k * core; w < (k + 1) * core; ++w) t[w] = 1.0 + rng.uniform();
        topics.push_back(std::move(t));
    }
    std::set<std::string> group_names(fm.group.begin(), fm.group.end());
    const std::string reference = group_names.empty() ? std::string() : *group_names.begin();
    std::vector<text::Note> notes;
    for (std::size_t i = 0; i < fm.n_patients(); ++i) {
        if (rng.uniform() < cfg.missing_fraction) continue;
        auto theta = text::dirichlet_draw(rng, K, 0.5);
        if (fm.has_labels(Horizon::D30) && fm.label(Horizon::D30)[i]) theta[0] += cfg.label_tilt;
        if (K > 1 && !fm.group.empty() && fm.group[i] != reference) theta[1] += cfg.group_tilt;
        const std::size_t n_notes = 1 + static_cast<std::size_t>(rng.below(std::max<std::size_t>(cfg.max_notes, 1)));
        for (std::size_t d = 0; d < n_notes; ++d) {
            std::string body;
            for (std::size_t t = 0; t < cfg.words_per_note; ++t) {
                const std::size_t k = rng.categorical(theta);
                if (!body.empty()) body += ' ';
                body += "w" + std::to_string(rng.categorical(topics[k]));
            }
            notes.push_back({fm.ids[i], std::move(body)});
        }
    }
    return notes;
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessOutcome {
    FeatureMatrix matrix;
    PreprocessState state;
    bool refit = true;
};

/// Fits the chain, or applies stored statistics when `state` is given.
inline PreprocessOutcome run_preprocess(const std::string& input_csv, const json& schema, double threshold,
                                        const std::optional<PreprocessState>& state = std::nullopt) {
    const RawTable raw = raw_table_from_csv(csv::read(input_csv), schema);
    if (state) return {preprocess_apply(raw, *state), *state, false};
    auto [fm, st] = preprocess_fit(raw, threshold);
    return {std::move(fm), std::move(st), true};
}

// ---------------------------------------------------------------------------
// Topics

struct TopicFitOutcome {
    text::TopicModel model;
    double perplexity = 0.0;
    std::size_t documents = 0;
    std::size_t tokens = 0;
};

inline TopicFitOutcome run_topics_fit(const std::vector<text::Note>& notes, const PipelineConfig& c) {
    const text::Corpus corpus = text::build_corpus(notes);
    if (corpus.total_tokens() == 0) fail(ErrorKind::EmptyCorpus, "notes contain no tokens after preprocessing");
    TopicFitOutcome out;
    out.model = text::lda_fit(corpus, c.topics_k, c.alpha(), c.topics_beta, c.topics_sweeps, stage_seed(c, "topics"));
    out.perplexity = text::perplexity(out.model, corpus);
    out.documents = corpus.docs.size();
    out.tokens = corpus.total_tokens();
    return out;
}

struct VectorizeOutcome {
    FeatureMatrix matrix;
    std::vector<std::string> excluded; // patients without usable note tokens
    std::size_t unknown_tokens = 0;
};

inline std::vector<std::string> topic_column_names(std::size_t K) {
    std::vector<std::string> names;
    const std::size_t w = std::to_string(K - 1).size();
    for (std::size_t k = 0; k < K; ++k) names.push_back("topic_" + pad_index(k, w));
    return names;
}

/// Fold-in inference for every note, per-patient topic proportions appended
/// as K columns. Patients with no usable tokens are dropped and listed.
inline VectorizeOutcome run_topics_vectorize(const FeatureMatrix& fm, const std::vector<text::Note>& notes,
                                             const text::TopicModel& model, const PipelineConfig& c) {
    std::map<std::string, std::vector<const text::Note*>> by_patient;
    for (const auto& n : notes) by_patient[n.patient_id].push_back(&n);
    const std::uint64_t root = stage_seed(c, "topics-infer");

    VectorizeOutcome out;
    std::vector<std::size_t> keep;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < fm.n_patients(); ++i) {
        auto it = by_patient.find(fm.ids[i]);
        std::vector<std::vector<int>> assignments;
        if (it != by_patient.end())
            for (std::size_t d = 0; d < it->second.size(); ++d) {
                auto inf = text::lda_infer(model, text::preprocess_note(it->second[d]->text), c.topics_infer_sweeps,
                                           derive_seed(root, fm.ids[i] + "#" + std::to_string(d)));
                out.unknown_tokens += inf.unknown_tokens;
                assignments.push_back(std::move(inf.assignments));
            }
        std::size_t total = 0;
        for (const auto& a : assignments) total += a.size();
        if (total == 0) {
            out.excluded.push_back(fm.ids[i]);
            continue;
        }
        keep.push_back(i);
        rows.push_back(text::topic_vectorize(model.K, assignments));
    }
    if (keep.empty()) fail(ErrorKind::NoNotes, "no patient in the matrix has usable notes");
    out.matrix = fm.subset(keep);
    Matrix cols(keep.size(), model.K);
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), cols.row(r).begin());
    out.matrix.append_columns(topic_column_names(model.K), cols);
    return out;
}

// ---------------------------------------------------------------------------
// Training

inline std::vector<int> group_ids(const std::vector<std::string>& groups) {
    std::map<std::string, int> ids;
    for (const auto& g : groups) ids.emplace(g, 0);
    int next = 0;
    for (auto& [_, v] : ids) v = next++;
    std::vector<int> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(ids[g]);
    return out;
}

/// Per-row training weights for a preset on the training split.
inline SampleWeights preset_weights(const FeatureMatrix& train, const PipelineConfig& c, const std::string& preset) {
    if (preset == "sdae") return uniform_weights(train.n_patients());
    const Horizon h = horizon_from_string(c.task);
    if (preset == "fpm") {
        const WeightBy by = weight_by_from_string(c.weight_by);
        const std::vector<int> empty;
        const auto& labels = by == WeightBy::Group ? empty : train.label(h);
        return inverse_frequency_weights(weight_classes(train.group, labels, by));
    }
    return kamiran_calders_weights(train.label(h), train.group);
}

/// Weighted bootstrap of n row indices with probability proportional to w.
inline std::vector<std::size_t> weighted_bootstrap(const std::vector<double>& w, std::uint64_t seed) {
    std::vector<double> cum(w.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) cum[i] = acc += w[i];
    if (!(acc > 0.0)) fail(ErrorKind::NegativeWeight, "bootstrap weights sum to zero");
    Rng rng(seed);
    std::vector<std::size_t> idx(w.size());
    for (auto& k : idx) {
        const double u = rng.uniform() * acc;
        k = std::min<std::size_t>(static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin()), w.size() - 1);
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

using EpochCallback = std::function<void(std::size_t, double, double)>;

/// Splits the matrix, builds the preset's weights, trains on the train part
/// and tracks the loss on the validation part.
inline Checkpoint run_train(const FeatureMatrix& fm, const PipelineConfig& c, const std::string& preset,
                            const EpochCallback& on_epoch = {}) {
    if (std::find(kPresets.begin(), kPresets.end(), preset) == kPresets.end())
        fail(ErrorKind::InvalidConfig, "unknown model preset '" + preset + "'");
    if ((preset != "sdae" || c.lambda > 0.0) && fm.group.empty())
        fail(ErrorKind::MissingGroupColumn, "preset '" + preset + "' needs group column '" + c.group_column_or_default() + "'");
    const Split parts = split(fm, c.split, stage_seed(c, "split"));
    const TrainConfig tc = resolve_train_config(c, preset);
    SampleWeights w = preset_weights(parts.train, c, preset);

    FeatureMatrix resampled;
    const FeatureMatrix* rows = &parts.train;
    if (c.resample && preset != "sdae") {
        resampled = parts.train.subset(weighted_bootstrap(w.w, stage_seed(c, "resample")));
        rows = &resampled;
        w = uniform_weights(resampled.n_patients());
    }

    AutoencoderModel model = init_model(fm.n_features(), c.rep_dim, c.encoder_hidden, c.decoder_hidden,
                                        activation_preset_from_string(c.activation_preset), stage_seed(c, "init"));
    TrainData data{rows->values, w.w, c.lambda > 0.0 ? group_ids(rows->group) : std::vector<int>{}};
    const Matrix* val = parts.val.n_patients() ? &parts.val.values : nullptr;
    LossReport rep = train(model, data, val, tc, on_epoch);
    return {std::move(model), tc, std::move(rep), preset};
}

// ---------------------------------------------------------------------------
// Encoding

inline std::vector<std::string> rep_column_names(std::size_t d) {
    std::vector<std::string> names;
    const std::size_t w = std::max<std::size_t>(2, std::to_string(d - 1).size());
    for (std::size_t k = 0; k < d; ++k) names.push_back("rep_" + pad_index(k, w));
    return names;
}

/// Representation matrix: same ids, group and labels as the input, features
/// replaced by the encoder output.
inline FeatureMatrix run_encode(const AutoencoderModel& model, const FeatureMatrix& fm) {
    if (fm.n_features() != model.data_width())
        fail(ErrorKind::InvalidWidth, "matrix has " + std::to_string(fm.n_features()) + " features, checkpoint expects " +
                                          std::to_string(model.data_width()));
    FeatureMatrix out;
    out.ids = fm.ids;
    out.group = fm.group;
    out.labels = fm.labels;
    out.values = encode(model, fm.values);
    out.feature_names = rep_column_names(model.rep_dim());
    return out;
}

// ---------------------------------------------------------------------------
// Classification

struct ClassifyOutcome {
    std::string task;
    std::string classifier;
    PredictionSet predictions;
    ClassifierModel model;
    double threshold = 0.5;
    double accuracy = 0.0;
    double auroc = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
};

/// Fits on the training split and scores the test split.
inline ClassifyOutcome run_classify(const FeatureMatrix& reps, const PipelineConfig& c, const std::string& task,
                                    const std::string& classifier) {
    const Horizon h = horizon_from_string(task);
    if (!reps.has_labels(h)) fail(ErrorKind::MissingColumn, "no labels for task " + task);
    const Split parts = split(reps, c.split, stage_seed(c, "split"));
    if (parts.test.n_patients() == 0) fail(ErrorKind::EmptyData, "test split is empty");
    const auto& y = parts.train.label(h);
    const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (pos == 0 || pos == y.size()) fail(ErrorKind::SingleClass, "training labels for " + task + " hold a single class");

    ClassifyOutcome out;
    out.task = task;
    out.classifier = classifier;
    ClassifierParams p = c.clf;
    p.seed = stage_seed(c, "classify");
    out.model = fit_classifier(model_kind_from_string(classifier), parts.train.values, y, p);
    out.threshold = c.threshold.prevalence ? static_cast<double>(pos) / static_cast<double>(y.size()) : c.threshold.value;

    const auto scores = predict_proba(out.model, parts.test.values);
    PredictionSet& ps = out.predictions;
    ps.patient_id = parts.test.ids;
    ps.y_true = parts.test.label(h);
    ps.y_pred = threshold_scores(scores, out.threshold);
    ps.score = scores;
    ps.group = parts.test.group.empty() ? std::vector<std::string>(parts.test.n_patients(), "all") : parts.test.group;
    out.accuracy = accuracy(ps.y_true, ps.y_pred);
    out.auroc = auroc(ps.y_true, ps.score);
    out.n_train = parts.train.n_patients();
    out.n_test = parts.test.n_patients();
    return out;
}

inline json to_json(const ClassifyOutcome& o) {
    return {{"task", o.task},       {"classifier", o.classifier}, {"threshold", o.threshold}, {"accuracy", o.accuracy},
            {"auroc", o.auroc},     {"n_train", o.n_train},       {"n_test", o.n_test}};
}

// ---------------------------------------------------------------------------
// Fairness rows (Table 2 shape)

struct FairnessRow {
    std::string model;
    std::string task;
    FairnessReport report;
    double accuracy = 0.0;
    std::optional<double> auroc;
};

inline FairnessRow fairness_row(const PredictionSet& p, const std::string& privileged, std::string model = "",
                                std::string task = "") {
    FairnessRow r;
    r.model = std::move(model);
    r.task = std::move(task);
    r.report = fairness_report(p, privileged);
    r.accuracy = accuracy(p.y_true, p.y_pred);
    try {
        r.auroc = auroc(p.y_true, p.score);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::SingleClass) throw;
        r.report.undefined.emplace_back("auroc");
    }
    return r;
}

inline json to_json(const FairnessRow& r) {
    json j = to_json(r.report);
    j["schema_version"] = kReportSchemaVersion;
    if (!r.model.empty()) j["model"] = r.model;
    if (!r.task.empty()) j["task"] = r.task;
    j["accuracy"] = r.accuracy;
    j["auroc"] = r.auroc ? json(*r.auroc) : json(nullptr);
    return j;
}

inline std::string table2_header() {
    return "| Model | Task | DPR | EOD | EOR | Accuracy | AUROC |\n|---|---|---|---|---|---|---|\n";
}

inline std::string table2_row(const FairnessRow& r) {
    return "| " + (r.model.empty() ? std::string("-") : r.model) + " | " + (r.task.empty() ? std::string("-") : r.task) +
           " | " + fixed4(r.report.dpr) + " | " + fixed4(r.report.eod) + " | " + fixed4(r.report.eor) + " | " +
           fixed4(r.accuracy) + " | " + fixed4(r.auroc) + " |\n";
}

// ---------------------------------------------------------------------------
// Loss (Table 3 shape) and feature reconstruction (Table 4 shape) tables

inline double last_or_nan(const std::vector<double>& v) { return v.empty() ? std::nan("") : v.back(); }

inline std::string table3_header() {
    return "| Model | Train loss | Val loss | Reconstruction loss |\n|---|---|---|---|\n";
}

inline std::string table3_row(const std::string& model, const LossReport& r) {
    auto cell = [](double v) { return std::isnan(v) ? std::string("n/a") : fixed4(v); };
    return "| " + model + " | " + cell(last_or_nan(r.train_loss)) + " | " + cell(last_or_nan(r.val_loss)) + " | " +
           cell(r.reconstruction_loss) + " |\n";
}

inline json loss_row_json(const std::string& model, const LossReport& r) {
    auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
    return {{"model", model},
            {"train_loss", num(last_or_nan(r.train_loss))},
            {"val_loss", num(last_or_nan(r.val_loss))},
            {"reconstruction_loss", r.reconstruction_loss},
            {"weighted_reconstruction_loss", r.weighted_reconstruction_loss},
            {"epochs", r.train_loss.size()},
            {"penalty_skipped_batches", r.penalty_skipped_batches}};
}

struct FeatureEntry {
    std::string feature;
    double error = 0.0;
};

struct FeatureReport {
    std::vector<double> errors;
    std::vector<FeatureEntry> best;
    std::vector<FeatureEntry> worst;
};

inline FeatureReport run_feature_report(const AutoencoderModel& model, const FeatureMatrix& fm, std::size_t top_n) {
    if (fm.n_features() != model.data_width())
        fail(ErrorKind::InvalidWidth, "matrix width differs from the checkpoint's input width");
    FeatureReport r;
    r.errors = per_feature_errors(model, fm.values);
    const FeatureRanking rank = rank_features(r.errors, top_n);
    for (auto j : rank.best) r.best.push_back({fm.feature_names[j], r.errors[j]});
    for (auto j : rank.worst) r.worst.push_back({fm.feature_names[j], r.errors[j]});
    return r;
}

inline std::string feature_table(const std::string& title, const std::vector<FeatureEntry>& rows) {
    std::string s = "#### " + title + "\n\n| Rank | Feature | Reconstruction error |\n|---|---|---|\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
        s += "| " + std::to_string(i + 1) + " | " + rows[i].feature + " | " + fixed4(rows[i].error) + " |\n";
    return s;
}

inline std::string feature_report_markdown(const FeatureReport& r, const std::string& model = "") {
    const std::string prefix = model.empty() ? std::string() : model + ": ";
    return feature_table(prefix + "best reconstructed features", r.best) + "\n" +
           feature_table(prefix + "worst reconstructed features", r.worst);
}

inline json to_json(const FeatureReport& r) {
    auto rows = [](const std::vector<FeatureEntry>& v) {
        json a = json::array();
        for (const auto& e : v) a.push_back({{"feature", e.feature}, {"error", e.error}});
        return a;
    };
    return {{"schema_version", kReportSchemaVersion}, {"best", rows(r.best)}, {"worst", rows(r.worst)}, {"errors", r.errors}};
}

// ---------------------------------------------------------------------------
// Experiment

struct RunReport {
    json config;
    std::vector<std::string> table1_classifiers;
    std::map<std::string, std::map<std::string, double>> table1; // task -> classifier -> accuracy
    std::vector<FairnessRow> table2;
    std::vector<std::pair<std::string, LossReport>> table3;
    std::vector<std::pair<std::string, FeatureReport>> table4;
    std::vector<std::string> tasks;
    std::map<std::string, std::string> artifacts;
    std::vector<std::string> excluded_patients;
};

inline json to_json(const RunReport& r) {
    json t1 = json::array();
    for (const auto& task : r.tasks) {
        auto it = r.table1.find(task);
        if (it == r.table1.end()) continue;
        json row{{"task", task}};
        for (const auto& [clf, acc] : it->second) row[clf] = acc;
        t1.push_back(row);
    }
    json t2 = json::array();
    for (const auto& row : r.table2) {
        json j = to_json(row);
        j.erase("schema_version");
        t2.push_back(j);
    }
    json t3 = json::array();
    for (const auto& [m, rep] : r.table3) t3.push_back(loss_row_json(m, rep));
    json t4 = json::object();
    for (const auto& [m, fr] : r.table4) {
        json j = to_json(fr);
        j.erase("schema_version");
        t4[m] = j;
    }
    return {{"schema_version", kReportSchemaVersion},
            {"config", r.config},
            {"table1_classifier_accuracy", {{"classifiers", r.table1_classifiers}, {"rows", t1}}},
            {"table2_fairness", t2},
            {"table3_losses", t3},
            {"table4_feature_reconstruction", t4},
            {"excluded_patients", r.excluded_patients},
            {"artifacts", r.artifacts}};
}

inline std::string to_markdown(const RunReport& r) {
    std::ostringstream s;
    s << "# Experiment report\n\nSchema version " << kReportSchemaVersion << ". Seed " << r.config.value("seed", 0ULL)
      << ".\n\n";
    if (!r.table1_classifiers.empty()) {
        s << "## Classifier accuracy\n\n| Task |";
        for (const auto& c : r.table1_classifiers) s << ' ' << c << " |";
        s << "\n|---|";
        for (std::size_t i = 0; i < r.table1_classifiers.size(); ++i) s << "---|";
        s << '\n';
        for (const auto& task : r.tasks) {
            auto it = r.table1.find(task);
            if (it == r.table1.end()) continue;
            s << "| " << task << " |";
            for (const auto& c : r.table1_classifiers) s << ' ' << fixed4(it->second.at(c)) << " |";
            s << '\n';
        }
        s << '\n';
    }
    s << "## Fairness and performance\n\n" << table2_header();
    for (const auto& row : r.table2) s << table2_row(row);
    s << "\n## Losses\n\n" << table3_header();
    for (const auto& [m, rep] : r.table3) s << table3_row(m, rep);
    s << "\n## Feature reconstruction\n\n";
    for (const auto& [m, fr] : r.table4) s << feature_report_markdown(fr, m) << '\n';
    if (!r.excluded_patients.empty())
        s << "Patients excluded for lack of notes: " << r.excluded_patients.size() << ".\n";
    return s.str();
}

using Logger = std::function<void(const std::string&)>;

/// Full run: data, optional topics, one autoencoder per preset, every task,
/// the classifier comparison and all four report tables. Every intermediate
/// artifact is written under `out`.
inline RunReport run_experiment(const PipelineConfig& c, const std::string& out, const Logger& log = {}) {
    auto say = [&](const std::string& m) {
        if (log) log(m);
    };
    ensure_dir(out);
    RunReport rep;
    rep.config = to_json(c);
    rep.config["paths"].erase("out");
    rep.tasks = c.experiment_tasks;
    rep.table1_classifiers = c.table1_classifiers;
    write_json(join_path(out, "config.json"), rep.config);
    rep.artifacts["config"] = "config.json";

    FeatureMatrix fm = run_stage("data", [&] {
        if (!c.matrix.empty()) return read_feature_matrix(c.matrix, c.group_column);
        say("synthesising cohort");
        FeatureMatrix m = run_synth(c);
        write_feature_matrix(prepare(join_path(out, "data/matrix.csv")), m);
        rep.artifacts["matrix"] = "data/matrix.csv";
        return m;
    });

    std::vector<text::Note> notes = run_stage("notes", [&] {
        if (!c.notes.empty()) return text::read_notes_jsonl(c.notes);
        if (!c.synth_notes.enabled) return std::vector<text::Note>{};
        auto n = synth_notes(fm, c.synth_notes, stage_seed(c, "notes"));
        text::write_notes_jsonl(prepare(join_path(out, "data/notes.jsonl")), n);
        rep.artifacts["notes"] = "data/notes.jsonl";
        return n;
    });
    if (!notes.empty()) {
        say("fitting topic model");
        const auto fit = run_stage("topics fit", [&] { return run_topics_fit(notes, c); });
        write_json(join_path(out, "topics/topic_model.json"), to_json(fit.model));
        rep.artifacts["topic_model"] = "topics/topic_model.json";
        auto vec = run_stage("topics vectorize", [&] { return run_topics_vectorize(fm, notes, fit.model, c); });
        rep.excluded_patients = vec.excluded;
        fm = std::move(vec.matrix);
        write_feature_matrix(prepare(join_path(out, "data/matrix_topics.csv")), fm);
        rep.artifacts["matrix_topics"] = "data/matrix_topics.csv";
    }

    std::map<std::string, FeatureMatrix> reps;
    for (const auto& preset : c.experiment_presets) {
        const std::string dir = "models/" + preset;
        say("training " + preset);
        Checkpoint ck = run_stage("train " + preset, [&] {
            return run_train(fm, c, preset, [&](std::size_t e, double tl, double vl) {
                say("  " + preset + " epoch " + std::to_string(e + 1) + " train " + fixed4(tl) + " val " + fixed4(vl));
            });
        });
        write_json(join_path(out, dir + "/checkpoint.json"), to_json(ck));
        rep.artifacts["checkpoint:" + preset] = dir + "/checkpoint.json";
        rep.table3.emplace_back(preset, ck.report);

        FeatureReport fr = run_stage("feature-report " + preset, [&] { return run_feature_report(ck.model, fm, c.top_n); });
        write_json(join_path(out, dir + "/feature_report.json"), to_json(fr));
        write_text(join_path(out, dir + "/feature_report.md"), feature_report_markdown(fr, preset));
        rep.artifacts["feature_report:" + preset] = dir + "/feature_report.json";
        rep.table4.emplace_back(preset, std::move(fr));

        FeatureMatrix z = run_stage("encode " + preset, [&] { return run_encode(ck.model, fm); });
        write_feature_matrix(prepare(join_path(out, dir + "/representations.csv")), z);
        rep.artifacts["representations:" + preset] = dir + "/representations.csv";

        for (const auto& task : c.experiment_tasks) {
            say("classifying " + preset + " " + task);
            const std::string stem = dir + "/" + task;
            auto cl = run_stage("classify " + preset + " " + task, [&] { return run_classify(z, c, task, c.classifier); });
            write_predictions(prepare(join_path(out, stem + "/predictions.csv")), cl.predictions);
            write_json(join_path(out, stem + "/classifier.json"), to_json(cl.model));
            write_json(join_path(out, stem + "/metrics.json"), to_json(cl));
            FairnessRow row = run_stage("fairness " + preset + " " + task,
                                        [&] { return fairness_row(cl.predictions, c.privileged_group, preset, task); });
            write_json(join_path(out, stem + "/fairness.json"), to_json(row));
            rep.artifacts["predictions:" + preset + ":" + task] = stem + "/predictions.csv";
            rep.artifacts["fairness:" + preset + ":" + task] = stem + "/fairness.json";
            rep.table2.push_back(std::move(row));
        }
        reps.emplace(preset, std::move(z));
    }

    if (!c.table1_classifiers.empty()) {
        auto it = reps.find(c.reference_preset);
        if (it == reps.end())
            fail(ErrorKind::InvalidConfig, "reference preset '" + c.reference_preset + "' is not among the experiment presets");
        for (const auto& task : c.experiment_tasks)
            for (const auto& clf : c.table1_classifiers) {
                say("table 1: " + clf + " " + task);
                const std::string stem = "classifiers/" + c.reference_preset + "/" + clf + "/" + task;
                auto cl = run_stage("classify " + clf + " " + task, [&] { return run_classify(it->second, c, task, clf); });
                write_predictions(prepare(join_path(out, stem + "/predictions.csv")), cl.predictions);
                write_json(join_path(out, stem + "/metrics.json"), to_json(cl));
                rep.artifacts["table1:" + clf + ":" + task] = stem + "/metrics.json";
                rep.table1[task][clf] = cl.accuracy;
            }
    }

    write_json(join_path(out, "report.json"), to_json(rep));
    write_text(join_path(out, "report.md"), to_markdown(rep));
    return rep;
}

} // namespace fpm
