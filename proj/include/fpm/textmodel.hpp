#pragma once

// Clinical-note tokenisation with a trigger-window negation filter and a
// minimal suffix stemmer, collapsed-Gibbs LDA, smoothed-point-estimate
// perplexity, fold-in inference and per-patient topic vectors.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "fpm/error.hpp"
#include "fpm/numcore.hpp"

namespace fpm::text {

using nlohmann::json;

inline const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words{
        "a",     "about", "above", "after", "again", "all",   "also",  "am",    "an",    "and",   "any",
        "are",   "as",    "at",    "be",    "been",  "before", "being", "below", "both",  "but",   "by",
        "can",   "could", "did",   "do",    "does",  "doing", "down",  "during", "each", "few",   "for",
        "from",  "further", "had", "has",   "have",  "having", "he",   "her",   "here",  "hers",  "him",
        "his",   "how",   "i",     "if",    "in",    "into",  "is",    "it",    "its",   "itself", "just",
        "me",    "more",  "most",  "my",    "nor",   "now",   "of",    "off",   "on",    "once",  "only",
        "or",    "other", "our",   "ours",  "out",   "over",  "own",   "per",   "same",  "she",   "should",
        "so",    "some",  "such",  "than",  "that",  "the",   "their", "theirs", "them", "then",  "there",
        "these", "they",  "this",  "those", "through", "to",  "too",   "under", "until", "up",    "very",
        "was",   "we",    "were",  "what",  "when",  "where", "which", "while", "who",   "whom",  "why",
        "will",  "with",  "would", "you",   "your",  "yours",
    };
    return words;
}

inline constexpr std::array<std::string_view, 6> kNegationTriggers{"no", "not", "without", "denies", "denied", "negative"};
inline constexpr std::size_t kNegationWindow = 5;
inline constexpr std::array<std::string_view, 6> kSuffixes{"ation", "tion", "ing", "es", "ed", "s"};

inline bool is_trigger(std::string_view t) {
    return std::find(kNegationTriggers.begin(), kNegationTriggers.end(), t) != kNegationTriggers.end();
}

/// Strips the first matching suffix when at least three characters remain;
/// repeated until no rule fires so that the stem is a fixed point.
inline std::string stem(std::string token) {
    for (;;) {
        bool stripped = false;
        for (auto suffix : kSuffixes) {
            if (token.size() >= suffix.size() && token.compare(token.size() - suffix.size(), suffix.size(), suffix) == 0) {
                if (token.size() - suffix.size() >= 3) {
                    token.resize(token.size() - suffix.size());
                    stripped = true;
                }
                break;
            }
        }
        if (!stripped) return token;
    }
}

/// Lowercase, split on non-alphanumeric runs, drop negation scopes (trigger
/// plus up to five following tokens, cut short by '.', ';' or ':'), drop
/// stopwords, stem. Stems that collapse onto a stopword or trigger are
/// dropped as well, which keeps the function idempotent on its own output.
inline std::vector<std::string> preprocess_note(std::string_view note) {
    struct Piece {
        std::string token; // empty marks a sentence boundary
    };
    std::vector<Piece> pieces;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) pieces.push_back({std::move(cur)});
        cur.clear();
    };
    for (char ch : note) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
            if (ch == '.' || ch == ';' || ch == ':') pieces.push_back({});
        }
    }
    flush();

    std::vector<std::string> kept;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (pieces[i].token.empty()) continue;
        if (is_trigger(pieces[i].token)) {
            std::size_t skipped = 0;
            while (i + 1 < pieces.size() && !pieces[i + 1].token.empty() && skipped < kNegationWindow) {
                ++i;
                ++skipped;
            }
            continue;
        }
        kept.push_back(pieces[i].token);
    }

    std::vector<std::string> out;
    const auto& stop = stopwords();
    for (auto& t : kept) {
        if (stop.count(t)) continue;
        std::string s = stem(std::move(t));
        if (stop.count(s) || is_trigger(s)) continue;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------

struct Note {
    std::string patient_id;
    std::string text;
};

inline std::vector<Note> read_notes_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IO, "cannot open '" + path + "'");
    std::vector<Note> notes;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
            notes.push_back({j.at("patient_id").get<std::string>(), j.at("text").get<std::string>()});
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return notes;
}

inline void write_notes_jsonl(const std::string& path, const std::vector<Note>& notes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IO, "cannot write '" + path + "'");
    for (const auto& n : notes) out << json{{"patient_id", n.patient_id}, {"text", n.text}}.dump() << '\n';
}

class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
        for (std::size_t i = 0; i < words_.size(); ++i)
            if (!index_.emplace(words_[i], static_cast<int>(i)).second)
                fail(ErrorKind::InvalidConfig, "duplicate vocabulary entry '" + words_[i] + "'");
    }

    int add(const std::string& w) {
        auto [it, inserted] = index_.try_emplace(w, static_cast<int>(words_.size()));
        if (inserted) words_.push_back(w);
        return it->second;
    }
    /// -1 when unknown.
    int find(const std::string& w) const {
        auto it = index_.find(w);
        return it == index_.end() ? -1 : it->second;
    }
    std::size_t size() const { return words_.size(); }
    const std::string& word(std::size_t i) const { return words_[i]; }
    const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

struct Corpus {
    std::vector<std::vector<int>> docs;
    std::vector<std::string> owners; // patient id per document
    Vocabulary vocab;

    std::size_t total_tokens() const {
        std::size_t n = 0;
        for (const auto& d : docs) n += d.size();
        return n;
    }
};

/// Vocabulary in first-seen order.
inline Corpus build_corpus(const std::vector<Note>& notes) {
    Corpus c;
    for (const auto& note : notes) {
        std::vector<int> doc;
        for (const auto& tok : preprocess_note(note.text)) doc.push_back(c.vocab.add(tok));
        c.docs.push_back(std::move(doc));
        c.owners.push_back(note.patient_id);
    }
    return c;
}

struct TopicModel {
    std::size_t K = 0;
    double alpha = 0.0;
    double beta = 0.0;
    Vocabulary vocab;
    std::vector<long> topic_word;  // K × V
    std::vector<long> topic_total; // K
    std::vector<long> doc_topic;   // D × K
    std::vector<std::vector<int>> assignments;
    std::uint64_t seed = 0;
    std::size_t sweeps = 0;

    std::size_t V() const { return vocab.size(); }
    std::size_t D() const { return assignments.size(); }
    long& nkw(std::size_t k, std::size_t w) { return topic_word[k * V() + w]; }
    long nkw(std::size_t k, std::size_t w) const { return topic_word[k * V() + w]; }
    long& ndk(std::size_t d, std::size_t k) { return doc_topic[d * K + k]; }
    long ndk(std::size_t d, std::size_t k) const { return doc_topic[d * K + k]; }

    double phi(std::size_t k, std::size_t w) const {
        return (static_cast<double>(nkw(k, w)) + beta) / (static_cast<double>(topic_total[k]) + static_cast<double>(V()) * beta);
    }
};

/// Normalised collapsed-Gibbs conditional for one token given counts that
/// already exclude it.
inline std::vector<double> gibbs_conditional(const TopicModel& m, std::span<const long> doc_counts, std::size_t word) {
    std::vector<double> p(m.K);
    double total = 0.0;
    for (std::size_t k = 0; k < m.K; ++k) {
        p[k] = (static_cast<double>(doc_counts[k]) + m.alpha) * m.phi(k, word);
        total += p[k];
    }
    for (double& v : p) v /= total;
    return p;
}

namespace detail {

inline std::size_t sample_topic(Rng& rng, std::vector<double>& cumulative) {
    const double u = rng.uniform() * cumulative.back();
    return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
}

inline void sweep(TopicModel& m, const Corpus& corpus, Rng& rng, std::vector<double>& cum) {
    const double vbeta = static_cast<double>(m.V()) * m.beta;
    for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
        const auto& doc = corpus.docs[d];
        auto& z = m.assignments[d];
        for (std::size_t i = 0; i < doc.size(); ++i) {
            const std::size_t w = static_cast<std::size_t>(doc[i]);
            std::size_t k = static_cast<std::size_t>(z[i]);
            --m.nkw(k, w);
            --m.topic_total[k];
            --m.ndk(d, k);
            double acc = 0.0;
            for (std::size_t t = 0; t < m.K; ++t) {
                acc += (static_cast<double>(m.ndk(d, t)) + m.alpha) * (static_cast<double>(m.nkw(t, w)) + m.beta) /
                       (static_cast<double>(m.topic_total[t]) + vbeta);
                cum[t] = acc;
            }
            k = std::min(sample_topic(rng, cum), m.K - 1);
            z[i] = static_cast<int>(k);
            ++m.nkw(k, w);
            ++m.topic_total[k];
            ++m.ndk(d, k);
        }
    }
}

} // namespace detail

inline void validate_corpus(const Corpus& corpus) {
    if (corpus.docs.empty() || corpus.total_tokens() == 0) fail(ErrorKind::EmptyCorpus, "corpus has no tokens");
    for (const auto& d : corpus.docs)
        for (int w : d)
            if (w < 0 || static_cast<std::size_t>(w) >= corpus.vocab.size())
                fail(ErrorKind::UnknownToken, "token id " + std::to_string(w) + " outside vocabulary");
}

/// Random initial assignments followed by `sweeps` collapsed-Gibbs sweeps.
/// `on_sweep(model, sweep_index)` is called after every sweep when provided.
template <typename OnSweep>
TopicModel lda_fit(const Corpus& corpus, std::size_t K, double alpha, double beta, std::size_t sweeps, std::uint64_t seed,
                   OnSweep&& on_sweep) {
    if (K < 2) fail(ErrorKind::InvalidHyperparameter, "K must be at least 2");
    if (!(alpha > 0.0) || !(beta > 0.0)) fail(ErrorKind::InvalidHyperparameter, "alpha and beta must be positive");
    validate_corpus(corpus);

    TopicModel m;
    m.K = K;
    m.alpha = alpha;
    m.beta = beta;
    m.vocab = corpus.vocab;
    m.seed = seed;
    m.sweeps = sweeps;
    m.topic_word.assign(K * m.V(), 0);
    m.topic_total.assign(K, 0);
    m.doc_topic.assign(corpus.docs.size() * K, 0);
    m.assignments.resize(corpus.docs.size());

    Rng rng(seed);
    for (std::size_t d = 0; d < corpus.docs.size(); ++d)
        for (int w : corpus.docs[d]) {
            const std::size_t k = rng.below(K);
            m.assignments[d].push_back(static_cast<int>(k));
            ++m.nkw(k, static_cast<std::size_t>(w));
            ++m.topic_total[k];
            ++m.ndk(d, k);
        }
    std::vector<double> cum(K);
    for (std::size_t s = 0; s < sweeps; ++s) {
        detail::sweep(m, corpus, rng, cum);
        on_sweep(static_cast<const TopicModel&>(m), s);
    }
    return m;
}

inline TopicModel lda_fit(const Corpus& corpus, std::size_t K, double alpha, double beta, std::size_t sweeps, std::uint64_t seed) {
    return lda_fit(corpus, K, alpha, beta, sweeps, seed, [](const TopicModel&, std::size_t) {});
}

/// Σ_w N_kw = N_k, Σ_k N_dk = len(d) and the assignments reproduce both tables.
inline bool counts_consistent(const TopicModel& m, const Corpus& corpus) {
    for (std::size_t k = 0; k < m.K; ++k) {
        long s = 0;
        for (std::size_t w = 0; w < m.V(); ++w) {
            if (m.nkw(k, w) < 0) return false;
            s += m.nkw(k, w);
        }
        if (s != m.topic_total[k]) return false;
    }
    std::vector<long> tw(m.topic_word.size(), 0);
    for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
        long s = 0;
        std::vector<long> dk(m.K, 0);
        for (std::size_t i = 0; i < corpus.docs[d].size(); ++i) {
            const auto k = static_cast<std::size_t>(m.assignments[d][i]);
            ++dk[k];
            ++tw[k * m.V() + static_cast<std::size_t>(corpus.docs[d][i])];
        }
        for (std::size_t k = 0; k < m.K; ++k) {
            if (dk[k] != m.ndk(d, k)) return false;
            s += m.ndk(d, k);
        }
        if (s != static_cast<long>(corpus.docs[d].size())) return false;
    }
    return tw == m.topic_word;
}

/// exp(−Σ log p(w|d) / N) with θ_dk = (N_dk+α)/(len(d)+Kα) taken from
/// `doc_topic` (D × K counts aligned with `corpus.docs`).
inline double perplexity(const TopicModel& m, const Corpus& corpus, std::span<const long> doc_topic) {
    if (doc_topic.size() != corpus.docs.size() * m.K)
        fail(ErrorKind::DimensionMismatch, "doc-topic table does not match corpus");
    double log_sum = 0.0;
    std::size_t n = 0;
    const double kalpha = static_cast<double>(m.K) * m.alpha;
    for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
        const double len = static_cast<double>(corpus.docs[d].size());
        for (int w : corpus.docs[d]) {
            if (w < 0 || static_cast<std::size_t>(w) >= m.V()) fail(ErrorKind::UnknownToken, "token id " + std::to_string(w));
            double p = 0.0;
            for (std::size_t k = 0; k < m.K; ++k)
                p += (static_cast<double>(doc_topic[d * m.K + k]) + m.alpha) / (len + kalpha) * m.phi(k, static_cast<std::size_t>(w));
            log_sum += std::log(p);
            ++n;
        }
    }
    if (n == 0) fail(ErrorKind::EmptyCorpus, "perplexity of an empty corpus");
    return std::exp(-log_sum / static_cast<double>(n));
}

/// Perplexity on the corpus the model was fit on.
inline double perplexity(const TopicModel& m, const Corpus& corpus) { return perplexity(m, corpus, m.doc_topic); }

struct Inference {
    std::vector<int> assignments;
    std::size_t unknown_tokens = 0;
};

/// Fold-in Gibbs with the topic-word table frozen. Unknown words are skipped
/// and counted.
inline Inference lda_infer(const TopicModel& m, const std::vector<std::string>& tokens, std::size_t sweeps, std::uint64_t seed) {
    Inference out;
    std::vector<std::size_t> words;
    for (const auto& t : tokens) {
        const int w = m.vocab.find(t);
        if (w < 0) ++out.unknown_tokens;
        else words.push_back(static_cast<std::size_t>(w));
    }
    if (words.empty()) return out;
    Rng rng(seed);
    std::vector<long> dk(m.K, 0);
    out.assignments.resize(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto k = rng.below(m.K);
        out.assignments[i] = static_cast<int>(k);
        ++dk[k];
    }
    std::vector<double> cum(m.K);
    for (std::size_t s = 0; s < sweeps; ++s)
        for (std::size_t i = 0; i < words.size(); ++i) {
            --dk[static_cast<std::size_t>(out.assignments[i])];
            double acc = 0.0;
            for (std::size_t k = 0; k < m.K; ++k) {
                acc += (static_cast<double>(dk[k]) + m.alpha) * m.phi(k, words[i]);
                cum[k] = acc;
            }
            const std::size_t k = std::min(detail::sample_topic(rng, cum), m.K - 1);
            out.assignments[i] = static_cast<int>(k);
            ++dk[k];
        }
    return out;
}

/// Topic-occurrence counts over all of a patient's tokens divided by the
/// total token count.
inline std::vector<double> topic_vectorize(std::size_t K, const std::vector<std::vector<int>>& patient_assignments) {
    std::vector<double> v(K, 0.0);
    std::size_t total = 0;
    for (const auto& doc : patient_assignments)
        for (int k : doc) {
            if (k < 0 || static_cast<std::size_t>(k) >= K) fail(ErrorKind::DimensionMismatch, "topic index out of range");
            v[static_cast<std::size_t>(k)] += 1.0;
            ++total;
        }
    if (total == 0) fail(ErrorKind::NoNotes, "patient has no note tokens");
    for (double& x : v) x /= static_cast<double>(total);
    return v;
}

inline json to_json(const TopicModel& m) {
    return {{"K", m.K},
            {"alpha", m.alpha},
            {"beta", m.beta},
            {"vocabulary", m.vocab.words()},
            {"topic_word_counts", m.topic_word},
            {"topic_totals", m.topic_total},
            {"doc_topic_counts", m.doc_topic},
            {"assignments", m.assignments},
            {"seed", m.seed},
            {"sweeps", m.sweeps}};
}

inline TopicModel topic_model_from_json(const json& j) {
    TopicModel m;
    m.K = j.at("K").get<std::size_t>();
    m.alpha = j.at("alpha").get<double>();
    m.beta = j.at("beta").get<double>();
    m.vocab = Vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
    m.topic_word = j.at("topic_word_counts").get<std::vector<long>>();
    m.topic_total = j.at("topic_totals").get<std::vector<long>>();
    m.doc_topic = j.at("doc_topic_counts").get<std::vector<long>>();
    m.assignments = j.at("assignments").get<std::vector<std::vector<int>>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.sweeps = j.at("sweeps").get<std::size_t>();
    if (m.topic_word.size() != m.K * m.V() || m.topic_total.size() != m.K || m.doc_topic.size() != m.D() * m.K)
        fail(ErrorKind::Parse, "topic model count arrays have inconsistent sizes");
    return m;
}

// ---------------------------------------------------------------------------
// Synthetic corpora with known topics

inline double gamma_draw(Rng& rng, double shape) {
    if (shape < 1.0) {
        const double u = rng.uniform();
        return gamma_draw(rng, shape + 1.0) * std::pow(u > 0.0 ? u : 1e-300, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

inline std::vector<double> dirichlet_draw(Rng& rng, std::size_t n, double alpha) {
    std::vector<double> v(n);
    double s = 0.0;
    for (double& x : v) s += (x = gamma_draw(rng, alpha));
    for (double& x : v) x /= s;
    return v;
}

struct SyntheticTopics {
    Corpus corpus;
    std::vector<std::vector<double>> topics; // K × V word distributions
};

/// Topic k favours the `core` words [k·core, (k+1)·core) and leaks a small
/// mass onto the rest; document mixtures are Dirichlet(doc_alpha). Words are
/// named "w<index>".
inline SyntheticTopics synth_topic_corpus(std::size_t K, std::size_t V, std::size_t n_docs, std::size_t doc_len, std::uint64_t seed,
                                          double doc_alpha = 0.5, std::size_t core = 10, double leak = 0.02) {
    if (K * core > V) fail(ErrorKind::InvalidConfig, "vocabulary too small for disjoint topic cores");
    Rng rng(seed);
    SyntheticTopics out;
    for (std::size_t w = 0; w < V; ++w) out.corpus.vocab.add("w" + std::to_string(w));
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> t(V, leak);
        for (std::size_t w = k * core; w < (k + 1) * core; ++w) t[w] = 1.0 + rng.uniform();
        double s = 0.0;
        for (double x : t) s += x;
        for (double& x : t) x /= s;
        out.topics.push_back(std::move(t));
    }
    for (std::size_t d = 0; d < n_docs; ++d) {
        const auto theta = dirichlet_draw(rng, K, doc_alpha);
        std::vector<int> doc;
        for (std::size_t i = 0; i < doc_len; ++i) {
            const std::size_t k = rng.categorical(theta);
            doc.push_back(static_cast<int>(rng.categorical(out.topics[k])));
        }
        out.corpus.docs.push_back(std::move(doc));
        out.corpus.owners.push_back("D" + std::to_string(d));
    }
    return out;
}

inline std::vector<std::size_t> top_words(std::span<const double> dist, std::size_t n) {
    std::vector<std::size_t> idx(dist.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    idx.resize(std::min(n, idx.size()));
    return idx;
}

/// Greedy one-to-one matching of learned to true topics by top-n overlap;
/// returns the overlap of each true topic with its matched learned topic.
inline std::vector<std::size_t> greedy_topic_overlap(const TopicModel& m, const std::vector<std::vector<double>>& truth, std::size_t n = 10) {
    std::vector<std::vector<std::size_t>> learned_top;
    for (std::size_t k = 0; k < m.K; ++k) {
        std::vector<double> phi(m.V());
        for (std::size_t w = 0; w < m.V(); ++w) phi[w] = m.phi(k, w);
        learned_top.push_back(top_words(phi, n));
    }
    std::vector<std::vector<std::size_t>> overlap(truth.size(), std::vector<std::size_t>(m.K));
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const auto tt = top_words(truth[t], n);
        for (std::size_t k = 0; k < m.K; ++k)
            for (auto w : tt) overlap[t][k] += std::count(learned_top[k].begin(), learned_top[k].end(), w) ? 1 : 0;
    }
    std::vector<std::size_t> result(truth.size(), 0);
    std::vector<bool> used_t(truth.size()), used_k(m.K);
    for (std::size_t round = 0; round < std::min(truth.size(), m.K); ++round) {
        std::size_t bt = 0, bk = 0;
        long best = -1;
        for (std::size_t t = 0; t < truth.size(); ++t)
            for (std::size_t k = 0; k < m.K; ++k)
                if (!used_t[t] && !used_k[k] && static_cast<long>(overlap[t][k]) > best) {
                    best = static_cast<long>(overlap[t][k]);
                    bt = t;
                    bk = k;
                }
        used_t[bt] = used_k[bk] = true;
        result[bt] = overlap[bt][bk];
    }
    return result;
}

} // namespace fpm::text
