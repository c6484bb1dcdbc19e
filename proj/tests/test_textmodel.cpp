#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "fpm/textmodel.hpp"

using namespace fpm;
using namespace fpm::text;

using Tokens = std::vector<std::string>;

TEST(PreprocessNote, NegationScopeRemoved) {
    EXPECT_EQ(preprocess_note("no history of diabetes."), Tokens{});
    EXPECT_EQ(preprocess_note("Patient denies chest pain; reports fatigue."), (Tokens{"patient", "report", "fatigue"}));
}

TEST(PreprocessNote, WindowStopsAfterFiveTokens) {
    // trigger + five dropped tokens, then scanning resumes
    EXPECT_EQ(preprocess_note("without one two three four five renal failure"), (Tokens{"renal", "failure"}));
    EXPECT_EQ(preprocess_note("not fever: cough"), (Tokens{"cough"}));
}

TEST(PreprocessNote, StopwordsAndStemming) {
    EXPECT_EQ(preprocess_note("history of diabetes"), (Tokens{"history", "diabet"}));
    // "noted" stems to the trigger "not", which is then dropped
    EXPECT_EQ(preprocess_note("Wounds noted, intubation"), (Tokens{"wound", "intub"}));
    EXPECT_EQ(stem("bleeding"), "ble"); // "ing" then "ed": stems are fixed points
    EXPECT_EQ(stem("intubation"), "intub");
    EXPECT_EQ(stem("tubes"), "tub");
    EXPECT_EQ(stem("bed"), "bed");   // would leave fewer than three characters
    EXPECT_EQ(stem("ties"), "ties"); // first matching suffix "es" would leave two
    EXPECT_EQ(preprocess_note(""), Tokens{});
}

TEST(PreprocessNote, DeterministicAndIdempotent) {
    const std::vector<std::string> notes{
        "Pt denies SOB. Chest X-ray shows bilateral effusions; started diuretics.",
        "creations stations nots ours without anything. Renal failure noted",
        "NEGATIVE for pneumonia, positive for sepsis: admitted to ICU",
        "history of diabetes, hypertension and coronary artery disease",
    };
    for (const auto& n : notes) {
        const Tokens once = preprocess_note(n);
        EXPECT_EQ(preprocess_note(n), once);
        std::string joined;
        for (const auto& t : once) joined += t + " ";
        EXPECT_EQ(preprocess_note(joined), once) << n;
    }
}

TEST(Corpus, BuildKeepsVocabularyBijective) {
    const Corpus c = build_corpus({{"p1", "renal failure renal"}, {"p2", "sepsis failure"}});
    ASSERT_EQ(c.docs.size(), 2u);
    EXPECT_EQ(c.vocab.size(), 3u);
    EXPECT_EQ(c.docs[0], (std::vector<int>{0, 1, 0}));
    EXPECT_EQ(c.docs[1], (std::vector<int>{2, 1}));
    for (std::size_t i = 0; i < c.vocab.size(); ++i) EXPECT_EQ(c.vocab.find(c.vocab.word(i)), static_cast<int>(i));
}

TEST(Lda, SingleWordVocabularyHasUnitPerplexity) {
    Corpus c;
    c.vocab.add("only");
    c.docs = {{0, 0, 0}, {0, 0}};
    const TopicModel m = lda_fit(c, 3, 0.5, 0.01, 5, 1);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(m.phi(k, 0), 1.0);
    EXPECT_NEAR(perplexity(m, c), 1.0, 1e-12);
}

TEST(Lda, ZeroSweepsMatchesInitialisation) {
    const auto syn = synth_topic_corpus(3, 30, 20, 15, 5);
    const TopicModel m = lda_fit(syn.corpus, 3, 0.5, 0.01, 0, 9);
    Rng rng(9);
    for (std::size_t d = 0; d < syn.corpus.docs.size(); ++d)
        for (std::size_t i = 0; i < syn.corpus.docs[d].size(); ++i) ASSERT_EQ(m.assignments[d][i], static_cast<int>(rng.below(3)));
    EXPECT_TRUE(counts_consistent(m, syn.corpus));
}

TEST(Lda, CountTablesStayConsistentEverySweep) {
    const auto syn = synth_topic_corpus(4, 40, 30, 25, 8);
    int checked = 0;
    lda_fit(syn.corpus, 4, 0.3, 0.05, 10, 3, [&](const TopicModel& m, std::size_t) {
        EXPECT_TRUE(counts_consistent(m, syn.corpus));
        // spot-check the conditional of the first token of every doc
        for (std::size_t d = 0; d < syn.corpus.docs.size(); ++d) {
            std::vector<long> dk(m.doc_topic.begin() + static_cast<long>(d * m.K), m.doc_topic.begin() + static_cast<long>((d + 1) * m.K));
            TopicModel without = m;
            const auto w = static_cast<std::size_t>(syn.corpus.docs[d][0]);
            const auto k = static_cast<std::size_t>(m.assignments[d][0]);
            --dk[k];
            --without.nkw(k, w);
            --without.topic_total[k];
            const auto p = gibbs_conditional(without, dk, w);
            double s = 0.0;
            for (double v : p) {
                EXPECT_GT(v, 0.0);
                s += v;
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
            ++checked;
        }
    });
    EXPECT_EQ(checked, 300);
}

TEST(Lda, InvalidInputs) {
    Corpus empty;
    EXPECT_THROW(lda_fit(empty, 2, 1.0, 0.1, 1, 0), Error);
    const auto syn = synth_topic_corpus(2, 20, 3, 5, 1);
    EXPECT_THROW(lda_fit(syn.corpus, 1, 1.0, 0.1, 1, 0), Error);
    EXPECT_THROW(lda_fit(syn.corpus, 2, 0.0, 0.1, 1, 0), Error);
    EXPECT_THROW(lda_fit(syn.corpus, 2, 1.0, -1.0, 1, 0), Error);
}

TEST(Lda, DeterministicGivenSeed) {
    const auto syn = synth_topic_corpus(3, 30, 40, 20, 2);
    const TopicModel a = lda_fit(syn.corpus, 3, 0.5, 0.01, 20, 17);
    const TopicModel b = lda_fit(syn.corpus, 3, 0.5, 0.01, 20, 17);
    EXPECT_EQ(a.assignments, b.assignments);
    EXPECT_EQ(a.topic_word, b.topic_word);
}

TEST(Perplexity, UniformTopicsGiveVocabularySize) {
    TopicModel m;
    m.K = 2;
    m.alpha = 0.5;
    m.beta = 0.1;
    m.vocab = Vocabulary({"a", "b", "c", "d"});
    m.topic_word.assign(8, 3); // every topic spreads evenly
    m.topic_total = {12, 12};
    Corpus c;
    c.vocab = m.vocab;
    c.docs = {{0, 1, 2}, {3, 3}};
    m.doc_topic = {2, 1, 0, 2};
    m.assignments = {{0, 0, 1}, {1, 1}};
    EXPECT_NEAR(perplexity(m, c), 4.0, 1e-12);
    c.docs[1].push_back(9);
    m.doc_topic = {2, 1, 0, 3};
    EXPECT_THROW(perplexity(m, c), Error);
}

TEST(Perplexity, TrainingImprovesOverInitialisation) {
    int improved = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto syn = synth_topic_corpus(5, 50, 200, 50, 100 + seed);
        const TopicModel init = lda_fit(syn.corpus, 5, 10.0, 0.01, 0, seed);
        const TopicModel fit = lda_fit(syn.corpus, 5, 10.0, 0.01, 200, seed);
        improved += perplexity(fit, syn.corpus) < perplexity(init, syn.corpus);
    }
    EXPECT_GE(improved, 9);
}

TEST(Inference, EmptyDocAndDeterminism) {
    const auto syn = synth_topic_corpus(3, 30, 40, 20, 2);
    const TopicModel m = lda_fit(syn.corpus, 3, 0.5, 0.01, 20, 1);
    EXPECT_TRUE(lda_infer(m, {}, 10, 1).assignments.empty());
    const Tokens doc{"w1", "w2", "w25", "unseen", "w7"};
    const auto a = lda_infer(m, doc, 20, 5), b = lda_infer(m, doc, 20, 5);
    EXPECT_EQ(a.assignments, b.assignments);
    EXPECT_EQ(a.assignments.size(), 4u);
    EXPECT_EQ(a.unknown_tokens, 1u);
}

TEST(Inference, WordOwnedByOneTopicIsAssignedToIt) {
    // word "x" occurs only under topic 3 in the training counts
    TopicModel m;
    m.K = 5;
    m.alpha = 50.0 / 5.0;
    m.beta = 0.01;
    m.vocab = Vocabulary({"x", "y", "z"});
    m.topic_word.assign(15, 0);
    for (std::size_t k = 0; k < 5; ++k) m.nkw(k, 1) = 40, m.nkw(k, 2) = 40;
    m.nkw(3, 0) = 60;
    m.topic_total.assign(5, 80);
    m.topic_total[3] = 140;
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto inf = lda_infer(m, {"x"}, 50, seed);
        hits += inf.assignments.at(0) == 3;
    }
    EXPECT_GE(hits / 20.0, 0.9);
}

TEST(TopicVector, CountsOverTotalTokens) {
    const auto v = topic_vectorize(2, {{0, 1, 1, 0}, {1, 1, 0, 1, 0, 1}});
    EXPECT_DOUBLE_EQ(v[0], 0.4);
    EXPECT_DOUBLE_EQ(v[1], 0.6);
    EXPECT_EQ(topic_vectorize(3, {{2, 2, 2}}), (std::vector<double>{0, 0, 1}));
    try {
        topic_vectorize(3, {{}, {}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoNotes);
    }
}

TEST(TopicVector, HundredTopicsSumToOne) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<int>> docs(1 + rng.below(4));
        for (auto& d : docs)
            for (std::size_t i = 0; i < 1 + rng.below(50); ++i) d.push_back(static_cast<int>(rng.below(100)));
        const auto v = topic_vectorize(100, docs);
        EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0), 1.0, 1e-12);
        for (double x : v) EXPECT_GE(x, 0.0);
    }
}

TEST(TopicModelJson, RoundTripPreservesEverything) {
    const auto syn = synth_topic_corpus(3, 30, 10, 10, 4);
    const TopicModel m = lda_fit(syn.corpus, 3, 0.5, 0.01, 3, 2);
    const TopicModel back = topic_model_from_json(json::parse(to_json(m).dump()));
    EXPECT_EQ(back.topic_word, m.topic_word);
    EXPECT_EQ(back.assignments, m.assignments);
    EXPECT_EQ(back.vocab.words(), m.vocab.words());
    EXPECT_EQ(perplexity(back, syn.corpus), perplexity(m, syn.corpus));
}
