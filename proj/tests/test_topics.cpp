#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "adhom/common.hpp"
#include "adhom/topics.hpp"

using namespace adhom;

namespace {

// Two topics with disjoint vocabularies: words 0..4 belong to topic A,
// words 5..9 to topic B; each document draws from a single topic.
struct TwoTopicCorpus {
    std::vector<std::vector<std::size_t>> docs;
    std::vector<int> doc_topic;
    static constexpr std::size_t kVocab = 10;
};

TwoTopicCorpus make_two_topic_corpus(std::size_t n_docs, std::size_t doc_len, std::uint64_t seed) {
    TwoTopicCorpus c;
    Rng rng(seed);
    for (std::size_t d = 0; d < n_docs; ++d) {
        const int topic = static_cast<int>(d % 2);
        c.doc_topic.push_back(topic);
        std::vector<std::size_t> doc;
        for (std::size_t i = 0; i < doc_len; ++i) {
            doc.push_back(5 * static_cast<std::size_t>(topic) + rng.bounded(5));
        }
        c.docs.push_back(std::move(doc));
    }
    return c;
}

// Fraction of tokens whose modal topic matches the generator, maximized over
// the topic permutation (labels are exchangeable).
double alignment_up_to_permutation(const TwoTopicCorpus& corpus, const LdaModel& model,
                                   std::uint64_t seed) {
    std::size_t agree = 0, total = 0;
    std::vector<std::size_t> modal(corpus.docs.size());
    for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
        const auto theta = infer_theta(model, corpus.docs[d], 50, mix_seed(seed, d));
        modal[d] = std::distance(theta.begin(), std::max_element(theta.begin(), theta.end()));
    }
    for (int perm = 0; perm < 2; ++perm) {
        std::size_t count = 0;
        for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
            const auto mapped = perm == 0 ? modal[d] : 1 - modal[d];
            if (static_cast<int>(mapped) == corpus.doc_topic[d]) count += corpus.docs[d].size();
        }
        agree = std::max(agree, count);
    }
    for (const auto& doc : corpus.docs) total += doc.size();
    return static_cast<double>(agree) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("fit_lda: k=1 reduces to the smoothed corpus unigram distribution") {
    const std::vector<std::vector<std::size_t>> docs = {{0, 0, 1}, {1, 2}};
    const double beta = 0.01;
    const auto model = fit_lda(docs, 3, 1, 1.0, beta, 10, 5);
    // counts: word0=2, word1=2, word2=1, total 5
    const double denom = 5.0 + 3.0 * beta;
    CHECK(model.phi_at(0, 0) == doctest::Approx((2 + beta) / denom).epsilon(1e-12));
    CHECK(model.phi_at(0, 1) == doctest::Approx((2 + beta) / denom).epsilon(1e-12));
    CHECK(model.phi_at(0, 2) == doctest::Approx((1 + beta) / denom).epsilon(1e-12));
}

TEST_CASE("fit_lda: preconditions") {
    CHECK_THROWS_AS(fit_lda({}, 10, 2, 1.0, 0.01, 5, 1), Error);
    CHECK_THROWS_AS(fit_lda({{0}}, 0, 2, 1.0, 0.01, 5, 1), Error);
    CHECK_THROWS_AS(fit_lda({{5}}, 3, 2, 1.0, 0.01, 5, 1), Error);  // id out of range
    CHECK_THROWS_AS(fit_lda({{0}}, 3, 0, 1.0, 0.01, 5, 1), Error);
}

TEST_CASE("fit_lda: phi rows are simplex vectors and fitting is deterministic") {
    const auto corpus = make_two_topic_corpus(30, 20, 77);
    const auto m1 = fit_lda(corpus.docs, TwoTopicCorpus::kVocab, 2, 1.0, 0.01, 100, 9);
    const auto m2 = fit_lda(corpus.docs, TwoTopicCorpus::kVocab, 2, 1.0, 0.01, 100, 9);
    CHECK(m1.phi == m2.phi);
    for (std::size_t t = 0; t < m1.k; ++t) {
        double sum = 0.0;
        for (std::size_t w = 0; w < m1.vocab_size; ++w) {
            CHECK(m1.phi_at(t, w) >= 0.0);
            sum += m1.phi_at(t, w);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("fit_lda: recovers disjoint two-topic structure up to permutation") {
    const auto corpus = make_two_topic_corpus(40, 25, 123);
    const auto model = fit_lda(corpus.docs, TwoTopicCorpus::kVocab, 2, 1.0, 0.01, 200, 11);
    CHECK(alignment_up_to_permutation(corpus, model, 13) >= 0.9);

    SUBCASE("likelihood improves over the run") {
        REQUIRE(model.likelihood_trace.size() >= 2);
        CHECK(model.likelihood_trace.back() > model.likelihood_trace.front());
    }
}

TEST_CASE("infer_theta: simplex output, prior fallback, topic mass concentration") {
    const auto corpus = make_two_topic_corpus(40, 25, 123);
    const auto model = fit_lda(corpus.docs, TwoTopicCorpus::kVocab, 2, 1.0, 0.01, 200, 11);

    SUBCASE("empty document gives the uniform alpha prior") {
        const auto theta = infer_theta(model, {}, 30, 3);
        REQUIRE(theta.size() == 2);
        CHECK(theta[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(theta[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("out-of-vocabulary ids are skipped, all-unknown doc falls back to prior") {
        const auto theta = infer_theta(model, {100, 200, 300}, 30, 3);
        CHECK(theta[0] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("a pure topic-A document concentrates at least 0.8 mass") {
        // Identify which fitted topic owns word 0 first.
        const std::size_t topic_a = model.phi_at(0, 0) > model.phi_at(1, 0) ? 0 : 1;
        const std::vector<std::size_t> doc = {0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 2, 1};
        const auto theta = infer_theta(model, doc, 50, 7);
        CHECK(theta[topic_a] >= 0.8);
    }
    SUBCASE("every theta lies in the simplex") {
        for (std::size_t d = 0; d < 10; ++d) {
            const auto theta = infer_theta(model, corpus.docs[d], 30, d);
            double sum = 0.0;
            for (double v : theta) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("lda model: binary save/load round trip") {
    const auto corpus = make_two_topic_corpus(10, 15, 5);
    auto model = fit_lda(corpus.docs, TwoTopicCorpus::kVocab, 2, 1.0, 0.01, 50, 3);
    model.vocab_hash = 0xabcdef;
    std::stringstream buf;
    save_lda(model, buf);
    const auto loaded = load_lda(buf);
    CHECK(loaded.k == model.k);
    CHECK(loaded.vocab_size == model.vocab_size);
    CHECK(loaded.alpha == model.alpha);
    CHECK(loaded.beta == model.beta);
    CHECK(loaded.vocab_hash == model.vocab_hash);
    CHECK(loaded.phi == model.phi);

    std::stringstream bad("nonsense");
    CHECK_THROWS_AS(load_lda(bad), Error);
}

TEST_CASE("top_words: returns the highest-probability word ids per topic") {
    const auto corpus = make_two_topic_corpus(40, 25, 123);
    const auto model = fit_lda(corpus.docs, TwoTopicCorpus::kVocab, 2, 1.0, 0.01, 200, 11);
    const auto tops = top_words(model, 5);
    REQUIRE(tops.size() == 2);
    // Each topic's top-5 words should be one of the disjoint halves.
    for (const auto& words : tops) {
        REQUIRE(words.size() == 5);
        const bool all_low = std::all_of(words.begin(), words.end(), [](std::size_t w) { return w < 5; });
        const bool all_high = std::all_of(words.begin(), words.end(), [](std::size_t w) { return w >= 5; });
        CHECK((all_low || all_high));
    }
}
