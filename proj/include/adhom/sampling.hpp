#pragma once
// Dataset construction: similarity-matched balanced binary instances, ad
// hominem vs delta submission groups, and three-argument thread triplets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "adhom/corpus.hpp"
#include "adhom/text.hpp"

namespace adhom {

inline constexpr const char* kLabelAdHominem = "ah";
inline constexpr const char* kLabelNegative = "not_ah";
inline constexpr const char* kLabelDelta = "delta";
inline constexpr const char* kLabelAhGroup = "ah_group";
inline constexpr const char* kLabelDeltaGroup = "delta_group";

struct MatchedPair {
    std::string positive;
    std::string negative;
    double score = 0.0;
};

struct SampleDoc {
    std::string id;
    TokenizedDoc doc;
};

// Greedy similarity matching: positives in order, each takes its best-scoring
// unused candidate. score = cosine(avg vectors) / (1 + |token length diff|),
// which keeps the score in [-1, 1] and damps length artifacts.
inline std::vector<MatchedPair> match_negatives(const std::vector<SampleDoc>& positives,
                                                const std::vector<SampleDoc>& candidates,
                                                const EmbeddingTable& table) {
    if (candidates.size() < positives.size()) {
        throw Error("match_negatives: insufficient candidates (need " +
                    std::to_string(positives.size()) + ", have " + std::to_string(candidates.size()) +
                    ")");
    }
    std::vector<std::vector<double>> cand_vecs(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        cand_vecs[c] = avg_vector(candidates[c].doc, table);
    }
    std::vector<bool> used(candidates.size(), false);
    std::vector<MatchedPair> out;
    out.reserve(positives.size());
    for (const SampleDoc& pos : positives) {
        const auto pvec = avg_vector(pos.doc, table);
        const double plen = static_cast<double>(pos.doc.tokens.size());
        double best_score = -std::numeric_limits<double>::infinity();
        std::size_t best_c = candidates.size();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (used[c]) continue;
            const double diff = std::abs(plen - static_cast<double>(candidates[c].doc.tokens.size()));
            const double score = cosine(pvec, cand_vecs[c]) / (1.0 + diff);
            if (score > best_score) {
                best_score = score;
                best_c = c;
            }
        }
        used[best_c] = true;
        out.push_back({pos.id, candidates[best_c].id, best_score});
    }
    return out;
}

struct LabeledInstance {
    std::string id;
    std::string label;
    std::string text;
    std::vector<std::string> post_ids;
};

namespace detail {

inline SampleDoc make_sample_doc(const PostRecord& post, const Vocabulary& vocab) {
    return {post.id, TokenizedDoc::make(post.text(), vocab)};
}

}  // namespace detail

// Balanced binary dataset: every ad hominem post, plus a similarity-matched
// negative for each (posts violating a non-hostility rule or delta-awarded).
inline std::vector<LabeledInstance> sample_binary_dataset(const Corpus& corpus,
                                                          const Vocabulary& vocab,
                                                          const EmbeddingTable& table) {
    std::vector<const PostRecord*> positives;
    std::vector<const PostRecord*> pool;
    for (const PostRecord* p : corpus.posts_in_corpus_order()) {
        if (p->is_ad_hominem()) {
            positives.push_back(p);
        } else if (p->delta_awarded || !p->violated_rules.empty()) {
            pool.push_back(p);
        }
    }
    if (positives.empty()) throw Error("sample_binary_dataset: corpus has no ad hominem posts");

    std::vector<SampleDoc> pos_docs, cand_docs;
    pos_docs.reserve(positives.size());
    cand_docs.reserve(pool.size());
    for (const PostRecord* p : positives) pos_docs.push_back(detail::make_sample_doc(*p, vocab));
    for (const PostRecord* p : pool) cand_docs.push_back(detail::make_sample_doc(*p, vocab));
    const auto pairs = match_negatives(pos_docs, cand_docs, table);

    std::map<std::string, const PostRecord*> by_id;
    for (const PostRecord* p : positives) by_id[p->id] = p;
    for (const PostRecord* p : pool) by_id[p->id] = p;

    std::vector<LabeledInstance> out;
    out.reserve(2 * pairs.size());
    for (const auto& pair : pairs) {
        out.push_back({pair.positive, kLabelAdHominem, by_id[pair.positive]->text(), {pair.positive}});
        out.push_back({pair.negative, kLabelNegative, by_id[pair.negative]->text(), {pair.negative}});
    }
    return out;
}

struct OpGroups {
    std::vector<const PostRecord*> ah_group;     // submissions with ad hominem, no delta
    std::vector<const PostRecord*> delta_group;  // submissions with delta, no ad hominem
};

inline OpGroups sample_op_groups(const Corpus& corpus) {
    OpGroups g;
    for (const auto& tree : corpus.trees) {
        bool has_ah = false;
        bool has_delta = false;
        for (const auto& p : tree.posts()) {
            if (!p.is_submission() && p.is_ad_hominem()) has_ah = true;
            if (p.delta_awarded) has_delta = true;
        }
        if (has_ah && !has_delta) g.ah_group.push_back(&tree.submission());
        if (has_delta && !has_ah) g.delta_group.push_back(&tree.submission());
    }
    return g;
}

struct TripletInstance {
    std::string id;      // outcome post id (unique per thread outcome)
    std::string label;   // kLabelAdHominem or kLabelDelta
    std::string text;    // three context posts, each preceded by the delimiter token
    std::vector<std::string> post_ids;  // the three context posts, oldest first
    double match_score = 0.0;           // negatives: similarity to their positive
};

namespace detail {

struct ThreadCandidate {
    std::string outcome_id;
    std::string text;
    std::vector<std::string> context_ids;
};

inline bool qualifies_triplet(const ThreadPath& thread) {
    if (thread.posts.size() < 4) return false;  // outcome + three predecessors
    std::set<std::string> authors;
    const std::size_t last = thread.posts.size() - 1;
    for (std::size_t i = last - 3; i <= last; ++i) authors.insert(thread.posts[i]->author);
    return authors.size() == 2;
}

inline ThreadCandidate make_candidate(const ThreadPath& thread) {
    ThreadCandidate c;
    const std::size_t last = thread.posts.size() - 1;
    c.outcome_id = thread.posts[last]->id;
    for (std::size_t i = last - 3; i < last; ++i) {
        const PostRecord* p = thread.posts[i];
        if (!c.text.empty()) c.text += " ";
        c.text += kCommentBeginToken;
        c.text += " ";
        c.text += p->text();
        c.context_ids.push_back(p->id);
    }
    return c;
}

}  // namespace detail

// Positive: two-person thread ending in an ad hominem comment with three prior
// posts; negatives come from delta-ending threads, similarity-matched 1:1.
inline std::vector<TripletInstance> sample_triplets(const Corpus& corpus, const Vocabulary& vocab,
                                                    const EmbeddingTable& table) {
    std::vector<detail::ThreadCandidate> positives;
    std::vector<detail::ThreadCandidate> negatives;
    for (const auto& tree : corpus.trees) {
        for (const auto& thread : enumerate_threads(tree)) {
            if (!detail::qualifies_triplet(thread)) continue;
            const PostRecord& outcome = thread.leaf();
            if (outcome.is_submission()) continue;
            if (outcome.is_ad_hominem()) {
                positives.push_back(detail::make_candidate(thread));
            } else if (outcome.delta_awarded) {
                negatives.push_back(detail::make_candidate(thread));
            }
        }
    }
    if (positives.empty()) throw Error("sample_triplets: no qualifying ad hominem threads");

    std::vector<SampleDoc> pos_docs, neg_docs;
    for (const auto& c : positives) pos_docs.push_back({c.outcome_id, TokenizedDoc::make(c.text, vocab)});
    for (const auto& c : negatives) neg_docs.push_back({c.outcome_id, TokenizedDoc::make(c.text, vocab)});
    const auto pairs = match_negatives(pos_docs, neg_docs, table);

    std::map<std::string, const detail::ThreadCandidate*> neg_by_id;
    for (const auto& c : negatives) neg_by_id[c.outcome_id] = &c;

    std::vector<TripletInstance> out;
    out.reserve(2 * pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& pos = positives[i];
        const auto* neg = neg_by_id[pairs[i].negative];
        out.push_back({pos.outcome_id, kLabelAdHominem, pos.text, pos.context_ids, 1.0});
        out.push_back({neg->outcome_id, kLabelDelta, neg->text, neg->context_ids, pairs[i].score});
    }
    return out;
}

}  // namespace adhom
