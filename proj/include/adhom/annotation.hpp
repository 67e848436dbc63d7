#pragma once
// Crowd-annotation aggregation: EM gold estimation with per-annotator spamming
// parameters, confidence thresholding, label distributions, span gold, scales.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "adhom/common.hpp"

namespace adhom {

class AnnotationSet {
public:
    explicit AnnotationSet(std::size_t label_domain = 2) : label_domain_(label_domain) {
        if (label_domain_ < 2) throw Error("AnnotationSet: label domain must be >= 2");
    }

    void add(const std::string& item, const std::string& annotator, int label) {
        if (label < 0 || static_cast<std::size_t>(label) >= label_domain_) {
            throw Error("annotation label " + std::to_string(label) + " out of domain for item " + item);
        }
        const std::size_t i = intern(item, item_index_, items_);
        const std::size_t j = intern(annotator, annotator_index_, annotators_);
        if (labels_by_item_.size() < items_.size()) labels_by_item_.resize(items_.size());
        for (const auto& [jj, l] : labels_by_item_[i]) {
            if (jj == j) throw Error("duplicate annotation for (" + item + ", " + annotator + ")");
        }
        labels_by_item_[i].emplace_back(j, label);
    }

    // Rows: item_id <tab-or-space> annotator_id <tab-or-space> label.
    static AnnotationSet parse(std::istream& in, std::size_t label_domain) {
        AnnotationSet a(label_domain);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            auto parts = split_ws(line);
            if (parts.empty()) continue;
            if (parts.size() != 3) {
                throw Error("annotation file: expected 3 columns at line " + std::to_string(line_no));
            }
            long long label = 0;
            if (!parse_i64(parts[2], label)) {
                throw Error("annotation file: non-integer label at line " + std::to_string(line_no));
            }
            a.add(parts[0], parts[1], static_cast<int>(label));
        }
        return a;
    }

    std::size_t label_domain() const { return label_domain_; }
    const std::vector<std::string>& items() const { return items_; }
    const std::vector<std::string>& annotators() const { return annotators_; }
    std::size_t num_items() const { return items_.size(); }
    std::size_t num_annotators() const { return annotators_.size(); }

    const std::vector<std::pair<std::size_t, int>>& annotations_of(std::size_t item_index) const {
        return labels_by_item_[item_index];
    }

private:
    static std::size_t intern(const std::string& id, std::unordered_map<std::string, std::size_t>& index,
                              std::vector<std::string>& list) {
        auto it = index.find(id);
        if (it != index.end()) return it->second;
        index[id] = list.size();
        list.push_back(id);
        return list.size() - 1;
    }

    std::size_t label_domain_;
    std::vector<std::string> items_;
    std::vector<std::string> annotators_;
    std::unordered_map<std::string, std::size_t> item_index_;
    std::unordered_map<std::string, std::size_t> annotator_index_;
    std::vector<std::vector<std::pair<std::size_t, int>>> labels_by_item_;
};

struct MacePosterior {
    std::vector<std::vector<double>> item_posteriors;  // N x L
    std::vector<double> spam_prob;                     // theta_j
    std::vector<std::vector<double>> spam_pref;        // xi_j, each a distribution over L
    // Smoothed-model objective (data log-likelihood + smoothing log-prior) per
    // EM iteration of the winning restart; non-decreasing by construction.
    std::vector<double> log_likelihood_trace;
    double final_log_likelihood = 0.0;

    std::size_t argmax(std::size_t item) const {
        const auto& p = item_posteriors[item];
        std::size_t best = 0;
        for (std::size_t l = 1; l < p.size(); ++l) {
            if (p[l] > p[best]) best = l;
        }
        return best;
    }

    double confidence(std::size_t item) const { return item_posteriors[item][argmax(item)]; }
};

namespace detail {

struct MaceParams {
    std::vector<double> theta;             // per annotator spam probability
    std::vector<std::vector<double>> xi;   // per annotator spam preference
};

inline double mace_objective(const AnnotationSet& a, const MaceParams& p, double smoothing,
                             std::vector<std::vector<double>>* posteriors_out) {
    const std::size_t n_labels = a.label_domain();
    double objective = 0.0;
    if (posteriors_out) posteriors_out->assign(a.num_items(), {});
    std::vector<double> logp(n_labels);
    for (std::size_t i = 0; i < a.num_items(); ++i) {
        for (std::size_t t = 0; t < n_labels; ++t) {
            double lp = -std::log(static_cast<double>(n_labels));  // uniform true-label prior
            for (const auto& [j, label] : a.annotations_of(i)) {
                const double copy = (static_cast<std::size_t>(label) == t) ? (1.0 - p.theta[j]) : 0.0;
                const double spam = p.theta[j] * p.xi[j][static_cast<std::size_t>(label)];
                lp += std::log(copy + spam + 1e-300);
            }
            logp[t] = lp;
        }
        double mx = logp[0];
        for (double v : logp) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : logp) z += std::exp(v - mx);
        objective += mx + std::log(z);
        if (posteriors_out) {
            std::vector<double> post(n_labels);
            for (std::size_t t = 0; t < n_labels; ++t) post[t] = std::exp(logp[t] - mx) / z;
            (*posteriors_out)[i] = std::move(post);
        }
    }
    // Beta/Dirichlet smoothing prior; keeps MAP-EM monotone with smoothed counts.
    if (smoothing > 0.0) {
        for (std::size_t j = 0; j < a.num_annotators(); ++j) {
            objective += smoothing * (std::log(p.theta[j] + 1e-300) + std::log(1.0 - p.theta[j] + 1e-300));
            for (std::size_t l = 0; l < n_labels; ++l) {
                objective += smoothing * std::log(p.xi[j][l] + 1e-300);
            }
        }
    }
    return objective;
}

}  // namespace detail

// EM for the annotator-competence model: the true label is uniform a priori;
// each annotator copies it with probability 1 - theta_j or spams from xi_j.
inline MacePosterior mace_em(const AnnotationSet& a, std::size_t restarts = 10,
                             std::size_t iterations = 50, double smoothing = 0.1,
                             std::uint64_t seed = 1) {
    if (restarts < 1) throw Error("mace_em: restarts must be >= 1");
    if (a.num_items() == 0) throw Error("mace_em: empty annotation set");
    {
        std::string missing;
        for (std::size_t i = 0; i < a.num_items(); ++i) {
            if (a.annotations_of(i).empty()) {
                if (!missing.empty()) missing += ", ";
                missing += a.items()[i];
            }
        }
        if (!missing.empty()) throw Error("mace_em: items without annotations: " + missing);
    }

    const std::size_t n_items = a.num_items();
    const std::size_t n_annotators = a.num_annotators();
    const std::size_t n_labels = a.label_domain();

    MacePosterior best;
    double best_objective = -std::numeric_limits<double>::infinity();

    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng(mix_seed(seed, r));
        detail::MaceParams params;
        // Shared init across annotators within a restart: preserves annotator
        // relabeling symmetry while restarts still diversify the search.
        const double theta0 = rng.uniform(0.2, 0.8);
        std::vector<double> xi0(n_labels);
        double z = 0.0;
        for (auto& v : xi0) {
            v = rng.uniform(0.1, 1.0);
            z += v;
        }
        for (auto& v : xi0) v /= z;
        params.theta.assign(n_annotators, theta0);
        params.xi.assign(n_annotators, xi0);

        std::vector<double> trace;
        std::vector<std::vector<double>> posteriors;
        for (std::size_t iter = 0; iter < iterations; ++iter) {
            trace.push_back(detail::mace_objective(a, params, smoothing, &posteriors));

            // M-step from expected spam indicators.
            std::vector<double> spam_sum(n_annotators, 0.0);
            std::vector<double> count(n_annotators, 0.0);
            std::vector<std::vector<double>> spam_label(n_annotators, std::vector<double>(n_labels, 0.0));
            for (std::size_t i = 0; i < n_items; ++i) {
                for (const auto& [j, label] : a.annotations_of(i)) {
                    const auto lbl = static_cast<std::size_t>(label);
                    double e_spam = 0.0;
                    for (std::size_t t = 0; t < n_labels; ++t) {
                        const double copy = (lbl == t) ? (1.0 - params.theta[j]) : 0.0;
                        const double spam = params.theta[j] * params.xi[j][lbl];
                        e_spam += posteriors[i][t] * (spam / (copy + spam + 1e-300));
                    }
                    spam_sum[j] += e_spam;
                    spam_label[j][lbl] += e_spam;
                    count[j] += 1.0;
                }
            }
            for (std::size_t j = 0; j < n_annotators; ++j) {
                params.theta[j] = (smoothing + spam_sum[j]) / (2.0 * smoothing + count[j]);
                const double denom = n_labels * smoothing + spam_sum[j];
                for (std::size_t l = 0; l < n_labels; ++l) {
                    params.xi[j][l] = (smoothing + spam_label[j][l]) / denom;
                }
            }
        }
        const double final_objective = detail::mace_objective(a, params, smoothing, &posteriors);
        trace.push_back(final_objective);

        if (final_objective > best_objective) {
            best_objective = final_objective;
            best.item_posteriors = posteriors;
            best.spam_prob = params.theta;
            best.spam_pref = params.xi;
            best.log_likelihood_trace = trace;
            best.final_log_likelihood = final_objective;
        }
    }
    return best;
}

struct GoldItem {
    std::string item_id;
    std::size_t gold_label = 0;
    double confidence = 0.0;
};

// MACE-tool threshold semantics: retain the top ceil(threshold * N) items by
// posterior confidence, ties broken by item id; gold = posterior argmax.
inline std::vector<GoldItem> select_confident(const AnnotationSet& a, const MacePosterior& p,
                                              double threshold) {
    if (threshold <= 0.0 || threshold > 1.0) throw Error("select_confident: threshold must be in (0, 1]");
    const std::size_t n = a.num_items();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const double cx = p.confidence(x);
        const double cy = p.confidence(y);
        if (cx != cy) return cx > cy;
        return a.items()[x] < a.items()[y];
    });
    const auto keep = static_cast<std::size_t>(
        std::ceil(threshold * static_cast<double>(n)) + 1e-12);
    std::vector<GoldItem> out;
    out.reserve(std::min(keep, n));
    for (std::size_t k = 0; k < std::min(keep, n); ++k) {
        const std::size_t i = order[k];
        out.push_back({a.items()[i], p.argmax(i), p.confidence(i)});
    }
    return out;
}

// Per-item empirical label distribution (normalized counts).
inline std::vector<std::vector<double>> label_distribution(const AnnotationSet& a) {
    std::vector<std::vector<double>> out(a.num_items(), std::vector<double>(a.label_domain(), 0.0));
    for (std::size_t i = 0; i < a.num_items(); ++i) {
        const auto& anns = a.annotations_of(i);
        for (const auto& [j, label] : anns) out[i][static_cast<std::size_t>(label)] += 1.0;
        if (!anns.empty()) {
            for (double& v : out[i]) v /= static_cast<double>(anns.size());
        }
    }
    return out;
}

struct TokenSpan {
    std::size_t begin = 0;  // inclusive token positions
    std::size_t end = 0;
    bool operator==(const TokenSpan& o) const { return begin == o.begin && end == o.end; }
};

// Token positions are items (ids are decimal positions, labels 0/1); gold-positive
// tokens merge into maximal contiguous spans.
inline std::vector<TokenSpan> span_gold(const AnnotationSet& token_annotations, double threshold,
                                        std::size_t restarts = 10, std::size_t iterations = 50,
                                        double smoothing = 0.1, std::uint64_t seed = 1) {
    if (token_annotations.label_domain() != 2) throw Error("span_gold: label domain must be binary");
    const MacePosterior post = mace_em(token_annotations, restarts, iterations, smoothing, seed);
    const auto gold = select_confident(token_annotations, post, threshold);
    std::vector<std::size_t> positives;
    for (const auto& g : gold) {
        if (g.gold_label == 1) {
            long long pos = 0;
            if (!parse_i64(g.item_id, pos) || pos < 0) {
                throw Error("span_gold: item id is not a token position: " + g.item_id);
            }
            positives.push_back(static_cast<std::size_t>(pos));
        }
    }
    std::sort(positives.begin(), positives.end());
    std::vector<TokenSpan> spans;
    for (std::size_t k = 0; k < positives.size(); ++k) {
        if (!spans.empty() && positives[k] == spans.back().end + 1) {
            spans.back().end = positives[k];
        } else {
            spans.push_back({positives[k], positives[k]});
        }
    }
    return spans;
}

// Mean of the stored labels per item; scale files carry the scale points
// literally (e.g. 1..3 with label_domain 4).
inline std::map<std::string, double> average_scale(const AnnotationSet& a) {
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < a.num_items(); ++i) {
        const auto& anns = a.annotations_of(i);
        if (anns.empty()) continue;
        double sum = 0.0;
        for (const auto& [j, label] : anns) sum += static_cast<double>(label);
        out[a.items()[i]] = sum / static_cast<double>(anns.size());
    }
    return out;
}

// Deterministic halving of the annotator pool (for two-group agreement studies).
inline std::pair<AnnotationSet, AnnotationSet> split_annotators(const AnnotationSet& a,
                                                                std::uint64_t seed) {
    std::vector<std::size_t> order(a.num_annotators());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, 0x51717ULL));
    rng.shuffle(order);
    std::vector<bool> in_first(a.num_annotators(), false);
    for (std::size_t k = 0; k < order.size() / 2; ++k) in_first[order[k]] = true;
    AnnotationSet first(a.label_domain());
    AnnotationSet second(a.label_domain());
    for (std::size_t i = 0; i < a.num_items(); ++i) {
        for (const auto& [j, label] : a.annotations_of(i)) {
            (in_first[j] ? first : second).add(a.items()[i], a.annotators()[j], label);
        }
    }
    return {std::move(first), std::move(second)};
}

}  // namespace adhom
