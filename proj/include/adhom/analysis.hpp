#pragma once
// Statistical tests (two-sample KS, Spearman, Cohen's kappa), prediction error
// buckets, attention heat-map export, and trigger-phrase extraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "adhom/common.hpp"
#include "adhom/text.hpp"

namespace adhom {

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n1 = 0;
    std::size_t n2 = 0;
};

namespace detail {

// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda <= 0.0) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (std::size_t j = 1; j <= 100000; ++j) {
        const double term = std::exp(-2.0 * static_cast<double>(j) * static_cast<double>(j) * lambda * lambda);
        sum += sign * term;
        if (term < 1e-12) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace detail

// Exact D over the pooled sample points; asymptotic p with effective
// n = n1*n2/(n1+n2).
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw Error("ks_two_sample: empty sample");
    KsResult res;
    res.n1 = a.size();
    res.n2 = b.size();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t ia = 0, ib = 0;
    double d = 0.0;
    while (ia < a.size() && ib < b.size()) {
        const double x = std::min(a[ia], b[ib]);
        while (ia < a.size() && a[ia] <= x) ++ia;
        while (ib < b.size() && b[ib] <= x) ++ib;
        const double fa = static_cast<double>(ia) / static_cast<double>(a.size());
        const double fb = static_cast<double>(ib) / static_cast<double>(b.size());
        d = std::max(d, std::abs(fa - fb));
    }
    res.statistic = d;
    const double ne = static_cast<double>(res.n1) * static_cast<double>(res.n2) /
                      static_cast<double>(res.n1 + res.n2);
    res.p_value = detail::kolmogorov_q(std::sqrt(ne) * d);
    if (d == 0.0) res.p_value = 1.0;
    return res;
}

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Pearson correlation of average ranks (ties averaged).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error("spearman: length mismatch");
    if (a.size() < 2) throw Error("spearman: need at least 2 observations");
    const auto ra = detail::average_ranks(a);
    const auto rb = detail::average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) throw Error("spearman: zero rank variance, correlation undefined");
    return cov / std::sqrt(va * vb);
}

template <typename Label>
inline double cohen_kappa(const std::vector<Label>& l1, const std::vector<Label>& l2) {
    if (l1.size() != l2.size()) throw Error("cohen_kappa: length mismatch");
    if (l1.empty()) throw Error("cohen_kappa: empty input");
    const double n = static_cast<double>(l1.size());
    std::map<Label, double> m1, m2;
    double agree = 0.0;
    for (std::size_t i = 0; i < l1.size(); ++i) {
        m1[l1[i]] += 1.0;
        m2[l2[i]] += 1.0;
        if (l1[i] == l2[i]) agree += 1.0;
    }
    const double po = agree / n;
    double pe = 0.0;
    for (const auto& [label, c1] : m1) {
        auto it = m2.find(label);
        if (it != m2.end()) pe += (c1 / n) * (it->second / n);
    }
    if (pe >= 1.0) throw Error("cohen_kappa: expected agreement is 1, kappa undefined");
    return (po - pe) / (1.0 - pe);
}

enum class Bucket { TP, FP, FN, TN };

inline const char* bucket_name(Bucket b) {
    switch (b) {
        case Bucket::TP: return "TP";
        case Bucket::FP: return "FP";
        case Bucket::FN: return "FN";
        case Bucket::TN: return "TN";
    }
    return "?";
}

// One document with its attention weights, prediction, and gold label.
struct AttentionRecord {
    std::string id;
    std::vector<std::string> tokens;
    std::vector<double> weights;
    std::string predicted;
    std::string gold;
    Bucket bucket = Bucket::TN;
};

struct ErrorBuckets {
    std::vector<AttentionRecord> tp, fp, fn, tn;
    std::size_t total() const { return tp.size() + fp.size() + fn.size() + tn.size(); }
    const std::vector<AttentionRecord>& of(Bucket b) const {
        switch (b) {
            case Bucket::TP: return tp;
            case Bucket::FP: return fp;
            case Bucket::FN: return fn;
            case Bucket::TN: return tn;
        }
        return tn;
    }
};

// Exhaustive TP/FP/FN/TN partition with the given positive class.
inline ErrorBuckets error_buckets(const std::vector<std::string>& predictions,
                                  const std::vector<std::string>& gold,
                                  std::vector<AttentionRecord> docs,
                                  const std::string& positive_label) {
    if (predictions.size() != gold.size() || predictions.size() != docs.size()) {
        throw Error("error_buckets: misaligned predictions/gold/docs");
    }
    ErrorBuckets out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        docs[i].predicted = predictions[i];
        docs[i].gold = gold[i];
        const bool pred_pos = predictions[i] == positive_label;
        const bool gold_pos = gold[i] == positive_label;
        if (pred_pos && gold_pos) {
            docs[i].bucket = Bucket::TP;
            out.tp.push_back(std::move(docs[i]));
        } else if (pred_pos) {
            docs[i].bucket = Bucket::FP;
            out.fp.push_back(std::move(docs[i]));
        } else if (gold_pos) {
            docs[i].bucket = Bucket::FN;
            out.fn.push_back(std::move(docs[i]));
        } else {
            docs[i].bucket = Bucket::TN;
            out.tn.push_back(std::move(docs[i]));
        }
    }
    return out;
}

namespace detail {

inline std::string html_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string format3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace detail

// Standalone HTML heat map; intensity linear in the weight rescaled to [0,1]
// within the document. Output bytes are deterministic.
inline std::string render_heatmap(const AttentionRecord& rec) {
    if (rec.tokens.size() != rec.weights.size()) throw Error("render_heatmap: tokens/weights mismatch");
    double lo = 0.0, hi = 0.0;
    if (!rec.weights.empty()) {
        lo = *std::min_element(rec.weights.begin(), rec.weights.end());
        hi = *std::max_element(rec.weights.begin(), rec.weights.end());
    }
    std::string html;
    html += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>";
    html += detail::html_escape(rec.id);
    html += "</title>\n<style>\nbody { font-family: sans-serif; max-width: 60em; margin: 2em auto; }\n"
            ".comment { border-left: 3px solid #ccc; padding: 0.4em 0.8em; margin: 0.6em 0; }\n"
            ".tok { padding: 0.05em 0.1em; border-radius: 2px; }\n"
            ".meta { color: #555; }\n</style>\n</head>\n<body>\n<h1>";
    html += detail::html_escape(rec.id);
    html += "</h1>\n<p class=\"meta\">prediction: " + detail::html_escape(rec.predicted) +
            " | gold: " + detail::html_escape(rec.gold) + " | bucket: " + bucket_name(rec.bucket) +
            "</p>\n<div class=\"comment\">\n";
    bool first_in_comment = true;
    for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
        if (rec.tokens[i] == kCommentBeginToken) {
            if (!(i == 0)) html += "\n</div>\n<div class=\"comment\">\n";
            first_in_comment = true;
            continue;
        }
        const double intensity = hi > lo ? (rec.weights[i] - lo) / (hi - lo) : 0.0;
        if (!first_in_comment) html += " ";
        html += "<span class=\"tok\" style=\"background-color:rgba(230,60,60," +
                detail::format3(intensity) + ")\">" + detail::html_escape(rec.tokens[i]) + "</span>";
        first_in_comment = false;
    }
    html += "\n</div>\n</body>\n</html>\n";
    return html;
}

struct NgramScore {
    std::string ngram;
    double mean_weight = 0.0;
    std::size_t occurrences = 0;
};

// n-grams within comment segments, scored by the mean of their member-token
// weights, averaged over occurrences; ranked descending, ties lexicographic.
inline std::vector<NgramScore> top_trigger_ngrams(const std::vector<AttentionRecord>& bucket,
                                                  std::size_t n, std::size_t top_k) {
    if (n < 1) throw Error("top_trigger_ngrams: n must be >= 1");
    std::map<std::string, std::pair<double, std::size_t>> acc;  // ngram -> (sum of scores, count)
    for (const auto& rec : bucket) {
        std::vector<std::pair<std::size_t, std::size_t>> segments;
        std::size_t seg_start = 0;
        for (std::size_t i = 0; i <= rec.tokens.size(); ++i) {
            if (i == rec.tokens.size() || rec.tokens[i] == kCommentBeginToken) {
                if (i > seg_start) segments.emplace_back(seg_start, i);
                seg_start = i + 1;
            }
        }
        for (const auto& [lo, hi] : segments) {
            if (hi - lo < n) continue;
            for (std::size_t i = lo; i + n <= hi; ++i) {
                std::string key;
                double sum = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k > 0) key += " ";
                    key += rec.tokens[i + k];
                    sum += rec.weights[i + k];
                }
                auto& slot = acc[key];
                slot.first += sum / static_cast<double>(n);
                slot.second += 1;
            }
        }
    }
    std::vector<NgramScore> out;
    out.reserve(acc.size());
    for (const auto& [ngram, sums] : acc) {
        out.push_back({ngram, sums.first / static_cast<double>(sums.second), sums.second});
    }
    std::sort(out.begin(), out.end(), [](const NgramScore& a, const NgramScore& b) {
        if (a.mean_weight != b.mean_weight) return a.mean_weight > b.mean_weight;
        return a.ngram < b.ngram;
    });
    if (out.size() > top_k) out.resize(top_k);
    return out;
}

struct ExtrapolationDoc {
    std::string id;
    std::string text;
    bool group_a = true;  // true: first group (e.g. ad hominem OPs); false: second (delta OPs)
};

struct ExtrapolationResult {
    double mean_a = 0.0;
    double mean_b = 0.0;
    std::vector<double> scores_a;
    std::vector<double> scores_b;
    KsResult ks;
};

// Scores two held-out groups with a trained regressor and compares their
// score distributions. Refuses any id overlap with the training set.
inline ExtrapolationResult extrapolate(const std::function<double(const std::string&)>& scorer,
                                       const std::vector<ExtrapolationDoc>& docs,
                                       const std::unordered_set<std::string>& train_ids) {
    ExtrapolationResult res;
    for (const auto& d : docs) {
        if (train_ids.count(d.id)) {
            throw Error("extrapolate: id leakage between train and held-out sets: " + d.id);
        }
        const double score = scorer(d.text);
        (d.group_a ? res.scores_a : res.scores_b).push_back(score);
    }
    if (res.scores_a.empty() || res.scores_b.empty()) {
        throw Error("extrapolate: both groups must be nonempty");
    }
    for (double v : res.scores_a) res.mean_a += v;
    for (double v : res.scores_b) res.mean_b += v;
    res.mean_a /= static_cast<double>(res.scores_a.size());
    res.mean_b /= static_cast<double>(res.scores_b.size());
    res.ks = ks_two_sample(res.scores_a, res.scores_b);
    return res;
}

}  // namespace adhom
