#include <doctest.h>

#include <cmath>
#include <unordered_set>

#include "adhom/analysis.hpp"
#include "adhom/common.hpp"
#include "support.hpp"

using namespace adhom;

TEST_CASE("ks_two_sample: golden values") {
    const auto same = ks_two_sample({1, 2, 3}, {1, 2, 3});
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == 1.0);

    const auto far = ks_two_sample({0, 0, 0, 0}, {1, 1, 1, 1});
    CHECK(far.statistic == 1.0);

    // Hand-enumerated ECDF steps: the gap is 1/4 at every pooled point.
    const auto shifted = ks_two_sample({1, 2, 3, 4}, {2, 3, 4, 5});
    CHECK(shifted.statistic == 0.25);

    CHECK_THROWS_AS(ks_two_sample({}, {1.0}), Error);
}

TEST_CASE("ks_two_sample: symmetric in its arguments") {
    Rng rng(3);
    std::vector<double> a, b;
    for (int i = 0; i < 40; ++i) a.push_back(rng.normal());
    for (int i = 0; i < 25; ++i) b.push_back(rng.normal() + 0.3);
    const auto ab = ks_two_sample(a, b);
    const auto ba = ks_two_sample(b, a);
    CHECK(ab.statistic == ba.statistic);
    CHECK(ab.p_value == ba.p_value);
}

TEST_CASE("ks_two_sample: p-value sanity against the asymptotic distribution") {
    // Large identical-distribution samples: D small, p not extreme.
    Rng rng(9);
    std::vector<double> a, b;
    for (int i = 0; i < 500; ++i) a.push_back(rng.uniform01());
    for (int i = 0; i < 500; ++i) b.push_back(rng.uniform01());
    const auto res = ks_two_sample(a, b);
    CHECK(res.p_value > 0.01);
    // Clearly separated samples: p effectively zero.
    for (auto& v : b) v += 0.5;
    const auto sep = ks_two_sample(a, b);
    CHECK(sep.p_value < 1e-6);
}

TEST_CASE("spearman: golden values and invariances") {
    CHECK(spearman({1, 2, 3, 4}, {1, 2, 3, 4}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(spearman({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), Error);
    CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), Error);

    SUBCASE("invariant under strictly monotone transforms") {
        const std::vector<double> a = {0.3, 1.7, -2.0, 5.5, 4.4, 0.0};
        const std::vector<double> b = {1.0, 0.5, 2.5, -1.0, 3.0, 0.7};
        const double base = spearman(a, b);
        std::vector<double> ta = a;
        for (auto& v : ta) v = std::exp(v);  // strictly increasing
        std::vector<double> tb = b;
        for (auto& v : tb) v = 3.0 * v + 11.0;
        CHECK(spearman(ta, tb) == doctest::Approx(base).epsilon(1e-12));
    }

    SUBCASE("ties are averaged") {
        // ranks a: [1.5, 1.5, 3], b: [1, 2, 3]
        const double rho = spearman({1, 1, 2}, {1, 2, 3});
        CHECK(rho == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-9));
    }
}

TEST_CASE("cohen_kappa: golden values and renaming invariance") {
    using V = std::vector<std::string>;
    CHECK(cohen_kappa(V{"A", "B", "A", "B"}, V{"A", "B", "A", "B"}) == doctest::Approx(1.0));
    CHECK(cohen_kappa(V{"A", "A", "B", "B"}, V{"A", "B", "B", "A"}) ==
          doctest::Approx(0.0).epsilon(1e-12));
    // Hand contingency: po = 0.75, pe = 0.5, kappa = 0.5.
    CHECK(cohen_kappa(V{"A", "A", "A", "B"}, V{"A", "A", "B", "B"}) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(cohen_kappa(V{"A", "A"}, V{"A", "A"}), Error);  // pe == 1
    CHECK_THROWS_AS(cohen_kappa(V{"A"}, V{"A", "B"}), Error);

    SUBCASE("consistent label renaming") {
        const V l1 = {"A", "A", "A", "B", "C", "B"};
        const V l2 = {"A", "B", "A", "B", "C", "C"};
        V r1 = l1, r2 = l2;
        auto rename = [](std::string& s) {
            if (s == "A") s = "xx";
            else if (s == "B") s = "yy";
            else s = "zz";
        };
        for (auto& s : r1) rename(s);
        for (auto& s : r2) rename(s);
        CHECK(cohen_kappa(l1, l2) == doctest::Approx(cohen_kappa(r1, r2)).epsilon(1e-12));
    }
}

namespace {

AttentionRecord make_record(const std::string& id, std::vector<std::string> tokens,
                            std::vector<double> weights) {
    AttentionRecord r;
    r.id = id;
    r.tokens = std::move(tokens);
    r.weights = std::move(weights);
    return r;
}

}  // namespace

TEST_CASE("error_buckets: partitions are exhaustive and disjoint") {
    std::vector<std::string> preds = {"ah", "ah", "delta", "delta"};
    std::vector<std::string> gold = {"ah", "delta", "ah", "delta"};
    std::vector<AttentionRecord> docs;
    for (int i = 0; i < 4; ++i) docs.push_back(make_record("d" + std::to_string(i), {"x"}, {1.0}));
    const auto buckets = error_buckets(preds, gold, docs, "ah");
    CHECK(buckets.tp.size() == 1);
    CHECK(buckets.fp.size() == 1);
    CHECK(buckets.fn.size() == 1);
    CHECK(buckets.tn.size() == 1);
    CHECK(buckets.total() == 4);
    CHECK(buckets.tp[0].id == "d0");
    CHECK(buckets.fp[0].id == "d1");
    CHECK(buckets.fn[0].id == "d2");
    CHECK(buckets.tn[0].id == "d3");

    SUBCASE("all correct leaves FP and FN empty") {
        const auto b = error_buckets(gold, gold, docs, "ah");
        CHECK(b.fp.empty());
        CHECK(b.fn.empty());
    }
    SUBCASE("all predicted positive with half gold positive balances TP and FP") {
        const std::vector<std::string> all_pos = {"ah", "ah", "ah", "ah"};
        const auto b = error_buckets(all_pos, gold, docs, "ah");
        CHECK(b.tp.size() == b.fp.size());
    }
    SUBCASE("misalignment is an error") {
        CHECK_THROWS_AS(error_buckets({"ah"}, gold, docs, "ah"), Error);
    }
}

TEST_CASE("error_buckets: twenty predictions, hand-counted bucket sizes") {
    // gold:  + for even indices (10 positives, 10 negatives)
    // pred:  + for indices divisible by 3 or equal to 1 (index 1 is the only
    //        odd false positive besides 3, 9, 15; see the per-index walk).
    std::vector<std::string> gold, pred;
    std::vector<AttentionRecord> docs;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < 20; ++i) {
        const bool g = i % 2 == 0;
        const bool p = (i % 3 == 0) || i == 1;
        gold.push_back(g ? "ah" : "delta");
        pred.push_back(p ? "ah" : "delta");
        docs.push_back(make_record("d" + std::to_string(i), {"x"}, {1.0}));
        if (p && g) ++tp;
        if (p && !g) ++fp;
        if (!p && g) ++fn;
        if (!p && !g) ++tn;
    }
    // Hand count: positives predicted at 0,1,3,6,9,12,15,18; gold positives are
    // the evens. TP = {0,6,12,18} -> 4, FP = {1,3,9,15} -> 4, FN = 6, TN = 6.
    REQUIRE(tp == 4);
    REQUIRE(fp == 4);
    REQUIRE(fn == 6);
    REQUIRE(tn == 6);
    const auto buckets = error_buckets(pred, gold, docs, "ah");
    CHECK(buckets.tp.size() == tp);
    CHECK(buckets.fp.size() == fp);
    CHECK(buckets.fn.size() == fn);
    CHECK(buckets.tn.size() == tn);
    CHECK(buckets.total() == 20);
}

TEST_CASE("render_heatmap: uniform weights, single peak, byte stability") {
    auto uniform = make_record("u", {"a", "b", "c"}, {0.2, 0.2, 0.2});
    const std::string html_u = render_heatmap(uniform);
    // All tokens share the same color (intensity 0 under per-doc rescale).
    CHECK(html_u.find("rgba(230,60,60,0.000)\">a<") != std::string::npos);
    CHECK(html_u.find("rgba(230,60,60,0.000)\">b<") != std::string::npos);
    CHECK(html_u.find("rgba(230,60,60,0.000)\">c<") != std::string::npos);

    auto peak = make_record("p", {"a", "b"}, {0.0, 1.0});
    const std::string html_p = render_heatmap(peak);
    CHECK(html_p.find("rgba(230,60,60,0.000)\">a<") != std::string::npos);
    CHECK(html_p.find("rgba(230,60,60,1.000)\">b<") != std::string::npos);

    CHECK(render_heatmap(uniform) == html_u);
    CHECK(render_heatmap(peak) == html_p);

    SUBCASE("delimiter starts a new comment block") {
        auto multi = make_record("m", {kCommentBeginToken, "one", kCommentBeginToken, "two"},
                                 {0.0, 0.5, 0.0, 1.0});
        const auto html = render_heatmap(multi);
        CHECK(std::count(html.begin(), html.end(), '\n') > 0);
        std::size_t divs = 0;
        for (std::size_t at = html.find("<div class=\"comment\">"); at != std::string::npos;
             at = html.find("<div class=\"comment\">", at + 1)) {
            ++divs;
        }
        CHECK(divs == 2);
        CHECK(html.find("&lt;") == std::string::npos);  // nothing to escape here
    }

    SUBCASE("html escaping of angle tokens") {
        auto esc = make_record("e", {"<PAD>", "a&b"}, {0.0, 1.0});
        const auto html = render_heatmap(esc);
        CHECK(html.find("&lt;PAD&gt;") != std::string::npos);
        CHECK(html.find("a&amp;b") != std::string::npos);
    }
}

TEST_CASE("render_heatmap: golden fixture bytes") {
    auto rec = make_record("587_ah_t1_fixture",
                           {kCommentBeginToken, "If", "only", "you", "would", "n't", "rely", "on",
                            "fallacious", "arguments", kCommentBeginToken, "What", "do", "you",
                            "believe", "in", "?"},
                           {0.0, 0.02, 0.03, 0.09, 0.04, 0.06, 0.05, 0.02, 0.18, 0.12, 0.0, 0.07,
                            0.04, 0.10, 0.11, 0.03, 0.04});
    rec.predicted = "ah";
    rec.gold = "ah";
    rec.bucket = Bucket::TP;
    const std::string html = render_heatmap(rec);
    const auto golden_path = testsupport::golden_dir() / "heatmap_fixture.html";
    const std::string golden = testsupport::read_file(golden_path);
    CHECK(html == golden);
}

TEST_CASE("top_trigger_ngrams: ranking rules") {
    SUBCASE("single doc unigrams sort by weight") {
        const auto recs = std::vector<AttentionRecord>{
            make_record("d", {"low", "high", "mid"}, {0.1, 0.6, 0.3})};
        const auto top = top_trigger_ngrams(recs, 1, 10);
        REQUIRE(top.size() == 3);
        CHECK(top[0].ngram == "high");
        CHECK(top[1].ngram == "mid");
        CHECK(top[2].ngram == "low");
    }
    SUBCASE("equal weights fall back to lexicographic order") {
        const auto recs = std::vector<AttentionRecord>{
            make_record("d", {"pear", "apple", "mango"}, {0.2, 0.2, 0.2})};
        const auto top = top_trigger_ngrams(recs, 1, 10);
        CHECK(top[0].ngram == "apple");
        CHECK(top[1].ngram == "mango");
        CHECK(top[2].ngram == "pear");
    }
    SUBCASE("bigram scores equal the brute-force enumeration") {
        const auto recs = std::vector<AttentionRecord>{
            make_record("d1", {"you", "are", "wrong", "you", "are"}, {0.5, 0.1, 0.2, 0.4, 0.3}),
            make_record("d2", {"you", "are"}, {0.6, 0.2})};
        const auto top = top_trigger_ngrams(recs, 2, 10);
        // "you are" occurrences: (0.5+0.1)/2, (0.4+0.3)/2, (0.6+0.2)/2 -> mean 0.35
        double best = 0.0;
        for (const auto& t : top) {
            if (t.ngram == "you are") best = t.mean_weight;
        }
        CHECK(best == doctest::Approx((0.3 + 0.35 + 0.4) / 3.0).epsilon(1e-12));
        CHECK(top[0].ngram == "you are");
        CHECK(top[0].occurrences == 3);
    }
    SUBCASE("ngrams never cross comment boundaries") {
        const auto recs = std::vector<AttentionRecord>{make_record(
            "d", {"a", "b", kCommentBeginToken, "c", "d"}, {0.1, 0.2, 0.0, 0.3, 0.4})};
        const auto top = top_trigger_ngrams(recs, 2, 10);
        for (const auto& t : top) {
            CHECK(t.ngram != std::string("b c"));
            CHECK(t.ngram.find(kCommentBeginToken) == std::string::npos);
        }
    }
    SUBCASE("top_k truncates") {
        const auto recs = std::vector<AttentionRecord>{
            make_record("d", {"a", "b", "c", "d"}, {0.1, 0.2, 0.3, 0.4})};
        CHECK(top_trigger_ngrams(recs, 1, 2).size() == 2);
    }
}

TEST_CASE("extrapolate: group scoring, KS, and leakage error") {
    std::vector<ExtrapolationDoc> docs;
    for (int i = 0; i < 30; ++i) docs.push_back({"a" + std::to_string(i), "text a", true});
    for (int i = 0; i < 30; ++i) docs.push_back({"b" + std::to_string(i), "text b", false});

    SUBCASE("identical scorer gives D ~ 0") {
        const auto res = extrapolate([](const std::string&) { return 0.5; }, docs, {});
        CHECK(res.ks.statistic == 0.0);
        CHECK(res.mean_a == 0.5);
        CHECK(res.mean_b == 0.5);
    }
    SUBCASE("separated scorer gives D = 1") {
        const auto res = extrapolate(
            [](const std::string& text) { return text == "text a" ? 1.0 : 0.0; }, docs, {});
        CHECK(res.ks.statistic == 1.0);
        CHECK(res.mean_a == 1.0);
        CHECK(res.mean_b == 0.0);
    }
    SUBCASE("id overlap with the training set is refused") {
        std::unordered_set<std::string> train_ids = {"b7"};
        CHECK_THROWS_WITH_AS(extrapolate([](const std::string&) { return 0.0; }, docs, train_ids),
                             doctest::Contains("leakage"), Error);
    }
}
