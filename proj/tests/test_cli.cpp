#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "support.hpp"

namespace fs = std::filesystem;
using testsupport::TempDir;
using testsupport::read_file;
using testsupport::run_cli;

namespace {

std::string fixture() { return testsupport::fixture_corpus().string(); }

}  // namespace

TEST_CASE("cli: stats on the fixture succeeds and writes its reports") {
    TempDir tmp("cli_stats");
    const auto out = tmp.path() / "out";
    const int code = run_cli("stats --corpus " + fixture() + " --out " + out.string(),
                             tmp.path() / "log.txt");
    CHECK(code == 0);
    CHECK(fs::exists(out / "reports" / "corpus_stats.txt"));
    CHECK(fs::exists(out / "reports" / "first_ah_histogram.tsv"));
    CHECK(fs::exists(out / "manifests" / "stats.json"));
    const auto report = read_file(out / "reports" / "corpus_stats.txt");
    CHECK(report.find("ad_hominem_count\t3") != std::string::npos);
}

TEST_CASE("cli: usage errors exit with code 2") {
    TempDir tmp("cli_usage");
    CHECK(run_cli("train cnn", tmp.path() / "l1.txt") == 2);  // missing --data
    CHECK(run_cli("definitely-not-a-subcommand", tmp.path() / "l2.txt") == 2);
    CHECK(run_cli("stats --corpus " + fixture() + " --no-such-flag", tmp.path() / "l3.txt") == 2);
    CHECK(run_cli("--help", tmp.path() / "l4.txt") == 0);
}

TEST_CASE("cli: data errors exit with code 1") {
    TempDir tmp("cli_data");
    CHECK(run_cli("stats --corpus /nonexistent/corpus.jsonl", tmp.path() / "l1.txt") == 1);
    // A corpus with no ad hominem posts cannot produce a binary dataset.
    const auto mini = tmp.path() / "mini.jsonl";
    testsupport::write_file(
        mini, "{\"id\": \"s\", \"submission_id\": \"s\", \"author\": \"op\", \"body\": \"hello\", "
              "\"created_at\": 1}\n");
    CHECK(run_cli("sample binary --corpus " + mini.string() + " --dim 4 --out " +
                      (tmp.path() / "o").string(),
                  tmp.path() / "l2.txt") == 1);
}

TEST_CASE("cli: ingest reports quarantine entries") {
    TempDir tmp("cli_ingest");
    const auto out = tmp.path() / "out";
    CHECK(run_cli("ingest --corpus " + fixture() + " --out " + out.string(),
                  tmp.path() / "log.txt") == 0);
    const auto report = read_file(out / "reports" / "ingest_report.txt");
    CHECK(report.find("trees\t4") != std::string::npos);
    CHECK(report.find("quarantined\t2") != std::string::npos);
    CHECK(report.find("dangling parent") != std::string::npos);
    CHECK(report.find("duplicate id") != std::string::npos);
}

TEST_CASE("cli: cv twice with the same seed produces identical metrics files") {
    TempDir tmp("cli_cv_det");
    const auto d1 = tmp.path() / "r1";
    const auto d2 = tmp.path() / "r2";
    const std::string sample_args = " --dim 12 --out ";
    CHECK(run_cli("sample triplets --corpus " + fixture() + " --seed 7" + sample_args + d1.string(),
                  tmp.path() / "s1.txt") == 0);
    CHECK(run_cli("sample triplets --corpus " + fixture() + " --seed 7" + sample_args + d2.string(),
                  tmp.path() / "s2.txt") == 0);
    CHECK(read_file(d1 / "datasets" / "triplets.jsonl") == read_file(d2 / "datasets" / "triplets.jsonl"));

    const std::string cv_args =
        " --model ssae --folds 2 --seed 7 --dim 12 --hidden 8 --attn-hidden 6 --attn-rows 3 "
        "--epochs 4 --patience 0 --out ";
    CHECK(run_cli("cv --data " + (d1 / "datasets" / "triplets.jsonl").string() + cv_args + d1.string(),
                  tmp.path() / "c1.txt") == 0);
    CHECK(run_cli("cv --data " + (d2 / "datasets" / "triplets.jsonl").string() + cv_args + d2.string(),
                  tmp.path() / "c2.txt") == 0);
    CHECK(read_file(d1 / "reports" / "cv_metrics.tsv") == read_file(d2 / "reports" / "cv_metrics.tsv"));
}

TEST_CASE("cli: statistics subcommands round values through files") {
    TempDir tmp("cli_stat");
    const auto out = tmp.path() / "out";
    testsupport::write_file(tmp.path() / "a.txt", "1\n2\n3\n4\n");
    testsupport::write_file(tmp.path() / "b.txt", "2\n3\n4\n5\n");
    CHECK(run_cli("kstest --a " + (tmp.path() / "a.txt").string() + " --b " +
                      (tmp.path() / "b.txt").string() + " --out " + out.string(),
                  tmp.path() / "l1.txt") == 0);
    CHECK(read_file(out / "reports" / "ks.txt").find("statistic\t0.25") != std::string::npos);

    testsupport::write_file(tmp.path() / "r1.txt", "1\n2\n3\n4\n");
    testsupport::write_file(tmp.path() / "r2.txt", "1\n3\n2\n4\n");
    CHECK(run_cli("spearman --a " + (tmp.path() / "r1.txt").string() + " --b " +
                      (tmp.path() / "r2.txt").string() + " --out " + out.string(),
                  tmp.path() / "l2.txt") == 0);
    CHECK(read_file(out / "reports" / "spearman.txt").find("spearman_rho\t0.8") != std::string::npos);

    testsupport::write_file(tmp.path() / "k1.txt", "A\nA\nB\nB\n");
    testsupport::write_file(tmp.path() / "k2.txt", "A\nB\nB\nA\n");
    CHECK(run_cli("kappa --a " + (tmp.path() / "k1.txt").string() + " --b " +
                      (tmp.path() / "k2.txt").string() + " --out " + out.string(),
                  tmp.path() / "l3.txt") == 0);
    CHECK(read_file(out / "reports" / "kappa.txt").find("cohen_kappa\t0") != std::string::npos);
}

TEST_CASE("cli: train, predict, and explain round trip on the fixture triplets") {
    TempDir tmp("cli_train");
    const auto out = tmp.path() / "out";
    CHECK(run_cli("sample triplets --corpus " + fixture() + " --seed 9 --dim 12 --out " + out.string(),
                  tmp.path() / "s.txt") == 0);
    const auto data = (out / "datasets" / "triplets.jsonl").string();
    CHECK(run_cli("train ssae --data " + data +
                      " --dim 12 --hidden 8 --attn-hidden 6 --attn-rows 3 --epochs 4 --patience 0 "
                      "--seed 9 --out " +
                      out.string(),
                  tmp.path() / "t.txt") == 0);
    CHECK(fs::exists(out / "models" / "ssae.bin"));
    CHECK(fs::exists(out / "models" / "ssae.vocab"));
    CHECK(fs::exists(out / "models" / "ssae.train_ids.txt"));
    CHECK(run_cli("predict --model " + (out / "models" / "ssae.bin").string() + " --data " + data +
                      " --out " + out.string(),
                  tmp.path() / "p.txt") == 0);
    CHECK(fs::exists(out / "reports" / "predictions.tsv"));
    CHECK(run_cli("explain --model " + (out / "models" / "ssae.bin").string() + " --data " + data +
                      " --out " + out.string() + " --seed 9",
                  tmp.path() / "e.txt") == 0);
    CHECK(fs::exists(out / "reports" / "buckets.tsv"));
    CHECK(fs::exists(out / "reports" / "trigger_ngrams.tsv"));
    // One heat map per instance, named by instance id.
    std::size_t heatmaps = 0;
    for (const auto& entry : fs::directory_iterator(out / "heatmaps")) {
        CHECK(entry.path().extension() == ".html");
        ++heatmaps;
    }
    CHECK(heatmaps == 4);

    SUBCASE("explain refuses non-attentive checkpoints") {
        CHECK(run_cli("train cnn --data " + data +
                          " --dim 12 --filters 4 --widths 2 --widths 3 --epochs 2 --patience 0 "
                          "--seed 9 --out " +
                          out.string(),
                      tmp.path() / "t2.txt") == 0);
        CHECK(run_cli("explain --model " + (out / "models" / "cnn.bin").string() + " --data " + data +
                          " --out " + out.string(),
                      tmp.path() / "e2.txt") == 1);
    }
}

TEST_CASE("cli: annotate subcommands over one annotation table") {
    TempDir tmp("cli_annotate");
    const auto out = tmp.path() / "out";

    // Three items, three annotators, binary labels; item i2 has one dissent.
    testsupport::write_file(tmp.path() / "ann.tsv",
                            "i1 w1 1\ni1 w2 1\ni1 w3 1\n"
                            "i2 w1 0\ni2 w2 0\ni2 w3 1\n"
                            "i3 w1 0\ni3 w2 0\ni3 w3 0\n");
    CHECK(run_cli("annotate mace --annotations " + (tmp.path() / "ann.tsv").string() +
                      " --threshold 1.0 --seed 3 --out " + out.string(),
                  tmp.path() / "mace.txt") == 0);
    const auto gold = read_file(out / "reports" / "mace_gold.tsv");
    CHECK(gold.find("i1\t1") != std::string::npos);
    CHECK(gold.find("i2\t0") != std::string::npos);
    CHECK(gold.find("i3\t0") != std::string::npos);
    CHECK(fs::exists(out / "reports" / "mace_annotators.tsv"));
    CHECK(fs::exists(out / "reports" / "mace_trace.tsv"));

    CHECK(run_cli("annotate distribution --annotations " + (tmp.path() / "ann.tsv").string() +
                      " --out " + out.string(),
                  tmp.path() / "dist.txt") == 0);
    const auto dist = read_file(out / "reports" / "label_distribution.tsv");
    CHECK(dist.find("i2\t0.6666666667\t0.3333333333") != std::string::npos);

    // Span gold: ids are doc:position, seven workers mark tokens 2..4 of doc "a".
    std::string spans;
    for (int pos = 0; pos < 8; ++pos) {
        for (int w = 0; w < 7; ++w) {
            spans += "a:" + std::to_string(pos) + " w" + std::to_string(w) + " " +
                     ((pos >= 2 && pos <= 4) ? "1" : "0") + "\n";
        }
    }
    testsupport::write_file(tmp.path() / "spans.tsv", spans);
    CHECK(run_cli("annotate spans --annotations " + (tmp.path() / "spans.tsv").string() +
                      " --threshold 1.0 --seed 3 --out " + out.string(),
                  tmp.path() / "spans.txt") == 0);
    const auto span_report = read_file(out / "reports" / "spans.tsv");
    CHECK(span_report.find("a\t2\t4") != std::string::npos);

    testsupport::write_file(tmp.path() / "scale.tsv", "op1 w1 1\nop1 w2 2\nop1 w3 3\nop2 w1 3\n");
    CHECK(run_cli("annotate scale --annotations " + (tmp.path() / "scale.tsv").string() +
                      " --labels 4 --out " + out.string(),
                  tmp.path() / "scale.txt") == 0);
    const auto means = read_file(out / "reports" / "scale_means.tsv");
    CHECK(means.find("op1\t2") != std::string::npos);
    CHECK(means.find("op2\t3") != std::string::npos);
}

TEST_CASE("cli: regression pipeline with topic fusion and extrapolation") {
    TempDir tmp("cli_reg");
    const auto out = tmp.path() / "out";

    // A dozen regression rows over two disjoint vocabularies.
    std::string reg;
    const char* words_a[] = {"economy", "tax", "budget", "market"};
    const char* words_b[] = {"religion", "faith", "church", "belief"};
    for (int i = 0; i < 12; ++i) {
        std::string text;
        for (int t = 0; t < 10; ++t) {
            if (!text.empty()) text += " ";
            text += (i % 2 == 0 ? words_a : words_b)[(t + i) % 4];
        }
        reg += "{\"id\": \"op" + std::to_string(i) + "\", \"target\": " +
               std::to_string(1.0 + 2.0 * (i % 2) + 0.01 * i) + ", \"text\": \"" + text + "\"}\n";
    }
    testsupport::write_file(tmp.path() / "reg.jsonl", reg);

    std::string groups;
    for (int i = 0; i < 8; ++i) {
        std::string text;
        for (int t = 0; t < 10; ++t) {
            if (!text.empty()) text += " ";
            text += (i % 2 == 0 ? words_b : words_a)[(t + i) % 4];
        }
        groups += "{\"id\": \"x" + std::to_string(i) + "\", \"label\": \"" +
                  (i % 2 == 0 ? "ah_group" : "delta_group") + "\", \"text\": \"" + text + "\"}\n";
    }
    testsupport::write_file(tmp.path() / "groups.jsonl", groups);

    CHECK(run_cli("lda fit --data " + (tmp.path() / "reg.jsonl").string() +
                      " --k 2 --alpha 1.0 --iterations 80 --seed 5 --out " + out.string(),
                  tmp.path() / "lda.txt") == 0);
    CHECK(fs::exists(out / "models" / "lda.bin"));
    CHECK(fs::exists(out / "models" / "lda.vocab"));
    CHECK(fs::exists(out / "reports" / "lda_top_words.txt"));

    CHECK(run_cli("lda infer --model " + (out / "models" / "lda.bin").string() + " --data " +
                      (tmp.path() / "reg.jsonl").string() + " --out " + out.string() + " --seed 5",
                  tmp.path() / "infer.txt") == 0);
    CHECK(fs::exists(out / "reports" / "theta.tsv"));

    CHECK(run_cli("train cnn-lda --data " + (tmp.path() / "reg.jsonl").string() + " --lda " +
                      (out / "models" / "lda.bin").string() +
                      " --dim 8 --filters 3 --widths 2 --widths 3 --epochs 6 --patience 0 --seed 5 "
                      "--out " +
                      out.string(),
                  tmp.path() / "train.txt") == 0);
    CHECK(fs::exists(out / "models" / "cnn-lda.bin"));

    CHECK(run_cli("extrapolate --model " + (out / "models" / "cnn-lda.bin").string() + " --data " +
                      (tmp.path() / "groups.jsonl").string() + " --train-ids " +
                      (out / "models" / "cnn-lda.train_ids.txt").string() + " --lda " +
                      (out / "models" / "lda.bin").string() + " --out " + out.string() + " --seed 5",
                  tmp.path() / "extra.txt") == 0);
    const auto extrapolation = read_file(out / "reports" / "extrapolation.txt");
    CHECK(extrapolation.find("ks_statistic") != std::string::npos);
    CHECK(extrapolation.find("group_a_mean") != std::string::npos);

    SUBCASE("leakage between train ids and held-out ids is refused") {
        // Reuse the training data itself as the held-out set: ids overlap.
        std::string leaky;
        for (int i = 0; i < 4; ++i) {
            leaky += "{\"id\": \"op" + std::to_string(i) + "\", \"label\": \"" +
                     (i % 2 == 0 ? "ah_group" : "delta_group") + "\", \"text\": \"economy tax\"}\n";
        }
        testsupport::write_file(tmp.path() / "leaky.jsonl", leaky);
        CHECK(run_cli("extrapolate --model " + (out / "models" / "cnn-lda.bin").string() +
                          " --data " + (tmp.path() / "leaky.jsonl").string() + " --train-ids " +
                          (out / "models" / "cnn-lda.train_ids.txt").string() + " --lda " +
                          (out / "models" / "lda.bin").string() + " --out " + out.string(),
                      tmp.path() / "leak.txt") == 1);
    }
}

TEST_CASE("cli: every run writes a manifest with the corpus hash and seed") {
    TempDir tmp("cli_manifest");
    const auto out = tmp.path() / "out";
    CHECK(run_cli("stats --corpus " + fixture() + " --seed 42 --out " + out.string(),
                  tmp.path() / "log.txt") == 0);
    const auto manifest = read_file(out / "manifests" / "stats.json");
    CHECK(manifest.find("\"command\": \"stats\"") != std::string::npos);
    CHECK(manifest.find("\"master_seed\": 42") != std::string::npos);
    CHECK(manifest.find("\"corpus_hash\"") != std::string::npos);
    CHECK(manifest.find("\"tool_version\"") != std::string::npos);
    CHECK(manifest.find("\"timestamp\"") != std::string::npos);
}
