// adhom: analyze ad hominem dynamics in tree-structured debates.
// Subcommands cover the whole pipeline: corpus ingestion and statistics,
// dataset sampling, crowd-label aggregation, topic modeling, neural model
// training/evaluation, statistical tests, and attention-based explanations.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <functional>
#include <thread>
#include <unordered_set>
#include <vector>

#include "adhom/analysis.hpp"
#include "adhom/annotation.hpp"
#include "adhom/checkpoint.hpp"
#include "adhom/common.hpp"
#include "adhom/corpus.hpp"
#include "adhom/manifest.hpp"
#include "adhom/neural.hpp"
#include "adhom/sampling.hpp"
#include "adhom/text.hpp"
#include "adhom/topics.hpp"
#include "adhom/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
    fs::path out = "out";
    std::uint64_t seed = 1;
    std::size_t threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
};

fs::path ensure_dir(const fs::path& dir) {
    fs::create_directories(dir);
    return dir;
}

std::ofstream open_out(const fs::path& path) {
    ensure_dir(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw adhom::Error("cannot write " + path.string());
    return out;
}

void write_manifest(const GlobalOptions& g, const std::string& command,
                    const std::map<std::string, std::string>& params, const fs::path& primary_input) {
    adhom::RunManifest m;
    m.command = command;
    m.parameters = params;
    m.master_seed = g.seed;
    if (!primary_input.empty()) m.corpus_hash = adhom::hash_file(primary_input.string());
    std::string name = command;
    for (char& c : name) {
        if (c == ' ') c = '-';
    }
    m.write(g.out / "manifests" / (name + ".json"));
}

adhom::IngestResult load_corpus(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw adhom::Error("cannot open corpus: " + path.string());
    return adhom::ingest(in);
}

// Line-delimited dataset records: {"id", "label" or "target", "text"}.
struct RawDataset {
    struct Row {
        std::string id;
        std::string label;
        double target = 0.0;
        std::string text;
    };
    std::vector<Row> rows;
    bool regression = false;
};

RawDataset load_raw_dataset(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw adhom::Error("cannot open dataset: " + path.string());
    RawDataset data;
    std::string line;
    std::size_t line_no = 0;
    bool saw_label = false, saw_target = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw adhom::Error("dataset " + path.string() + ": bad json at line " +
                               std::to_string(line_no) + ": " + e.what());
        }
        RawDataset::Row row;
        if (!j.contains("id") || !j["id"].is_string() || !j.contains("text") ||
            !j["text"].is_string()) {
            throw adhom::Error("dataset " + path.string() + ": line " + std::to_string(line_no) +
                               " needs string fields 'id' and 'text'");
        }
        row.id = j["id"].get<std::string>();
        row.text = j["text"].get<std::string>();
        if (j.contains("label")) {
            row.label = j["label"].get<std::string>();
            saw_label = true;
        }
        if (j.contains("target")) {
            row.target = j["target"].get<double>();
            saw_target = true;
        }
        data.rows.push_back(std::move(row));
    }
    if (saw_label && saw_target) {
        throw adhom::Error("dataset " + path.string() + ": mixes 'label' and 'target' rows");
    }
    data.regression = saw_target;
    return data;
}

struct NetOptions {
    std::string embeddings;
    std::size_t dim = 50;
    std::size_t min_count = 1;
    bool lowercase = false;
    std::size_t filters = 100;
    std::vector<std::size_t> widths = {3, 4, 5};
    std::size_t hidden = 64;
    std::size_t attn_hidden = 64;
    std::size_t attn_rows = 8;
    double dropout = 0.5;
    double attention_penalty = 0.0;
    bool unfreeze = false;
    double lr = 1e-3;
    std::size_t epochs = 30;
    std::size_t batch = 16;
    std::size_t patience = 10;
    std::string lda_model;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--embeddings", embeddings, "pretrained word-vector file (text format)");
        cmd->add_option("--dim", dim, "embedding dimension when no vector file is given");
        cmd->add_option("--min-count", min_count, "vocabulary frequency cutoff");
        cmd->add_flag("--lowercase", lowercase, "lowercase text before tokenizing");
        cmd->add_option("--filters", filters, "convolution feature maps per width");
        cmd->add_option("--widths", widths, "convolution window widths");
        cmd->add_option("--hidden", hidden, "LSTM hidden units per direction");
        cmd->add_option("--attn-hidden", attn_hidden, "attention hidden size");
        cmd->add_option("--attn-rows", attn_rows, "attention rows");
        cmd->add_option("--dropout", dropout, "dropout rate on the penultimate layer");
        cmd->add_option("--attention-penalty", attention_penalty,
                        "coefficient on the attention orthogonality penalty (0 = off)");
        cmd->add_flag("--unfreeze-embeddings", unfreeze, "train the embedding table");
        cmd->add_option("--lr", lr, "learning rate");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch", batch, "batch size");
        cmd->add_option("--patience", patience, "early-stopping patience (0 disables)");
        cmd->add_option("--lda", lda_model, "topic model file (required for cnn-lda)");
    }

    adhom::ModelConfig model_config(adhom::Arch arch, std::size_t num_classes, bool regression,
                                    std::size_t topic_dim) const {
        adhom::ModelConfig cfg;
        cfg.embedding_dim = dim;
        cfg.conv_widths = widths;
        cfg.conv_filters = filters;
        cfg.lstm_hidden = hidden;
        cfg.attention_hidden = attn_hidden;
        cfg.attention_rows = attn_rows;
        cfg.dropout = dropout;
        cfg.num_classes = num_classes;
        cfg.regression = regression;
        cfg.topic_dim = arch == adhom::Arch::CnnLda ? topic_dim : 0;
        cfg.freeze_embeddings = !unfreeze;
        cfg.attention_penalty = attention_penalty;
        cfg.validate(arch);
        return cfg;
    }

    adhom::TrainConfig train_config(std::uint64_t seed, bool regression) const {
        adhom::TrainConfig t;
        t.learning_rate = lr;
        t.epochs = epochs;
        t.batch_size = batch;
        t.seed = seed;
        t.patience = patience;
        t.objective = regression ? adhom::Objective::MeanSquaredError : adhom::Objective::CrossEntropy;
        return t;
    }

    std::map<std::string, std::string> to_params() const {
        std::map<std::string, std::string> p;
        p["embeddings"] = embeddings;
        p["dim"] = std::to_string(dim);
        p["min_count"] = std::to_string(min_count);
        p["lowercase"] = lowercase ? "true" : "false";
        p["filters"] = std::to_string(filters);
        std::string w;
        for (std::size_t v : widths) w += (w.empty() ? "" : ",") + std::to_string(v);
        p["widths"] = w;
        p["hidden"] = std::to_string(hidden);
        p["attn_hidden"] = std::to_string(attn_hidden);
        p["attn_rows"] = std::to_string(attn_rows);
        p["dropout"] = std::to_string(dropout);
        p["attention_penalty"] = std::to_string(attention_penalty);
        p["unfreeze_embeddings"] = unfreeze ? "true" : "false";
        p["lr"] = std::to_string(lr);
        p["epochs"] = std::to_string(epochs);
        p["batch"] = std::to_string(batch);
        p["patience"] = std::to_string(patience);
        p["lda"] = lda_model;
        return p;
    }
};

adhom::EmbeddingTable make_embeddings(const NetOptions& net, const adhom::Vocabulary& vocab,
                                      std::uint64_t seed, std::size_t* dim_out) {
    if (!net.embeddings.empty()) {
        std::ifstream in(net.embeddings);
        if (!in) throw adhom::Error("cannot open embeddings: " + net.embeddings);
        auto table = adhom::EmbeddingTable::load(in, vocab, adhom::mix_seed(seed, 0xe3b));
        *dim_out = table.dim();
        return table;
    }
    *dim_out = net.dim;
    return adhom::EmbeddingTable::random(vocab, net.dim, adhom::mix_seed(seed, 0xe3b));
}

struct LdaBundle {
    adhom::LdaModel model;
    adhom::Vocabulary vocab;
};

LdaBundle load_lda_bundle(const std::string& path) {
    LdaBundle b;
    b.model = adhom::load_lda(path);
    const fs::path vocab_path = fs::path(path).replace_extension(".vocab");
    std::ifstream vin(vocab_path);
    if (!vin) throw adhom::Error("cannot open topic-model vocabulary: " + vocab_path.string());
    b.vocab = adhom::Vocabulary::load(vin);
    if (b.vocab.content_hash() != b.model.vocab_hash) {
        throw adhom::Error("topic model and vocabulary do not match: " + vocab_path.string());
    }
    return b;
}

std::vector<double> theta_for_text(const LdaBundle& lda, const std::string& text, bool lowercase,
                                   std::uint64_t seed, const std::string& doc_id) {
    const auto doc = adhom::TokenizedDoc::make(text, lda.vocab, lowercase);
    return adhom::infer_theta(lda.model, doc.indices, 50,
                              adhom::mix_seed(seed, adhom::fnv1a64(doc_id)));
}

// Assemble a trainable dataset: tokenize, index, attach topic vectors.
adhom::DataSet build_dataset(const RawDataset& raw, const adhom::Vocabulary& vocab, bool lowercase,
                             const LdaBundle* lda, std::uint64_t seed) {
    adhom::DataSet data;
    data.regression = raw.regression;
    std::set<std::string> labels;
    for (const auto& row : raw.rows) labels.insert(row.label);
    if (!raw.regression) {
        data.class_names.assign(labels.begin(), labels.end());
    }
    for (const auto& row : raw.rows) {
        adhom::DataSet::Instance inst;
        inst.id = row.id;
        const auto doc = adhom::TokenizedDoc::make(row.text, vocab, lowercase);
        inst.indices = doc.indices;
        if (raw.regression) {
            inst.target = row.target;
        } else {
            inst.label = data.class_of(row.label);
        }
        if (lda != nullptr) {
            inst.topic = theta_for_text(*lda, row.text, lowercase, seed, row.id);
        }
        data.instances.push_back(std::move(inst));
    }
    return data;
}

std::vector<double> read_numbers(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw adhom::Error("cannot open " + path.string());
    std::vector<double> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto parts = adhom::split_ws(line);
        if (parts.empty()) continue;
        try {
            out.push_back(std::stod(parts[0]));
        } catch (...) {
            throw adhom::Error(path.string() + ": not a number at line " + std::to_string(line_no));
        }
    }
    return out;
}

std::vector<std::string> read_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw adhom::Error("cannot open " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto parts = adhom::split_ws(line);
        if (!parts.empty()) out.push_back(parts[0]);
    }
    return out;
}

std::unordered_set<std::string> read_id_set(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw adhom::Error("cannot open id list: " + path.string());
    std::unordered_set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        const auto parts = adhom::split_ws(line);
        if (!parts.empty()) ids.insert(parts[0]);
    }
    return ids;
}

void write_dataset_jsonl(const fs::path& path, const std::vector<adhom::LabeledInstance>& instances) {
    auto out = open_out(path);
    for (const auto& inst : instances) {
        json j;
        j["id"] = inst.id;
        j["label"] = inst.label;
        j["text"] = inst.text;
        j["post_ids"] = inst.post_ids;
        out << j.dump() << "\n";
    }
}

struct LoadedModel {
    adhom::Model model;
    adhom::Vocabulary vocab;
};

LoadedModel load_model_bundle(const std::string& model_path, std::string vocab_path) {
    LoadedModel lm;
    lm.model = adhom::load_checkpoint(model_path);
    if (vocab_path.empty()) {
        vocab_path = fs::path(model_path).replace_extension(".vocab").string();
    }
    std::ifstream vin(vocab_path);
    if (!vin) throw adhom::Error("cannot open model vocabulary: " + vocab_path);
    lm.vocab = adhom::Vocabulary::load(vin);
    if (lm.vocab.content_hash() != lm.model.vocab_hash()) {
        throw adhom::Error("model checkpoint and vocabulary do not match: " + vocab_path);
    }
    return lm;
}

// ---------------------------------------------------------------- commands

void cmd_ingest(const GlobalOptions& g, const fs::path& corpus_path) {
    const auto res = load_corpus(corpus_path);
    auto report = open_out(g.out / "reports" / "ingest_report.txt");
    report << "trees\t" << res.corpus.trees.size() << "\n";
    report << "posts\t" << res.corpus.post_count() << "\n";
    report << "quarantined\t" << res.quarantine.size() << "\n";
    for (const auto& e : res.quarantine.entries) {
        report << "quarantine\t" << e.line_no << "\t" << e.id << "\t" << e.reason << "\n";
    }
    std::cout << "ingested " << res.corpus.trees.size() << " trees, " << res.corpus.post_count()
              << " posts, " << res.quarantine.size() << " quarantined records\n";
    write_manifest(g, "ingest", {{"corpus", corpus_path.string()}}, corpus_path);
}

void cmd_stats(const GlobalOptions& g, const fs::path& corpus_path) {
    const auto res = load_corpus(corpus_path);
    const auto stats = adhom::compute_stats(res.corpus);
    {
        auto out = open_out(g.out / "reports" / "corpus_stats.txt");
        adhom::write_stats_report(stats, out);
    }
    {
        auto out = open_out(g.out / "reports" / "first_ah_histogram.tsv");
        adhom::write_histogram_tsv(stats, out);
    }
    std::cout << "posts " << stats.post_count << ", ad hominem rate " << stats.ad_hominem_rate
              << ", threads " << stats.threads_total << "\n";
    write_manifest(g, "stats", {{"corpus", corpus_path.string()}}, corpus_path);
}

void cmd_sample(const GlobalOptions& g, const std::string& kind, const fs::path& corpus_path,
                const NetOptions& net) {
    const auto res = load_corpus(corpus_path);
    std::vector<std::vector<std::string>> token_docs;
    for (const adhom::PostRecord* p : res.corpus.posts_in_corpus_order()) {
        token_docs.push_back(adhom::tokenize(p->text(), net.lowercase));
    }
    const auto vocab = adhom::Vocabulary::build(token_docs, net.min_count);
    std::size_t dim = 0;
    const auto table = make_embeddings(net, vocab, g.seed, &dim);

    if (kind == "binary") {
        const auto data = adhom::sample_binary_dataset(res.corpus, vocab, table);
        write_dataset_jsonl(g.out / "datasets" / "binary.jsonl", data);
        std::cout << "binary dataset: " << data.size() << " instances\n";
    } else if (kind == "op-groups") {
        const auto groups = adhom::sample_op_groups(res.corpus);
        std::vector<adhom::LabeledInstance> rows;
        for (const auto* p : groups.ah_group) {
            rows.push_back({p->id, adhom::kLabelAhGroup, p->text(), {p->id}});
        }
        for (const auto* p : groups.delta_group) {
            rows.push_back({p->id, adhom::kLabelDeltaGroup, p->text(), {p->id}});
        }
        write_dataset_jsonl(g.out / "datasets" / "op_groups.jsonl", rows);
        std::cout << "op groups: " << groups.ah_group.size() << " ad hominem, "
                  << groups.delta_group.size() << " delta\n";
    } else {
        const auto triplets = adhom::sample_triplets(res.corpus, vocab, table);
        std::vector<adhom::LabeledInstance> rows;
        for (const auto& t : triplets) rows.push_back({t.id, t.label, t.text, t.post_ids});
        write_dataset_jsonl(g.out / "datasets" / "triplets.jsonl", rows);
        std::cout << "triplets: " << triplets.size() << " instances\n";
    }
    auto params = net.to_params();
    params["corpus"] = corpus_path.string();
    params["kind"] = kind;
    write_manifest(g, "sample " + kind, params, corpus_path);
}

struct AnnotateOptions {
    fs::path annotations;
    std::size_t labels = 2;
    double threshold = 0.9;
    std::size_t restarts = 10;
    std::size_t iterations = 50;
    double smoothing = 0.1;
};

void cmd_annotate_mace(const GlobalOptions& g, const AnnotateOptions& opt) {
    std::ifstream in(opt.annotations);
    if (!in) throw adhom::Error("cannot open annotations: " + opt.annotations.string());
    const auto set = adhom::AnnotationSet::parse(in, opt.labels);
    const auto post = adhom::mace_em(set, opt.restarts, opt.iterations, opt.smoothing, g.seed);
    const auto gold = adhom::select_confident(set, post, opt.threshold);
    {
        auto out = open_out(g.out / "reports" / "mace_gold.tsv");
        out << "item_id\tgold_label\tconfidence\n";
        out.precision(10);
        for (const auto& item : gold) {
            out << item.item_id << "\t" << item.gold_label << "\t" << item.confidence << "\n";
        }
    }
    {
        auto out = open_out(g.out / "reports" / "mace_annotators.tsv");
        out << "annotator\tspam_probability\tspam_preference\n";
        out.precision(10);
        for (std::size_t j = 0; j < set.num_annotators(); ++j) {
            out << set.annotators()[j] << "\t" << post.spam_prob[j] << "\t";
            for (std::size_t l = 0; l < set.label_domain(); ++l) {
                out << (l == 0 ? "" : ",") << post.spam_pref[j][l];
            }
            out << "\n";
        }
    }
    {
        auto out = open_out(g.out / "reports" / "mace_trace.tsv");
        out << "iteration\tobjective\n";
        out.precision(12);
        for (std::size_t k = 0; k < post.log_likelihood_trace.size(); ++k) {
            out << k << "\t" << post.log_likelihood_trace[k] << "\n";
        }
    }
    std::cout << "mace: " << gold.size() << " of " << set.num_items() << " items retained\n";
    write_manifest(g, "annotate mace",
                   {{"annotations", opt.annotations.string()},
                    {"labels", std::to_string(opt.labels)},
                    {"threshold", std::to_string(opt.threshold)},
                    {"restarts", std::to_string(opt.restarts)},
                    {"iterations", std::to_string(opt.iterations)},
                    {"smoothing", std::to_string(opt.smoothing)}},
                   opt.annotations);
}

void cmd_annotate_distribution(const GlobalOptions& g, const AnnotateOptions& opt) {
    std::ifstream in(opt.annotations);
    if (!in) throw adhom::Error("cannot open annotations: " + opt.annotations.string());
    const auto set = adhom::AnnotationSet::parse(in, opt.labels);
    const auto dist = adhom::label_distribution(set);
    auto out = open_out(g.out / "reports" / "label_distribution.tsv");
    out << "item_id";
    for (std::size_t l = 0; l < set.label_domain(); ++l) out << "\tp" << l;
    out << "\n";
    out.precision(10);
    for (std::size_t i = 0; i < set.num_items(); ++i) {
        out << set.items()[i];
        for (double p : dist[i]) out << "\t" << p;
        out << "\n";
    }
    std::cout << "distribution over " << set.num_items() << " items written\n";
    write_manifest(g, "annotate distribution",
                   {{"annotations", opt.annotations.string()}, {"labels", std::to_string(opt.labels)}},
                   opt.annotations);
}

void cmd_annotate_spans(const GlobalOptions& g, const AnnotateOptions& opt) {
    // Item ids are doc_id:token_position; spans are estimated per document.
    std::ifstream in(opt.annotations);
    if (!in) throw adhom::Error("cannot open annotations: " + opt.annotations.string());
    std::map<std::string, adhom::AnnotationSet> per_doc;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto parts = adhom::split_ws(line);
        if (parts.empty()) continue;
        if (parts.size() != 3) {
            throw adhom::Error("span annotations: expected 3 columns at line " +
                               std::to_string(line_no));
        }
        const auto colon = parts[0].rfind(':');
        if (colon == std::string::npos) {
            throw adhom::Error("span annotations: item id must be doc:position at line " +
                               std::to_string(line_no));
        }
        const std::string doc = parts[0].substr(0, colon);
        const std::string pos = parts[0].substr(colon + 1);
        long long label = 0;
        if (!adhom::parse_i64(parts[2], label)) {
            throw adhom::Error("span annotations: non-integer label at line " +
                               std::to_string(line_no));
        }
        per_doc.try_emplace(doc, 2).first->second.add(pos, parts[1], static_cast<int>(label));
    }
    auto out = open_out(g.out / "reports" / "spans.tsv");
    out << "doc_id\tspan_begin\tspan_end\n";
    for (const auto& [doc, set] : per_doc) {
        const auto spans = adhom::span_gold(set, opt.threshold, opt.restarts, opt.iterations,
                                            opt.smoothing, g.seed);
        for (const auto& s : spans) {
            out << doc << "\t" << s.begin << "\t" << s.end << "\n";
        }
    }
    std::cout << "span gold estimated for " << per_doc.size() << " documents\n";
    write_manifest(g, "annotate spans",
                   {{"annotations", opt.annotations.string()},
                    {"threshold", std::to_string(opt.threshold)}},
                   opt.annotations);
}

void cmd_annotate_scale(const GlobalOptions& g, const AnnotateOptions& opt) {
    std::ifstream in(opt.annotations);
    if (!in) throw adhom::Error("cannot open annotations: " + opt.annotations.string());
    const auto set = adhom::AnnotationSet::parse(in, opt.labels);
    const auto means = adhom::average_scale(set);
    auto out = open_out(g.out / "reports" / "scale_means.tsv");
    out << "item_id\tmean_score\n";
    out.precision(10);
    for (const auto& [item, mean] : means) out << item << "\t" << mean << "\n";
    std::cout << "scale means for " << means.size() << " items written\n";
    write_manifest(g, "annotate scale",
                   {{"annotations", opt.annotations.string()}, {"labels", std::to_string(opt.labels)}},
                   opt.annotations);
}

struct LdaOptions {
    fs::path data;
    std::string model;
    std::size_t k = 50;
    double alpha = 0.0;  // 0 -> 50/k default
    double beta = 0.01;
    std::size_t iterations = 500;
    std::size_t min_count = 1;
    bool lowercase = false;
    std::string exclude_ids;
    std::size_t top_words = 15;
};

void cmd_lda_fit(const GlobalOptions& g, const LdaOptions& opt) {
    const auto raw = load_raw_dataset(opt.data);
    std::unordered_set<std::string> excluded;
    if (!opt.exclude_ids.empty()) excluded = read_id_set(opt.exclude_ids);
    std::vector<std::vector<std::string>> token_docs;
    for (const auto& row : raw.rows) {
        if (excluded.count(row.id)) continue;
        token_docs.push_back(adhom::tokenize(row.text, opt.lowercase));
    }
    if (token_docs.empty()) throw adhom::Error("lda fit: no documents left after exclusion");
    const auto vocab = adhom::Vocabulary::build(token_docs, opt.min_count);
    std::vector<std::vector<std::size_t>> docs;
    for (const auto& toks : token_docs) {
        std::vector<std::size_t> doc;
        for (const auto& t : toks) {
            const auto idx = vocab.lookup(t);
            if (idx != adhom::kPadIndex) doc.push_back(idx);
        }
        docs.push_back(std::move(doc));
    }
    const double alpha = opt.alpha > 0.0 ? opt.alpha : 50.0 / static_cast<double>(opt.k);
    auto model = adhom::fit_lda(docs, vocab.size(), opt.k, alpha, opt.beta, opt.iterations, g.seed);
    model.vocab_hash = vocab.content_hash();

    const fs::path model_path = g.out / "models" / "lda.bin";
    ensure_dir(model_path.parent_path());
    adhom::save_lda(model, model_path.string());
    {
        auto out = open_out(g.out / "models" / "lda.vocab");
        vocab.save(out);
    }
    {
        auto out = open_out(g.out / "reports" / "lda_top_words.txt");
        const auto tops = adhom::top_words(model, opt.top_words + adhom::kNumReservedTokens);
        for (std::size_t t = 0; t < tops.size(); ++t) {
            out << "topic " << t << ":";
            std::size_t shown = 0;
            for (std::size_t w : tops[t]) {
                if (w < adhom::kNumReservedTokens) continue;  // skip PAD/OOV/delimiter rows
                if (shown++ == opt.top_words) break;
                out << " " << vocab.token_at(w);
            }
            out << "\n";
        }
    }
    {
        auto out = open_out(g.out / "reports" / "lda_likelihood.tsv");
        out << "checkpoint\tper_token_log_likelihood\n";
        out.precision(12);
        for (std::size_t i = 0; i < model.likelihood_trace.size(); ++i) {
            out << i << "\t" << model.likelihood_trace[i] << "\n";
        }
    }
    std::cout << "lda: k=" << opt.k << " fitted on " << docs.size() << " documents, vocab "
              << vocab.size() << "\n";
    write_manifest(g, "lda fit",
                   {{"data", opt.data.string()},
                    {"k", std::to_string(opt.k)},
                    {"alpha", std::to_string(alpha)},
                    {"beta", std::to_string(opt.beta)},
                    {"iterations", std::to_string(opt.iterations)},
                    {"min_count", std::to_string(opt.min_count)},
                    {"exclude_ids", opt.exclude_ids}},
                   opt.data);
}

void cmd_lda_infer(const GlobalOptions& g, const LdaOptions& opt) {
    const auto bundle = load_lda_bundle(opt.model);
    const auto raw = load_raw_dataset(opt.data);
    auto out = open_out(g.out / "reports" / "theta.tsv");
    out << "id";
    for (std::size_t t = 0; t < bundle.model.k; ++t) out << "\ttopic" << t;
    out << "\n";
    out.precision(10);
    for (const auto& row : raw.rows) {
        const auto theta = theta_for_text(bundle, row.text, opt.lowercase, g.seed, row.id);
        out << row.id;
        for (double v : theta) out << "\t" << v;
        out << "\n";
    }
    std::cout << "theta for " << raw.rows.size() << " documents written\n";
    write_manifest(g, "lda infer", {{"model", opt.model}, {"data", opt.data.string()}}, opt.data);
}

void save_model_bundle(const GlobalOptions& g, const std::string& tag, const adhom::Model& model,
                       const adhom::Vocabulary& vocab, const adhom::DataSet& data) {
    const fs::path model_path = g.out / "models" / (tag + ".bin");
    ensure_dir(model_path.parent_path());
    adhom::save_checkpoint(model, model_path.string());
    {
        auto out = open_out(g.out / "models" / (tag + ".vocab"));
        vocab.save(out);
    }
    {
        auto out = open_out(g.out / "models" / (tag + ".train_ids.txt"));
        for (const auto& inst : data.instances) out << inst.id << "\n";
    }
}

void cmd_train(const GlobalOptions& g, const std::string& arch_name, const fs::path& data_path,
               const NetOptions& net, const std::string& tag_opt) {
    const adhom::Arch arch = adhom::arch_from_name(arch_name);
    const auto raw = load_raw_dataset(data_path);
    std::optional<LdaBundle> lda;
    if (arch == adhom::Arch::CnnLda) {
        if (net.lda_model.empty()) throw adhom::Error("train cnn-lda requires --lda");
        lda = load_lda_bundle(net.lda_model);
    }
    std::vector<std::vector<std::string>> token_docs;
    for (const auto& row : raw.rows) token_docs.push_back(adhom::tokenize(row.text, net.lowercase));
    const auto vocab = adhom::Vocabulary::build(token_docs, net.min_count);
    std::size_t dim = 0;
    auto opts = net;
    const auto table = make_embeddings(net, vocab, g.seed, &dim);
    opts.dim = dim;

    const auto data = build_dataset(raw, vocab, net.lowercase, lda ? &*lda : nullptr, g.seed);
    const auto mcfg = opts.model_config(arch, data.class_names.size(), raw.regression,
                                        lda ? lda->model.k : 0);
    const auto tcfg = opts.train_config(g.seed, raw.regression);
    const auto result = adhom::train(arch, mcfg, tcfg, data, table, vocab.content_hash());

    const std::string tag = tag_opt.empty() ? arch_name : tag_opt;
    save_model_bundle(g, tag, result.model, vocab, data);
    {
        auto out = open_out(g.out / "reports" / ("train_" + tag + "_loss.tsv"));
        out << "epoch\tmean_loss\n";
        out.precision(12);
        for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
            out << e << "\t" << result.loss_trace[e] << "\n";
        }
    }
    if (!raw.regression) {
        std::cout << "trained " << arch_name << " on " << data.size() << " instances, train accuracy "
                  << adhom::accuracy(result.model, data) << "\n";
    } else {
        std::cout << "trained " << arch_name << " regressor on " << data.size() << " instances\n";
    }
    auto params = opts.to_params();
    params["data"] = data_path.string();
    params["arch"] = arch_name;
    params["tag"] = tag;
    write_manifest(g, "train " + arch_name, params, data_path);
}

void cmd_cv(const GlobalOptions& g, const std::string& arch_name, const fs::path& data_path,
            const NetOptions& net, std::size_t folds) {
    const adhom::Arch arch = adhom::arch_from_name(arch_name);
    const auto raw = load_raw_dataset(data_path);
    std::optional<LdaBundle> lda;
    if (arch == adhom::Arch::CnnLda) {
        if (net.lda_model.empty()) throw adhom::Error("cv with cnn-lda requires --lda");
        lda = load_lda_bundle(net.lda_model);
    }
    std::vector<std::vector<std::string>> token_docs;
    for (const auto& row : raw.rows) token_docs.push_back(adhom::tokenize(row.text, net.lowercase));
    const auto vocab = adhom::Vocabulary::build(token_docs, net.min_count);
    std::size_t dim = 0;
    auto opts = net;
    const auto table = make_embeddings(net, vocab, g.seed, &dim);
    opts.dim = dim;

    const auto data = build_dataset(raw, vocab, net.lowercase, lda ? &*lda : nullptr, g.seed);
    const auto mcfg = opts.model_config(arch, data.class_names.size(), raw.regression,
                                        lda ? lda->model.k : 0);
    const auto tcfg = opts.train_config(g.seed, raw.regression);
    const auto result =
        adhom::cross_validate(arch, mcfg, tcfg, data, table, vocab.content_hash(), folds, g.threads);

    {
        auto out = open_out(g.out / "reports" / "cv_metrics.tsv");
        out << "fold\tmetric\tvalue\n";
        out.precision(10);
        for (std::size_t f = 0; f < result.fold_metric.size(); ++f) {
            out << f << "\t" << result.metric_name << "\t" << result.fold_metric[f] << "\n";
        }
        out << "mean\t" << result.metric_name << "\t" << result.mean_metric << "\n";
    }
    std::cout << arch_name << " " << folds << "-fold cv mean " << result.metric_name << " "
              << result.mean_metric << "\n";
    auto params = opts.to_params();
    params["data"] = data_path.string();
    params["arch"] = arch_name;
    params["folds"] = std::to_string(folds);
    write_manifest(g, "cv", params, data_path);
}

void cmd_predict(const GlobalOptions& g, const std::string& model_path, const std::string& vocab_path,
                 const fs::path& data_path, const std::string& lda_path, bool lowercase) {
    const auto lm = load_model_bundle(model_path, vocab_path);
    std::optional<LdaBundle> lda;
    if (lm.model.config().topic_dim > 0) {
        if (lda_path.empty()) throw adhom::Error("this model needs --lda for topic vectors");
        lda = load_lda_bundle(lda_path);
    }
    const auto raw = load_raw_dataset(data_path);
    auto out = open_out(g.out / "reports" / "predictions.tsv");
    const bool regression = lm.model.config().regression;
    if (regression) {
        out << "id\tscore\n";
    } else {
        out << "id\tprediction\tprobabilities\n";
    }
    out.precision(10);
    for (const auto& row : raw.rows) {
        const auto doc = adhom::TokenizedDoc::make(row.text, lm.vocab, lowercase);
        std::vector<double> theta;
        if (lda) theta = theta_for_text(*lda, row.text, lowercase, g.seed, row.id);
        const auto result = lm.model.predict(doc.indices, lda ? &theta : nullptr);
        if (regression) {
            out << row.id << "\t" << result[0] << "\n";
        } else {
            std::size_t best = 0;
            for (std::size_t c = 1; c < result.size(); ++c) {
                if (result[c] > result[best]) best = c;
            }
            out << row.id << "\t" << best << "\t";
            for (std::size_t c = 0; c < result.size(); ++c) out << (c == 0 ? "" : ",") << result[c];
            out << "\n";
        }
    }
    std::cout << "predictions for " << raw.rows.size() << " documents written\n";
    write_manifest(g, "predict", {{"model", model_path}, {"data", data_path.string()}}, data_path);
}

void cmd_extrapolate(const GlobalOptions& g, const std::string& model_path,
                     const std::string& vocab_path, const fs::path& data_path,
                     const std::string& train_ids_path, const std::string& lda_path, bool lowercase) {
    const auto lm = load_model_bundle(model_path, vocab_path);
    if (!lm.model.config().regression) {
        throw adhom::Error("extrapolate needs a regression model checkpoint");
    }
    std::optional<LdaBundle> lda;
    if (lm.model.config().topic_dim > 0) {
        if (lda_path.empty()) throw adhom::Error("this model needs --lda for topic vectors");
        lda = load_lda_bundle(lda_path);
    }
    const auto raw = load_raw_dataset(data_path);
    std::vector<adhom::ExtrapolationDoc> docs;
    for (const auto& row : raw.rows) {
        if (row.label != adhom::kLabelAhGroup && row.label != adhom::kLabelDeltaGroup) {
            throw adhom::Error(std::string("extrapolate: row ") + row.id + " must be labeled " +
                               adhom::kLabelAhGroup + " or " + adhom::kLabelDeltaGroup);
        }
        docs.push_back({row.id, row.text, row.label == adhom::kLabelAhGroup});
    }
    const auto train_ids = read_id_set(train_ids_path);
    auto scorer = [&](const std::string& text) {
        const auto doc = adhom::TokenizedDoc::make(text, lm.vocab, lowercase);
        std::vector<double> theta;
        if (lda) {
            const auto tdoc = adhom::TokenizedDoc::make(text, lda->vocab, lowercase);
            theta = adhom::infer_theta(lda->model, tdoc.indices, 50,
                                       adhom::mix_seed(g.seed, adhom::fnv1a64(text)));
        }
        return lm.model.predict_score(doc.indices, lda ? &theta : nullptr);
    };
    const auto res = adhom::extrapolate(scorer, docs, train_ids);
    auto out = open_out(g.out / "reports" / "extrapolation.txt");
    out.precision(10);
    out << "group_a_label\t" << adhom::kLabelAhGroup << "\n";
    out << "group_b_label\t" << adhom::kLabelDeltaGroup << "\n";
    out << "group_a_n\t" << res.scores_a.size() << "\n";
    out << "group_b_n\t" << res.scores_b.size() << "\n";
    out << "group_a_mean\t" << res.mean_a << "\n";
    out << "group_b_mean\t" << res.mean_b << "\n";
    out << "ks_statistic\t" << res.ks.statistic << "\n";
    out << "ks_p_value\t" << res.ks.p_value << "\n";
    std::cout << "extrapolation: D=" << res.ks.statistic << " p=" << res.ks.p_value << "\n";
    write_manifest(g, "extrapolate",
                   {{"model", model_path}, {"data", data_path.string()}, {"train_ids", train_ids_path}},
                   data_path);
}

void cmd_kstest(const GlobalOptions& g, const fs::path& a_path, const fs::path& b_path) {
    const auto res = adhom::ks_two_sample(read_numbers(a_path), read_numbers(b_path));
    auto out = open_out(g.out / "reports" / "ks.txt");
    out.precision(10);
    out << "statistic\t" << res.statistic << "\n";
    out << "p_value\t" << res.p_value << "\n";
    out << "n1\t" << res.n1 << "\n";
    out << "n2\t" << res.n2 << "\n";
    std::cout << "KS D=" << res.statistic << " p=" << res.p_value << "\n";
    write_manifest(g, "kstest", {{"a", a_path.string()}, {"b", b_path.string()}}, a_path);
}

void cmd_kappa(const GlobalOptions& g, const fs::path& a_path, const fs::path& b_path) {
    const double kappa = adhom::cohen_kappa(read_labels(a_path), read_labels(b_path));
    auto out = open_out(g.out / "reports" / "kappa.txt");
    out.precision(10);
    out << "cohen_kappa\t" << kappa << "\n";
    std::cout << "Cohen's kappa " << kappa << "\n";
    write_manifest(g, "kappa", {{"a", a_path.string()}, {"b", b_path.string()}}, a_path);
}

void cmd_spearman(const GlobalOptions& g, const fs::path& a_path, const fs::path& b_path) {
    const double rho = adhom::spearman(read_numbers(a_path), read_numbers(b_path));
    auto out = open_out(g.out / "reports" / "spearman.txt");
    out.precision(10);
    out << "spearman_rho\t" << rho << "\n";
    std::cout << "Spearman rho " << rho << "\n";
    write_manifest(g, "spearman", {{"a", a_path.string()}, {"b", b_path.string()}}, a_path);
}

void cmd_explain(const GlobalOptions& g, const std::string& model_path, const std::string& vocab_path,
                 const fs::path& data_path, bool lowercase, const std::string& positive_label,
                 std::size_t ngram_n, std::size_t top_k, const std::string& bucket_name_opt) {
    const auto lm = load_model_bundle(model_path, vocab_path);
    if (lm.model.arch() != adhom::Arch::Ssae) {
        throw adhom::Error("explain requires an ssae checkpoint (attention weights)");
    }
    const auto raw = load_raw_dataset(data_path);
    if (raw.regression) throw adhom::Error("explain needs labeled classification data");

    std::vector<std::string> class_names;
    {
        std::set<std::string> labels;
        for (const auto& row : raw.rows) labels.insert(row.label);
        class_names.assign(labels.begin(), labels.end());
    }
    std::vector<std::string> predictions, gold;
    std::vector<adhom::AttentionRecord> records;
    for (const auto& row : raw.rows) {
        const auto doc = adhom::TokenizedDoc::make(row.text, lm.vocab, lowercase);
        const auto cls = lm.model.predict_class(doc.indices);
        const auto weights = lm.model.token_attention(doc.indices);
        adhom::AttentionRecord rec;
        rec.id = row.id;
        rec.tokens = doc.tokens;
        rec.weights = weights;
        records.push_back(std::move(rec));
        predictions.push_back(cls < class_names.size() ? class_names[cls] : "?");
        gold.push_back(row.label);
    }
    const auto buckets = adhom::error_buckets(predictions, gold, std::move(records), positive_label);

    {
        auto out = open_out(g.out / "reports" / "buckets.tsv");
        out << "id\tpredicted\tgold\tbucket\n";
        for (adhom::Bucket b :
             {adhom::Bucket::TP, adhom::Bucket::FP, adhom::Bucket::FN, adhom::Bucket::TN}) {
            for (const auto& rec : buckets.of(b)) {
                out << rec.id << "\t" << rec.predicted << "\t" << rec.gold << "\t"
                    << adhom::bucket_name(b) << "\n";
            }
        }
    }
    for (adhom::Bucket b :
         {adhom::Bucket::TP, adhom::Bucket::FP, adhom::Bucket::FN, adhom::Bucket::TN}) {
        for (const auto& rec : buckets.of(b)) {
            auto out = open_out(g.out / "heatmaps" / (rec.id + ".html"));
            out << adhom::render_heatmap(rec);
        }
    }
    {
        adhom::Bucket target = adhom::Bucket::TP;
        if (bucket_name_opt == "FP") target = adhom::Bucket::FP;
        if (bucket_name_opt == "FN") target = adhom::Bucket::FN;
        if (bucket_name_opt == "TN") target = adhom::Bucket::TN;
        auto out = open_out(g.out / "reports" / "trigger_ngrams.tsv");
        out << "ngram\tmean_weight\toccurrences\n";
        out.precision(10);
        if (!buckets.of(target).empty()) {
            for (const auto& entry : adhom::top_trigger_ngrams(buckets.of(target), ngram_n, top_k)) {
                out << entry.ngram << "\t" << entry.mean_weight << "\t" << entry.occurrences << "\n";
            }
        }
    }
    std::cout << "explain: TP " << buckets.tp.size() << ", FP " << buckets.fp.size() << ", FN "
              << buckets.fn.size() << ", TN " << buckets.tn.size() << "\n";
    write_manifest(g, "explain",
                   {{"model", model_path},
                    {"data", data_path.string()},
                    {"positive_label", positive_label},
                    {"ngram", std::to_string(ngram_n)},
                    {"top_k", std::to_string(top_k)},
                    {"bucket", bucket_name_opt}},
                   data_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ad hominem debate analysis toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "plain key=value config file; explicit flags win");

    GlobalOptions g;
    app.add_option("--out", g.out, "output directory (manifests/, datasets/, models/, reports/, heatmaps/)")
        ->capture_default_str();
    app.add_option("--seed", g.seed, "master seed for every stochastic step")->capture_default_str();
    app.add_option("--threads", g.threads, "worker cap for parallel sections")->capture_default_str();

    // ingest / stats
    fs::path corpus_path;
    auto* ingest_cmd = app.add_subcommand("ingest", "parse a corpus file and report quarantined records");
    ingest_cmd->add_option("--corpus", corpus_path, "corpus jsonl file")->required();
    auto* stats_cmd = app.add_subcommand("stats", "corpus statistics and the first-attack histogram");
    stats_cmd->add_option("--corpus", corpus_path, "corpus jsonl file")->required();

    // sample
    auto* sample_cmd = app.add_subcommand("sample", "build datasets from a corpus");
    sample_cmd->require_subcommand(1);
    NetOptions sample_net;
    fs::path sample_corpus;
    std::vector<CLI::App*> sample_kinds;
    for (const char* kind : {"binary", "op-groups", "triplets"}) {
        auto* sub = sample_cmd->add_subcommand(kind);
        sub->add_option("--corpus", sample_corpus, "corpus jsonl file")->required();
        sample_net.add_flags(sub);
        sample_kinds.push_back(sub);
    }

    // annotate
    auto* annotate_cmd = app.add_subcommand("annotate", "aggregate crowd annotations");
    annotate_cmd->require_subcommand(1);
    AnnotateOptions ann;
    auto add_ann_flags = [&](CLI::App* sub, bool mace_params) {
        sub->add_option("--annotations", ann.annotations, "annotation table (item annotator label)")
            ->required();
        sub->add_option("--labels", ann.labels, "label domain size");
        if (mace_params) {
            sub->add_option("--threshold", ann.threshold, "confidence threshold (top fraction kept)");
            sub->add_option("--restarts", ann.restarts, "EM restarts");
            sub->add_option("--iterations", ann.iterations, "EM iterations per restart");
            sub->add_option("--smoothing", ann.smoothing, "additive smoothing on M-step counts");
        }
    };
    auto* ann_mace = annotate_cmd->add_subcommand("mace", "EM gold labels with confidences");
    add_ann_flags(ann_mace, true);
    auto* ann_dist = annotate_cmd->add_subcommand("distribution", "per-item label distributions");
    add_ann_flags(ann_dist, false);
    auto* ann_spans = annotate_cmd->add_subcommand("spans", "gold token spans (ids doc:position)");
    add_ann_flags(ann_spans, true);
    auto* ann_scale = annotate_cmd->add_subcommand("scale", "per-item mean of ordinal scale labels");
    add_ann_flags(ann_scale, false);

    // lda
    auto* lda_cmd = app.add_subcommand("lda", "topic model fitting and inference");
    lda_cmd->require_subcommand(1);
    LdaOptions lda;
    auto* lda_fit = lda_cmd->add_subcommand("fit", "collapsed Gibbs fitting");
    lda_fit->add_option("--data", lda.data, "jsonl docs with id/text")->required();
    lda_fit->add_option("--k", lda.k, "topic count");
    lda_fit->add_option("--alpha", lda.alpha, "document-topic prior (default 50/k)");
    lda_fit->add_option("--beta", lda.beta, "topic-word prior");
    lda_fit->add_option("--iterations", lda.iterations, "Gibbs sweeps");
    lda_fit->add_option("--min-count", lda.min_count, "vocabulary frequency cutoff");
    lda_fit->add_flag("--lowercase", lda.lowercase, "lowercase before tokenizing");
    lda_fit->add_option("--exclude-ids", lda.exclude_ids, "file of ids to hold out of fitting");
    lda_fit->add_option("--top-words", lda.top_words, "words per topic in the report");
    auto* lda_infer = lda_cmd->add_subcommand("infer", "fold-in topic mixtures for documents");
    lda_infer->add_option("--model", lda.model, "fitted topic model")->required();
    lda_infer->add_option("--data", lda.data, "jsonl docs with id/text")->required();
    lda_infer->add_flag("--lowercase", lda.lowercase, "lowercase before tokenizing");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on a labeled dataset");
    train_cmd->require_subcommand(1);
    NetOptions train_net;
    fs::path train_data;
    std::string train_tag;
    for (const char* arch : {"cnn", "bilstm", "ssae", "cnn-lda"}) {
        auto* sub = train_cmd->add_subcommand(arch);
        sub->add_option("--data", train_data, "jsonl dataset")->required();
        sub->add_option("--tag", train_tag, "output name (default: architecture)");
        train_net.add_flags(sub);
    }

    // cv
    auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
    NetOptions cv_net;
    fs::path cv_data;
    std::string cv_arch;
    std::size_t cv_folds = 10;
    cv_cmd->add_option("--model", cv_arch, "cnn|bilstm|ssae|cnn-lda")->required();
    cv_cmd->add_option("--data", cv_data, "jsonl dataset")->required();
    cv_cmd->add_option("--folds", cv_folds, "fold count");
    cv_net.add_flags(cv_cmd);

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "score documents with a trained model");
    std::string predict_model, predict_vocab, predict_lda;
    fs::path predict_data;
    bool predict_lowercase = false;
    predict_cmd->add_option("--model", predict_model, "model checkpoint")->required();
    predict_cmd->add_option("--vocab", predict_vocab, "vocabulary file (default: model path .vocab)");
    predict_cmd->add_option("--data", predict_data, "jsonl documents")->required();
    predict_cmd->add_option("--lda", predict_lda, "topic model for fusion checkpoints");
    predict_cmd->add_flag("--lowercase", predict_lowercase, "lowercase before tokenizing");

    // extrapolate
    auto* extra_cmd = app.add_subcommand("extrapolate", "score held-out groups and compare them");
    std::string extra_model, extra_vocab, extra_lda, extra_train_ids;
    fs::path extra_data;
    bool extra_lowercase = false;
    extra_cmd->add_option("--model", extra_model, "regression checkpoint")->required();
    extra_cmd->add_option("--vocab", extra_vocab, "vocabulary file (default: model path .vocab)");
    extra_cmd->add_option("--data", extra_data, "op-groups jsonl")->required();
    extra_cmd->add_option("--train-ids", extra_train_ids, "ids used in training (leakage check)")
        ->required();
    extra_cmd->add_option("--lda", extra_lda, "topic model for fusion checkpoints");
    extra_cmd->add_flag("--lowercase", extra_lowercase, "lowercase before tokenizing");

    // statistics
    fs::path stat_a, stat_b;
    auto* ks_cmd = app.add_subcommand("kstest", "two-sample Kolmogorov-Smirnov test");
    ks_cmd->add_option("--a", stat_a, "sample file, one number per line")->required();
    ks_cmd->add_option("--b", stat_b, "sample file, one number per line")->required();
    auto* kappa_cmd = app.add_subcommand("kappa", "Cohen's kappa between two label files");
    kappa_cmd->add_option("--a", stat_a, "label file, one label per line")->required();
    kappa_cmd->add_option("--b", stat_b, "label file, one label per line")->required();
    auto* spearman_cmd = app.add_subcommand("spearman", "Spearman rank correlation");
    spearman_cmd->add_option("--a", stat_a, "values file")->required();
    spearman_cmd->add_option("--b", stat_b, "values file")->required();

    // explain
    auto* explain_cmd = app.add_subcommand("explain", "attention heat maps, buckets, trigger phrases");
    std::string explain_model, explain_vocab, explain_bucket = "TP", explain_positive = "ah";
    fs::path explain_data;
    bool explain_lowercase = false;
    std::size_t explain_ngram = 2, explain_topk = 50;
    explain_cmd->add_option("--model", explain_model, "ssae checkpoint")->required();
    explain_cmd->add_option("--vocab", explain_vocab, "vocabulary file (default: model path .vocab)");
    explain_cmd->add_option("--data", explain_data, "labeled jsonl dataset")->required();
    explain_cmd->add_option("--positive-label", explain_positive, "label treated as positive");
    explain_cmd->add_option("--ngram", explain_ngram, "n-gram size for trigger phrases");
    explain_cmd->add_option("--top-k", explain_topk, "trigger phrases to keep");
    explain_cmd->add_option("--bucket", explain_bucket, "bucket for trigger phrases: TP|FP|FN|TN");
    explain_cmd->add_flag("--lowercase", explain_lowercase, "lowercase before tokenizing");

    // Let --out/--seed/--threads appear after the subcommand name.
    const std::function<void(CLI::App*)> enable_fallthrough = [&](CLI::App* cmd) {
        cmd->fallthrough();
        for (auto* sub : cmd->get_subcommands({})) enable_fallthrough(sub);
    };
    for (auto* sub : app.get_subcommands({})) enable_fallthrough(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*ingest_cmd) {
            cmd_ingest(g, corpus_path);
        } else if (*stats_cmd) {
            cmd_stats(g, corpus_path);
        } else if (*sample_cmd) {
            const char* kinds[] = {"binary", "op-groups", "triplets"};
            for (std::size_t i = 0; i < sample_kinds.size(); ++i) {
                if (*sample_kinds[i]) cmd_sample(g, kinds[i], sample_corpus, sample_net);
            }
        } else if (*annotate_cmd) {
            if (*ann_mace) cmd_annotate_mace(g, ann);
            if (*ann_dist) cmd_annotate_distribution(g, ann);
            if (*ann_spans) cmd_annotate_spans(g, ann);
            if (*ann_scale) cmd_annotate_scale(g, ann);
        } else if (*lda_cmd) {
            if (*lda_fit) cmd_lda_fit(g, lda);
            if (*lda_infer) cmd_lda_infer(g, lda);
        } else if (*train_cmd) {
            for (auto* sub : train_cmd->get_subcommands()) {
                cmd_train(g, sub->get_name(), train_data, train_net, train_tag);
            }
        } else if (*cv_cmd) {
            cmd_cv(g, cv_arch, cv_data, cv_net, cv_folds);
        } else if (*predict_cmd) {
            cmd_predict(g, predict_model, predict_vocab, predict_data, predict_lda, predict_lowercase);
        } else if (*extra_cmd) {
            cmd_extrapolate(g, extra_model, extra_vocab, extra_data, extra_train_ids, extra_lda,
                            extra_lowercase);
        } else if (*ks_cmd) {
            cmd_kstest(g, stat_a, stat_b);
        } else if (*kappa_cmd) {
            cmd_kappa(g, stat_a, stat_b);
        } else if (*spearman_cmd) {
            cmd_spearman(g, stat_a, stat_b);
        } else if (*explain_cmd) {
            cmd_explain(g, explain_model, explain_vocab, explain_data, explain_lowercase,
                        explain_positive, explain_ngram, explain_topk, explain_bucket);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
