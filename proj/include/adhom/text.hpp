#pragma once
// Tokenization, vocabulary, pretrained word vectors, averaged document vectors.

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adhom/common.hpp"

namespace adhom {

inline constexpr std::size_t kPadIndex = 0;
inline constexpr std::size_t kOovIndex = 1;
inline constexpr std::size_t kCommentBeginIndex = 2;
inline constexpr std::size_t kNumReservedTokens = 3;

inline constexpr const char* kPadToken = "<PAD>";
inline constexpr const char* kOovToken = "OOV";
inline constexpr const char* kCommentBeginToken = "OOV_comment_begin";

namespace detail {

// Underscore counts as a word character so delimiter tokens survive re-tokenization.
inline bool is_word_char(unsigned char c) {
    if (c >= 0x80) return true;  // UTF-8 continuation/lead bytes stay inside tokens
    return std::isalnum(c) || c == '_';
}

inline bool is_url_start(std::string_view s, std::size_t i) {
    auto starts = [&](std::string_view prefix) {
        if (i + prefix.size() > s.size()) return false;
        for (std::size_t k = 0; k < prefix.size(); ++k) {
            if (std::tolower(static_cast<unsigned char>(s[i + k])) != prefix[k]) return false;
        }
        return true;
    };
    return starts("http://") || starts("https://") || starts("www.");
}

inline const std::vector<std::string>& clitic_suffixes() {
    static const std::vector<std::string> kSuffixes = {"n't", "'re", "'ve", "'ll", "'s", "'d", "'m"};
    return kSuffixes;
}

inline bool ends_with_ci(std::string_view s, std::string_view suffix) {
    if (s.size() < suffix.size()) return false;
    for (std::size_t k = 0; k < suffix.size(); ++k) {
        if (std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + k])) != suffix[k]) return false;
    }
    return true;
}

inline void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
    if (chunk.empty()) return;
    for (const std::string& suf : clitic_suffixes()) {
        if (chunk.size() == suf.size() && ends_with_ci(chunk, suf)) {
            out.emplace_back(chunk);  // bare clitic stays atomic
            return;
        }
        if (chunk.size() > suf.size() && ends_with_ci(chunk, suf)) {
            tokenize_chunk(chunk.substr(0, chunk.size() - suf.size()), out);
            out.emplace_back(chunk.substr(chunk.size() - suf.size()));
            return;
        }
    }
    const unsigned char last = static_cast<unsigned char>(chunk.back());
    if (chunk.size() > 1 && !is_word_char(last)) {
        tokenize_chunk(chunk.substr(0, chunk.size() - 1), out);
        out.emplace_back(chunk.substr(chunk.size() - 1));
        return;
    }
    // Linear scan: word-character runs vs. single punctuation tokens.
    std::size_t i = 0;
    while (i < chunk.size()) {
        if (is_word_char(static_cast<unsigned char>(chunk[i]))) {
            std::size_t j = i;
            while (j < chunk.size() && is_word_char(static_cast<unsigned char>(chunk[j]))) ++j;
            out.emplace_back(chunk.substr(i, j - i));
            i = j;
        } else {
            out.emplace_back(chunk.substr(i, 1));
            ++i;
        }
    }
}

}  // namespace detail

// Deterministic rule-based tokenizer: whitespace + punctuation splits, English
// clitic splitting, URL-like spans replaced by the OOV surface token.
inline std::vector<std::string> tokenize(std::string_view text, bool lowercase = false) {
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= n) break;
        if (detail::is_url_start(text, i)) {
            std::size_t j = i;
            while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            // Peel trailing punctuation off the URL span.
            std::size_t end = j;
            while (end > i) {
                const char c = text[end - 1];
                if (c == ')' || c == ']' || c == ',' || c == '.' || c == ';' || c == ':' || c == '!' ||
                    c == '?' || c == '\'' || c == '"') {
                    --end;
                } else {
                    break;
                }
            }
            if (end == i) end = j;
            out.emplace_back(kOovToken);
            i = end;
            continue;
        }
        std::size_t j = i;
        while (j < n && !std::isspace(static_cast<unsigned char>(text[j])) &&
               !detail::is_url_start(text, j)) {
            ++j;
        }
        detail::tokenize_chunk(text.substr(i, j - i), out);
        i = j;
    }
    if (lowercase) {
        for (auto& t : out) t = lower_ascii(t);
    }
    return out;
}

class Vocabulary {
public:
    Vocabulary() {
        add_reserved();
    }

    // Tokens with frequency >= min_count, ordered by (frequency desc, token asc).
    static Vocabulary build(const std::vector<std::vector<std::string>>& docs, std::size_t min_count) {
        if (min_count < 1) throw Error("build_vocab: min_count must be >= 1");
        std::map<std::string, std::size_t> freq;
        for (const auto& doc : docs) {
            for (const auto& tok : doc) {
                if (tok == kPadToken || tok == kOovToken || tok == kCommentBeginToken) continue;
                ++freq[tok];
            }
        }
        std::vector<std::pair<std::string, std::size_t>> kept;
        for (const auto& [tok, count] : freq) {
            if (count >= min_count) kept.emplace_back(tok, count);
        }
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        Vocabulary v;
        for (const auto& [tok, count] : kept) v.push(tok);
        return v;
    }

    std::size_t size() const { return tokens_.size(); }

    // Never fails: unknown strings map to the OOV index.
    std::size_t lookup(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kOovIndex : it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) > 0; }
    const std::string& token_at(std::size_t index) const { return tokens_.at(index); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::uint64_t content_hash() const {
        std::uint64_t h = 14695981039346656037ULL;
        for (const auto& t : tokens_) {
            h = fnv1a64(t, h);
            h = fnv1a64("\x1f", h);
        }
        return h;
    }

    void save(std::ostream& out) const {
        for (std::size_t i = kNumReservedTokens; i < tokens_.size(); ++i) out << tokens_[i] << "\n";
    }

    static Vocabulary load(std::istream& in) {
        Vocabulary v;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) v.push(line);
        }
        return v;
    }

private:
    void add_reserved() {
        push(kPadToken);
        push(kOovToken);
        push(kCommentBeginToken);
    }
    void push(const std::string& token) {
        if (index_.count(token)) throw Error("vocabulary duplicate token: " + token);
        index_[token] = tokens_.size();
        tokens_.push_back(token);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct TokenizedDoc {
    std::vector<std::string> tokens;
    std::vector<std::size_t> indices;

    static TokenizedDoc make(std::string_view text, const Vocabulary& vocab, bool lowercase = false) {
        TokenizedDoc doc;
        doc.tokens = tokenize(text, lowercase);
        doc.indices.reserve(doc.tokens.size());
        for (const auto& t : doc.tokens) doc.indices.push_back(vocab.lookup(t));
        return doc;
    }
};

class EmbeddingTable {
public:
    EmbeddingTable() = default;

    std::size_t dim() const { return dim_; }
    std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
    const std::vector<double>& data() const { return data_; }

    const double* row(std::size_t i) const { return data_.data() + i * dim_; }

    // Rows for vocabulary words found in the vector file are copied; missing
    // words get a seeded uniform row in [-0.25, 0.25]; PAD stays all zero.
    static EmbeddingTable load(std::istream& in, const Vocabulary& vocab, std::uint64_t seed) {
        std::size_t dim = 0;
        std::unordered_map<std::string, std::vector<double>> file_rows;
        std::string line;
        std::size_t line_no = 0;
        bool first_content_line = true;
        while (std::getline(in, line)) {
            ++line_no;
            auto parts = split_ws(line);
            if (parts.empty()) continue;
            if (first_content_line && parts.size() == 2) {
                long long a = 0, b = 0;
                if (parse_i64(parts[0], a) && parse_i64(parts[1], b)) {
                    dim = static_cast<std::size_t>(b);
                    first_content_line = false;
                    continue;  // header "<count> <dim>"
                }
            }
            first_content_line = false;
            if (parts.size() < 2) {
                throw Error("embedding file: unparseable line " + std::to_string(line_no));
            }
            if (dim == 0) dim = parts.size() - 1;
            if (parts.size() - 1 != dim) {
                throw Error("embedding file: dimension mismatch at line " + std::to_string(line_no) +
                            " (expected " + std::to_string(dim) + ", got " +
                            std::to_string(parts.size() - 1) + ")");
            }
            if (!vocab.contains(parts[0])) continue;
            std::vector<double> values(dim);
            for (std::size_t k = 0; k < dim; ++k) {
                try {
                    values[k] = std::stod(parts[k + 1]);
                } catch (...) {
                    throw Error("embedding file: bad number at line " + std::to_string(line_no));
                }
            }
            file_rows[parts[0]] = std::move(values);
        }
        if (dim == 0) throw Error("embedding file: no usable content");
        return assemble(vocab, dim, seed, file_rows);
    }

    // All-random table (seeded) for runs without pretrained vectors.
    static EmbeddingTable random(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
        if (dim == 0) throw Error("embedding dim must be positive");
        std::unordered_map<std::string, std::vector<double>> none;
        return assemble(vocab, dim, seed, none);
    }

private:
    static EmbeddingTable assemble(const Vocabulary& vocab, std::size_t dim, std::uint64_t seed,
                                   const std::unordered_map<std::string, std::vector<double>>& file_rows) {
        EmbeddingTable t;
        t.dim_ = dim;
        t.data_.assign(vocab.size() * dim, 0.0);
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            if (i == kPadIndex) continue;  // PAD contributes nothing
            const std::string& tok = vocab.token_at(i);
            auto it = file_rows.find(tok);
            if (it != file_rows.end()) {
                std::copy(it->second.begin(), it->second.end(), t.data_.begin() + i * dim);
            } else {
                // Per-token seeding keeps rows stable across vocab/file changes.
                Rng rng(mix_seed(seed, fnv1a64(tok)));
                for (std::size_t k = 0; k < dim; ++k) {
                    t.data_[i * dim + k] = rng.uniform(-0.25, 0.25);
                }
            }
        }
        return t;
    }

    std::size_t dim_ = 0;
    std::vector<double> data_;
};

// Arithmetic mean of the non-PAD token rows; empty input gives the zero vector.
inline std::vector<double> avg_vector(const TokenizedDoc& doc, const EmbeddingTable& table) {
    std::vector<double> out(table.dim(), 0.0);
    std::size_t n = 0;
    for (std::size_t idx : doc.indices) {
        if (idx == kPadIndex) continue;
        const double* r = table.row(idx);
        for (std::size_t k = 0; k < table.dim(); ++k) out[k] += r[k];
        ++n;
    }
    if (n > 0) {
        for (double& v : out) v /= static_cast<double>(n);
    }
    return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace adhom
