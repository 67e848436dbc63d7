#pragma once
// Versioned binary model container: config, vocabulary hash, and little-endian
// double arrays per named parameter.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "adhom/common.hpp"
#include "adhom/neural.hpp"

namespace adhom {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline void put_str(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw Error("checkpoint: truncated file");
    return v;
}
inline std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw Error("checkpoint: truncated file");
    return v;
}
inline double get_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw Error("checkpoint: truncated file");
    return v;
}
inline std::string get_str(std::istream& in) {
    const std::uint32_t n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw Error("checkpoint: truncated file");
    return s;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'A', 'H', 'N', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const Model& model, std::ostream& out) {
    using namespace detail;
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u32(out, kCheckpointVersion);
    put_str(out, arch_name(model.arch()));
    const ModelConfig& c = model.config();
    put_u64(out, c.embedding_dim);
    put_u32(out, static_cast<std::uint32_t>(c.conv_widths.size()));
    for (std::size_t w : c.conv_widths) put_u64(out, w);
    put_u64(out, c.conv_filters);
    put_u64(out, c.lstm_hidden);
    put_u64(out, c.lstm_layers);
    put_u64(out, c.attention_hidden);
    put_u64(out, c.attention_rows);
    put_f64(out, c.dropout);
    put_u64(out, c.num_classes);
    put_u32(out, c.regression ? 1 : 0);
    put_u64(out, c.topic_dim);
    put_u32(out, c.freeze_embeddings ? 1 : 0);
    put_f64(out, c.attention_penalty);
    put_u64(out, model.vocab_hash());
    put_u64(out, model.params().size());
    for (const auto& [name, tensor] : model.params()) {
        put_str(out, name);
        put_u32(out, static_cast<std::uint32_t>(tensor.shape.size()));
        for (std::size_t d : tensor.shape) put_u64(out, d);
        out.write(reinterpret_cast<const char*>(tensor.values.data()),
                  static_cast<std::streamsize>(tensor.values.size() * sizeof(double)));
    }
    if (!out) throw Error("checkpoint: write failed");
}

inline void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("checkpoint: cannot open for writing: " + path);
    save_checkpoint(model, out);
}

inline Model load_checkpoint(std::istream& in) {
    using namespace detail;
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw Error("checkpoint: bad magic (not a model file)");
    }
    const std::uint32_t version = get_u32(in);
    if (version != kCheckpointVersion) {
        throw Error("checkpoint: unsupported version " + std::to_string(version));
    }
    const Arch arch = arch_from_name(get_str(in));
    ModelConfig c;
    c.embedding_dim = get_u64(in);
    c.conv_widths.resize(get_u32(in));
    for (auto& w : c.conv_widths) w = get_u64(in);
    c.conv_filters = get_u64(in);
    c.lstm_hidden = get_u64(in);
    c.lstm_layers = get_u64(in);
    c.attention_hidden = get_u64(in);
    c.attention_rows = get_u64(in);
    c.dropout = get_f64(in);
    c.num_classes = get_u64(in);
    c.regression = get_u32(in) != 0;
    c.topic_dim = get_u64(in);
    c.freeze_embeddings = get_u32(in) != 0;
    c.attention_penalty = get_f64(in);
    const std::uint64_t vocab_hash = get_u64(in);
    const std::uint64_t n_params = get_u64(in);
    std::vector<std::pair<std::string, Tensor>> params;
    params.reserve(n_params);
    for (std::uint64_t p = 0; p < n_params; ++p) {
        const std::string name = get_str(in);
        Tensor t;
        t.shape.resize(get_u32(in));
        for (auto& d : t.shape) d = get_u64(in);
        t.values.resize(t.count());
        in.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(double)));
        if (!in) throw Error("checkpoint: truncated parameter data");
        params.emplace_back(name, std::move(t));
    }
    return Model::restore(arch, std::move(c), vocab_hash, std::move(params));
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("checkpoint: cannot open: " + path);
    return load_checkpoint(in);
}

}  // namespace adhom
