#pragma once
// Latent Dirichlet Allocation via collapsed Gibbs sampling; topic mixtures for
// unseen documents come from fold-in sampling against the frozen model.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "adhom/common.hpp"

namespace adhom {

struct LdaModel {
    std::size_t k = 0;
    std::size_t vocab_size = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<double> phi;  // k x vocab_size, row-major; rows sum to 1
    std::vector<double> likelihood_trace;  // per-token log-likelihood, every 10 sweeps + final
    std::uint64_t vocab_hash = 0;

    double phi_at(std::size_t topic, std::size_t word) const { return phi[topic * vocab_size + word]; }
};

namespace detail {

inline double lda_log_likelihood(const std::vector<std::vector<std::size_t>>& docs,
                                 const std::vector<std::vector<double>>& theta,
                                 const std::vector<double>& phi, std::size_t k,
                                 std::size_t vocab_size) {
    double ll = 0.0;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        for (std::size_t w : docs[d]) {
            double p = 0.0;
            for (std::size_t t = 0; t < k; ++t) p += theta[d][t] * phi[t * vocab_size + w];
            ll += std::log(p + 1e-300);
        }
    }
    return ll;
}

}  // namespace detail

// Collapsed Gibbs over token-topic assignments; deterministic given the seed.
inline LdaModel fit_lda(const std::vector<std::vector<std::size_t>>& docs, std::size_t vocab_size,
                        std::size_t k, double alpha, double beta, std::size_t iterations,
                        std::uint64_t seed) {
    if (k < 1) throw Error("fit_lda: k must be >= 1");
    if (vocab_size == 0) throw Error("fit_lda: empty vocabulary");
    std::size_t total_tokens = 0;
    for (const auto& doc : docs) {
        for (std::size_t w : doc) {
            if (w >= vocab_size) throw Error("fit_lda: word id out of vocabulary range");
        }
        total_tokens += doc.size();
    }
    if (docs.empty() || total_tokens == 0) throw Error("fit_lda: no documents/tokens to fit");

    const std::size_t n_docs = docs.size();
    std::vector<std::vector<std::size_t>> z(n_docs);
    std::vector<double> n_dk(n_docs * k, 0.0);
    std::vector<double> n_kw(k * vocab_size, 0.0);
    std::vector<double> n_k(k, 0.0);

    Rng rng(mix_seed(seed, 0x7da));
    for (std::size_t d = 0; d < n_docs; ++d) {
        z[d].resize(docs[d].size());
        for (std::size_t i = 0; i < docs[d].size(); ++i) {
            const std::size_t t = static_cast<std::size_t>(rng.bounded(k));
            z[d][i] = t;
            n_dk[d * k + t] += 1.0;
            n_kw[t * vocab_size + docs[d][i]] += 1.0;
            n_k[t] += 1.0;
        }
    }

    LdaModel model;
    model.k = k;
    model.vocab_size = vocab_size;
    model.alpha = alpha;
    model.beta = beta;

    const double vbeta = static_cast<double>(vocab_size) * beta;
    std::vector<double> prob(k);
    auto record_likelihood = [&]() {
        std::vector<std::vector<double>> theta(n_docs, std::vector<double>(k, 0.0));
        for (std::size_t d = 0; d < n_docs; ++d) {
            const double denom = static_cast<double>(docs[d].size()) + static_cast<double>(k) * alpha;
            for (std::size_t t = 0; t < k; ++t) theta[d][t] = (n_dk[d * k + t] + alpha) / denom;
        }
        std::vector<double> phi(k * vocab_size, 0.0);
        for (std::size_t t = 0; t < k; ++t) {
            for (std::size_t w = 0; w < vocab_size; ++w) {
                phi[t * vocab_size + w] = (n_kw[t * vocab_size + w] + beta) / (n_k[t] + vbeta);
            }
        }
        model.likelihood_trace.push_back(
            detail::lda_log_likelihood(docs, theta, phi, k, vocab_size) /
            static_cast<double>(total_tokens));
    };
    record_likelihood();

    for (std::size_t sweep = 0; sweep < iterations; ++sweep) {
        for (std::size_t d = 0; d < n_docs; ++d) {
            for (std::size_t i = 0; i < docs[d].size(); ++i) {
                const std::size_t w = docs[d][i];
                const std::size_t old_t = z[d][i];
                n_dk[d * k + old_t] -= 1.0;
                n_kw[old_t * vocab_size + w] -= 1.0;
                n_k[old_t] -= 1.0;
                double total = 0.0;
                for (std::size_t t = 0; t < k; ++t) {
                    prob[t] = (n_dk[d * k + t] + alpha) * (n_kw[t * vocab_size + w] + beta) /
                              (n_k[t] + vbeta);
                    total += prob[t];
                }
                const double u = rng.uniform01() * total;
                double acc = 0.0;
                std::size_t new_t = k - 1;
                for (std::size_t t = 0; t < k; ++t) {
                    acc += prob[t];
                    if (u < acc) {
                        new_t = t;
                        break;
                    }
                }
                z[d][i] = new_t;
                n_dk[d * k + new_t] += 1.0;
                n_kw[new_t * vocab_size + w] += 1.0;
                n_k[new_t] += 1.0;
            }
        }
        if ((sweep + 1) % 10 == 0) record_likelihood();
    }
    if (iterations % 10 != 0) record_likelihood();

    model.phi.assign(k * vocab_size, 0.0);
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t w = 0; w < vocab_size; ++w) {
            model.phi[t * vocab_size + w] = (n_kw[t * vocab_size + w] + beta) / (n_k[t] + vbeta);
        }
    }
    return model;
}

// Fold-in Gibbs with frozen phi; word ids outside the model vocabulary are
// skipped (an all-unknown or empty document yields the alpha-prior mixture).
inline std::vector<double> infer_theta(const LdaModel& model, const std::vector<std::size_t>& doc,
                                       std::size_t iterations, std::uint64_t seed) {
    if (model.k == 0 || model.phi.empty()) throw Error("infer_theta: model is not fitted");
    std::vector<std::size_t> words;
    for (std::size_t w : doc) {
        if (w < model.vocab_size) words.push_back(w);
    }
    const std::size_t k = model.k;
    std::vector<double> n_dk(k, 0.0);
    std::vector<std::size_t> z(words.size());
    Rng rng(mix_seed(seed, 0x1f0a));
    for (std::size_t i = 0; i < words.size(); ++i) {
        z[i] = static_cast<std::size_t>(rng.bounded(k));
        n_dk[z[i]] += 1.0;
    }
    std::vector<double> prob(k);
    for (std::size_t sweep = 0; sweep < iterations; ++sweep) {
        for (std::size_t i = 0; i < words.size(); ++i) {
            const std::size_t w = words[i];
            n_dk[z[i]] -= 1.0;
            double total = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                prob[t] = (n_dk[t] + model.alpha) * model.phi_at(t, w);
                total += prob[t];
            }
            const double u = rng.uniform01() * total;
            double acc = 0.0;
            std::size_t new_t = k - 1;
            for (std::size_t t = 0; t < k; ++t) {
                acc += prob[t];
                if (u < acc) {
                    new_t = t;
                    break;
                }
            }
            z[i] = new_t;
            n_dk[new_t] += 1.0;
        }
    }
    std::vector<double> theta(k, 0.0);
    const double denom = static_cast<double>(words.size()) + static_cast<double>(k) * model.alpha;
    for (std::size_t t = 0; t < k; ++t) theta[t] = (n_dk[t] + model.alpha) / denom;
    return theta;
}

inline constexpr char kLdaMagic[8] = {'A', 'H', 'L', 'D', 'A', 'M', 'D', 'L'};
inline constexpr std::uint32_t kLdaVersion = 1;

inline void save_lda(const LdaModel& model, std::ostream& out) {
    static_assert(std::endian::native == std::endian::little);
    out.write(kLdaMagic, sizeof(kLdaMagic));
    const std::uint32_t version = kLdaVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t k = model.k, v = model.vocab_size, vh = model.vocab_hash;
    out.write(reinterpret_cast<const char*>(&k), sizeof(k));
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    out.write(reinterpret_cast<const char*>(&model.alpha), sizeof(double));
    out.write(reinterpret_cast<const char*>(&model.beta), sizeof(double));
    out.write(reinterpret_cast<const char*>(&vh), sizeof(vh));
    out.write(reinterpret_cast<const char*>(model.phi.data()),
              static_cast<std::streamsize>(model.phi.size() * sizeof(double)));
    if (!out) throw Error("lda model: write failed");
}

inline void save_lda(const LdaModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("lda model: cannot open for writing: " + path);
    save_lda(model, out);
}

inline LdaModel load_lda(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kLdaMagic, sizeof(magic)) != 0) {
        throw Error("lda model: bad magic (not a topic model file)");
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!in || version != kLdaVersion) throw Error("lda model: unsupported version");
    LdaModel m;
    std::uint64_t k = 0, v = 0, vh = 0;
    in.read(reinterpret_cast<char*>(&k), sizeof(k));
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    in.read(reinterpret_cast<char*>(&m.alpha), sizeof(double));
    in.read(reinterpret_cast<char*>(&m.beta), sizeof(double));
    in.read(reinterpret_cast<char*>(&vh), sizeof(vh));
    if (!in) throw Error("lda model: truncated header");
    m.k = k;
    m.vocab_size = v;
    m.vocab_hash = vh;
    m.phi.resize(m.k * m.vocab_size);
    in.read(reinterpret_cast<char*>(m.phi.data()),
            static_cast<std::streamsize>(m.phi.size() * sizeof(double)));
    if (!in) throw Error("lda model: truncated phi matrix");
    return m;
}

inline LdaModel load_lda(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("lda model: cannot open: " + path);
    return load_lda(in);
}

// Indices of the n highest-probability words per topic.
inline std::vector<std::vector<std::size_t>> top_words(const LdaModel& model, std::size_t n) {
    std::vector<std::vector<std::size_t>> out(model.k);
    for (std::size_t t = 0; t < model.k; ++t) {
        std::vector<std::size_t> order(model.vocab_size);
        for (std::size_t w = 0; w < model.vocab_size; ++w) order[w] = w;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double pa = model.phi_at(t, a);
            const double pb = model.phi_at(t, b);
            if (pa != pb) return pa > pb;
            return a < b;
        });
        order.resize(std::min(n, order.size()));
        out[t] = std::move(order);
    }
    return out;
}

}  // namespace adhom
