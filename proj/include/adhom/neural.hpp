#pragma once
// From-scratch differentiable text models: CNN over word windows with masked
// max-over-time pooling, 2-stacked BiLSTM, structured self-attentive embedding
// (BiLSTM + r-row attention + linear head), and CNN fused with topic vectors.
// Double precision throughout; gradients are hand-derived and checked against
// central finite differences in the test suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "adhom/common.hpp"
#include "adhom/tensor.hpp"
#include "adhom/text.hpp"

namespace adhom {

enum class Arch { Cnn, Bilstm, Ssae, CnnLda };

inline const char* arch_name(Arch a) {
    switch (a) {
        case Arch::Cnn: return "cnn";
        case Arch::Bilstm: return "bilstm";
        case Arch::Ssae: return "ssae";
        case Arch::CnnLda: return "cnn-lda";
    }
    return "?";
}

inline Arch arch_from_name(const std::string& s) {
    if (s == "cnn") return Arch::Cnn;
    if (s == "bilstm") return Arch::Bilstm;
    if (s == "ssae") return Arch::Ssae;
    if (s == "cnn-lda") return Arch::CnnLda;
    throw Error("unknown model architecture: " + s);
}

struct ModelConfig {
    std::size_t embedding_dim = 50;
    std::vector<std::size_t> conv_widths = {3, 4, 5};
    std::size_t conv_filters = 100;   // feature maps per width
    std::size_t lstm_hidden = 64;     // per direction
    std::size_t lstm_layers = 2;      // stacked layers for the BiLSTM classifier
    std::size_t attention_hidden = 64;  // d_a
    std::size_t attention_rows = 8;     // r
    double dropout = 0.5;
    std::size_t num_classes = 2;
    bool regression = false;
    std::size_t topic_dim = 0;  // k; 0 disables topic fusion
    bool freeze_embeddings = true;
    double attention_penalty = 0.0;  // coefficient on ||A A^T - I||^2; 0 = off

    void validate(Arch arch) const {
        if (embedding_dim < 1) throw Error("ModelConfig: embedding_dim must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw Error("ModelConfig: dropout must be in [0, 1)");
        if (!regression && num_classes < 2) throw Error("ModelConfig: need >= 2 classes");
        if (arch == Arch::Cnn || arch == Arch::CnnLda) {
            if (conv_widths.empty() || conv_filters < 1) throw Error("ModelConfig: conv shape invalid");
            for (std::size_t w : conv_widths) {
                if (w < 1) throw Error("ModelConfig: conv width must be >= 1");
            }
        }
        if (arch == Arch::CnnLda && topic_dim < 1) {
            throw Error("ModelConfig: cnn-lda requires topic_dim >= 1");
        }
        if ((arch == Arch::Cnn || arch == Arch::Bilstm || arch == Arch::Ssae) && topic_dim != 0) {
            throw Error("ModelConfig: topic fusion is only supported by cnn-lda");
        }
        if (arch == Arch::Bilstm && (lstm_hidden < 1 || lstm_layers != 2)) {
            throw Error("ModelConfig: bilstm classifier uses 2 stacked layers with hidden >= 1");
        }
        if (arch == Arch::Ssae && (lstm_hidden < 1 || attention_hidden < 1 || attention_rows < 1)) {
            throw Error("ModelConfig: ssae shape invalid");
        }
    }

    std::size_t output_dim() const { return regression ? 1 : num_classes; }
};

namespace detail {

struct Mat {
    std::size_t r = 0, c = 0;
    std::vector<double> a;
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols) : r(rows), c(cols), a(rows * cols, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return a[i * c + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * c + j]; }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One LSTM direction over a (possibly reversed) input sequence.
struct LstmDirCache {
    Mat i, f, o, g, c, tc, h;  // rows = timesteps, cols = hidden
};

inline void lstm_forward(const Tensor& wx, const Tensor& wh, const Tensor& b, const Mat& x,
                         std::size_t hidden, LstmDirCache& cache) {
    const std::size_t n = x.r;
    const std::size_t in = x.c;
    cache.i = Mat(n, hidden);
    cache.f = Mat(n, hidden);
    cache.o = Mat(n, hidden);
    cache.g = Mat(n, hidden);
    cache.c = Mat(n, hidden);
    cache.tc = Mat(n, hidden);
    cache.h = Mat(n, hidden);
    std::vector<double> z(4 * hidden);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t u = 0; u < 4 * hidden; ++u) {
            double acc = b.at(u);
            const double* wrow = wx.values.data() + u * in;
            for (std::size_t j = 0; j < in; ++j) acc += wrow[j] * x(t, j);
            if (t > 0) {
                const double* hrow = wh.values.data() + u * hidden;
                for (std::size_t j = 0; j < hidden; ++j) acc += hrow[j] * cache.h(t - 1, j);
            }
            z[u] = acc;
        }
        for (std::size_t u = 0; u < hidden; ++u) {
            const double iv = sigmoid(z[u]);
            const double fv = sigmoid(z[hidden + u]);
            const double ov = sigmoid(z[2 * hidden + u]);
            const double gv = std::tanh(z[3 * hidden + u]);
            const double cprev = t > 0 ? cache.c(t - 1, u) : 0.0;
            const double cv = fv * cprev + iv * gv;
            cache.i(t, u) = iv;
            cache.f(t, u) = fv;
            cache.o(t, u) = ov;
            cache.g(t, u) = gv;
            cache.c(t, u) = cv;
            cache.tc(t, u) = std::tanh(cv);
            cache.h(t, u) = ov * cache.tc(t, u);
        }
    }
}

// Backward through time; dh_ext holds upstream dL/dh per timestep. Returns
// dL/dx and accumulates parameter gradients.
inline Mat lstm_backward(Tensor& wx, Tensor& wh, Tensor& b, const Mat& x, const LstmDirCache& cache,
                         const Mat& dh_ext, std::size_t hidden) {
    const std::size_t n = x.r;
    const std::size_t in = x.c;
    Mat dx(n, in);
    std::vector<double> dh_next(hidden, 0.0), dc_next(hidden, 0.0);
    std::vector<double> dz(4 * hidden);
    wx.ensure_grad();
    wh.ensure_grad();
    b.ensure_grad();
    for (std::size_t ti = n; ti-- > 0;) {
        for (std::size_t u = 0; u < hidden; ++u) {
            const double dh = dh_ext(ti, u) + dh_next[u];
            const double iv = cache.i(ti, u);
            const double fv = cache.f(ti, u);
            const double ov = cache.o(ti, u);
            const double gv = cache.g(ti, u);
            const double tc = cache.tc(ti, u);
            const double cprev = ti > 0 ? cache.c(ti - 1, u) : 0.0;
            const double dc = dh * ov * (1.0 - tc * tc) + dc_next[u];
            dz[u] = dc * gv * iv * (1.0 - iv);               // input gate pre-activation
            dz[hidden + u] = dc * cprev * fv * (1.0 - fv);   // forget gate
            dz[2 * hidden + u] = dh * tc * ov * (1.0 - ov);  // output gate
            dz[3 * hidden + u] = dc * iv * (1.0 - gv * gv);  // candidate
            dc_next[u] = dc * fv;
        }
        for (std::size_t u = 0; u < 4 * hidden; ++u) {
            const double d = dz[u];
            if (d == 0.0) continue;
            double* wrow_g = wx.grad.data() + u * in;
            const double* wrow = wx.values.data() + u * in;
            for (std::size_t j = 0; j < in; ++j) {
                wrow_g[j] += d * x(ti, j);
                dx(ti, j) += d * wrow[j];
            }
            b.grad[u] += d;
        }
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        if (ti > 0) {
            for (std::size_t u = 0; u < 4 * hidden; ++u) {
                const double d = dz[u];
                if (d == 0.0) continue;
                double* hrow_g = wh.grad.data() + u * hidden;
                const double* hrow = wh.values.data() + u * hidden;
                for (std::size_t j = 0; j < hidden; ++j) {
                    hrow_g[j] += d * cache.h(ti - 1, j);
                    dh_next[j] += d * hrow[j];
                }
            }
        }
    }
    return dx;
}

struct BiLayerCache {
    Mat x;              // layer input (n x in)
    LstmDirCache fwd;   // over x in order
    LstmDirCache bwd;   // over x reversed
    Mat out;            // n x 2*hidden, [fwd_t ; bwd reversed back]
};

}  // namespace detail

class Model;

namespace detail {

struct HeadCache {
    std::vector<double> rep;           // penultimate representation (pre-dropout)
    std::vector<double> dropout_mask;  // empty = no dropout applied
    std::vector<double> fused;         // rep after dropout (+ topic for fusion models)
    std::vector<double> logits;
    std::vector<double> probs;  // classification only
};

struct CnnCache {
    std::vector<std::size_t> seq;
    Mat x;                                     // n x d embedded input
    std::vector<Mat> conv_pre;                 // per width: positions x filters (pre-activation)
    std::vector<std::vector<std::size_t>> argmax;  // per width per filter (SIZE_MAX = no window)
    HeadCache head;
};

struct BilstmCache {
    std::vector<std::size_t> seq;
    Mat x;
    BiLayerCache l1, l2;
    HeadCache head;
};

struct SsaeCache {
    std::vector<std::size_t> seq;
    Mat x;
    BiLayerCache l1;
    Mat att_y, att_t, att_a;  // d_a x n (pre-tanh), d_a x n (tanh), r x n (softmax rows)
    Mat att_m;                // r x 2u
    HeadCache head;
};

}  // namespace detail

// A training/inference example; pointers reference caller-owned storage.
struct Example {
    const std::vector<std::size_t>* seq = nullptr;
    const std::vector<double>* topic = nullptr;
    int label = 0;
    double target = 0.0;
};

class Model {
public:
    Model() = default;

    Model(Arch arch, ModelConfig cfg, const EmbeddingTable& embeddings, std::uint64_t seed,
          std::uint64_t vocab_hash)
        : arch_(arch), cfg_(std::move(cfg)), vocab_hash_(vocab_hash) {
        cfg_.validate(arch_);
        if (embeddings.dim() != cfg_.embedding_dim) {
            throw Error("embedding table dimension does not match ModelConfig.embedding_dim");
        }
        Rng rng(mix_seed(seed, 0xAD40));
        Tensor emb = Tensor::zeros({embeddings.rows(), embeddings.dim()});
        emb.values = embeddings.data();
        add_param("embedding", std::move(emb));

        const std::size_t d = cfg_.embedding_dim;
        const std::size_t u = cfg_.lstm_hidden;
        if (arch_ == Arch::Cnn || arch_ == Arch::CnnLda) {
            for (std::size_t w : cfg_.conv_widths) {
                add_param("conv" + std::to_string(w) + "_w",
                          xavier(rng, {cfg_.conv_filters, w * d}));
                add_param("conv" + std::to_string(w) + "_b", Tensor::zeros({cfg_.conv_filters}));
            }
        } else if (arch_ == Arch::Bilstm) {
            add_lstm_params(rng, 0, d, u);
            add_lstm_params(rng, 1, 2 * u, u);
        } else {
            add_lstm_params(rng, 0, d, u);
            add_param("attn_w1", xavier(rng, {cfg_.attention_hidden, 2 * u}));
            add_param("attn_w2", xavier(rng, {cfg_.attention_rows, cfg_.attention_hidden}));
        }
        add_param("out_w", xavier(rng, {cfg_.output_dim(), rep_dim() + cfg_.topic_dim}));
        add_param("out_b", Tensor::zeros({cfg_.output_dim()}));
    }

    Arch arch() const { return arch_; }
    const ModelConfig& config() const { return cfg_; }
    std::uint64_t vocab_hash() const { return vocab_hash_; }

    std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

    Tensor& param(const std::string& name) {
        for (auto& [n, t] : params_) {
            if (n == name) return t;
        }
        throw Error("unknown parameter: " + name);
    }
    const Tensor& param(const std::string& name) const {
        return const_cast<Model*>(this)->param(name);
    }

    void zero_grads() {
        for (auto& [n, t] : params_) {
            t.ensure_grad();
            t.zero_grad();
        }
    }

    // Inference: class probabilities (or a singleton score for regression).
    std::vector<double> predict(const std::vector<std::size_t>& seq,
                                const std::vector<double>* topic = nullptr) const {
        auto& self = const_cast<Model&>(*this);
        detail::HeadCache head;
        switch (arch_) {
            case Arch::Cnn:
            case Arch::CnnLda: {
                detail::CnnCache c;
                self.cnn_forward(seq, topic, false, nullptr, c);
                head = std::move(c.head);
                break;
            }
            case Arch::Bilstm: {
                detail::BilstmCache c;
                self.bilstm_forward(seq, topic, false, nullptr, c);
                head = std::move(c.head);
                break;
            }
            case Arch::Ssae: {
                detail::SsaeCache c;
                self.ssae_forward(seq, topic, false, nullptr, c);
                head = std::move(c.head);
                break;
            }
        }
        return cfg_.regression ? head.logits : head.probs;
    }

    double predict_score(const std::vector<std::size_t>& seq,
                         const std::vector<double>* topic = nullptr) const {
        if (!cfg_.regression) throw Error("predict_score: model is not a regressor");
        return predict(seq, topic)[0];
    }

    std::size_t predict_class(const std::vector<std::size_t>& seq,
                              const std::vector<double>* topic = nullptr) const {
        if (cfg_.regression) throw Error("predict_class: model is a regressor");
        const auto p = predict(seq, topic);
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.size(); ++c) {
            if (p[c] > p[best]) best = c;
        }
        return best;
    }

    // Mean batch loss; accumulates parameter gradients when with_grad is set.
    // dropout_rng enables train-mode dropout (pass the same seeded state to
    // reproduce masks, e.g. for finite-difference checks).
    double batch_loss(const std::vector<Example>& batch, bool with_grad, Rng* dropout_rng) {
        if (batch.empty()) throw Error("batch_loss: empty batch");
        if (with_grad) ensure_grads();
        const double scale = 1.0 / static_cast<double>(batch.size());
        double total = 0.0;
        for (const Example& ex : batch) {
            total += example_loss(ex, with_grad, dropout_rng, scale);
        }
        return total * scale;
    }

    // Attention matrix A (rows x tokens) for the self-attentive model.
    detail::Mat attention_matrix(const std::vector<std::size_t>& seq) const {
        if (arch_ != Arch::Ssae) throw Error("attention is only available for the ssae model");
        auto& self = const_cast<Model&>(*this);
        detail::SsaeCache c;
        self.ssae_forward(seq, nullptr, false, nullptr, c);
        return c.att_a;
    }

    // Per-token weight: column sums of A normalized over the non-PAD tokens.
    std::vector<double> token_attention(const std::vector<std::size_t>& seq) const {
        const detail::Mat a = attention_matrix(seq);
        std::vector<double> w(a.c, 0.0);
        double z = 0.0;
        for (std::size_t j = 0; j < a.c; ++j) {
            for (std::size_t i = 0; i < a.r; ++i) w[j] += a(i, j);
            z += w[j];
        }
        for (double& v : w) v /= z;
        return w;
    }

    // Exposed for checkpoint restore.
    static Model restore(Arch arch, ModelConfig cfg, std::uint64_t vocab_hash,
                         std::vector<std::pair<std::string, Tensor>> params) {
        Model m;
        m.arch_ = arch;
        m.cfg_ = std::move(cfg);
        m.vocab_hash_ = vocab_hash;
        m.params_ = std::move(params);
        return m;
    }

private:
    std::size_t rep_dim() const {
        switch (arch_) {
            case Arch::Cnn:
            case Arch::CnnLda: return cfg_.conv_widths.size() * cfg_.conv_filters;
            case Arch::Bilstm: return 2 * cfg_.lstm_hidden;
            case Arch::Ssae: return cfg_.attention_rows * 2 * cfg_.lstm_hidden;
        }
        return 0;
    }

    static Tensor xavier(Rng& rng, std::vector<std::size_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        const double fan_in = static_cast<double>(t.cols());
        const double fan_out = static_cast<double>(t.rows());
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : t.values) v = rng.uniform(-a, a);
        return t;
    }

    void add_lstm_params(Rng& rng, std::size_t layer, std::size_t in, std::size_t u) {
        for (const char* dir : {"fwd", "bwd"}) {
            const std::string prefix = "lstm" + std::to_string(layer) + "_" + dir;
            add_param(prefix + "_wx", xavier(rng, {4 * u, in}));
            add_param(prefix + "_wh", xavier(rng, {4 * u, u}));
            Tensor b = Tensor::zeros({4 * u});
            for (std::size_t k = 0; k < u; ++k) b.values[u + k] = 1.0;  // forget-gate bias
            add_param(prefix + "_b", std::move(b));
        }
    }

    void add_param(const std::string& name, Tensor t) { params_.emplace_back(name, std::move(t)); }

    void ensure_grads() {
        for (auto& [n, t] : params_) t.ensure_grad();
    }

    std::vector<std::size_t> trim(const std::vector<std::size_t>& seq) const {
        std::size_t len = seq.size();
        while (len > 0 && seq[len - 1] == kPadIndex) --len;
        if (len == 0) throw Error("forward: empty (or all-PAD) input sequence");
        const Tensor& emb = params_.front().second;
        std::vector<std::size_t> out(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(len));
        for (std::size_t idx : out) {
            if (idx >= emb.rows()) throw Error("forward: token index out of vocabulary range");
        }
        return out;
    }

    detail::Mat embed(const std::vector<std::size_t>& seq) const {
        const Tensor& emb = param("embedding");
        detail::Mat x(seq.size(), cfg_.embedding_dim);
        for (std::size_t t = 0; t < seq.size(); ++t) {
            const double* row = emb.values.data() + seq[t] * cfg_.embedding_dim;
            for (std::size_t j = 0; j < cfg_.embedding_dim; ++j) x(t, j) = row[j];
        }
        return x;
    }

    void embed_backward(const std::vector<std::size_t>& seq, const detail::Mat& dx) {
        if (cfg_.freeze_embeddings) return;
        Tensor& emb = param("embedding");
        emb.ensure_grad();
        for (std::size_t t = 0; t < seq.size(); ++t) {
            double* row = emb.grad.data() + seq[t] * cfg_.embedding_dim;
            for (std::size_t j = 0; j < cfg_.embedding_dim; ++j) row[j] += dx(t, j);
        }
    }

    // Head: rep -> dropout -> [topic concat] -> linear (-> softmax).
    void head_forward(const std::vector<double>& rep, const std::vector<double>* topic, bool train,
                      Rng* dropout_rng, detail::HeadCache& head) {
        head.rep = rep;
        std::vector<double> dropped = rep;
        if (train && dropout_rng != nullptr && cfg_.dropout > 0.0) {
            const double keep = 1.0 - cfg_.dropout;
            head.dropout_mask.resize(rep.size());
            for (std::size_t i = 0; i < rep.size(); ++i) {
                head.dropout_mask[i] = dropout_rng->uniform01() < keep ? 1.0 / keep : 0.0;
                dropped[i] *= head.dropout_mask[i];
            }
        }
        head.fused = std::move(dropped);
        if (cfg_.topic_dim > 0) {
            if (topic == nullptr || topic->size() != cfg_.topic_dim) {
                throw Error("forward: topic vector missing or of wrong length (expected " +
                            std::to_string(cfg_.topic_dim) + ")");
            }
            head.fused.insert(head.fused.end(), topic->begin(), topic->end());
        } else if (topic != nullptr && !topic->empty()) {
            throw Error("forward: model does not accept topic vectors");
        }
        const Tensor& w = param("out_w");
        const Tensor& b = param("out_b");
        head.logits.assign(cfg_.output_dim(), 0.0);
        for (std::size_t c = 0; c < cfg_.output_dim(); ++c) {
            double acc = b.at(c);
            const double* row = w.values.data() + c * head.fused.size();
            for (std::size_t j = 0; j < head.fused.size(); ++j) acc += row[j] * head.fused[j];
            head.logits[c] = acc;
        }
        if (!cfg_.regression) {
            double mx = head.logits[0];
            for (double v : head.logits) mx = std::max(mx, v);
            double z = 0.0;
            head.probs.assign(head.logits.size(), 0.0);
            for (std::size_t c = 0; c < head.logits.size(); ++c) {
                head.probs[c] = std::exp(head.logits[c] - mx);
                z += head.probs[c];
            }
            for (double& p : head.probs) p /= z;
        }
    }

    // Returns dL/drep given dL/dlogits.
    std::vector<double> head_backward(const detail::HeadCache& head, const std::vector<double>& dlogits) {
        Tensor& w = param("out_w");
        Tensor& b = param("out_b");
        w.ensure_grad();
        b.ensure_grad();
        std::vector<double> dfused(head.fused.size(), 0.0);
        for (std::size_t c = 0; c < dlogits.size(); ++c) {
            const double d = dlogits[c];
            if (d == 0.0) continue;
            b.grad[c] += d;
            double* row_g = w.grad.data() + c * head.fused.size();
            const double* row = w.values.data() + c * head.fused.size();
            for (std::size_t j = 0; j < head.fused.size(); ++j) {
                row_g[j] += d * head.fused[j];
                dfused[j] += d * row[j];
            }
        }
        std::vector<double> drep(head.rep.size(), 0.0);
        for (std::size_t j = 0; j < head.rep.size(); ++j) {
            drep[j] = dfused[j];
            if (!head.dropout_mask.empty()) drep[j] *= head.dropout_mask[j];
        }
        return drep;
    }

    void cnn_forward(const std::vector<std::size_t>& raw_seq, const std::vector<double>* topic,
                     bool train, Rng* dropout_rng, detail::CnnCache& cache) {
        cache.seq = trim(raw_seq);
        cache.x = embed(cache.seq);
        const std::size_t n = cache.seq.size();
        const std::size_t d = cfg_.embedding_dim;
        std::vector<double> pooled;
        pooled.reserve(rep_dim());
        cache.conv_pre.clear();
        cache.argmax.clear();
        for (std::size_t wi = 0; wi < cfg_.conv_widths.size(); ++wi) {
            const std::size_t w = cfg_.conv_widths[wi];
            const Tensor& cw = param("conv" + std::to_string(w) + "_w");
            const Tensor& cb = param("conv" + std::to_string(w) + "_b");
            const std::size_t positions = n >= w ? n - w + 1 : 0;
            detail::Mat pre(positions, cfg_.conv_filters);
            std::vector<std::size_t> argmax(cfg_.conv_filters, std::numeric_limits<std::size_t>::max());
            std::vector<double> best(cfg_.conv_filters,
                                     positions == 0 ? 0.0 : -std::numeric_limits<double>::infinity());
            for (std::size_t p = 0; p < positions; ++p) {
                for (std::size_t f = 0; f < cfg_.conv_filters; ++f) {
                    double acc = cb.at(f);
                    const double* row = cw.values.data() + f * (w * d);
                    for (std::size_t k = 0; k < w; ++k) {
                        for (std::size_t j = 0; j < d; ++j) acc += row[k * d + j] * cache.x(p + k, j);
                    }
                    pre(p, f) = acc;
                    const double act = acc > 0.0 ? acc : 0.0;
                    if (act > best[f]) {
                        best[f] = act;
                        argmax[f] = p;
                    }
                }
            }
            for (std::size_t f = 0; f < cfg_.conv_filters; ++f) {
                pooled.push_back(positions == 0 ? 0.0 : best[f]);
            }
            cache.conv_pre.push_back(std::move(pre));
            cache.argmax.push_back(std::move(argmax));
        }
        head_forward(pooled, topic, train, dropout_rng, cache.head);
    }

    void cnn_backward(const detail::CnnCache& cache, const std::vector<double>& dlogits) {
        const std::vector<double> drep = head_backward(cache.head, dlogits);
        const std::size_t d = cfg_.embedding_dim;
        detail::Mat dx(cache.seq.size(), d);
        std::size_t offset = 0;
        for (std::size_t wi = 0; wi < cfg_.conv_widths.size(); ++wi) {
            const std::size_t w = cfg_.conv_widths[wi];
            Tensor& cw = param("conv" + std::to_string(w) + "_w");
            Tensor& cb = param("conv" + std::to_string(w) + "_b");
            cw.ensure_grad();
            cb.ensure_grad();
            for (std::size_t f = 0; f < cfg_.conv_filters; ++f) {
                const double dpool = drep[offset + f];
                const std::size_t p = cache.argmax[wi][f];
                if (dpool == 0.0 || p == std::numeric_limits<std::size_t>::max()) continue;
                if (cache.conv_pre[wi](p, f) <= 0.0) continue;  // ReLU gate
                cb.grad[f] += dpool;
                double* row_g = cw.grad.data() + f * (w * d);
                const double* row = cw.values.data() + f * (w * d);
                for (std::size_t k = 0; k < w; ++k) {
                    for (std::size_t j = 0; j < d; ++j) {
                        row_g[k * d + j] += dpool * cache.x(p + k, j);
                        dx(p + k, j) += dpool * row[k * d + j];
                    }
                }
            }
            offset += cfg_.conv_filters;
        }
        embed_backward(cache.seq, dx);
    }

    void bilayer_forward(std::size_t layer, const detail::Mat& x, detail::BiLayerCache& cache) {
        const std::size_t u = cfg_.lstm_hidden;
        const std::string p = "lstm" + std::to_string(layer) + "_";
        cache.x = x;
        detail::lstm_forward(param(p + "fwd_wx"), param(p + "fwd_wh"), param(p + "fwd_b"), x, u,
                             cache.fwd);
        detail::Mat xr(x.r, x.c);
        for (std::size_t t = 0; t < x.r; ++t) {
            for (std::size_t j = 0; j < x.c; ++j) xr(t, j) = x(x.r - 1 - t, j);
        }
        detail::lstm_forward(param(p + "bwd_wx"), param(p + "bwd_wh"), param(p + "bwd_b"), xr, u,
                             cache.bwd);
        cache.out = detail::Mat(x.r, 2 * u);
        for (std::size_t t = 0; t < x.r; ++t) {
            for (std::size_t j = 0; j < u; ++j) {
                cache.out(t, j) = cache.fwd.h(t, j);
                cache.out(t, u + j) = cache.bwd.h(x.r - 1 - t, j);
            }
        }
    }

    detail::Mat bilayer_backward(std::size_t layer, const detail::BiLayerCache& cache,
                                 const detail::Mat& dout) {
        const std::size_t u = cfg_.lstm_hidden;
        const std::size_t n = cache.x.r;
        const std::string p = "lstm" + std::to_string(layer) + "_";
        detail::Mat dh_fwd(n, u), dh_bwd(n, u);
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t j = 0; j < u; ++j) {
                dh_fwd(t, j) = dout(t, j);
                dh_bwd(n - 1 - t, j) = dout(t, u + j);
            }
        }
        detail::Mat dx = detail::lstm_backward(param(p + "fwd_wx"), param(p + "fwd_wh"),
                                               param(p + "fwd_b"), cache.x, cache.fwd, dh_fwd, u);
        detail::Mat xr(n, cache.x.c);
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t j = 0; j < cache.x.c; ++j) xr(t, j) = cache.x(n - 1 - t, j);
        }
        detail::Mat dxr = detail::lstm_backward(param(p + "bwd_wx"), param(p + "bwd_wh"),
                                                param(p + "bwd_b"), xr, cache.bwd, dh_bwd, u);
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t j = 0; j < cache.x.c; ++j) dx(t, j) += dxr(n - 1 - t, j);
        }
        return dx;
    }

    void bilstm_forward(const std::vector<std::size_t>& raw_seq, const std::vector<double>* topic,
                        bool train, Rng* dropout_rng, detail::BilstmCache& cache) {
        cache.seq = trim(raw_seq);
        cache.x = embed(cache.seq);
        bilayer_forward(0, cache.x, cache.l1);
        bilayer_forward(1, cache.l1.out, cache.l2);
        const std::size_t n = cache.seq.size();
        const std::size_t u = cfg_.lstm_hidden;
        // Final states of layer 2: forward at the last token, backward at the first.
        std::vector<double> rep(2 * u, 0.0);
        for (std::size_t j = 0; j < u; ++j) {
            rep[j] = cache.l2.fwd.h(n - 1, j);
            rep[u + j] = cache.l2.bwd.h(n - 1, j);
        }
        head_forward(rep, topic, train, dropout_rng, cache.head);
    }

    void bilstm_backward(const detail::BilstmCache& cache, const std::vector<double>& dlogits) {
        const std::vector<double> drep = head_backward(cache.head, dlogits);
        const std::size_t n = cache.seq.size();
        const std::size_t u = cfg_.lstm_hidden;
        detail::Mat dout2(n, 2 * u);
        // Route final-state gradients back to their source positions.
        for (std::size_t j = 0; j < u; ++j) {
            dout2(n - 1, j) = drep[j];
            dout2(0, u + j) = drep[u + j];
        }
        const detail::Mat dh1 = bilayer_backward(1, cache.l2, dout2);
        const detail::Mat dx = bilayer_backward(0, cache.l1, dh1);
        embed_backward(cache.seq, dx);
    }

    void ssae_forward(const std::vector<std::size_t>& raw_seq, const std::vector<double>* topic,
                      bool train, Rng* dropout_rng, detail::SsaeCache& cache) {
        cache.seq = trim(raw_seq);
        cache.x = embed(cache.seq);
        bilayer_forward(0, cache.x, cache.l1);
        const detail::Mat& h = cache.l1.out;  // n x 2u
        const std::size_t n = h.r;
        const std::size_t da = cfg_.attention_hidden;
        const std::size_t r = cfg_.attention_rows;
        const Tensor& w1 = param("attn_w1");
        const Tensor& w2 = param("attn_w2");
        cache.att_y = detail::Mat(da, n);
        cache.att_t = detail::Mat(da, n);
        for (std::size_t i = 0; i < da; ++i) {
            const double* row = w1.values.data() + i * h.c;
            for (std::size_t t = 0; t < n; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j < h.c; ++j) acc += row[j] * h(t, j);
                cache.att_y(i, t) = acc;
                cache.att_t(i, t) = std::tanh(acc);
            }
        }
        cache.att_a = detail::Mat(r, n);
        for (std::size_t i = 0; i < r; ++i) {
            const double* row = w2.values.data() + i * da;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < n; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j < da; ++j) acc += row[j] * cache.att_t(j, t);
                cache.att_a(i, t) = acc;
                mx = std::max(mx, acc);
            }
            double z = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                cache.att_a(i, t) = std::exp(cache.att_a(i, t) - mx);
                z += cache.att_a(i, t);
            }
            for (std::size_t t = 0; t < n; ++t) cache.att_a(i, t) /= z;
        }
        cache.att_m = detail::Mat(r, h.c);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t t = 0; t < n; ++t) {
                const double a = cache.att_a(i, t);
                for (std::size_t j = 0; j < h.c; ++j) cache.att_m(i, j) += a * h(t, j);
            }
        }
        head_forward(cache.att_m.a, topic, train, dropout_rng, cache.head);
    }

    // Adds the optional attention-matrix penalty; returns its loss contribution
    // and the corresponding dA term.
    double attention_penalty_loss(const detail::Mat& a, detail::Mat& da, double scale) {
        if (cfg_.attention_penalty == 0.0) return 0.0;
        const std::size_t r = a.r;
        detail::Mat aat(r, r);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < r; ++j) {
                double acc = 0.0;
                for (std::size_t t = 0; t < a.c; ++t) acc += a(i, t) * a(j, t);
                aat(i, j) = acc - (i == j ? 1.0 : 0.0);
            }
        }
        double loss = 0.0;
        for (double v : aat.a) loss += v * v;
        // d/dA ||A A^T - I||^2 = 4 (A A^T - I) A
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t t = 0; t < a.c; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j < r; ++j) acc += aat(i, j) * a(j, t);
                da(i, t) += cfg_.attention_penalty * 4.0 * acc * scale;
            }
        }
        return cfg_.attention_penalty * loss;
    }

    void ssae_backward(const detail::SsaeCache& cache, const std::vector<double>& dlogits,
                       double scale) {
        const std::vector<double> dm_flat = head_backward(cache.head, dlogits);
        const detail::Mat& h = cache.l1.out;
        const std::size_t n = h.r;
        const std::size_t da_dim = cfg_.attention_hidden;
        const std::size_t r = cfg_.attention_rows;
        detail::Mat dm(r, h.c);
        dm.a = dm_flat;
        detail::Mat dh(n, h.c);
        detail::Mat da(r, n);
        // M = A H
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t t = 0; t < n; ++t) {
                double acc = 0.0;
                for (std::size_t j = 0; j < h.c; ++j) acc += dm(i, j) * h(t, j);
                da(i, t) = acc;
            }
        }
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t j = 0; j < h.c; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < r; ++i) acc += cache.att_a(i, t) * dm(i, j);
                dh(t, j) += acc;
            }
        }
        attention_penalty_loss(cache.att_a, da, scale);
        // Row softmax
        detail::Mat dz(r, n);
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t t = 0; t < n; ++t) dot += da(i, t) * cache.att_a(i, t);
            for (std::size_t t = 0; t < n; ++t) {
                dz(i, t) = cache.att_a(i, t) * (da(i, t) - dot);
            }
        }
        Tensor& w2 = param("attn_w2");
        Tensor& w1 = param("attn_w1");
        w2.ensure_grad();
        w1.ensure_grad();
        detail::Mat dt(da_dim, n);
        for (std::size_t i = 0; i < r; ++i) {
            const double* row = w2.values.data() + i * da_dim;
            double* row_g = w2.grad.data() + i * da_dim;
            for (std::size_t t = 0; t < n; ++t) {
                const double d = dz(i, t);
                if (d == 0.0) continue;
                for (std::size_t j = 0; j < da_dim; ++j) {
                    row_g[j] += d * cache.att_t(j, t);
                    dt(j, t) += d * row[j];
                }
            }
        }
        for (std::size_t i = 0; i < da_dim; ++i) {
            const double* row = w1.values.data() + i * h.c;
            double* row_g = w1.grad.data() + i * h.c;
            for (std::size_t t = 0; t < n; ++t) {
                const double tv = cache.att_t(i, t);
                const double dy = dt(i, t) * (1.0 - tv * tv);
                if (dy == 0.0) continue;
                for (std::size_t j = 0; j < h.c; ++j) {
                    row_g[j] += dy * h(t, j);
                    dh(t, j) += dy * row[j];
                }
            }
        }
        const detail::Mat dx = bilayer_backward(0, cache.l1, dh);
        embed_backward(cache.seq, dx);
    }

    double example_loss(const Example& ex, bool with_grad, Rng* dropout_rng, double scale) {
        if (ex.seq == nullptr) throw Error("example without sequence");
        double penalty = 0.0;
        detail::HeadCache* head = nullptr;
        detail::CnnCache cnn_cache;
        detail::BilstmCache bilstm_cache;
        detail::SsaeCache ssae_cache;
        switch (arch_) {
            case Arch::Cnn:
            case Arch::CnnLda:
                cnn_forward(*ex.seq, ex.topic, true, dropout_rng, cnn_cache);
                head = &cnn_cache.head;
                break;
            case Arch::Bilstm:
                bilstm_forward(*ex.seq, ex.topic, true, dropout_rng, bilstm_cache);
                head = &bilstm_cache.head;
                break;
            case Arch::Ssae:
                ssae_forward(*ex.seq, ex.topic, true, dropout_rng, ssae_cache);
                head = &ssae_cache.head;
                break;
        }

        double loss;
        std::vector<double> dlogits(cfg_.output_dim(), 0.0);
        if (cfg_.regression) {
            const double diff = head->logits[0] - ex.target;
            loss = diff * diff;
            dlogits[0] = 2.0 * diff * scale;
        } else {
            if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= cfg_.num_classes) {
                throw Error("label out of range");
            }
            const auto y = static_cast<std::size_t>(ex.label);
            loss = -std::log(head->probs[y] + 1e-300);
            for (std::size_t c = 0; c < cfg_.num_classes; ++c) {
                dlogits[c] = (head->probs[c] - (c == y ? 1.0 : 0.0)) * scale;
            }
        }
        if (arch_ == Arch::Ssae && cfg_.attention_penalty != 0.0) {
            detail::Mat dummy(ssae_cache.att_a.r, ssae_cache.att_a.c);
            penalty = attention_penalty_loss(ssae_cache.att_a, dummy, 0.0);
            loss += penalty;
        }

        if (with_grad) {
            switch (arch_) {
                case Arch::Cnn:
                case Arch::CnnLda: cnn_backward(cnn_cache, dlogits); break;
                case Arch::Bilstm: bilstm_backward(bilstm_cache, dlogits); break;
                case Arch::Ssae: ssae_backward(ssae_cache, dlogits, scale); break;
            }
        }
        return loss;
    }

    Arch arch_ = Arch::Cnn;
    ModelConfig cfg_;
    std::uint64_t vocab_hash_ = 0;
    std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace adhom
