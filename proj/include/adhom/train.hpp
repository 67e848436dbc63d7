#pragma once
// Training loop (Adam or SGD, seeded shuffling, early stopping on a held-out
// slice) and deterministic 10-fold cross-validation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "adhom/analysis.hpp"
#include "adhom/common.hpp"
#include "adhom/neural.hpp"

namespace adhom {

enum class Objective { CrossEntropy, MeanSquaredError };

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    std::uint64_t seed = 1;
    std::size_t patience = 10;  // 0 disables early stopping
    Objective objective = Objective::CrossEntropy;
    std::string optimizer = "adam";  // "adam" | "sgd"

    void validate() const {
        if (learning_rate < 0.0) throw Error("TrainConfig: negative learning rate");
        if (epochs < 1 || batch_size < 1) throw Error("TrainConfig: epochs and batch size must be >= 1");
        if (optimizer != "adam" && optimizer != "sgd") throw Error("TrainConfig: unknown optimizer");
    }
};

struct DataSet {
    struct Instance {
        std::string id;
        std::vector<std::size_t> indices;
        int label = 0;       // classification
        double target = 0.0; // regression
        std::vector<double> topic;
    };
    std::vector<Instance> instances;
    std::vector<std::string> class_names;  // index = label, classification only
    bool regression = false;

    std::size_t size() const { return instances.size(); }

    int class_of(const std::string& name) {
        for (std::size_t i = 0; i < class_names.size(); ++i) {
            if (class_names[i] == name) return static_cast<int>(i);
        }
        class_names.push_back(name);
        return static_cast<int>(class_names.size() - 1);
    }
};

namespace detail {

class Adam {
public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(Model& model) {
        auto& params = model.params();
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t p = 0; p < params.size(); ++p) {
                m_[p].assign(params[p].second.values.size(), 0.0);
                v_[p].assign(params[p].second.values.size(), 0.0);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            Tensor& tensor = params[p].second;
            if (tensor.grad.empty()) continue;
            for (std::size_t i = 0; i < tensor.values.size(); ++i) {
                const double g = tensor.grad[i];
                m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g;
                v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g * g;
                const double mhat = m_[p][i] / bc1;
                const double vhat = v_[p][i] / bc2;
                tensor.values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

inline Example to_example(const DataSet::Instance& inst, bool regression) {
    Example ex;
    ex.seq = &inst.indices;
    ex.topic = inst.topic.empty() ? nullptr : &inst.topic;
    ex.label = inst.label;
    ex.target = inst.target;
    (void)regression;
    return ex;
}

inline double eval_loss(Model& model, const DataSet& data, const std::vector<std::size_t>& ids) {
    if (ids.empty()) return 0.0;
    std::vector<Example> batch;
    batch.reserve(ids.size());
    for (std::size_t i : ids) batch.push_back(to_example(data.instances[i], data.regression));
    return model.batch_loss(batch, false, nullptr);
}

}  // namespace detail

struct TrainResult {
    Model model;
    std::vector<double> loss_trace;  // mean train loss per epoch
    std::size_t best_epoch = 0;      // epoch whose parameters were kept
};

// Deterministic given the seed: init, shuffling, dropout masks, and the
// early-stopping split all derive from it.
inline TrainResult train(Arch arch, const ModelConfig& mcfg, const TrainConfig& tcfg,
                         const DataSet& data, const EmbeddingTable& embeddings,
                         std::uint64_t vocab_hash) {
    tcfg.validate();
    if (data.instances.empty()) throw Error("train: empty dataset");
    const bool want_regression = tcfg.objective == Objective::MeanSquaredError;
    if (want_regression != mcfg.regression || want_regression != data.regression) {
        throw Error("train: objective, model config, and dataset disagree on regression vs classification");
    }

    TrainResult result;
    result.model = Model(arch, mcfg, embeddings, mix_seed(tcfg.seed, 0x11717), vocab_hash);
    Model& model = result.model;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(mix_seed(tcfg.seed, 0x5911));
    split_rng.shuffle(order);
    const std::size_t holdout = tcfg.patience > 0 ? data.size() / 10 : 0;
    std::vector<std::size_t> val_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));
    std::vector<std::size_t> train_ids(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
    if (train_ids.empty()) {
        train_ids = order;
        val_ids.clear();
    }

    Rng shuffle_rng(mix_seed(tcfg.seed, 0x7a31));
    Rng dropout_rng(mix_seed(tcfg.seed, 0xd207));

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::pair<std::string, Tensor>> best_params;
    std::size_t since_best = 0;
    detail::Adam adam(tcfg.learning_rate);

    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        shuffle_rng.shuffle(train_ids);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < train_ids.size(); start += tcfg.batch_size) {
            const std::size_t stop = std::min(train_ids.size(), start + tcfg.batch_size);
            std::vector<Example> batch;
            batch.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                batch.push_back(detail::to_example(data.instances[train_ids[k]], data.regression));
            }
            model.zero_grads();
            const double loss = model.batch_loss(batch, true, &dropout_rng);
            if (!std::isfinite(loss)) throw Error("train: loss diverged (non-finite)");
            if (tcfg.optimizer == "adam") {
                adam.step(model);
            } else {
                for (auto& [name, tensor] : model.params()) {
                    if (tensor.grad.empty()) continue;
                    for (std::size_t i = 0; i < tensor.values.size(); ++i) {
                        tensor.values[i] -= tcfg.learning_rate * tensor.grad[i];
                    }
                }
            }
            epoch_loss += loss;
            ++batches;
        }
        result.loss_trace.push_back(batches > 0 ? epoch_loss / static_cast<double>(batches) : 0.0);

        if (!val_ids.empty()) {
            const double val_loss = detail::eval_loss(model, data, val_ids);
            if (!std::isfinite(val_loss)) throw Error("train: validation loss diverged (non-finite)");
            if (val_loss < best_val - 1e-12) {
                best_val = val_loss;
                best_params = model.params();
                result.best_epoch = epoch;
                since_best = 0;
            } else {
                ++since_best;
                if (since_best >= tcfg.patience) break;
            }
        } else {
            result.best_epoch = epoch;
        }
    }
    if (!best_params.empty()) model.params() = std::move(best_params);
    return result;
}

inline double accuracy(const Model& model, const DataSet& data) {
    if (data.instances.empty()) throw Error("accuracy: empty dataset");
    std::size_t correct = 0;
    for (const auto& inst : data.instances) {
        const auto pred = model.predict_class(inst.indices, inst.topic.empty() ? nullptr : &inst.topic);
        if (pred == static_cast<std::size_t>(inst.label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct CvResult {
    std::vector<double> fold_metric;
    double mean_metric = 0.0;
    std::string metric_name;  // "accuracy" | "spearman_rho"
};

namespace detail {

// Stratified folds for classification, contiguous shuffled folds for regression.
inline std::vector<std::vector<std::size_t>> make_folds(const DataSet& data, std::size_t folds,
                                                        std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> out(folds);
    if (data.regression) {
        std::vector<std::size_t> order(data.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(seed, 0xf01d));
        rng.shuffle(order);
        const std::size_t base = data.size() / folds;
        const std::size_t extra = data.size() % folds;
        std::size_t at = 0;
        for (std::size_t f = 0; f < folds; ++f) {
            const std::size_t len = base + (f < extra ? 1 : 0);
            out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                          order.begin() + static_cast<std::ptrdiff_t>(at + len));
            at += len;
        }
    } else {
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < data.size(); ++i) by_class[data.instances[i].label].push_back(i);
        Rng rng(mix_seed(seed, 0xf01d));
        std::size_t offset = 0;
        for (auto& [label, ids] : by_class) {
            rng.shuffle(ids);
            for (std::size_t k = 0; k < ids.size(); ++k) out[(offset + k) % folds].push_back(ids[k]);
            offset += ids.size();
        }
        for (auto& fold : out) std::sort(fold.begin(), fold.end());
    }
    return out;
}

inline double fold_metric(Model& model, const DataSet& data, const std::vector<std::size_t>& test_ids) {
    if (data.regression) {
        std::vector<double> pred, gold;
        pred.reserve(test_ids.size());
        for (std::size_t i : test_ids) {
            const auto& inst = data.instances[i];
            pred.push_back(model.predict_score(inst.indices, inst.topic.empty() ? nullptr : &inst.topic));
            gold.push_back(inst.target);
        }
        return spearman(pred, gold);
    }
    std::size_t correct = 0;
    for (std::size_t i : test_ids) {
        const auto& inst = data.instances[i];
        if (model.predict_class(inst.indices, inst.topic.empty() ? nullptr : &inst.topic) ==
            static_cast<std::size_t>(inst.label)) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test_ids.size());
}

}  // namespace detail

// Each instance is tested exactly once; fold training seeds derive from the
// master seed so folds may run in parallel without changing results.
inline CvResult cross_validate(Arch arch, const ModelConfig& mcfg, const TrainConfig& tcfg,
                               const DataSet& data, const EmbeddingTable& embeddings,
                               std::uint64_t vocab_hash, std::size_t folds = 10,
                               std::size_t threads = 1) {
    if (folds < 2) throw Error("cross_validate: need at least 2 folds");
    if (data.size() < folds) {
        throw Error("cross_validate: dataset smaller than fold count (" + std::to_string(data.size()) +
                    " < " + std::to_string(folds) + ")");
    }
    const auto fold_ids = detail::make_folds(data, folds, tcfg.seed);

    auto run_fold = [&](std::size_t f) -> double {
        DataSet train_data;
        train_data.regression = data.regression;
        train_data.class_names = data.class_names;
        std::vector<bool> in_test(data.size(), false);
        for (std::size_t i : fold_ids[f]) in_test[i] = true;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!in_test[i]) train_data.instances.push_back(data.instances[i]);
        }
        TrainConfig fold_cfg = tcfg;
        fold_cfg.seed = mix_seed(tcfg.seed, 1000 + f);
        TrainResult tr = train(arch, mcfg, fold_cfg, train_data, embeddings, vocab_hash);
        return detail::fold_metric(tr.model, data, fold_ids[f]);
    };

    CvResult res;
    res.metric_name = data.regression ? "spearman_rho" : "accuracy";
    res.fold_metric.assign(folds, 0.0);
    if (threads > 1) {
        std::vector<std::future<double>> futures(folds);
        std::size_t next = 0;
        while (next < folds) {
            const std::size_t launch = std::min(threads, folds - next);
            for (std::size_t k = 0; k < launch; ++k) {
                futures[next + k] = std::async(std::launch::async, run_fold, next + k);
            }
            for (std::size_t k = 0; k < launch; ++k) {
                res.fold_metric[next + k] = futures[next + k].get();
            }
            next += launch;
        }
    } else {
        for (std::size_t f = 0; f < folds; ++f) res.fold_metric[f] = run_fold(f);
    }
    for (double m : res.fold_metric) res.mean_metric += m;
    res.mean_metric /= static_cast<double>(folds);
    return res;
}

}  // namespace adhom
