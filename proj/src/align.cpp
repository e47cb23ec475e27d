#include "melalign/align.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "melalign/parallel.hpp"
#include "melalign/rng.hpp"

namespace melalign {

std::string_view to_string(Optimizer opt) {
    return opt == Optimizer::sgd ? "sgd" : "adam";
}

std::optional<Optimizer> optimizer_from_string(std::string_view s) {
    if (s == "sgd") return Optimizer::sgd;
    if (s == "adam") return Optimizer::adam;
    return std::nullopt;
}

std::string_view to_string(Phase phase) {
    switch (phase) {
        case Phase::dpo: return "dpo";
        case Phase::kto: return "kto";
        case Phase::done: return "done";
    }
    return "done";
}

void AlignConfig::validate() const {
    if (!(beta > 0.0)) throw Error("beta must be positive");
    if (dpo_beta && !(*dpo_beta > 0.0)) throw Error("dpo_beta must be positive");
    if (kto_beta && !(*kto_beta > 0.0)) throw Error("kto_beta must be positive");
    if (!(lr > 0.0)) throw Error("lr must be positive");
    if (dpo_epochs < 0 || kto_epochs < 0) throw Error("epochs must be non-negative");
    if (batch_size < 1) throw Error("batch_size must be at least 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw Error("adam moment decays must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw Error("adam_eps must be positive");
}

double AlignConfig::effective_beta(Phase phase) const {
    if (phase == Phase::dpo && dpo_beta) return *dpo_beta;
    if (phase == Phase::kto && kto_beta) return *kto_beta;
    return beta;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    if (x > 0.0) {
        return x + std::log1p(std::exp(-x));
    }
    return std::log1p(std::exp(x));
}

namespace {

// Shared core: loss = softplus(s*z) with s = -1 for the paired loss (so loss
// falls as the winner margin z grows) and s = +1 for the undesirable loss.
double pair_margin(const Policy& policy, const Policy& reference, const PreferencePair& pair,
                   double beta) {
    const PromptEncoding x = encode_prompt(pair.prompt, policy.vocab());
    const double dw = log_prob(policy, x, pair.winner_tokens) -
                      log_prob(reference, x, pair.winner_tokens);
    const double dl = log_prob(policy, x, pair.loser_tokens) -
                      log_prob(reference, x, pair.loser_tokens);
    return beta * (dw - dl);
}

double sample_margin(const Policy& policy, const Policy& reference, const UnpairedSample& sample,
                     double beta) {
    const PromptEncoding x = encode_prompt(sample.prompt, policy.vocab());
    return beta * (log_prob(policy, x, sample.tokens) - log_prob(reference, x, sample.tokens));
}

void add_dpo_grad(const Policy& policy, const PreferencePair& pair, double beta, double z,
                  Matrix& acc) {
    const double coeff = -sigmoid(-z) * beta;
    add_scaled_grad_log_prob(policy, pair.winner_tokens, coeff, acc);
    add_scaled_grad_log_prob(policy, pair.loser_tokens, -coeff, acc);
}

void add_kto_grad(const Policy& policy, const UnpairedSample& sample, double beta, double z,
                  Matrix& acc) {
    add_scaled_grad_log_prob(policy, sample.tokens, sigmoid(z) * beta, acc);
}

}  // namespace

LossGrad dpo_loss(const Policy& policy, const Policy& reference, const PreferencePair& pair,
                  double beta) {
    if (!(beta > 0.0)) throw Error("beta must be positive");
    const double z = pair_margin(policy, reference, pair, beta);
    LossGrad out;
    out.loss = softplus(-z);
    out.grad = Matrix(policy.vocab_size(), policy.vocab_size());
    add_dpo_grad(policy, pair, beta, z, out.grad);
    return out;
}

LossGrad kto_loss(const Policy& policy, const Policy& reference, const UnpairedSample& sample,
                  double beta) {
    if (!(beta > 0.0)) throw Error("beta must be positive");
    const double z = sample_margin(policy, reference, sample, beta);
    LossGrad out;
    out.loss = softplus(z);
    out.grad = Matrix(policy.vocab_size(), policy.vocab_size());
    add_kto_grad(policy, sample, beta, z, out.grad);
    return out;
}

namespace {

struct ItemSlot {
    double loss = 0.0;
    Matrix grad;
};

template <typename Item, typename EvalFn>
BatchEval batch_eval_impl(const Policy& policy, const std::vector<Item>& items,
                          const std::vector<std::size_t>& indices, EvalFn&& eval_one,
                          bool parallel) {
    if (indices.empty()) {
        throw EmptyDatasetError("batch is empty");
    }
    const int v = policy.vocab_size();
    std::vector<ItemSlot> slots(indices.size());
    auto fill = [&](std::int64_t i) {
        auto& slot = slots[static_cast<std::size_t>(i)];
        slot.grad = Matrix(v, v);
        slot.loss = eval_one(items[indices[static_cast<std::size_t>(i)]], slot.grad);
    };
    if (parallel) {
        par::parallel_for(static_cast<std::int64_t>(indices.size()), fill);
    } else {
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(indices.size()); ++i) {
            fill(i);
        }
    }
    BatchEval out;
    out.mean_grad = Matrix(v, v);
    for (const ItemSlot& slot : slots) {
        out.mean_loss += slot.loss;
        out.mean_grad.add_scaled(slot.grad, 1.0);
    }
    const double inv_n = 1.0 / static_cast<double>(indices.size());
    out.mean_loss *= inv_n;
    for (double& g : out.mean_grad.data) {
        g *= inv_n;
    }
    return out;
}

BatchEval dpo_batch_impl(const Policy& policy, const Policy& reference,
                         const std::vector<PreferencePair>& pairs,
                         const std::vector<std::size_t>& indices, double beta, bool parallel) {
    return batch_eval_impl(
        policy, pairs, indices,
        [&](const PreferencePair& pair, Matrix& grad) {
            const double z = pair_margin(policy, reference, pair, beta);
            add_dpo_grad(policy, pair, beta, z, grad);
            return softplus(-z);
        },
        parallel);
}

BatchEval kto_batch_impl(const Policy& policy, const Policy& reference,
                         const std::vector<UnpairedSample>& samples,
                         const std::vector<std::size_t>& indices, double beta, bool parallel) {
    return batch_eval_impl(
        policy, samples, indices,
        [&](const UnpairedSample& sample, Matrix& grad) {
            const double z = sample_margin(policy, reference, sample, beta);
            add_kto_grad(policy, sample, beta, z, grad);
            return softplus(z);
        },
        parallel);
}

}  // namespace

BatchEval dpo_batch_eval(const Policy& policy, const Policy& reference,
                         const std::vector<PreferencePair>& pairs,
                         const std::vector<std::size_t>& indices, double beta) {
    return dpo_batch_impl(policy, reference, pairs, indices, beta, true);
}

BatchEval dpo_batch_eval_serial(const Policy& policy, const Policy& reference,
                                const std::vector<PreferencePair>& pairs,
                                const std::vector<std::size_t>& indices, double beta) {
    return dpo_batch_impl(policy, reference, pairs, indices, beta, false);
}

BatchEval kto_batch_eval(const Policy& policy, const Policy& reference,
                         const std::vector<UnpairedSample>& samples,
                         const std::vector<std::size_t>& indices, double beta) {
    return kto_batch_impl(policy, reference, samples, indices, beta, true);
}

BatchEval kto_batch_eval_serial(const Policy& policy, const Policy& reference,
                                const std::vector<UnpairedSample>& samples,
                                const std::vector<std::size_t>& indices, double beta) {
    return kto_batch_impl(policy, reference, samples, indices, beta, false);
}

namespace {

struct AdamMoments {
    Matrix m;
    Matrix v;
    long t = 0;
};

void apply_update(Matrix& theta, const Matrix& grad, const AlignConfig& cfg, AdamMoments& adam) {
    if (cfg.optimizer == Optimizer::sgd) {
        theta.add_scaled(grad, -cfg.lr);
        return;
    }
    ++adam.t;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.t));
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
        const double g = grad.data[i];
        adam.m.data[i] = cfg.adam_beta1 * adam.m.data[i] + (1.0 - cfg.adam_beta1) * g;
        adam.v.data[i] = cfg.adam_beta2 * adam.v.data[i] + (1.0 - cfg.adam_beta2) * g * g;
        const double m_hat = adam.m.data[i] / bc1;
        const double v_hat = adam.v.data[i] / bc2;
        theta.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
}

}  // namespace

namespace detail {

// One phase of mini-batch optimization with fresh optimizer state; the seed
// stream is namespaced by phase so the two phases draw independent shuffles.
template <typename BatchFn>
void run_phase(Policy& policy, int& step, std::vector<TrainLogRecord>& log, Phase phase,
               std::size_t n_items, int epochs, const AlignConfig& cfg, BatchFn&& eval_batch) {
    const int v = policy.vocab_size();
    AdamMoments adam{Matrix(v, v), Matrix(v, v), 0};
    Rng rng(mix_seed(cfg.seed, phase == Phase::dpo ? 1u : 2u));
    std::vector<std::size_t> order(n_items);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                    n_items);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t stop = std::min(order.size(), start + batch);
            const std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                   order.begin() + static_cast<std::ptrdiff_t>(stop));
            const BatchEval be = eval_batch(indices);
            apply_update(policy.theta(), be.mean_grad, cfg, adam);
            log.push_back(TrainLogRecord{phase, epoch, step++, be.mean_loss,
                                         be.mean_grad.frobenius_norm()});
        }
    }
}

}  // namespace detail

AlignState train_dpo(AlignState state, const std::vector<PreferencePair>& paired,
                     const AlignConfig& cfg) {
    cfg.validate();
    if (state.phase_ != Phase::dpo) {
        throw Error("train_dpo requires the dpo phase");
    }
    if (paired.empty() && cfg.dpo_epochs > 0) {
        throw EmptyDatasetError("no preference pairs to train on");
    }
    if (!paired.empty()) {
        const double beta = cfg.effective_beta(Phase::dpo);
        detail::run_phase(state.policy_, state.step_, state.log_, Phase::dpo, paired.size(),
                          cfg.dpo_epochs, cfg, [&](const std::vector<std::size_t>& indices) {
                              return dpo_batch_eval(state.policy_, state.reference_, paired,
                                                    indices, beta);
                          });
    }
    state.phase_ = Phase::kto;
    return state;
}

AlignState train_kto(AlignState state, const std::vector<UnpairedSample>& unpaired,
                     const AlignConfig& cfg) {
    cfg.validate();
    if (state.phase_ != Phase::kto) {
        throw Error("train_kto requires the kto phase");
    }
    if (unpaired.empty() && cfg.kto_epochs > 0) {
        throw EmptyDatasetError("no undesirable samples to train on");
    }
    if (!unpaired.empty()) {
        const double beta = cfg.effective_beta(Phase::kto);
        detail::run_phase(state.policy_, state.step_, state.log_, Phase::kto, unpaired.size(),
                          cfg.kto_epochs, cfg, [&](const std::vector<std::size_t>& indices) {
                              return kto_batch_eval(state.policy_, state.reference_, unpaired,
                                                    indices, beta);
                          });
    }
    state.phase_ = Phase::done;
    return state;
}

AlignState align(Policy policy, const PreferenceDataset& dataset, const AlignConfig& cfg) {
    AlignState state(std::move(policy));
    state = train_dpo(std::move(state), dataset.pairs, cfg);
    state = train_kto(std::move(state), dataset.unpaired, cfg);
    return state;
}

void write_training_log(const std::vector<TrainLogRecord>& log, const std::string& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open training log for writing: " + path);
    }
    for (const TrainLogRecord& rec : log) {
        nlohmann::json j;
        j["phase"] = std::string(to_string(rec.phase));
        j["epoch"] = rec.epoch;
        j["step"] = rec.step;
        j["mean_loss"] = rec.mean_loss;
        j["grad_norm"] = rec.grad_norm;
        file << j.dump() << "\n";
    }
    if (!file) {
        throw IoError("failed to write training log: " + path);
    }
}

}  // namespace melalign
