#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "melalign/prefdata.hpp"

namespace melalign {

class EmptyDatasetError : public Error {
public:
    using Error::Error;
};

enum class Optimizer { sgd, adam };

std::string_view to_string(Optimizer opt);
std::optional<Optimizer> optimizer_from_string(std::string_view s);

enum class Phase { dpo, kto, done };

std::string_view to_string(Phase phase);

struct AlignConfig {
    double beta = 0.1;  // scaling factor on the policy/reference log ratio
    std::optional<double> dpo_beta;  // per-phase overrides of beta
    std::optional<double> kto_beta;
    // Plain SGD preserves the losses' self-limiting gradients (they vanish as
    // preferences saturate); Adam renormalizes them away and keeps pushing,
    // which at this scale walks the policy off the data. Adam stays available
    // for experiments but needs a much smaller step.
    double lr = 0.2;
    int dpo_epochs = 30;
    int kto_epochs = 30;
    int batch_size = 32;
    Optimizer optimizer = Optimizer::sgd;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
    double effective_beta(Phase phase) const;

    bool operator==(const AlignConfig&) const = default;
};

struct TrainLogRecord {
    Phase phase = Phase::dpo;
    int epoch = 0;
    int step = 0;  // global optimizer step, monotone across phases
    double mean_loss = 0.0;
    double grad_norm = 0.0;

    bool operator==(const TrainLogRecord&) const = default;
};

// Numerically stable scalar helpers shared by both losses. They satisfy
// 1 - sigmoid(x) == sigmoid(-x) and softplus(x) == -log(sigmoid(-x)).
double sigmoid(double x);
double softplus(double x);

struct LossGrad {
    double loss = 0.0;
    Matrix grad;
};

// Paired loss: -log sigmoid(beta * ((log pi/pi_ref)(y_w) - (log pi/pi_ref)(y_l))).
// Equals ln 2 when policy == reference. grad is d loss / d theta.
LossGrad dpo_loss(const Policy& policy, const Policy& reference, const PreferencePair& pair,
                  double beta);

// Undesirable-side loss: -log(1 - sigmoid(beta * (log pi/pi_ref)(y_u))), i.e.
// softplus(beta * delta_u); minimizing it pushes the undesirable sequence's
// probability below the reference. Equals ln 2 when policy == reference.
LossGrad kto_loss(const Policy& policy, const Policy& reference, const UnpairedSample& sample,
                  double beta);

struct BatchEval {
    double mean_loss = 0.0;
    Matrix mean_grad;
};

// Mean loss and gradient over the items named by indices. Items are evaluated
// in parallel into per-item slots and reduced serially in index order, so the
// serial variants are bit-identical references.
BatchEval dpo_batch_eval(const Policy& policy, const Policy& reference,
                         const std::vector<PreferencePair>& pairs,
                         const std::vector<std::size_t>& indices, double beta);
BatchEval dpo_batch_eval_serial(const Policy& policy, const Policy& reference,
                                const std::vector<PreferencePair>& pairs,
                                const std::vector<std::size_t>& indices, double beta);
BatchEval kto_batch_eval(const Policy& policy, const Policy& reference,
                         const std::vector<UnpairedSample>& samples,
                         const std::vector<std::size_t>& indices, double beta);
BatchEval kto_batch_eval_serial(const Policy& policy, const Policy& reference,
                                const std::vector<UnpairedSample>& samples,
                                const std::vector<std::size_t>& indices, double beta);

// Sequential alignment state: the reference is frozen at construction and
// anchors both phases; phases only advance dpo -> kto -> done.
class AlignState {
public:
    explicit AlignState(Policy start) : policy_(start), reference_(std::move(start)) {}

    const Policy& policy() const { return policy_; }
    const Policy& reference() const { return reference_; }
    Phase phase() const { return phase_; }
    int step() const { return step_; }
    const std::vector<TrainLogRecord>& log() const { return log_; }

    friend AlignState train_dpo(AlignState state, const std::vector<PreferencePair>& paired,
                                const AlignConfig& cfg);
    friend AlignState train_kto(AlignState state, const std::vector<UnpairedSample>& unpaired,
                                const AlignConfig& cfg);

private:
    Policy policy_;
    Policy reference_;
    Phase phase_ = Phase::dpo;
    int step_ = 0;
    std::vector<TrainLogRecord> log_;
};

// Mini-batch optimization of the mean pair loss; advances the phase to kto
// even when dpo_epochs == 0. Deterministic for a fixed config. Throws
// EmptyDatasetError when paired is empty and dpo_epochs > 0.
AlignState train_dpo(AlignState state, const std::vector<PreferencePair>& paired,
                     const AlignConfig& cfg);

// Mini-batch optimization of the mean undesirable loss; advances the phase to
// done. Throws EmptyDatasetError when unpaired is empty and kto_epochs > 0.
AlignState train_kto(AlignState state, const std::vector<UnpairedSample>& unpaired,
                     const AlignConfig& cfg);

// DPO phase on the paired records, then KTO phase on the unpaired records,
// both anchored to a reference frozen at the input policy. Each phase starts
// from fresh optimizer state.
AlignState align(Policy policy, const PreferenceDataset& dataset, const AlignConfig& cfg);

// One JSON record per optimizer step: phase, epoch, step, mean_loss, grad_norm.
void write_training_log(const std::vector<TrainLogRecord>& log, const std::string& path);

}  // namespace melalign
