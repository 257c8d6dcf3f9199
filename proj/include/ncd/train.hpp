#pragma once

#include "ncd/adam.hpp"
#include "ncd/checkpoint.hpp"
#include "ncd/discovery.hpp"
#include "ncd/graph.hpp"
#include "ncd/model.hpp"
#include "ncd/split.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncd {

/// Switches for the five discovery-phase loss terms.
struct Ablation {
    bool pseudo = true;
    bool self = true;
    bool perturb = true;
    bool replay = true;
    bool distill = true;

    friend bool operator==(const Ablation&, const Ablation&) = default;
};

/// Which head scores the clean/perturbed pair in the consistency loss.
enum class PerturbHead { novel, joint };

std::string to_string(PerturbHead h);
PerturbHead parse_perturb_head(const std::string& s);
std::string to_string(SigmaMode m);
SigmaMode parse_sigma_mode(const std::string& s);

struct TrainConfig {
    Backbone backbone = Backbone::gcn;
    std::size_t hidden = 32;
    std::size_t layers = 2;
    double lr = 0.01;
    double weight_decay = 5e-4;
    std::size_t pretrain_epochs = 200;
    std::size_t ncd_epochs = 600;
    std::size_t patience = 50;
    std::uint64_t seed = 0;

    LossWeights loss;
    Ablation ablation;
    std::size_t replay_per_class = 32;
    double head_init_scale = 0.01;
    PerturbHead perturb_head = PerturbHead::novel;
    SigmaMode sigma_mode = SigmaMode::empirical;
    double smoothing = 0.9;
    double min_improvement = 1e-4;

    /// Recomputes the replay loss on its own every epoch and checks that the encoder gets
    /// an all-zero gradient from it.
    bool debug_checks = false;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    AdamConfig adam() const { return {lr, 0.9, 0.999, 1e-8, weight_decay}; }
};

enum class Phase { pretrained = 1, discovered = 2 };

struct ModelState {
    Phase phase = Phase::pretrained;
    EncoderParams encoder;
    EncoderParams frozen_encoder;  // never updated after pre-training
    HeadParams old_head;
    std::optional<HeadParams> novel_head;
    std::optional<HeadParams> joint_head;
    /// Phase-1 old-class test accuracy, the first row of the performance matrix.
    double phase1_old_acc = 0.0;
    Adam optimizer;

    std::size_t num_old() const { return old_head.num_outputs(); }
    std::size_t num_slots() const { return joint_head ? joint_head->num_outputs() : old_head.num_outputs(); }

    /// Encoder, heads and Adam moments as named tensors; the phase and backbone go in meta.
    Checkpoint to_checkpoint() const;
    static ModelState from_checkpoint(const Checkpoint& ckpt);
};

/// Raised when a loss or accuracy turns non-finite. `log` holds the offending epoch's
/// per-term breakdown (discovery phase) or loss line (pre-training).
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::string log) : std::runtime_error(what), log_(std::move(log)) {}
    const std::string& log() const { return log_; }

private:
    std::string log_;
};

struct PretrainEpoch {
    std::size_t epoch = 0;
    double loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

inline constexpr const char* kPretrainLogHeader = "epoch,loss,train_acc,val_acc";
std::string to_csv_row(const PretrainEpoch& e);

struct PretrainResult {
    ModelState state;  // best-validation parameters
    Prototypes prototypes;
    std::vector<PretrainEpoch> log;
    std::size_t best_epoch = 0;
};

/// Supervised training of encoder + old head on phase-1 train nodes; keeps the parameters
/// with the highest phase-1 validation accuracy (earliest on ties).
PretrainResult pretrain(const Graph& g, const ClassSplit& split, const TrainConfig& cfg);

struct NcdResult {
    ModelState best;   // lowest smoothed total loss
    ModelState final;  // after the last epoch run
    std::vector<LossBreakdown> log;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

/// Discovery phase on phase-2 train nodes (their labels are never read).
NcdResult ncd_train(const ModelState& pretrained, const Prototypes& prototypes, const Graph& g,
                    const ClassSplit& split, const TrainConfig& cfg);

} // namespace ncd
