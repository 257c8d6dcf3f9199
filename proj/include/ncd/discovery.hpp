#pragma once

// Losses and helpers for discovering new classes on top of a pre-trained encoder:
// pairwise rank-statistics supervision for the novel head, self-training of the joint
// head on its pseudo labels, output-perturbation consistency, and prototype replay plus
// feature distillation against forgetting.

#include "ncd/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ncd {

/// s_ij = logistic(⟨l_i, l_j⟩) over all ordered pairs of rows of the novel-head logits.
ad::Var pairwise_similarity(ad::Var novel_logits);

/// ỹ_ij = 1 iff rows i and j share the same set of k largest coordinates
/// (ties go to the lower dimension index). Returned as a 0/1 matrix.
Tensor topk_pseudo_pairs(const Tensor& z, std::size_t k);

/// The index set of the k largest entries of `row`, sorted ascending.
std::vector<std::size_t> topk_indices(std::span<const double> row, std::size_t k);

/// Mean binary cross-entropy over all n² ordered pairs, diagonal included.
ad::Var pairwise_bce(ad::Var similarity, const Tensor& pair_targets);

/// num_old + argmax of each row (lowest index on ties).
std::vector<std::size_t> assign_pseudo_labels(const Tensor& novel_logits, std::size_t num_old);

/// Mean cross-entropy of the joint head against (detached) pseudo labels.
ad::Var self_training_loss(ad::Var joint_logits, const std::vector<std::size_t>& pseudo_labels);

enum class SigmaMode { empirical, unit };

/// Per-dimension population standard deviation of `z`; dimensions whose deviation is
/// below 1e-12 (and every dimension in unit mode) get 1.0.
std::vector<double> perturbation_sigma(const Tensor& z, SigmaMode mode);

/// z + η·Δ with Δ_ik ~ N(0, σ_k²). The noise is a tape constant, so gradients pass
/// straight through to z.
ad::Var perturb_representations(ad::Var z, double eta, std::span<const double> sigma, std::uint64_t seed);

/// (1/C)·mean_i Σ_k [softmax_k(clean_i) − softmax_k(perturbed_i)]².
ad::Var perturb_consistency_loss(ad::Var clean_logits, ad::Var perturbed_logits);

/// Per-class Gaussian summary of pre-trained representations.
struct Prototypes {
    std::vector<int> classes;          // old class ids, in slot order
    std::vector<std::size_t> counts;   // samples per class
    Tensor mean;                       // |classes| × d
    Tensor variance;                   // |classes| × d, population variance

    std::size_t dim() const { return mean.cols(); }
    std::string to_json() const;
    static Prototypes from_json(const std::string& text);
    friend bool operator==(const Prototypes&, const Prototypes&) = default;
};

Prototypes compute_prototypes(const Tensor& z_old, std::span<const int> labels, const std::vector<int>& old_classes);

struct PrototypeBatch {
    Tensor features;          // (per_class · |classes|) × d
    std::vector<int> labels;  // true old class ids
};

/// `per_class` independent draws from N(μ_c, diag ν_c²) for each class, class-major.
PrototypeBatch sample_prototype_batch(const Prototypes& protos, std::size_t per_class, std::uint64_t seed);

/// Mean cross-entropy of joint logits on replayed samples. `slot_labels` index the joint
/// head and must lie in [0, num_old).
ad::Var replay_loss(ad::Var joint_logits, const std::vector<std::size_t>& slot_labels, std::size_t num_old);

/// (1/n)·Σ_i ‖z_frozen,i − z_current,i‖₂
ad::Var distill_loss(ad::Var z_frozen, ad::Var z_current);

/// amplitude · exp(−5(1 − t)²), t = min(epoch / length, 1).
double rampup(std::size_t epoch, std::size_t length, double amplitude);

struct LossWeights {
    double alpha1 = 0.1;
    double alpha2 = 4.0;
    std::size_t rampup_length = 80;
    double eta = 0.5;
    double lambda = 1.0;
    double omega_fd = 10.0;
    std::size_t top_k = 5;

    /// Throws std::invalid_argument on negative weights, rampup_length 0 or top_k 0.
    void validate() const;
};

/// Scalar values of the five loss terms; disabled terms are absent.
struct LossComponents {
    std::optional<double> pseudo, self, perturb, replay, distill;
};

/// Per-term report for logging (disabled terms report 0).
struct LossBreakdown {
    std::size_t epoch = 0;
    double pseudo = 0, self = 0, perturb = 0, replay = 0, distill = 0;
    double beta1 = 0, beta2 = 0;
    double novel = 0, base = 0, total = 0;
};

/// L = (pseudo + β1·self + β2·perturb) + λ·(replay + ω_fd·distill).
LossBreakdown total_loss(const LossComponents& components, const LossWeights& weights, std::size_t epoch);

/// Tape version of total_loss; invalid Vars mark disabled terms. At least one term must be set.
struct LossVars {
    ad::Var pseudo, self, perturb, replay, distill;
};
ad::Var total_loss(const LossVars& terms, const LossWeights& weights, std::size_t epoch, LossBreakdown* report);

/// CSV header of the per-epoch loss log.
inline constexpr const char* kLossLogHeader = "epoch,pseudo,self,perturb,replay,distill,beta1,beta2,total";
std::string to_csv_row(const LossBreakdown& b);

} // namespace ncd
