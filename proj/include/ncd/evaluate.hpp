#pragma once

#include "ncd/graph.hpp"
#include "ncd/metrics.hpp"
#include "ncd/model.hpp"
#include "ncd/split.hpp"
#include "ncd/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ncd {

/// Argmax over every output of the joint head (the old head before discovery), for all
/// nodes. Takes no class lists: prediction never knows which classes are old or new.
std::vector<std::size_t> predict_slots(const ModelState& state, const GraphOps& ops, const Tensor& features);

/// Representations of every node from the current encoder.
Tensor node_representations(const ModelState& state, const GraphOps& ops, const Tensor& features);

/// Old slots map to the split's old classes in order. New slots carry no class identity,
/// so they are matched to new classes by Hungarian assignment on phase-2 test nodes.
std::vector<int> map_slots_to_classes(std::span<const std::size_t> slots, const Graph& g, const ClassSplit& split,
                                      std::size_t num_slots);

struct MetricsReport {
    int phase = 1;
    double old_acc = 0.0;
    double new_acc = 0.0;
    double all_acc = 0.0;
    /// Novel head alone on phase-2 test nodes, Hungarian-matched. NaN before discovery.
    double novel_head_acc = 0.0;
    std::vector<int> classes;  // confusion row/column order: old classes then new classes
    std::vector<std::vector<std::size_t>> confusion;
    Tensor perf;  // phase × phase, lower triangle filled
    double aa = 0.0;
    double af = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<int> slot_to_class;
    std::vector<std::size_t> slots;  // raw prediction per node
    std::vector<int> predicted;      // predicted class id per node

    /// metrics.json body; NaN values are written as null.
    nlohmann::ordered_json to_json() const;
    std::string confusion_csv() const;
    std::string perf_csv() const;
};

/// Task-agnostic evaluation over the split's test nodes.
MetricsReport evaluate_joint(const ModelState& state, const Graph& g, const ClassSplit& split);

/// id,label,z0..z{d-1} for every node.
std::string nodes_csv(const Graph& g, const Tensor& representations);

} // namespace ncd
