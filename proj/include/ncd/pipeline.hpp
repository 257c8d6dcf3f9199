#pragma once

#include "ncd/evaluate.hpp"
#include "ncd/train.hpp"

#include <vector>

namespace ncd {

struct PipelineResult {
    PretrainResult pretrain;
    MetricsReport phase1;
    NcdResult ncd;
    MetricsReport report;  // joint head of ncd.best
};

/// Pre-training, discovery and evaluation in one call.
PipelineResult run_pipeline(const Graph& g, const ClassSplit& split, const TrainConfig& cfg);

struct DepthRow {
    std::size_t layers = 0;
    MetricsReport report;
};

/// One full pipeline per encoder depth, same seed. Depths must come from {2, 4, 8, 16, 32, 64}.
std::vector<DepthRow> run_depth_sweep(const Graph& g, const ClassSplit& split, const TrainConfig& cfg,
                                      const std::vector<std::size_t>& depths);

} // namespace ncd
