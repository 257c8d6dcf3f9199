#pragma once

#include "ncd/graph.hpp"

#include <cstdint>
#include <vector>

namespace ncd {

struct SbmParams {
    std::vector<std::size_t> blocks;  // node count per class, class c = block index
    double p_in = 0.15;
    double p_out = 0.01;
    std::size_t feat_dim = 16;
    double feat_shift = 1.0;
    std::uint64_t seed = 0;
};

/// Stochastic block model with Gaussian node features. Class c's feature mean is
/// feat_shift along axis (c mod feat_dim); noise is unit-variance isotropic.
/// Nodes are numbered block by block.
Graph sbm_generate(const SbmParams& params);

} // namespace ncd
