#include "ncd/sbm.hpp"

#include "ncd/rng.hpp"

#include <stdexcept>

namespace ncd {

Graph sbm_generate(const SbmParams& params) {
    if (params.blocks.empty()) throw std::invalid_argument("sbm_generate: no blocks");
    if (params.p_in < 0 || params.p_in > 1 || params.p_out < 0 || params.p_out > 1)
        throw std::invalid_argument("sbm_generate: probabilities must lie in [0, 1]");
    if (params.feat_dim == 0) throw std::invalid_argument("sbm_generate: feat_dim must be positive");

    std::vector<int> labels;
    for (std::size_t c = 0; c < params.blocks.size(); ++c)
        labels.insert(labels.end(), params.blocks[c], static_cast<int>(c));
    const std::size_t n = labels.size();

    Rng edge_rng(derive_seed(params.seed, "sbm-edges"));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            const double p = labels[u] == labels[v] ? params.p_in : params.p_out;
            if (edge_rng.bernoulli(p)) pairs.emplace_back(u, v);
        }
    }

    Rng feat_rng(derive_seed(params.seed, "sbm-features"));
    Tensor features(n, params.feat_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto axis = static_cast<std::size_t>(labels[i]) % params.feat_dim;
        for (std::size_t k = 0; k < params.feat_dim; ++k)
            features(i, k) = feat_rng.normal() + (k == axis ? params.feat_shift : 0.0);
    }
    return make_graph(std::move(features), std::move(labels), pairs);
}

} // namespace ncd
