#include "ncd/pipeline.hpp"

#include <algorithm>
#include <array>

namespace ncd {

PipelineResult run_pipeline(const Graph& g, const ClassSplit& split, const TrainConfig& cfg) {
    PipelineResult r;
    r.pretrain = pretrain(g, split, cfg);
    r.phase1 = evaluate_joint(r.pretrain.state, g, split);
    r.ncd = ncd_train(r.pretrain.state, r.pretrain.prototypes, g, split, cfg);
    r.report = evaluate_joint(r.ncd.best, g, split);
    r.phase1.seed = r.report.seed = cfg.seed;
    return r;
}

std::vector<DepthRow> run_depth_sweep(const Graph& g, const ClassSplit& split, const TrainConfig& cfg,
                                      const std::vector<std::size_t>& depths) {
    constexpr std::array<std::size_t, 6> allowed{2, 4, 8, 16, 32, 64};
    if (depths.empty()) throw std::invalid_argument("depth sweep: no depths given");
    for (std::size_t d : depths)
        if (std::find(allowed.begin(), allowed.end(), d) == allowed.end())
            throw std::invalid_argument("depth sweep: depth " + std::to_string(d) +
                                        " not in {2, 4, 8, 16, 32, 64}");
    std::vector<DepthRow> rows;
    for (std::size_t d : depths) {
        TrainConfig c = cfg;
        c.layers = d;
        rows.push_back({d, run_pipeline(g, split, c).report});
    }
    return rows;
}

} // namespace ncd
