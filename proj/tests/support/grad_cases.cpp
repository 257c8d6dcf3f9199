#include "grad_cases.hpp"

#include "oracles.hpp"

#include "ncd/discovery.hpp"
#include "ncd/model.hpp"
#include "ncd/rng.hpp"

#include <cmath>
#include <memory>

namespace gradcases {

using ncd::Tensor;
using ncd::ad::Tape;
using ncd::ad::Var;
namespace ad = ncd::ad;

namespace {

Tensor rnd(std::size_t r, std::size_t c, std::uint64_t seed, std::uint64_t salt, double scale = 1.0) {
    return oracle::random_tensor(r, c, ncd::derive_seed(seed, "case", salt), scale);
}

// Keeps entries at least `gap` away from zero so kinks stay outside the FD stencil.
Tensor away_from_zero(Tensor t, double gap) {
    for (double& v : t.data())
        if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
    return t;
}

// Scalarizes a matrix output with fixed random weights so every entry's gradient matters.
Var weighted_sum(Tape& tape, Var x, std::uint64_t seed) {
    return ad::sum(ad::mul(x, tape.constant(rnd(x.rows(), x.cols(), seed, 999))));
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t k, std::uint64_t seed) {
    ncd::Rng rng(ncd::derive_seed(seed, "case-labels"));
    std::vector<std::size_t> out(n);
    for (auto& v : out) v = static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(k))) % k;
    return out;
}

Case unary(std::string name, std::function<Var(Var)> op, double gap = 0.0) {
    return {std::move(name), [op, gap](std::uint64_t seed) {
                Tensor x = rnd(4, 3, seed, 1);
                if (gap > 0) x = away_from_zero(std::move(x), gap);
                return Instance{[op, seed](Tape& t, std::span<const Var> p) { return weighted_sum(t, op(p[0]), seed); },
                                {x}};
            }};
}

Case binary(std::string name, std::function<Var(Var, Var)> op, std::size_t ar, std::size_t ac, std::size_t br,
            std::size_t bc) {
    return {std::move(name), [=](std::uint64_t seed) {
                return Instance{[op, seed](Tape& t, std::span<const Var> p) { return weighted_sum(t, op(p[0], p[1]), seed); },
                                {rnd(ar, ac, seed, 1), rnd(br, bc, seed, 2)}};
            }};
}

struct EncoderSetup {
    std::shared_ptr<ncd::GraphOps> ops;
    Tensor features;
    ncd::EncoderParams encoder;
};

EncoderSetup small_encoder(ncd::Backbone backbone, std::uint64_t seed, std::size_t hidden) {
    const ncd::Graph g = oracle::random_graph(10, 0.3, 4, 3, ncd::derive_seed(seed, "case-graph"));
    return {std::make_shared<ncd::GraphOps>(ncd::GraphOps::from(g)), g.features,
            ncd::init_encoder(backbone, 4, hidden, 2, seed)};
}

std::vector<Tensor> encoder_tensors(const ncd::EncoderParams& enc) {
    std::vector<Tensor> out;
    for (const Tensor* t : enc.parameters()) out.push_back(*t);
    return out;
}

ncd::BoundEncoder bind_encoder(ncd::Backbone backbone, std::span<const Var> p, std::size_t layers) {
    ncd::BoundEncoder enc;
    enc.backbone = backbone;
    for (std::size_t l = 0; l < layers; ++l) {
        enc.weights.push_back(p[2 * l]);
        enc.biases.push_back(p[2 * l + 1]);
    }
    return enc;
}

Case encoder_ce(std::string name, ncd::Backbone backbone) {
    return {std::move(name), [backbone](std::uint64_t seed) {
                EncoderSetup s = small_encoder(backbone, seed, 5);
                std::vector<Tensor> params = encoder_tensors(s.encoder);
                // Nonzero biases so hidden units sit away from the ReLU kink in general position.
                params[1] = rnd(1, 5, seed, 7, 0.3);
                params.push_back(rnd(5, 3, seed, 3));
                params.push_back(rnd(1, 3, seed, 4));
                const auto targets = random_labels(10, 3, seed);
                auto ops = s.ops;
                Tensor x = s.features;
                return Instance{[=](Tape& t, std::span<const Var> p) {
                                    Var z = ncd::encode(bind_encoder(backbone, p, 2), *ops, t.constant(x));
                                    Var logits = ncd::head_forward({p[4], p[5]}, z);
                                    return ad::cross_entropy(logits, targets);
                                },
                                params};
            }};
}

} // namespace

const std::vector<Case>& all() {
    static const std::vector<Case> cases = [] {
        std::vector<Case> c;
        c.push_back(binary("matmul", [](Var a, Var b) { return ad::matmul(a, b); }, 3, 4, 4, 2));
        c.push_back(binary("matmul_nt", [](Var a, Var b) { return ad::matmul_nt(a, b); }, 3, 4, 5, 4));
        c.push_back(binary("add", [](Var a, Var b) { return ad::add(a, b); }, 3, 4, 3, 4));
        c.push_back(binary("sub", [](Var a, Var b) { return ad::sub(a, b); }, 3, 4, 3, 4));
        c.push_back(binary("add_row", [](Var a, Var b) { return ad::add_row(a, b); }, 3, 4, 1, 4));
        c.push_back(binary("mul", [](Var a, Var b) { return ad::mul(a, b); }, 3, 4, 3, 4));
        c.push_back(binary("concat_rows", [](Var a, Var b) { return ad::concat_rows(a, b); }, 2, 3, 4, 3));
        c.push_back(binary("concat_cols", [](Var a, Var b) { return ad::concat_cols(a, b); }, 3, 2, 3, 4));
        c.push_back(unary("transpose", [](Var x) { return ad::transpose(x); }));
        c.push_back(unary("mul_scalar", [](Var x) { return ad::mul_scalar(x, -1.7); }));
        c.push_back(unary("relu", [](Var x) { return ad::relu(x); }, 0.05));
        c.push_back(unary("sigmoid", [](Var x) { return ad::sigmoid(x); }));
        c.push_back(unary("log_softmax_rows", [](Var x) { return ad::log_softmax_rows(x); }));
        c.push_back(unary("softmax_rows", [](Var x) { return ad::softmax_rows(x); }));
        c.push_back(unary("gather_rows", [](Var x) { return ad::gather_rows(x, {2, 0, 2, 3}); }));
        c.push_back(unary("mean", [](Var x) { return ad::mean(ad::mul(x, x)); }));
        c.push_back(unary("sum", [](Var x) { return ad::sum(ad::mul(x, x)); }));
        c.push_back(unary("l2_row_norm", [](Var x) { return ad::l2_row_norm(x); }, 0.2));
        c.push_back({"spmm", [](std::uint64_t seed) {
                         const ncd::Graph g = oracle::random_graph(8, 0.35, 3, 2, seed);
                         auto adj = std::make_shared<ncd::SparseMatrix>(ncd::normalize_adjacency(g));
                         return Instance{[adj, seed](Tape& t, std::span<const Var> p) {
                                             return weighted_sum(t, ad::spmm(*adj, p[0]), seed);
                                         },
                                         {rnd(8, 3, seed, 1)}};
                     }});
        c.push_back({"spmm_mean_aggregator", [](std::uint64_t seed) {
                         const ncd::Graph g = oracle::random_graph(8, 0.35, 3, 2, seed);
                         auto adj = std::make_shared<ncd::SparseMatrix>(ncd::mean_aggregator(g));
                         return Instance{[adj, seed](Tape& t, std::span<const Var> p) {
                                             return weighted_sum(t, ad::spmm(*adj, p[0]), seed);
                                         },
                                         {rnd(8, 3, seed, 1)}};
                     }});
        c.push_back({"mse", [](std::uint64_t seed) {
                         return Instance{[](Tape&, std::span<const Var> p) { return ad::mse(p[0], p[1]); },
                                         {rnd(3, 4, seed, 1), rnd(3, 4, seed, 2)}};
                     }});
        c.push_back({"nll", [](std::uint64_t seed) {
                         const auto targets = random_labels(5, 4, seed);
                         return Instance{[targets](Tape&, std::span<const Var> p) {
                                             return ad::nll(ad::log_softmax_rows(p[0]), targets);
                                         },
                                         {rnd(5, 4, seed, 1)}};
                     }});
        c.push_back({"cross_entropy", [](std::uint64_t seed) {
                         const auto targets = random_labels(6, 3, seed);
                         return Instance{[targets](Tape&, std::span<const Var> p) { return ad::cross_entropy(p[0], targets); },
                                         {rnd(6, 3, seed, 1, 2.0)}};
                     }});
        c.push_back({"binary_cross_entropy", [](std::uint64_t seed) {
                         Tensor y(4, 4);
                         ncd::Rng rng(seed);
                         for (double& v : y.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
                         return Instance{[y](Tape&, std::span<const Var> p) {
                                             return ad::binary_cross_entropy(ad::sigmoid(p[0]), y);
                                         },
                                         {rnd(4, 4, seed, 1)}};
                     }});

        c.push_back(encoder_ce("gcn_2layer_cross_entropy", ncd::Backbone::gcn));
        c.push_back(encoder_ce("sage_2layer_cross_entropy", ncd::Backbone::sage));

        // Discovery losses, each through its upstream graph (representations and head).
        c.push_back({"pairwise_bce_of_similarity", [](std::uint64_t seed) {
                         Tensor z = rnd(7, 6, seed, 1);
                         const Tensor pairs = ncd::topk_pseudo_pairs(z, 3);
                         return Instance{[pairs](Tape&, std::span<const Var> p) {
                                             Var logits = ncd::head_forward({p[1], p[2]}, p[0]);
                                             return ncd::pairwise_bce(ncd::pairwise_similarity(logits), pairs);
                                         },
                                         {z, rnd(6, 2, seed, 2, 0.5), rnd(1, 2, seed, 3, 0.5)}};
                     }});
        c.push_back({"self_training", [](std::uint64_t seed) {
                         Tensor z = rnd(6, 5, seed, 1);
                         Tensor wn = rnd(5, 2, seed, 2);
                         const auto pseudo = ncd::assign_pseudo_labels(ncd::matmul(z, wn), 3);
                         return Instance{[pseudo](Tape&, std::span<const Var> p) {
                                             return ncd::self_training_loss(ncd::head_forward({p[1], p[2]}, p[0]), pseudo);
                                         },
                                         {z, rnd(5, 5, seed, 3), rnd(1, 5, seed, 4)}};
                     }});
        c.push_back({"perturb_consistency", [](std::uint64_t seed) {
                         Tensor z = rnd(6, 5, seed, 1);
                         const auto sigma = ncd::perturbation_sigma(z, ncd::SigmaMode::empirical);
                         return Instance{[sigma, seed](Tape&, std::span<const Var> p) {
                                             const ncd::BoundHead h{p[1], p[2]};
                                             Var zp = ncd::perturb_representations(p[0], 0.5, sigma, seed);
                                             return ncd::perturb_consistency_loss(ncd::head_forward(h, p[0]),
                                                                                  ncd::head_forward(h, zp));
                                         },
                                         {z, rnd(5, 3, seed, 2), rnd(1, 3, seed, 3)}};
                     }});
        c.push_back({"replay", [](std::uint64_t seed) {
                         Tensor samples = rnd(8, 5, seed, 1);
                         const auto labels = random_labels(8, 3, seed);
                         return Instance{[samples, labels](Tape& t, std::span<const Var> p) {
                                             Var logits = ncd::head_forward({p[0], p[1]}, t.constant(samples));
                                             return ncd::replay_loss(logits, labels, 3);
                                         },
                                         {rnd(5, 5, seed, 2), rnd(1, 5, seed, 3)}};
                     }});
        c.push_back({"distill", [](std::uint64_t seed) {
                         Tensor frozen = rnd(6, 4, seed, 1);
                         Tensor current = frozen;
                         const Tensor shift = away_from_zero(rnd(6, 4, seed, 2, 0.5), 0.1);
                         for (std::size_t i = 0; i < current.size(); ++i) current[i] += shift[i];
                         return Instance{[frozen](Tape& t, std::span<const Var> p) {
                                             return ncd::distill_loss(t.constant(frozen), p[0]);
                                         },
                                         {current}};
                     }});

        // The whole discovery objective through a 2-layer GCN encoder and both heads.
        c.push_back({"total_loss_through_encoder", [](std::uint64_t seed) {
                         constexpr std::size_t hidden = 6, num_old = 2, num_new = 2;
                         EncoderSetup s = small_encoder(ncd::Backbone::gcn, seed, hidden);
                         std::vector<Tensor> params = encoder_tensors(s.encoder);
                         params[1] = rnd(1, hidden, seed, 7, 0.3);
                         params.push_back(rnd(hidden, num_new, seed, 3));             // novel W
                         params.push_back(rnd(1, num_new, seed, 4, 0.1));             // novel b
                         params.push_back(rnd(hidden, num_old + num_new, seed, 5));   // joint W
                         params.push_back(rnd(1, num_old + num_new, seed, 6, 0.1));   // joint b
                         const std::vector<std::size_t> nodes{0, 2, 3, 5, 7, 8};
                         auto ops = s.ops;
                         const Tensor x = s.features;

                         // Detached targets from the unperturbed forward pass, as in training.
                         const Tensor zt = [&] {
                             ncd::EncoderParams e = s.encoder;
                             e.layers[0].bias = params[1];
                             return ncd::gather_rows(ncd::encode(e, *ops, x), nodes);
                         }();
                         const Tensor pairs = ncd::topk_pseudo_pairs(zt, 3);
                         const auto pseudo = ncd::assign_pseudo_labels(
                             ncd::head_forward(ncd::HeadParams{ncd::HeadRole::novel, params[4], params[5]}, zt), num_old);
                         const auto sigma = ncd::perturbation_sigma(zt, ncd::SigmaMode::empirical);
                         const Tensor frozen = ncd::gather_rows(
                             ncd::encode(ncd::init_encoder(ncd::Backbone::gcn, 4, hidden, 2, seed + 1), *ops, x), nodes);
                         const Tensor replay = rnd(6, hidden, seed, 8);
                         const auto replay_labels = random_labels(6, num_old, seed);
                         ncd::LossWeights w;
                         w.alpha1 = 0.7;
                         w.alpha2 = 2.0;
                         w.lambda = 0.6;
                         const std::size_t epoch = seed % 100;
                         return Instance{[=](Tape& t, std::span<const Var> p) {
                                             Var zall = ncd::encode(bind_encoder(ncd::Backbone::gcn, p, 2), *ops, t.constant(x));
                                             Var zu = ad::gather_rows(zall, nodes);
                                             const ncd::BoundHead novel{p[4], p[5]}, joint{p[6], p[7]};
                                             Var nl = ncd::head_forward(novel, zu);
                                             ncd::LossVars v;
                                             v.pseudo = ncd::pairwise_bce(ncd::pairwise_similarity(nl), pairs);
                                             v.self = ncd::self_training_loss(ncd::head_forward(joint, zu), pseudo);
                                             Var zp = ncd::perturb_representations(zu, 0.5, sigma, seed);
                                             v.perturb = ncd::perturb_consistency_loss(nl, ncd::head_forward(novel, zp));
                                             v.replay = ncd::replay_loss(ncd::head_forward(joint, t.constant(replay)),
                                                                         replay_labels, num_old);
                                             v.distill = ncd::distill_loss(t.constant(frozen), zu);
                                             return ncd::total_loss(v, w, epoch, nullptr);
                                         },
                                         params};
                     }});
        return c;
    }();
    return cases;
}

} // namespace gradcases
