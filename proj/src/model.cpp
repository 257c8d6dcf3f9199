#include "ncd/model.hpp"

#include "ncd/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ncd {

std::string to_string(Backbone b) { return b == Backbone::gcn ? "gcn" : "sage"; }

Backbone parse_backbone(const std::string& s) {
    if (s == "gcn") return Backbone::gcn;
    if (s == "sage" || s == "graphsage") return Backbone::sage;
    throw std::invalid_argument("unknown backbone '" + s + "' (expected gcn or sage)");
}

GraphOps GraphOps::from(const Graph& g) { return {normalize_adjacency(g), mean_aggregator(g)}; }

std::size_t EncoderParams::in_dim() const {
    if (layers.empty()) return 0;
    const std::size_t rows = layers.front().weight.rows();
    return backbone == Backbone::sage ? rows / 2 : rows;
}

std::size_t EncoderParams::out_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

std::vector<Tensor*> EncoderParams::parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<const Tensor*> EncoderParams::parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(fan_in, fan_out);
    for (double& v : w.data()) v = rng.uniform(-a, a);
    return w;
}

} // namespace

EncoderParams init_encoder(Backbone backbone, std::size_t in_dim, std::size_t hidden, std::size_t num_layers,
                           std::uint64_t seed) {
    if (num_layers == 0 || in_dim == 0 || hidden == 0)
        throw std::invalid_argument("init_encoder: dimensions and layer count must be positive");
    EncoderParams enc;
    enc.backbone = backbone;
    Rng rng(derive_seed(seed, "encoder-init"));
    std::size_t d = in_dim;
    for (std::size_t l = 0; l < num_layers; ++l) {
        const std::size_t fan_in = backbone == Backbone::sage ? 2 * d : d;
        enc.layers.push_back({glorot(fan_in, hidden, rng), Tensor(1, hidden)});
        d = hidden;
    }
    return enc;
}

HeadParams init_head(HeadRole role, std::size_t in_dim, std::size_t outputs, std::uint64_t seed) {
    if (in_dim == 0 || outputs == 0) throw std::invalid_argument("init_head: dimensions must be positive");
    Rng rng(derive_seed(seed, "head-init", static_cast<std::uint64_t>(role)));
    return {role, glorot(in_dim, outputs, rng), Tensor(1, outputs)};
}

std::vector<ad::Var> BoundEncoder::vars() const {
    std::vector<ad::Var> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(weights[l]);
        out.push_back(biases[l]);
    }
    return out;
}

BoundEncoder bind(ad::Tape& tape, const EncoderParams& enc, bool trainable) {
    BoundEncoder b;
    b.backbone = enc.backbone;
    for (const auto& l : enc.layers) {
        b.weights.push_back(trainable ? tape.variable(l.weight) : tape.constant(l.weight));
        b.biases.push_back(trainable ? tape.variable(l.bias) : tape.constant(l.bias));
    }
    return b;
}

BoundHead bind(ad::Tape& tape, const HeadParams& head, bool trainable) {
    if (trainable) return {tape.variable(head.weight), tape.variable(head.bias)};
    return {tape.constant(head.weight), tape.constant(head.bias)};
}

ad::Var encode(const BoundEncoder& enc, const GraphOps& ops, ad::Var features) {
    ad::Var h = features;
    for (std::size_t l = 0; l < enc.weights.size(); ++l) {
        if (enc.backbone == Backbone::gcn) {
            h = ad::add_row(ad::spmm(ops.norm_adj, ad::matmul(h, enc.weights[l])), enc.biases[l]);
        } else {
            ad::Var neigh = ad::spmm(ops.mean_adj, h);
            h = ad::add_row(ad::matmul(ad::concat_cols(h, neigh), enc.weights[l]), enc.biases[l]);
        }
        if (l + 1 < enc.weights.size()) h = ad::relu(h);
    }
    return h;
}

Tensor encode(const EncoderParams& enc, const GraphOps& ops, const Tensor& features) {
    ad::Tape tape;
    ad::Var z = encode(bind(tape, enc, false), ops, tape.constant(features));
    return z.value();
}

ad::Var head_forward(const BoundHead& head, ad::Var z) {
    return ad::add_row(ad::matmul(z, head.weight), head.bias);
}

Tensor head_forward(const HeadParams& head, const Tensor& z) {
    if (z.cols() != head.in_dim())
        throw std::invalid_argument("head_forward: input " + z.shape_string() + " vs head input dim " +
                                    std::to_string(head.in_dim()));
    Tensor out = matmul(z, head.weight);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += head.bias(0, j);
    return out;
}

HeadParams extend_head(const HeadParams& old_head, std::size_t num_new, double init_scale, std::uint64_t seed) {
    if (num_new == 0) throw std::invalid_argument("extend_head: no new classes to add");
    if (init_scale < 0) throw std::invalid_argument("extend_head: init_scale must be nonnegative");
    const std::size_t d = old_head.in_dim();
    const std::size_t k_old = old_head.num_outputs();
    HeadParams joint{HeadRole::joint, Tensor(d, k_old + num_new), Tensor(1, k_old + num_new)};
    Rng rng(derive_seed(seed, "extend-head"));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < k_old; ++j) joint.weight(i, j) = old_head.weight(i, j);
        for (std::size_t j = 0; j < num_new; ++j) joint.weight(i, k_old + j) = init_scale * rng.normal();
    }
    for (std::size_t j = 0; j < k_old; ++j) joint.bias(0, j) = old_head.bias(0, j);
    return joint;
}

void add_to_checkpoint(Checkpoint& ckpt, const std::string& prefix, const EncoderParams& enc) {
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
        ckpt.add(prefix + "." + std::to_string(l) + ".weight", enc.layers[l].weight);
        ckpt.add(prefix + "." + std::to_string(l) + ".bias", enc.layers[l].bias);
    }
}

void add_to_checkpoint(Checkpoint& ckpt, const std::string& prefix, const HeadParams& head) {
    ckpt.add(prefix + ".weight", head.weight);
    ckpt.add(prefix + ".bias", head.bias);
}

EncoderParams encoder_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix, Backbone backbone,
                                      std::size_t num_layers) {
    EncoderParams enc;
    enc.backbone = backbone;
    for (std::size_t l = 0; l < num_layers; ++l) {
        enc.layers.push_back({ckpt.get(prefix + "." + std::to_string(l) + ".weight"),
                              ckpt.get(prefix + "." + std::to_string(l) + ".bias")});
    }
    return enc;
}

HeadParams head_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix, HeadRole role) {
    return {role, ckpt.get(prefix + ".weight"), ckpt.get(prefix + ".bias")};
}

} // namespace ncd
