#pragma once

#include "ncd/autodiff.hpp"
#include "ncd/checkpoint.hpp"
#include "ncd/graph.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ncd {

enum class Backbone { gcn, sage };

std::string to_string(Backbone b);
Backbone parse_backbone(const std::string& s);

/// Propagation matrices derived once per graph.
struct GraphOps {
    SparseMatrix norm_adj;  // GCN: D^{-1/2}(A+I)D^{-1/2}
    SparseMatrix mean_adj;  // SAGE: D^{-1}A, self excluded

    static GraphOps from(const Graph& g);
};

struct DenseLayer {
    Tensor weight;  // in × out (SAGE: 2·in × out)
    Tensor bias;    // 1 × out

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Stack of graph convolutions; ReLU between layers, none after the last.
struct EncoderParams {
    Backbone backbone = Backbone::gcn;
    std::vector<DenseLayer> layers;

    std::size_t num_layers() const { return layers.size(); }
    std::size_t in_dim() const;
    std::size_t out_dim() const;
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

enum class HeadRole { old_classes, novel, joint };

/// Linear classifier z·W + b.
struct HeadParams {
    HeadRole role = HeadRole::old_classes;
    Tensor weight;  // repr_dim × outputs
    Tensor bias;    // 1 × outputs

    std::size_t in_dim() const { return weight.rows(); }
    std::size_t num_outputs() const { return weight.cols(); }
    std::vector<Tensor*> parameters() { return {&weight, &bias}; }

    friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

/// Glorot-uniform weights, zero biases. dims = {in, hidden..., out}.
EncoderParams init_encoder(Backbone backbone, std::size_t in_dim, std::size_t hidden, std::size_t num_layers,
                           std::uint64_t seed);
HeadParams init_head(HeadRole role, std::size_t in_dim, std::size_t outputs, std::uint64_t seed);

/// Encoder parameters bound to tape leaves.
struct BoundEncoder {
    Backbone backbone = Backbone::gcn;
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;

    std::vector<ad::Var> vars() const;
};

struct BoundHead {
    ad::Var weight;
    ad::Var bias;
};

BoundEncoder bind(ad::Tape& tape, const EncoderParams& enc, bool trainable);
BoundHead bind(ad::Tape& tape, const HeadParams& head, bool trainable);

/// Node representations for every node of the graph, N × repr_dim.
ad::Var encode(const BoundEncoder& enc, const GraphOps& ops, ad::Var features);
Tensor encode(const EncoderParams& enc, const GraphOps& ops, const Tensor& features);

ad::Var head_forward(const BoundHead& head, ad::Var z);
Tensor head_forward(const HeadParams& head, const Tensor& z);

/// Joint head: the old head's columns copied verbatim, `num_new` extra columns drawn from
/// N(0, init_scale²), new biases zero.
HeadParams extend_head(const HeadParams& old_head, std::size_t num_new, double init_scale, std::uint64_t seed);

void add_to_checkpoint(Checkpoint& ckpt, const std::string& prefix, const EncoderParams& enc);
void add_to_checkpoint(Checkpoint& ckpt, const std::string& prefix, const HeadParams& head);
EncoderParams encoder_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix, Backbone backbone,
                                      std::size_t num_layers);
HeadParams head_from_checkpoint(const Checkpoint& ckpt, const std::string& prefix, HeadRole role);

} // namespace ncd
