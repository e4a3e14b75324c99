#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "circuitfusion/layers.hpp"
#include "circuitfusion/subcircuit.hpp"

namespace cfusion {

struct EncoderParams {
    int d_model = 128;
    int heads = 4;
    int graph_layers = 2;
    int summary_layers = 2;
    int code_layers = 2;
    int fusion_layers = 2;
    int netlist_layers = 3;
    int ffn_mult = 4;
    int max_degree = 256;
    int max_distance = 5;
    int edge_dim = kEdgeFeatureDim;
    double dropout = 0.0;
    int vocab_size = 5;
    int max_summary_len = 128;
    int max_code_len = 1024;
    bool freeze_code = false;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static EncoderParams from_json(const nlohmann::json& j);
};

/// [CLS]-prefixed sequence on a tape; row 0 is the CLS / graph-token slot.
struct EmbeddingSeq {
    nn::Var vectors;
    std::vector<bool> mask;  // validity per row
    [[nodiscard]] int length() const { return static_cast<int>(mask.size()); }
    [[nodiscard]] std::vector<int> valid_rows() const;
};

struct NetlistEmbedding {
    nn::Var node_vectors;  // w x d
    nn::Var pooled;        // 1 x d, mean of node_vectors
};

/// All-pairs undirected shortest-path distances over the cone graph (node
/// order of cone.graph.nodes()), clipped at max_distance; unreachable pairs
/// get max_distance + 1.
Eigen::MatrixXi spatial_encoding(const Cone& cone, int max_distance = 5);

/// 12-dim edge feature: one-hot(src class) followed by one-hot(dst class).
Eigen::RowVectorXd edge_feature(int etype);

/// Graphormer-style graph transformer with a virtual graph token. Spatial
/// bias buckets: distances 0..max_distance, unreachable, virtual-token pairs.
class GraphEncoder {
public:
    GraphEncoder() = default;
    GraphEncoder(nn::ParamStore& ps, const EncoderParams& p, nn::Rng& rng);
    /// Output length n + 1; row 0 is G_cls.
    EmbeddingSeq operator()(nn::Tape& t, const Cone& cone, nn::Rng* dropout_rng = nullptr) const;

private:
    EncoderParams p_;
    nn::Parameter *op_emb_ = nullptr, *in_deg_ = nullptr, *out_deg_ = nullptr, *graph_token_ = nullptr;
    nn::Parameter *spatial_ = nullptr, *edge_ = nullptr;
    std::vector<nn::Block> blocks_;
    nn::LayerNorm final_;
};

/// Transformer text encoder with learned positions. [PAD] positions are
/// excluded from attention and come out as zero rows.
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(nn::ParamStore& ps, const std::string& prefix, int layers, int max_len, const EncoderParams& p,
                nn::Rng& rng, bool projection);
    EmbeddingSeq operator()(nn::Tape& t, const std::vector<int>& tokens, nn::Rng* dropout_rng = nullptr) const;

private:
    EncoderParams p_;
    int max_len_ = 0;
    nn::Parameter *tok_ = nullptr, *pos_ = nullptr;
    std::vector<nn::Block> blocks_;
    nn::LayerNorm final_;
    std::optional<nn::Linear> proj_;
};

/// GraphSAGE with mean aggregation over undirected neighbours, then a
/// per-node projection; pooled = mean of the projected node vectors.
class NetlistEncoder {
public:
    NetlistEncoder() = default;
    NetlistEncoder(nn::ParamStore& ps, const EncoderParams& p, nn::Rng& rng);
    NetlistEmbedding operator()(nn::Tape& t, const Cone& cone) const;

private:
    EncoderParams p_;
    nn::Parameter* op_emb_ = nullptr;
    std::vector<nn::Linear> self_, neigh_;
    nn::Linear proj_;
};

/// Row of an op in the op-embedding tables.
int op_index(Op op);

}  // namespace cfusion
