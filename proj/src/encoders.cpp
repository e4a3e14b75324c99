#include "circuitfusion/encoders.hpp"

#include <deque>
#include <stdexcept>

#include "circuitfusion/corpus.hpp"

namespace cfusion {

using nn::Mat;
using nn::Tape;
using nn::Var;

void EncoderParams::validate() const {
    if (d_model < 1 || heads < 1 || d_model % heads != 0) {
        throw std::invalid_argument("d_model must be a positive multiple of heads");
    }
    if (max_distance < 1) throw std::invalid_argument("max_distance must be >= 1");
    if (vocab_size < Vocab::kSpecialCount) throw std::invalid_argument("vocab_size below special-token count");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
}

nlohmann::json EncoderParams::to_json() const {
    return {{"d_model", d_model},           {"heads", heads},
            {"graph_layers", graph_layers}, {"summary_layers", summary_layers},
            {"code_layers", code_layers},   {"fusion_layers", fusion_layers},
            {"netlist_layers", netlist_layers}, {"ffn_mult", ffn_mult},
            {"max_degree", max_degree},     {"max_distance", max_distance},
            {"edge_dim", edge_dim},         {"dropout", dropout},
            {"vocab_size", vocab_size},     {"max_summary_len", max_summary_len},
            {"max_code_len", max_code_len}, {"freeze_code", freeze_code}};
}

EncoderParams EncoderParams::from_json(const nlohmann::json& j) {
    EncoderParams p;
    p.d_model = j.value("d_model", p.d_model);
    p.heads = j.value("heads", p.heads);
    p.graph_layers = j.value("graph_layers", p.graph_layers);
    p.summary_layers = j.value("summary_layers", p.summary_layers);
    p.code_layers = j.value("code_layers", p.code_layers);
    p.fusion_layers = j.value("fusion_layers", p.fusion_layers);
    p.netlist_layers = j.value("netlist_layers", p.netlist_layers);
    p.ffn_mult = j.value("ffn_mult", p.ffn_mult);
    p.max_degree = j.value("max_degree", p.max_degree);
    p.max_distance = j.value("max_distance", p.max_distance);
    p.edge_dim = j.value("edge_dim", p.edge_dim);
    p.dropout = j.value("dropout", p.dropout);
    p.vocab_size = j.value("vocab_size", p.vocab_size);
    p.max_summary_len = j.value("max_summary_len", p.max_summary_len);
    p.max_code_len = j.value("max_code_len", p.max_code_len);
    p.freeze_code = j.value("freeze_code", p.freeze_code);
    return p;
}

std::vector<int> EmbeddingSeq::valid_rows() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(static_cast<int>(i));
    return out;
}

int op_index(Op op) { return static_cast<int>(op); }

Eigen::MatrixXi spatial_encoding(const Cone& cone, int max_distance) {
    const CdfGraph& g = cone.graph;
    const auto n = static_cast<Eigen::Index>(g.size());
    std::vector<std::vector<std::size_t>> adj(g.size());
    for (const auto& e : g.edges()) {
        const auto a = g.index_of(e.src), b = g.index_of(e.dst);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    Eigen::MatrixXi d = Eigen::MatrixXi::Constant(n, n, max_distance + 1);
    for (std::size_t s = 0; s < g.size(); ++s) {
        std::vector<int> dist(g.size(), -1);
        std::deque<std::size_t> q{s};
        dist[s] = 0;
        while (!q.empty()) {
            const auto u = q.front();
            q.pop_front();
            for (auto v : adj[u]) {
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        for (std::size_t t = 0; t < g.size(); ++t) {
            if (dist[t] >= 0) {
                d(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = std::min(dist[t], max_distance);
            }
        }
    }
    return d;
}

Eigen::RowVectorXd edge_feature(int etype) {
    Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(kEdgeFeatureDim);
    f(etype / kOpClassCount) = 1.0;
    f(kOpClassCount + etype % kOpClassCount) = 1.0;
    return f;
}

// ---------------------------------------------------------------- graph

GraphEncoder::GraphEncoder(nn::ParamStore& ps, const EncoderParams& p, nn::Rng& rng) : p_(p) {
    const int d = p.d_model;
    op_emb_ = &ps.normal("graph.op_emb", kOpCount, d, 1.0, rng);
    in_deg_ = &ps.normal("graph.in_degree", p.max_degree + 1, d, 0.1, rng);
    out_deg_ = &ps.normal("graph.out_degree", p.max_degree + 1, d, 0.1, rng);
    graph_token_ = &ps.normal("graph.token", 1, d, 1.0, rng);
    spatial_ = &ps.zeros("graph.spatial_bias", p.max_distance + 3, p.heads);
    edge_ = &ps.normal("graph.edge_bias", p.edge_dim, p.heads, 0.1, rng);
    for (int l = 0; l < p.graph_layers; ++l) {
        blocks_.emplace_back(ps, "graph.block" + std::to_string(l), d, p.heads, d * p.ffn_mult, false, rng);
    }
    final_ = nn::LayerNorm(ps, "graph.final_ln", d);
}

EmbeddingSeq GraphEncoder::operator()(Tape& t, const Cone& cone, nn::Rng* dropout_rng) const {
    const CdfGraph& g = cone.graph;
    const int n = static_cast<int>(g.size());
    if (n < 1) throw std::invalid_argument("encode_graph: empty cone");
    std::vector<int> ops, indeg, outdeg;
    for (const auto& node : g.nodes()) {
        ops.push_back(op_index(node.op));
        indeg.push_back(std::min<int>(static_cast<int>(g.in_edge_indices(node.id).size()), p_.max_degree));
        outdeg.push_back(std::min<int>(static_cast<int>(g.out_edge_indices(node.id).size()), p_.max_degree));
    }
    Var x = add(t, nn::embedding(t, t.param(*op_emb_), ops),
                add(t, nn::embedding(t, t.param(*in_deg_), indeg), nn::embedding(t, t.param(*out_deg_), outdeg)));
    x = nn::concat_rows(t, {t.param(*graph_token_), x});

    // Attention bias: spatial bucket per pair, plus a learned projection of the
    // edge feature on directly connected pairs (both directions).
    Eigen::MatrixXi buckets(n + 1, n + 1);
    const int virtual_bucket = p_.max_distance + 2;
    buckets.row(0).setConstant(virtual_bucket);
    buckets.col(0).setConstant(virtual_bucket);
    buckets.bottomRightCorner(n, n) = spatial_encoding(cone, p_.max_distance);
    std::vector<std::pair<int, int>> pairs;
    Mat feats(static_cast<Eigen::Index>(2 * g.edges().size()), p_.edge_dim);
    Eigen::Index k = 0;
    for (const auto& e : g.edges()) {
        const int a = static_cast<int>(g.index_of(e.src)) + 1, b = static_cast<int>(g.index_of(e.dst)) + 1;
        const auto f = edge_feature(e.etype);
        feats.row(k++) = f;
        feats.row(k++) = f;
        pairs.emplace_back(a, b);
        pairs.emplace_back(b, a);
    }
    std::vector<Var> bias;
    const Var edge_vals = pairs.empty() ? Var{} : matmul(t, t.constant(feats), t.param(*edge_));
    for (int h = 0; h < p_.heads; ++h) {
        Var b = nn::lookup(t, t.param(*spatial_), buckets, h);
        if (!pairs.empty()) b = add(t, b, nn::scatter_pairs(t, edge_vals, h, pairs, n + 1));
        bias.push_back(b);
    }
    for (const auto& blk : blocks_) x = blk(t, x, &bias, std::nullopt, nullptr, p_.dropout, dropout_rng);
    return {final_(t, x), std::vector<bool>(static_cast<std::size_t>(n + 1), true)};
}

// ---------------------------------------------------------------- text

TextEncoder::TextEncoder(nn::ParamStore& ps, const std::string& prefix, int layers, int max_len,
                         const EncoderParams& p, nn::Rng& rng, bool projection)
    : p_(p), max_len_(max_len) {
    const int d = p.d_model;
    tok_ = &ps.normal(prefix + ".tok_emb", p.vocab_size, d, 1.0, rng);
    pos_ = &ps.normal(prefix + ".pos_emb", max_len, d, 0.1, rng);
    for (int l = 0; l < layers; ++l) {
        blocks_.emplace_back(ps, prefix + ".block" + std::to_string(l), d, p.heads, d * p.ffn_mult, false, rng);
    }
    final_ = nn::LayerNorm(ps, prefix + ".final_ln", d);
    if (projection) proj_ = nn::Linear(ps, prefix + ".proj", d, d, rng);
}

EmbeddingSeq TextEncoder::operator()(Tape& t, const std::vector<int>& tokens, nn::Rng* dropout_rng) const {
    if (tokens.empty() || tokens[0] != Vocab::kCls) throw std::invalid_argument("encode_text: tokens must start with [CLS]");
    if (static_cast<int>(tokens.size()) > max_len_) throw std::invalid_argument("encode_text: sequence too long");
    std::vector<int> valid, ids;
    std::vector<bool> mask;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const bool ok = tokens[i] != Vocab::kPad;
        mask.push_back(ok);
        if (!ok) continue;
        valid.push_back(static_cast<int>(i));
        ids.push_back(tokens[i] < p_.vocab_size ? tokens[i] : Vocab::kUnk);
    }
    Var x = add(t, nn::embedding(t, t.param(*tok_), ids), nn::rows(t, t.param(*pos_), valid));
    for (const auto& blk : blocks_) x = blk(t, x, nullptr, std::nullopt, nullptr, p_.dropout, dropout_rng);
    x = final_(t, x);
    if (proj_) x = (*proj_)(t, x);
    if (valid.size() != tokens.size()) x = nn::scatter_rows(t, x, valid, static_cast<int>(tokens.size()));
    return {x, mask};
}

// ---------------------------------------------------------------- netlist

NetlistEncoder::NetlistEncoder(nn::ParamStore& ps, const EncoderParams& p, nn::Rng& rng) : p_(p) {
    const int d = p.d_model;
    op_emb_ = &ps.normal("netlist.op_emb", kOpCount, d, 1.0, rng);
    for (int l = 0; l < p.netlist_layers; ++l) {
        self_.emplace_back(ps, "netlist.sage" + std::to_string(l) + ".self", d, d, rng);
        neigh_.emplace_back(ps, "netlist.sage" + std::to_string(l) + ".neigh", d, d, rng, false);
    }
    proj_ = nn::Linear(ps, "netlist.proj", d, d, rng);
}

NetlistEmbedding NetlistEncoder::operator()(Tape& t, const Cone& cone) const {
    const CdfGraph& g = cone.graph;
    const auto n = static_cast<Eigen::Index>(g.size());
    if (n < 1) throw std::invalid_argument("encode_netlist: empty cone");
    Mat avg = Mat::Zero(n, n);
    for (const auto& e : g.edges()) {
        const auto a = static_cast<Eigen::Index>(g.index_of(e.src));
        const auto b = static_cast<Eigen::Index>(g.index_of(e.dst));
        avg(a, b) += 1.0;
        avg(b, a) += 1.0;
    }
    for (Eigen::Index r = 0; r < n; ++r) {
        const double deg = avg.row(r).sum();
        if (deg > 0) avg.row(r) /= deg;
    }
    std::vector<int> ops;
    for (const auto& node : g.nodes()) ops.push_back(op_index(node.op));
    Var h = nn::embedding(t, t.param(*op_emb_), ops);
    const Var A = t.constant(std::move(avg));
    for (std::size_t l = 0; l < self_.size(); ++l) {
        h = gelu(t, add(t, self_[l](t, h), neigh_[l](t, matmul(t, A, h))));
    }
    const Var nodes = proj_(t, h);
    return {nodes, nn::mean_rows(t, nodes)};
}

}  // namespace cfusion
