#include "circuitfusion/fusion.hpp"

#include <stdexcept>

namespace cfusion {

using nn::Tape;
using nn::Var;

std::vector<int> MixupSeq::valid_rows() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(static_cast<int>(i));
    return out;
}

namespace {

/// Rows 1.. of a sequence, zero-padded to `length` rows.
Var tail_padded(Tape& t, const EmbeddingSeq& s, int length) {
    const int n = s.length() - 1;
    const auto d = t.value(s.vectors).cols();
    if (n == 0) return t.constant(nn::Mat::Zero(length, d));
    std::vector<int> idx;
    for (int i = 1; i <= n; ++i) idx.push_back(i);
    return nn::pad_rows(t, nn::rows(t, s.vectors, idx), length);
}

}  // namespace

MixupSeq mixup(Tape& t, const EmbeddingSeq& graph_seq, const EmbeddingSeq& code_seq, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("mixup: lambda must be in [0, 1]");
    const int length = std::max(graph_seq.length(), code_seq.length()) - 1;
    if (length < 1) throw std::invalid_argument("mixup: both sequences are [CLS] only");
    const Var g = tail_padded(t, graph_seq, length);
    const Var c = tail_padded(t, code_seq, length);
    MixupSeq out;
    out.lambda = lambda;
    out.vectors = add(t, scale(t, g, lambda), scale(t, c, 1.0 - lambda));
    for (int i = 1; i <= length; ++i) {
        const bool gv = i < graph_seq.length() && graph_seq.mask[static_cast<std::size_t>(i)];
        const bool cv = i < code_seq.length() && code_seq.mask[static_cast<std::size_t>(i)];
        out.mask.push_back(gv || cv);
    }
    return out;
}

FusionEncoder::FusionEncoder(nn::ParamStore& ps, const EncoderParams& p, nn::Rng& rng) : p_(p) {
    for (int l = 0; l < p.fusion_layers; ++l) {
        blocks_.emplace_back(ps, "fusion.block" + std::to_string(l), p.d_model, p.heads, p.d_model * p.ffn_mult,
                             true, rng);
    }
    final_ = nn::LayerNorm(ps, "fusion.final_ln", p.d_model);
}

FusedEmbedding FusionEncoder::operator()(Tape& t, const EmbeddingSeq& summary_seq, const MixupSeq& mix,
                                         nn::Rng* dropout_rng) const {
    const auto summary_rows = summary_seq.valid_rows();
    const auto memory_rows = mix.valid_rows();
    if (memory_rows.empty()) throw std::invalid_argument("fuse: mixup sequence has no valid rows");
    const bool padded = static_cast<int>(summary_rows.size()) != summary_seq.length();
    Var x = padded ? nn::rows(t, summary_seq.vectors, summary_rows) : summary_seq.vectors;
    for (const auto& blk : blocks_) {
        x = blk(t, x, nullptr, mix.vectors, &memory_rows, p_.dropout, dropout_rng);
    }
    x = final_(t, x);
    if (padded) x = nn::scatter_rows(t, x, summary_rows, summary_seq.length());
    return {x, summary_seq.length()};
}

}  // namespace cfusion
