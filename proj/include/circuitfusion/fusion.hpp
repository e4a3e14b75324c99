#pragma once

#include <vector>

#include "circuitfusion/encoders.hpp"

namespace cfusion {

struct MixupSeq {
    nn::Var vectors;
    double lambda = 0.5;
    std::vector<bool> mask;
    [[nodiscard]] int length() const { return static_cast<int>(mask.size()); }
    [[nodiscard]] std::vector<int> valid_rows() const;
};

struct FusedEmbedding {
    nn::Var vectors;  // m x d, row 0 is R_cls
    int length = 0;
};

/// lambda * G + (1 - lambda) * C over the non-CLS rows of both sequences,
/// zero-padding the shorter one. The mask is the OR of the two validity masks.
MixupSeq mixup(nn::Tape& t, const EmbeddingSeq& graph_seq, const EmbeddingSeq& code_seq, double lambda);

/// Summary tokens are the queries: per layer, self-attention over the summary,
/// then cross-attention into the valid mixup rows, then a feed-forward layer.
class FusionEncoder {
public:
    FusionEncoder() = default;
    FusionEncoder(nn::ParamStore& ps, const EncoderParams& p, nn::Rng& rng);
    FusedEmbedding operator()(nn::Tape& t, const EmbeddingSeq& summary_seq, const MixupSeq& mix,
                              nn::Rng* dropout_rng = nullptr) const;

private:
    EncoderParams p_;
    std::vector<nn::Block> blocks_;
    nn::LayerNorm final_;
};

}  // namespace cfusion
