#pragma once

#include <optional>
#include <string>
#include <vector>

#include "circuitfusion/nn.hpp"

namespace cfusion::nn {

/// Inverted dropout; identity when rng is null or rate is 0.
Var dropout(Tape& t, Var a, double rate, Rng* rng);

struct Linear {
    Parameter* w = nullptr;  // in x out
    Parameter* b = nullptr;  // 1 x out, absent for bias-free projections

    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng, bool bias = true);
    Var operator()(Tape& t, Var x) const;
};

struct LayerNorm {
    Parameter* gamma = nullptr;
    Parameter* beta = nullptr;

    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& name, int dim);
    Var operator()(Tape& t, Var x) const;
};

/// Multi-head attention. The value projection has no bias, so all-zero
/// key/value inputs contribute exactly zero before the output projection.
struct Attention {
    Linear q, k, v, o;
    int heads = 1;
    int dim = 0;

    Attention() = default;
    Attention(ParamStore& ps, const std::string& name, int dim, int heads, Rng& rng);

    /// `key_rows`: when set, only those rows of kv take part (masked rows are
    /// gathered out, so they have no effect at all). `head_bias`: optional
    /// per-head additive score bias (queries x all kv rows); not combined with key_rows.
    Var operator()(Tape& t, Var query, Var kv, const std::vector<int>* key_rows = nullptr,
                   const std::vector<Var>* head_bias = nullptr) const;
};

struct FeedForward {
    Linear up, down;

    FeedForward() = default;
    FeedForward(ParamStore& ps, const std::string& name, int dim, int hidden, Rng& rng);
    Var operator()(Tape& t, Var x, double dropout_rate, Rng* rng) const;
};

/// Pre-norm transformer block with optional cross-attention sub-layer.
struct Block {
    LayerNorm ln_self, ln_cross, ln_ffn;
    Attention self_attn, cross_attn;
    FeedForward ffn;
    bool has_cross = false;

    Block() = default;
    Block(ParamStore& ps, const std::string& name, int dim, int heads, int ffn_hidden, bool cross, Rng& rng);

    Var operator()(Tape& t, Var x, const std::vector<Var>* self_bias = nullptr, std::optional<Var> memory = {},
                   const std::vector<int>* memory_rows = nullptr, double dropout_rate = 0.0,
                   Rng* rng = nullptr) const;
};

/// Stack of Linear layers with GELU between them.
struct Mlp {
    std::vector<Linear> layers;

    Mlp() = default;
    Mlp(ParamStore& ps, const std::string& name, const std::vector<int>& dims, Rng& rng);
    Var operator()(Tape& t, Var x) const;
};

}  // namespace cfusion::nn
