#include "circuitfusion/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace cfusion::nn {

Var dropout(Tape& t, Var a, double rate, Rng* rng) {
    if (!rng || rate <= 0.0) return a;
    const Mat& x = t.value(a);
    Mat keep(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) keep(r, c) = rng->uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
    return hadamard(t, a, t.constant(std::move(keep)));
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng, bool bias)
    : w(&ps.normal(name + ".w", in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      b(bias ? &ps.zeros(name + ".b", 1, out) : nullptr) {}

Var Linear::operator()(Tape& t, Var x) const {
    const Var y = matmul(t, x, t.param(*w));
    return b ? add_row(t, y, t.param(*b)) : y;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int dim)
    : gamma(&ps.ones(name + ".gamma", 1, dim)), beta(&ps.zeros(name + ".beta", 1, dim)) {}

Var LayerNorm::operator()(Tape& t, Var x) const { return layer_norm(t, x, t.param(*gamma), t.param(*beta)); }

Attention::Attention(ParamStore& ps, const std::string& name, int dim, int heads, Rng& rng)
    : q(ps, name + ".q", dim, dim, rng),
      k(ps, name + ".k", dim, dim, rng),
      v(ps, name + ".v", dim, dim, rng, false),
      o(ps, name + ".o", dim, dim, rng),
      heads(heads),
      dim(dim) {
    if (dim % heads != 0) throw std::invalid_argument("d_model must be divisible by heads");
}

Var Attention::operator()(Tape& t, Var query, Var kv, const std::vector<int>* key_rows,
                          const std::vector<Var>* head_bias) const {
    if (key_rows && head_bias) throw std::invalid_argument("attention: key_rows and head_bias are exclusive");
    const Var src = key_rows ? rows(t, kv, *key_rows) : kv;
    const Var Q = q(t, query);
    const Var K = k(t, src);
    const Var V = v(t, src);
    const int dh = dim / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    for (int h = 0; h < heads; ++h) {
        const Var qh = slice_cols(t, Q, h * dh, dh);
        const Var kh = slice_cols(t, K, h * dh, dh);
        const Var vh = slice_cols(t, V, h * dh, dh);
        Var scores = scale(t, matmul_t(t, qh, kh), inv);
        if (head_bias) scores = add(t, scores, (*head_bias)[static_cast<std::size_t>(h)]);
        outs.push_back(matmul(t, softmax_rows(t, scores), vh));
    }
    return o(t, heads == 1 ? outs[0] : concat_cols(t, outs));
}

FeedForward::FeedForward(ParamStore& ps, const std::string& name, int dim, int hidden, Rng& rng)
    : up(ps, name + ".up", dim, hidden, rng), down(ps, name + ".down", hidden, dim, rng) {}

Var FeedForward::operator()(Tape& t, Var x, double dropout_rate, Rng* rng) const {
    return down(t, dropout(t, gelu(t, up(t, x)), dropout_rate, rng));
}

Block::Block(ParamStore& ps, const std::string& name, int dim, int heads, int ffn_hidden, bool cross, Rng& rng)
    : ln_self(ps, name + ".ln_self", dim),
      self_attn(ps, name + ".self", dim, heads, rng),
      ffn(ps, name + ".ffn", dim, ffn_hidden, rng),
      has_cross(cross) {
    if (cross) {
        ln_cross = LayerNorm(ps, name + ".ln_cross", dim);
        cross_attn = Attention(ps, name + ".cross", dim, heads, rng);
    }
    ln_ffn = LayerNorm(ps, name + ".ln_ffn", dim);
}

Var Block::operator()(Tape& t, Var x, const std::vector<Var>* self_bias, std::optional<Var> memory,
                      const std::vector<int>* memory_rows, double dropout_rate, Rng* rng) const {
    const Var hs = ln_self(t, x);
    x = add(t, x, dropout(t, self_attn(t, hs, hs, nullptr, self_bias), dropout_rate, rng));
    if (has_cross && memory) {
        // Memory enters without normalization: all-zero memory stays all-zero.
        x = add(t, x, dropout(t, cross_attn(t, ln_cross(t, x), *memory, memory_rows), dropout_rate, rng));
    }
    return add(t, x, dropout(t, ffn(t, ln_ffn(t, x), dropout_rate, rng), dropout_rate, rng));
}

Mlp::Mlp(ParamStore& ps, const std::string& name, const std::vector<int>& dims, Rng& rng) {
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        layers.emplace_back(ps, name + "." + std::to_string(i), dims[i], dims[i + 1], rng);
    }
}

Var Mlp::operator()(Tape& t, Var x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = layers[i](t, x);
        if (i + 1 < layers.size()) x = gelu(t, x);
    }
    return x;
}

}  // namespace cfusion::nn
