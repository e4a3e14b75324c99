#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace cfusion::nn {

using Mat = Eigen::MatrixXd;

/// Deterministic generator. The standard distributions are implementation
/// defined, so uniform and normal draws are derived here from raw 64-bit output.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    std::uint64_t next() { return engine_(); }
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
    double uniform();  // [0, 1)
    double normal();   // Box-Muller
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 engine_;
};

struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    Mat m, v;  // optimizer moments
    bool decay = true;
    bool frozen = false;
};

/// Named parameters in creation order.
class ParamStore {
public:
    Parameter& create(const std::string& name, Mat init, bool decay = true);
    Parameter& normal(const std::string& name, int rows, int cols, double stddev, Rng& rng);
    Parameter& zeros(const std::string& name, int rows, int cols);
    Parameter& ones(const std::string& name, int rows, int cols);

    [[nodiscard]] Parameter& at(const std::string& name);
    [[nodiscard]] const Parameter& at(const std::string& name) const;
    [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }
    [[nodiscard]] std::vector<Parameter*> all();
    [[nodiscard]] std::vector<const Parameter*> all() const;
    [[nodiscard]] std::size_t count() const;  // scalar parameters

    void zero_grad();
    /// Freezes (or unfreezes) every parameter whose name starts with prefix.
    void set_frozen(const std::string& prefix, bool frozen);

    /// Float32 blob plus JSON manifest (name, shape, dtype, offset, hash).
    void save(const std::string& blob_path, const std::string& manifest_path) const;
    /// Loads values into existing parameters with matching names and shapes.
    void load(const std::string& blob_path, const std::string& manifest_path);
    [[nodiscard]] nlohmann::json manifest() const;
    /// FNV-1a over the float32 encoding of one tensor.
    static std::string tensor_hash(const Mat& m);
    /// Combined hash of every parameter value.
    [[nodiscard]] std::string checksum() const;

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a value on a tape.
struct Var {
    int id = -1;
    [[nodiscard]] bool valid() const { return id >= 0; }
};

/// Records operations and runs reverse-mode differentiation.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Constant input (no gradient flows into it).
    Var constant(Mat value);
    /// Parameter leaf; repeated calls for one parameter return the same Var.
    /// Gradients are accumulated into Parameter::grad by backward().
    Var param(Parameter& p);

    /// Invalidated by the next op recorded on this tape.
    [[nodiscard]] const Mat& value(Var v) const;
    [[nodiscard]] const Mat& grad(Var v) const;
    [[nodiscard]] double scalar(Var v) const { return value(v)(0, 0); }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Seeds d(root)/d(root) = 1 and propagates to every parameter leaf.
    void backward(Var root);

    /// Adds a computed node. `backward` receives the node's output gradient.
    Var record(Mat value, std::vector<int> inputs, std::function<void(Tape&, const Mat&)> backward);
    /// Accumulates into v's gradient (allocated lazily).
    void accumulate(Var v, const Mat& g);
    void accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Mat& g);
    [[nodiscard]] bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }

private:
    struct Node {
        Mat value;
        const Mat* external = nullptr;
        Parameter* param = nullptr;
        Mat grad;
        bool has_grad = false;
        bool needs_grad = false;
        std::function<void(Tape&, const Mat&)> backward;
    };
    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, int> param_vars_;
};

// Element-wise and linear algebra
Var matmul(Tape& t, Var a, Var b);
Var matmul_t(Tape& t, Var a, Var b);  // a * b^T
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var a, Var row);  // broadcast a 1 x c row over every row of a
Var hadamard(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var transpose(Tape& t, Var a);
Var gelu(Tape& t, Var a);
Var tanh(Tape& t, Var a);

// Structure
Var rows(Tape& t, Var a, const std::vector<int>& idx);                  // gather rows
Var scatter_rows(Tape& t, Var a, const std::vector<int>& idx, int n);  // rows of a placed at idx in n rows
Var slice_cols(Tape& t, Var a, int start, int count);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var pad_rows(Tape& t, Var a, int n);  // zero rows appended up to n
Var embedding(Tape& t, Var table, const std::vector<int>& ids);
/// out(i, j) = table(idx(i, j), col)
Var lookup(Tape& t, Var table, const Eigen::MatrixXi& idx, int col);
/// n x n matrix with out(r, c) += vals(k, col) for every (k, (r, c)) in positions.
Var scatter_pairs(Tape& t, Var vals, int col, const std::vector<std::pair<int, int>>& positions, int n);
/// Elements at (row, col) pairs laid out as a 1 x k row.
Var gather_elements(Tape& t, Var a, const std::vector<std::pair<int, int>>& at);

// Reductions and normalization
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var mean_rows(Tape& t, Var a);  // 1 x c
Var softmax_rows(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
Var normalize_rows(Tape& t, Var a, double eps = 1e-12);  // unit L2 rows

// Losses
/// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(Tape& t, Var logits, const std::vector<int>& targets);
/// Mean squared error against a constant target.
Var mse(Tape& t, Var pred, const Mat& target);

/// Central finite-difference check helper: evaluates f after perturbing one
/// entry of p by +h and -h.
double finite_difference(Parameter& p, Eigen::Index r, Eigen::Index c, double h, const std::function<double()>& f);

}  // namespace cfusion::nn
