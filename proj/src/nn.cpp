#include "circuitfusion/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "circuitfusion/errors.hpp"
#include "circuitfusion/subcircuit.hpp"

namespace cfusion::nn {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// ---------------------------------------------------------------- parameters

Parameter& ParamStore::create(const std::string& name, Mat init, bool decay) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->grad = Mat::Zero(init.rows(), init.cols());
    p->m = Mat::Zero(init.rows(), init.cols());
    p->v = Mat::Zero(init.rows(), init.cols());
    p->value = std::move(init);
    p->decay = decay;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParamStore::normal(const std::string& name, int rows, int cols, double stddev, Rng& rng) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal() * stddev;
    return create(name, std::move(m), true);
}

Parameter& ParamStore::zeros(const std::string& name, int rows, int cols) {
    return create(name, Mat::Zero(rows, cols), false);
}

Parameter& ParamStore::ones(const std::string& name, int rows, int cols) {
    return create(name, Mat::Ones(rows, cols), false);
}

Parameter& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return *params_[it->second];
}

const Parameter& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return *params_[it->second];
}

std::vector<Parameter*> ParamStore::all() {
    std::vector<Parameter*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

std::vector<const Parameter*> ParamStore::all() const {
    std::vector<const Parameter*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
}

std::size_t ParamStore::count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p->grad.setZero();
}

void ParamStore::set_frozen(const std::string& prefix, bool frozen) {
    for (auto& p : params_)
        if (p->name.rfind(prefix, 0) == 0) p->frozen = frozen;
}

namespace {

std::vector<float> to_float32(const Mat& m) {
    std::vector<float> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(static_cast<float>(m(r, c)));
    return out;
}

}  // namespace

std::string ParamStore::tensor_hash(const Mat& m) {
    const auto f = to_float32(m);
    return stable_hash(std::string_view(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(float)));
}

nlohmann::json ParamStore::manifest() const {
    nlohmann::json tensors = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& p : params_) {
        tensors.push_back({{"name", p->name},
                           {"shape", {p->value.rows(), p->value.cols()}},
                           {"dtype", "float32"},
                           {"offset", offset},
                           {"hash", tensor_hash(p->value)}});
        offset += static_cast<std::size_t>(p->value.size()) * sizeof(float);
    }
    return {{"format", "row-major float32"}, {"tensors", tensors}, {"bytes", offset}};
}

std::string ParamStore::checksum() const {
    std::string all;
    for (const auto& p : params_) all += p->name + ":" + tensor_hash(p->value) + ";";
    return stable_hash(all);
}

void ParamStore::save(const std::string& blob_path, const std::string& manifest_path) const {
    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw IoError("checkpoint", "cannot write " + blob_path);
    for (const auto& p : params_) {
        const auto f = to_float32(p->value);
        blob.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
    }
    std::ofstream man(manifest_path);
    if (!man) throw IoError("checkpoint", "cannot write " + manifest_path);
    man << manifest().dump(2) << '\n';
}

void ParamStore::load(const std::string& blob_path, const std::string& manifest_path) {
    std::ifstream man(manifest_path);
    if (!man) throw IoError("checkpoint", "cannot read " + manifest_path);
    const auto j = nlohmann::json::parse(man);
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw IoError("checkpoint", "cannot read " + blob_path);
    for (const auto& t : j.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        if (!contains(name)) continue;
        Parameter& p = at(name);
        const auto rows = t.at("shape")[0].get<Eigen::Index>();
        const auto cols = t.at("shape")[1].get<Eigen::Index>();
        if (rows != p.value.rows() || cols != p.value.cols()) {
            throw IoError("checkpoint", "shape mismatch for " + name);
        }
        std::vector<float> f(static_cast<std::size_t>(rows * cols));
        blob.seekg(t.at("offset").get<std::streamoff>());
        blob.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
        if (!blob) throw IoError("checkpoint", "truncated blob at " + name);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) p.value(r, c) = f[static_cast<std::size_t>(r * cols + c)];
        if (tensor_hash(p.value) != t.at("hash").get<std::string>()) {
            throw IoError("checkpoint", "hash mismatch for " + name);
        }
    }
}

// ---------------------------------------------------------------- tape

Var Tape::constant(Mat value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
    if (auto it = param_vars_.find(&p); it != param_vars_.end()) return {it->second};
    Node n;
    n.external = &p.value;
    n.param = &p;
    n.needs_grad = !p.frozen;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_vars_[&p] = id;
    return {id};
}

const Mat& Tape::value(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.external ? *n.external : n.value;
}

const Mat& Tape::grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }

Var Tape::record(Mat value, std::vector<int> inputs, std::function<void(Tape&, const Mat&)> backward) {
    Node n;
    n.value = std::move(value);
    for (int i : inputs) n.needs_grad |= nodes_[static_cast<std::size_t>(i)].needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(Var v, const Mat& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        n.grad += g;
    }
}

void Tape::accumulate_block(Var v, Eigen::Index row, Eigen::Index col, const Mat& g) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.needs_grad) return;
    if (!n.has_grad) {
        const Mat& val = value(v);
        n.grad = Mat::Zero(val.rows(), val.cols());
        n.has_grad = true;
    }
    n.grad.block(row, col, g.rows(), g.cols()) += g;
}

void Tape::backward(Var root) {
    const Mat& rv = value(root);
    if (rv.size() != 1) throw std::invalid_argument("backward root must be a scalar");
    accumulate(root, Mat::Ones(1, 1));
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.has_grad) continue;
        if (n.param) {
            if (!n.param->frozen) n.param->grad += n.grad;
        } else if (n.backward) {
            n.backward(*this, n.grad);
        }
    }
}

// ---------------------------------------------------------------- ops

Var matmul(Tape& t, Var a, Var b) {
    return t.record(t.value(a) * t.value(b), {a.id, b.id}, [a, b](Tape& t, const Mat& g) {
        if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
        if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
    });
}

Var matmul_t(Tape& t, Var a, Var b) {
    return t.record(t.value(a) * t.value(b).transpose(), {a.id, b.id}, [a, b](Tape& t, const Mat& g) {
        if (t.needs_grad(a)) t.accumulate(a, g * t.value(b));
        if (t.needs_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
    });
}

Var add(Tape& t, Var a, Var b) {
    return t.record(t.value(a) + t.value(b), {a.id, b.id}, [a, b](Tape& t, const Mat& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var sub(Tape& t, Var a, Var b) {
    return t.record(t.value(a) - t.value(b), {a.id, b.id}, [a, b](Tape& t, const Mat& g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

Var add_row(Tape& t, Var a, Var row) {
    Mat out = t.value(a).rowwise() + t.value(row).row(0);
    return t.record(std::move(out), {a.id, row.id}, [a, row](Tape& t, const Mat& g) {
        t.accumulate(a, g);
        if (t.needs_grad(row)) t.accumulate(row, g.colwise().sum());
    });
}

Var hadamard(Tape& t, Var a, Var b) {
    return t.record(t.value(a).cwiseProduct(t.value(b)), {a.id, b.id}, [a, b](Tape& t, const Mat& g) {
        if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
        if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
    });
}

Var scale(Tape& t, Var a, double s) {
    return t.record(t.value(a) * s, {a.id}, [a, s](Tape& t, const Mat& g) { t.accumulate(a, g * s); });
}

Var transpose(Tape& t, Var a) {
    return t.record(t.value(a).transpose(), {a.id}, [a](Tape& t, const Mat& g) { t.accumulate(a, g.transpose()); });
}

Var gelu(Tape& t, Var a) {
    const Mat& x = t.value(a);
    Mat out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
    return t.record(std::move(out), {a.id}, [a](Tape& t, const Mat& g) {
        const Mat d = t.value(a).unaryExpr([](double v) {
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + v * pdf;
        });
        t.accumulate(a, g.cwiseProduct(d));
    });
}

Var tanh(Tape& t, Var a) {
    Mat out = t.value(a).array().tanh().matrix();
    const int self = static_cast<int>(t.size());
    return t.record(std::move(out), {a.id}, [a, self](Tape& t, const Mat& g) {
        const Mat& y = t.value({self});
        t.accumulate(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
    });
}

Var rows(Tape& t, Var a, const std::vector<int>& idx) {
    const Mat& x = t.value(a);
    Mat out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    return t.record(std::move(out), {a.id}, [a, idx](Tape& t, const Mat& g) {
        if (!t.needs_grad(a)) return;
        Mat d = Mat::Zero(t.value(a).rows(), t.value(a).cols());
        for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        t.accumulate(a, d);
    });
}

Var scatter_rows(Tape& t, Var a, const std::vector<int>& idx, int n) {
    const Mat& x = t.value(a);
    Mat out = Mat::Zero(n, x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) = x.row(static_cast<Eigen::Index>(i));
    return t.record(std::move(out), {a.id}, [a, idx](Tape& t, const Mat& g) {
        Mat d(static_cast<Eigen::Index>(idx.size()), g.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) d.row(static_cast<Eigen::Index>(i)) = g.row(idx[i]);
        t.accumulate(a, d);
    });
}

Var slice_cols(Tape& t, Var a, int start, int count) {
    Mat out = t.value(a).middleCols(start, count);
    return t.record(std::move(out), {a.id}, [a, start](Tape& t, const Mat& g) {
        t.accumulate_block(a, 0, start, g);
    });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
    Eigen::Index cols = 0;
    const Eigen::Index n = t.value(parts.at(0)).rows();
    for (Var p : parts) cols += t.value(p).cols();
    Mat out(n, cols);
    std::vector<int> ids;
    Eigen::Index at = 0;
    for (Var p : parts) {
        out.middleCols(at, t.value(p).cols()) = t.value(p);
        at += t.value(p).cols();
        ids.push_back(p.id);
    }
    return t.record(std::move(out), ids, [parts](Tape& t, const Mat& g) {
        Eigen::Index at = 0;
        for (Var p : parts) {
            const auto c = t.value(p).cols();
            t.accumulate(p, g.middleCols(at, c));
            at += c;
        }
    });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
    Eigen::Index rows_total = 0;
    const Eigen::Index c = t.value(parts.at(0)).cols();
    for (Var p : parts) rows_total += t.value(p).rows();
    Mat out(rows_total, c);
    std::vector<int> ids;
    Eigen::Index at = 0;
    for (Var p : parts) {
        out.middleRows(at, t.value(p).rows()) = t.value(p);
        at += t.value(p).rows();
        ids.push_back(p.id);
    }
    return t.record(std::move(out), ids, [parts](Tape& t, const Mat& g) {
        Eigen::Index at = 0;
        for (Var p : parts) {
            const auto r = t.value(p).rows();
            t.accumulate(p, g.middleRows(at, r));
            at += r;
        }
    });
}

Var pad_rows(Tape& t, Var a, int n) {
    const Mat& x = t.value(a);
    if (x.rows() >= n) return a;
    Mat out = Mat::Zero(n, x.cols());
    out.topRows(x.rows()) = x;
    return t.record(std::move(out), {a.id}, [a](Tape& t, const Mat& g) {
        t.accumulate(a, g.topRows(t.value(a).rows()));
    });
}

Var embedding(Tape& t, Var table, const std::vector<int>& ids) { return rows(t, table, ids); }

Var lookup(Tape& t, Var table, const Eigen::MatrixXi& idx, int col) {
    const Mat& tab = t.value(table);
    Mat out(idx.rows(), idx.cols());
    for (Eigen::Index r = 0; r < idx.rows(); ++r)
        for (Eigen::Index c = 0; c < idx.cols(); ++c) out(r, c) = tab(idx(r, c), col);
    return t.record(std::move(out), {table.id}, [table, idx, col](Tape& t, const Mat& g) {
        Mat d = Mat::Zero(t.value(table).rows(), t.value(table).cols());
        for (Eigen::Index r = 0; r < idx.rows(); ++r)
            for (Eigen::Index c = 0; c < idx.cols(); ++c) d(idx(r, c), col) += g(r, c);
        t.accumulate(table, d);
    });
}

Var scatter_pairs(Tape& t, Var vals, int col, const std::vector<std::pair<int, int>>& positions, int n) {
    const Mat& v = t.value(vals);
    Mat out = Mat::Zero(n, n);
    for (std::size_t k = 0; k < positions.size(); ++k)
        out(positions[k].first, positions[k].second) += v(static_cast<Eigen::Index>(k), col);
    return t.record(std::move(out), {vals.id}, [vals, col, positions](Tape& t, const Mat& g) {
        Mat d = Mat::Zero(t.value(vals).rows(), t.value(vals).cols());
        for (std::size_t k = 0; k < positions.size(); ++k)
            d(static_cast<Eigen::Index>(k), col) += g(positions[k].first, positions[k].second);
        t.accumulate(vals, d);
    });
}

Var gather_elements(Tape& t, Var a, const std::vector<std::pair<int, int>>& at) {
    const Mat& x = t.value(a);
    Mat out(1, static_cast<Eigen::Index>(at.size()));
    for (std::size_t k = 0; k < at.size(); ++k) out(0, static_cast<Eigen::Index>(k)) = x(at[k].first, at[k].second);
    return t.record(std::move(out), {a.id}, [a, at](Tape& t, const Mat& g) {
        Mat d = Mat::Zero(t.value(a).rows(), t.value(a).cols());
        for (std::size_t k = 0; k < at.size(); ++k) d(at[k].first, at[k].second) += g(0, static_cast<Eigen::Index>(k));
        t.accumulate(a, d);
    });
}

Var sum(Tape& t, Var a) {
    Mat out(1, 1);
    out(0, 0) = t.value(a).sum();
    return t.record(std::move(out), {a.id}, [a](Tape& t, const Mat& g) {
        t.accumulate(a, Mat::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
    });
}

Var mean(Tape& t, Var a) {
    const double n = static_cast<double>(t.value(a).size());
    return scale(t, sum(t, a), 1.0 / n);
}

Var mean_rows(Tape& t, Var a) {
    const Mat& x = t.value(a);
    Mat out = x.colwise().mean();
    return t.record(std::move(out), {a.id}, [a](Tape& t, const Mat& g) {
        const auto n = t.value(a).rows();
        t.accumulate(a, g.replicate(n, 1) / static_cast<double>(n));
    });
}

Var softmax_rows(Tape& t, Var a) {
    const Mat& x = t.value(a);
    Mat y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        y.row(r) = (x.row(r).array() - mx).exp().matrix();
        y.row(r) /= y.row(r).sum();
    }
    const int self = static_cast<int>(t.size());
    return t.record(std::move(y), {a.id}, [a, self](Tape& t, const Mat& g) {
        const Mat& y = t.value({self});
        const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
        t.accumulate(a, y.cwiseProduct(g - dot.replicate(1, g.cols())));
    });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
    const Mat& v = t.value(x);
    const auto n = v.rows(), c = v.cols();
    Mat xhat(n, c);
    Eigen::VectorXd inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mu = v.row(r).mean();
        const double var = (v.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
    }
    Mat out = (xhat.array().rowwise() * t.value(gamma).row(0).array()).rowwise() + t.value(beta).row(0).array();
    return t.record(std::move(out), {x.id, gamma.id, beta.id},
                    [x, gamma, beta, xhat, inv_std](Tape& t, const Mat& g) {
                        if (t.needs_grad(beta)) t.accumulate(beta, g.colwise().sum());
                        if (t.needs_grad(gamma)) t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                        if (!t.needs_grad(x)) return;
                        const Mat dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
                        Mat dx(g.rows(), g.cols());
                        for (Eigen::Index r = 0; r < g.rows(); ++r) {
                            const double m1 = dxhat.row(r).mean();
                            const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                            dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
                        }
                        t.accumulate(x, dx);
                    });
}

Var normalize_rows(Tape& t, Var a, double eps) {
    const Mat& x = t.value(a);
    Eigen::VectorXd norm = x.rowwise().norm().array().max(eps).matrix();
    Mat y = x.array().colwise() / norm.array();
    const int self = static_cast<int>(t.size());
    return t.record(std::move(y), {a.id}, [a, self, norm](Tape& t, const Mat& g) {
        const Mat& y = t.value({self});
        const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
        const Mat d = (g.array() - y.array().colwise() * dot.array()).colwise() / norm.array();
        t.accumulate(a, d);
    });
}

Var cross_entropy(Tape& t, Var logits, const std::vector<int>& targets) {
    const Mat& x = t.value(logits);
    if (static_cast<Eigen::Index>(targets.size()) != x.rows()) {
        throw ShapeMismatch("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                            std::to_string(x.rows()) + " rows");
    }
    Mat p(x.rows(), x.cols());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mx = x.row(r).maxCoeff();
        const double lse = mx + std::log((x.row(r).array() - mx).exp().sum());
        p.row(r) = (x.row(r).array() - lse).exp().matrix();
        loss += lse - x(r, targets[static_cast<std::size_t>(r)]);
    }
    const double n = static_cast<double>(x.rows());
    Mat out(1, 1);
    out(0, 0) = loss / n;
    return t.record(std::move(out), {logits.id}, [logits, targets, p, n](Tape& t, const Mat& g) {
        Mat d = p;
        for (std::size_t r = 0; r < targets.size(); ++r) d(static_cast<Eigen::Index>(r), targets[r]) -= 1.0;
        t.accumulate(logits, d * (g(0, 0) / n));
    });
}

Var mse(Tape& t, Var pred, const Mat& target) {
    const Mat& x = t.value(pred);
    if (x.rows() != target.rows() || x.cols() != target.cols()) {
        throw ShapeMismatch("mse: prediction " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                            " vs target " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
    }
    const Mat diff = x - target;
    Mat out(1, 1);
    out(0, 0) = diff.squaredNorm() / static_cast<double>(diff.size());
    return t.record(std::move(out), {pred.id}, [pred, diff](Tape& t, const Mat& g) {
        t.accumulate(pred, diff * (2.0 * g(0, 0) / static_cast<double>(diff.size())));
    });
}

double finite_difference(Parameter& p, Eigen::Index r, Eigen::Index c, double h, const std::function<double()>& f) {
    const double saved = p.value(r, c);
    p.value(r, c) = saved + h;
    const double up = f();
    p.value(r, c) = saved - h;
    const double down = f();
    p.value(r, c) = saved;
    return (up - down) / (2.0 * h);
}

}  // namespace cfusion::nn
