#include "circuitfusion/quality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "circuitfusion/encoders.hpp"
#include "circuitfusion/nn.hpp"

namespace cfusion {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

bool is_circuit_task(const std::string& task) {
    return task == "wns" || task == "tns" || task == "total_power" || task == "total_area";
}

std::string retrieval_metric(const std::string& task) {
    if (task == "wns" || task == "tns" || task == "slack") return "slack";
    if (task == "total_power" || task == "power") return "power";
    if (task == "total_area" || task == "area") return "area";
    throw std::invalid_argument("unknown task: " + task);
}

VectorXd graph_counts(const CdfGraph& g) {
    VectorXd out = VectorXd::Zero(kCountFeatures);
    for (const auto& n : g.nodes()) {
        out(op_index(n.op)) += 1.0;
        if (is_sequential(n.op)) out(kOpCount) += 1.0;
        out(kOpCount + 1) += n.width;
    }
    return out;
}

VectorXd build_features(const SubCircuitBundle& bundle, const RowVectorXd& embedding, const VectorStore* store,
                        const std::string& task, const FeatureOptions& opt) {
    const auto d = embedding.size();
    VectorXd out(d + 1 + kCountFeatures);
    out.head(d) = embedding.transpose();
    out(d) = 0.0;
    if (opt.retrieval) {
        if (!store) throw std::invalid_argument("build_features: retrieval requested without a store");
        std::function<bool(const StoreEntry&)> keep;
        if (!opt.exclude_design.empty()) keep = [&](const StoreEntry& e) { return e.design != opt.exclude_design; };
        out(d) = zero_shot_predict(*store, embedding, retrieval_metric(task), opt.k, keep);
    }
    out.tail(kCountFeatures) = graph_counts(bundle.rtl_graph.graph);
    return out;
}

VectorXd aggregate_circuit(const std::vector<VectorXd>& features, const VectorXd& design_counts) {
    if (features.empty()) throw EmptyDesign();
    VectorXd sum = features.front();
    for (std::size_t i = 1; i < features.size(); ++i) {
        if (features[i].size() != sum.size()) throw ShapeMismatch("aggregate_circuit: feature lengths differ");
        sum += features[i];
    }
    VectorXd out(sum.size() + design_counts.size());
    out << sum, design_counts;
    return out;
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "perceptron") return HeadKind::Perceptron;
    if (name == "tree_ensemble") return HeadKind::TreeEnsemble;
    throw std::invalid_argument("unknown head kind: " + name);
}

std::string head_kind_name(HeadKind kind) { return kind == HeadKind::Perceptron ? "perceptron" : "tree_ensemble"; }

// ---------------------------------------------------------------- heads

namespace {

struct TreeBuilder {
    const MatrixXd& Z;
    const VectorXd& r;
    int max_depth;

    template <typename Node>
    int build(std::vector<Node>& nodes, const std::vector<int>& rows, int depth) {
        const int id = static_cast<int>(nodes.size());
        nodes.push_back({});
        double mean = 0.0;
        for (int i : rows) mean += r(i);
        mean /= static_cast<double>(rows.size());
        nodes[static_cast<std::size_t>(id)].value = mean;
        if (depth >= max_depth || rows.size() < 4) return id;

        double best_gain = 1e-12, best_thr = 0.0;
        int best_f = -1;
        double total = 0.0;
        for (int i : rows) total += r(i);
        std::vector<int> sorted = rows;
        for (Eigen::Index f = 0; f < Z.cols(); ++f) {
            std::stable_sort(sorted.begin(), sorted.end(), [&](int a, int b) { return Z(a, f) < Z(b, f); });
            double left = 0.0;
            for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
                left += r(sorted[k]);
                const double a = Z(sorted[k], f), b = Z(sorted[k + 1], f);
                if (a == b) continue;
                const double nl = static_cast<double>(k + 1), nr = static_cast<double>(sorted.size() - k - 1);
                const double right = total - left;
                const double gain = left * left / nl + right * right / nr - total * total / (nl + nr);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_f = static_cast<int>(f);
                    best_thr = 0.5 * (a + b);
                }
            }
        }
        if (best_f < 0) return id;
        std::vector<int> lo, hi;
        for (int i : rows) (Z(i, best_f) <= best_thr ? lo : hi).push_back(i);
        nodes[static_cast<std::size_t>(id)].feature = best_f;
        nodes[static_cast<std::size_t>(id)].threshold = best_thr;
        const int l = build(nodes, lo, depth + 1);
        const int h = build(nodes, hi, depth + 1);
        nodes[static_cast<std::size_t>(id)].left = l;
        nodes[static_cast<std::size_t>(id)].right = h;
        return id;
    }
};

nlohmann::json row_json(const RowVectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RowVectorXd json_row(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    RowVectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

}  // namespace

RegressionHead fit_head(const MatrixXd& X, const VectorXd& y, const HeadConfig& config) {
    if (X.rows() != y.size()) throw std::invalid_argument("fit_head: feature/label count mismatch");
    if (X.rows() < 2) throw std::invalid_argument("fit_head: need at least 2 samples");
    if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("fit_head: non-finite input");
    RegressionHead h;
    h.kind_ = config.kind;
    if ((y.array() == y(0)).all()) {
        std::cerr << "warning: degenerate labels (all equal to " << y(0) << "); fitting a constant head\n";
        h.constant_ = y(0);
        return h;
    }
    const auto n = X.rows(), f = X.cols();
    h.mean_ = X.colwise().mean();
    h.scale_ = ((X.rowwise() - h.mean_).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    for (Eigen::Index c = 0; c < f; ++c)
        if (h.scale_(c) < 1e-12) h.scale_(c) = 1.0;
    h.y_mean_ = y.mean();
    h.y_scale_ = std::sqrt((y.array() - h.y_mean_).square().mean());
    const MatrixXd Z = (X.rowwise() - h.mean_).array().rowwise() / h.scale_.array();
    const VectorXd t = (y.array() - h.y_mean_) / h.y_scale_;

    if (config.kind == HeadKind::TreeEnsemble) {
        h.shrinkage_ = config.shrinkage;
        VectorXd resid = t;
        std::vector<int> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        for (int k = 0; k < config.trees; ++k) {
            std::vector<RegressionHead::TreeNode> nodes;
            TreeBuilder{Z, resid, config.depth}.build(nodes, all, 0);
            h.trees_.push_back(nodes);
            for (Eigen::Index i = 0; i < n; ++i) {
                int at = 0;
                while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
                    const auto& node = nodes[static_cast<std::size_t>(at)];
                    at = Z(i, node.feature) <= node.threshold ? node.left : node.right;
                }
                resid(i) -= config.shrinkage * nodes[static_cast<std::size_t>(at)].value;
            }
        }
        return h;
    }

    // ridge start for the linear path
    const MatrixXd gram = Z.transpose() * Z + config.ridge * MatrixXd::Identity(f, f);
    const VectorXd beta0 = gram.ldlt().solve(Z.transpose() * t);

    nn::Rng rng(config.seed);
    nn::ParamStore ps;
    auto& w1 = ps.normal("w1", static_cast<int>(f), config.hidden, 1.0 / std::sqrt(static_cast<double>(f)), rng);
    auto& b1 = ps.zeros("b1", 1, config.hidden);
    auto& w2 = ps.normal("w2", config.hidden, 1, 0.01, rng);
    auto& beta = ps.create("beta", beta0, false);
    auto& b = ps.zeros("b", 1, 1);
    const nn::Mat target = t;
    const double b1c = 0.9, b2c = 0.999;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        ps.zero_grad();
        nn::Tape tape;
        const nn::Var z = tape.constant(Z);
        const nn::Var hidden = nn::tanh(tape, nn::add_row(tape, nn::matmul(tape, z, tape.param(w1)), tape.param(b1)));
        const nn::Var out = nn::add_row(
            tape, nn::add(tape, nn::matmul(tape, hidden, tape.param(w2)), nn::matmul(tape, z, tape.param(beta))),
            tape.param(b));
        const nn::Var loss = nn::mse(tape, out, target);
        tape.backward(loss);
        for (nn::Parameter* p : ps.all()) {
            const nn::Mat g = p->grad + (p->decay ? 1e-4 : 0.0) * p->value;
            p->m = b1c * p->m + (1 - b1c) * g;
            p->v = b2c * p->v + (1 - b2c) * g.cwiseProduct(g);
            const double c1 = 1 - std::pow(b1c, epoch), c2 = 1 - std::pow(b2c, epoch);
            p->value.array() -= config.lr * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + 1e-8);
        }
    }
    h.w1_ = w1.value;
    h.b1_ = b1.value;
    h.w2_ = w2.value.transpose();
    h.beta_ = beta.value.transpose();
    h.b_ = b.value(0, 0);
    return h;
}

double RegressionHead::predict_standardized(const RowVectorXd& z) const {
    if (kind_ == HeadKind::TreeEnsemble) {
        double out = 0.0;
        for (const auto& nodes : trees_) {
            int at = 0;
            while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
                const auto& node = nodes[static_cast<std::size_t>(at)];
                at = z(node.feature) <= node.threshold ? node.left : node.right;
            }
            out += shrinkage_ * nodes[static_cast<std::size_t>(at)].value;
        }
        return out;
    }
    const RowVectorXd hidden = (z * w1_ + b1_).array().tanh();
    return hidden.dot(w2_) + z.dot(beta_) + b_;
}

double RegressionHead::predict(const VectorXd& x) const {
    if (constant_) return *constant_;
    if (x.size() != mean_.size()) throw ShapeMismatch("predict: expected " + std::to_string(mean_.size()) + " features");
    const RowVectorXd z = (x.transpose() - mean_).array() / scale_.array();
    return predict_standardized(z) * y_scale_ + y_mean_;
}

VectorXd RegressionHead::predict_all(const MatrixXd& X) const {
    VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict(X.row(i).transpose());
    return out;
}

nlohmann::json RegressionHead::to_json() const {
    nlohmann::json j{{"kind", head_kind_name(kind_)}};
    if (constant_) {
        j["constant"] = *constant_;
        return j;
    }
    j["mean"] = row_json(mean_);
    j["scale"] = row_json(scale_);
    j["y_mean"] = y_mean_;
    j["y_scale"] = y_scale_;
    if (kind_ == HeadKind::TreeEnsemble) {
        j["shrinkage"] = shrinkage_;
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& nodes : trees_) {
            nlohmann::json tj = nlohmann::json::array();
            for (const auto& n : nodes) tj.push_back({n.feature, n.threshold, n.value, n.left, n.right});
            trees.push_back(tj);
        }
        j["trees"] = trees;
        return j;
    }
    nlohmann::json w1 = nlohmann::json::array();
    for (Eigen::Index r = 0; r < w1_.rows(); ++r) w1.push_back(row_json(w1_.row(r)));
    j["w1"] = w1;
    j["b1"] = row_json(b1_);
    j["w2"] = row_json(w2_);
    j["beta"] = row_json(beta_);
    j["b"] = b_;
    return j;
}

RegressionHead RegressionHead::from_json(const nlohmann::json& j) {
    RegressionHead h;
    h.kind_ = head_kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("constant")) {
        h.constant_ = j.at("constant").get<double>();
        return h;
    }
    h.mean_ = json_row(j.at("mean"));
    h.scale_ = json_row(j.at("scale"));
    h.y_mean_ = j.at("y_mean").get<double>();
    h.y_scale_ = j.at("y_scale").get<double>();
    if (h.kind_ == HeadKind::TreeEnsemble) {
        h.shrinkage_ = j.at("shrinkage").get<double>();
        for (const auto& tj : j.at("trees")) {
            std::vector<TreeNode> nodes;
            for (const auto& n : tj)
                nodes.push_back({n[0].get<int>(), n[1].get<double>(), n[2].get<double>(), n[3].get<int>(), n[4].get<int>()});
            h.trees_.push_back(std::move(nodes));
        }
        return h;
    }
    const auto& w1 = j.at("w1");
    h.w1_.resize(static_cast<Eigen::Index>(w1.size()), static_cast<Eigen::Index>(w1.empty() ? 0 : w1[0].size()));
    for (std::size_t r = 0; r < w1.size(); ++r) h.w1_.row(static_cast<Eigen::Index>(r)) = json_row(w1[r]);
    h.b1_ = json_row(j.at("b1"));
    h.w2_ = json_row(j.at("w2"));
    h.beta_ = json_row(j.at("beta"));
    h.b_ = j.at("b").get<double>();
    return h;
}

// ---------------------------------------------------------------- metrics

double mape(const std::vector<double>& labels, const std::vector<double>& preds) {
    if (labels.size() != preds.size()) throw std::invalid_argument("mape: length mismatch");
    if (labels.empty()) throw std::invalid_argument("mape: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 0.0) throw ZeroLabel(i);
        acc += std::abs(preds[i] - labels[i]) / std::abs(labels[i]);
    }
    return acc / static_cast<double>(labels.size()) * 100.0;
}

double pearson_r(const std::vector<double>& labels, const std::vector<double>& preds) {
    if (labels.size() != preds.size()) throw std::invalid_argument("pearson_r: length mismatch");
    if (labels.size() < 2) throw ZeroVariance();
    const double n = static_cast<double>(labels.size());
    const double mx = std::accumulate(labels.begin(), labels.end(), 0.0) / n;
    const double my = std::accumulate(preds.begin(), preds.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double dx = labels[i] - mx, dy = preds[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw ZeroVariance();
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double wns_from_slacks(const std::vector<double>& slacks) {
    double w = 0.0;
    for (double s : slacks) w = std::min(w, s);
    return w;
}

double tns_from_slacks(const std::vector<double>& slacks) {
    double t = 0.0;
    for (double s : slacks)
        if (s < 0) t += s;
    return t;
}

EvalRow evaluate_task(const std::string& task, const std::vector<double>& labels, const std::vector<double>& preds) {
    EvalRow row{task, std::numeric_limits<double>::quiet_NaN(), 0.0, static_cast<int>(labels.size())};
    row.mape = mape(labels, preds);
    try {
        row.r = pearson_r(labels, preds);
    } catch (const ZeroVariance&) {
    }
    return row;
}

std::string report_csv(const std::vector<EvalRow>& rows) {
    std::ostringstream out;
    out << "task,R,MAPE,n\n" << std::fixed << std::setprecision(6);
    for (const auto& r : rows) {
        out << r.task << ',';
        if (std::isnan(r.r)) out << "nan";
        else out << r.r;
        out << ',' << r.mape << ',' << r.n << '\n';
    }
    return out.str();
}

void write_report(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("evaluate", "cannot write " + path);
    out << report_csv(rows);
}

}  // namespace cfusion
