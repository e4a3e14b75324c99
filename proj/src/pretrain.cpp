#include "circuitfusion/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace cfusion {

using nn::Mat;
using nn::Tape;
using nn::Var;

// ---------------------------------------------------------------- model

CircuitFusionModel::CircuitFusionModel(const EncoderParams& p, std::uint64_t seed) : config(p) {
    p.validate();
    nn::Rng rng(seed);
    const int d = p.d_model;
    graph = GraphEncoder(params, p, rng);
    summary = TextEncoder(params, "summary", p.summary_layers, p.max_summary_len, p, rng, false);
    code = TextEncoder(params, "code", p.code_layers, p.max_code_len, p, rng, true);
    fusion = FusionEncoder(params, p, rng);
    netlist = NetlistEncoder(params, p, rng);
    mgm_head = nn::Mlp(params, "head.mgm", {d, d, d, kOpCount}, rng);
    msm_head = nn::Linear(params, "head.msm", d, p.vocab_size, rng);
    match_head = nn::Linear(params, "head.match", d, 2, rng);
    gate_head = nn::Mlp(params, "netlist_head.gate", {d, d, d, kOpCount}, rng);
}

void CircuitFusionModel::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    params.save(dir + "/weights.bin", dir + "/manifest.json");
    std::ofstream out(dir + "/config.json");
    if (!out) throw IoError("checkpoint", "cannot write " + dir + "/config.json");
    out << config.to_json().dump(2) << '\n';
}

std::unique_ptr<CircuitFusionModel> CircuitFusionModel::load(const std::string& dir) {
    std::ifstream in(dir + "/config.json");
    if (!in) throw IoError("checkpoint", "cannot read " + dir + "/config.json");
    auto m = std::make_unique<CircuitFusionModel>(EncoderParams::from_json(nlohmann::json::parse(in)), 0);
    m->params.load(dir + "/weights.bin", dir + "/manifest.json");
    return m;
}

// ---------------------------------------------------------------- masking

int masked_count(int n, double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("mask ratio must be in (0, 1)");
    return std::clamp(static_cast<int>(std::lround(ratio * n)), 1, std::max(1, n));
}

MaskedGraph mask_graph(const Cone& cone, double ratio, std::uint64_t seed) {
    const int n = static_cast<int>(cone.graph.size());
    const int k = masked_count(n, ratio);
    std::vector<NodeId> ids;
    for (const auto& node : cone.graph.nodes()) ids.push_back(node.id);
    nn::Rng rng(seed);
    rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(std::min(k, n)));
    std::sort(ids.begin(), ids.end());
    MaskedGraph out{cone, ids, {}};
    for (NodeId id : ids) {
        Eigen::VectorXd onehot = Eigen::VectorXd::Zero(kOpCount);
        onehot(op_index(cone.graph.node(id).op)) = 1.0;
        out.targets[id] = onehot;
        out.cone.graph.retype(id, Op::Mask);
    }
    return out;
}

// ---------------------------------------------------------------- losses

std::vector<int> class_partners(const std::vector<int>& classes) {
    const std::size_t n = classes.size();
    std::vector<int> out(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 1; k < n; ++k) {
            const std::size_t j = (i + k) % n;
            if (classes[j] == classes[i]) {
                out[i] = static_cast<int>(j);
                break;
            }
        }
    }
    return out;
}

Var info_nce_rows(Tape& t, Var anchors, Var candidates, const std::vector<int>& positive_of,
                  const std::vector<int>& classes, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be positive");
    const Var sims = nn::matmul_t(t, nn::normalize_rows(t, anchors), nn::normalize_rows(t, candidates));
    const int n = static_cast<int>(classes.size());
    std::vector<Var> rows_loss;
    for (int i = 0; i < n; ++i) {
        if (positive_of[static_cast<std::size_t>(i)] < 0) throw std::invalid_argument("info_nce: anchor without positive");
        std::vector<std::pair<int, int>> at{{i, positive_of[static_cast<std::size_t>(i)]}};
        for (int j = 0; j < n; ++j)
            if (classes[static_cast<std::size_t>(j)] != classes[static_cast<std::size_t>(i)]) at.emplace_back(i, j);
        if (at.size() == 1) throw EmptyNegatives();
        const Var logits = nn::scale(t, nn::gather_elements(t, sims, at), 1.0 / tau);
        rows_loss.push_back(nn::cross_entropy(t, logits, {0}));
    }
    Var acc = rows_loss[0];
    for (std::size_t i = 1; i < rows_loss.size(); ++i) acc = add(t, acc, rows_loss[i]);
    return nn::scale(t, acc, 1.0 / n);
}

double info_nce(const Eigen::RowVectorXd& anchor, const Eigen::RowVectorXd& positive,
                const std::vector<Eigen::RowVectorXd>& negatives, double tau) {
    if (negatives.empty()) throw EmptyNegatives();
    if (tau <= 0.0) throw std::invalid_argument("info_nce: tau must be positive");
    auto cosine = [](const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
        return a.dot(b) / (a.norm() * b.norm());
    };
    std::vector<double> logits{cosine(anchor, positive) / tau};
    for (const auto& n : negatives) logits.push_back(cosine(anchor, n) / tau);
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    return mx + std::log(z) - logits[0];
}

double mgm_loss(const Mat& pred, const Mat& targets) {
    Tape t;
    return t.scalar(nn::mse(t, t.constant(pred), targets));
}

double intra_modal_loss(const ContrastiveBatch& batch) {
    Tape t;
    const Var e = t.constant(batch.embeddings);
    const auto partners = class_partners(batch.classes);
    return t.scalar(info_nce_rows(t, e, e, partners, batch.classes, batch.tau));
}

namespace {

std::vector<int> identity(std::size_t n) {
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<int>(i);
    return out;
}

}  // namespace

double cross_modal_loss(const Mat& s_cls, const Mat& g_cls, const Mat& c_cls, const std::vector<int>& classes,
                        double tau) {
    Tape t;
    const auto id = identity(classes.size());
    const Var s = t.constant(s_cls);
    return t.scalar(add(t, info_nce_rows(t, s, t.constant(g_cls), id, classes, tau),
                        info_nce_rows(t, s, t.constant(c_cls), id, classes, tau)));
}

double msm_loss(const Mat& logits, const std::vector<int>& targets) {
    if (targets.empty()) return 0.0;
    Tape t;
    return t.scalar(nn::cross_entropy(t, t.constant(logits), targets));
}

double match_loss(const Mat& logits, const std::vector<int>& labels) {
    if (logits.cols() != 2) throw ShapeMismatch("match head must have 2 outputs");
    Tape t;
    return t.scalar(nn::cross_entropy(t, t.constant(logits), labels));
}

double impl_align_loss(const Mat& r_cls, const Mat& n_pool, const std::vector<int>& classes, double tau) {
    Tape t;
    const auto id = identity(classes.size());
    const Var r = t.constant(r_cls), n = t.constant(n_pool);
    return t.scalar(add(t, info_nce_rows(t, r, n, id, classes, tau), info_nce_rows(t, n, r, id, classes, tau)));
}

nlohmann::json LossWeights::to_json() const {
    return {{"mgm", mgm}, {"intra", intra}, {"cross_modal", cross_modal}, {"msm", msm}, {"match", match}, {"impl", impl}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
    LossWeights w;
    w.mgm = j.value("mgm", w.mgm);
    w.intra = j.value("intra", w.intra);
    w.cross_modal = j.value("cross_modal", w.cross_modal);
    w.msm = j.value("msm", w.msm);
    w.match = j.value("match", w.match);
    w.impl = j.value("impl", w.impl);
    return w;
}

bool LossReport::finite() const {
    for (double v : {mgm, clg, cls, clmodal, msm, match, climpl, total})
        if (!std::isfinite(v)) return false;
    return true;
}

std::string LossReport::str() const {
    std::ostringstream s;
    s << std::setprecision(6) << "mgm=" << mgm << " clg=" << clg << " cls=" << cls << " clmodal=" << clmodal
      << " msm=" << msm << " match=" << match << " climpl=" << climpl << " total=" << total;
    return s.str();
}

double total_loss(const LossReport& r, const LossWeights& w) {
    return w.mgm * r.mgm + w.intra * (r.clg + r.cls) + w.cross_modal * r.clmodal + w.msm * r.msm +
           w.match * r.match + w.impl * r.climpl;
}

// ---------------------------------------------------------------- config

nlohmann::json PretrainConfig::to_json() const {
    return {{"encoder", encoder.to_json()},
            {"steps", steps},
            {"classes_per_batch", classes_per_batch},
            {"lr", lr},
            {"min_lr", min_lr},
            {"warmup_iters", warmup_iters},
            {"weight_decay", weight_decay},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"clip_norm", clip_norm},
            {"tau", tau},
            {"mask_ratio", mask_ratio},
            {"summary_mask_ratio", summary_mask_ratio},
            {"lambda", lambda},
            {"sample_lambda", sample_lambda},
            {"mixup_alpha", mixup_alpha},
            {"weights", weights.to_json()},
            {"freeze_netlist", freeze_netlist},
            {"netlist_steps", netlist_steps},
            {"disabled_tasks", disabled_tasks},
            {"seed", seed},
            {"include_output_cones", include_output_cones},
            {"metrics_csv", metrics_csv}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
    PretrainConfig c;
    if (j.contains("encoder")) c.encoder = EncoderParams::from_json(j["encoder"]);
    c.steps = j.value("steps", c.steps);
    c.classes_per_batch = j.value("classes_per_batch", c.classes_per_batch);
    c.lr = j.value("lr", c.lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.warmup_iters = j.value("warmup_iters", c.warmup_iters);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.tau = j.value("tau", c.tau);
    c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
    c.summary_mask_ratio = j.value("summary_mask_ratio", c.summary_mask_ratio);
    c.lambda = j.value("lambda", c.lambda);
    c.sample_lambda = j.value("sample_lambda", c.sample_lambda);
    c.mixup_alpha = j.value("mixup_alpha", c.mixup_alpha);
    if (j.contains("weights")) c.weights = LossWeights::from_json(j["weights"]);
    c.freeze_netlist = j.value("freeze_netlist", c.freeze_netlist);
    c.netlist_steps = j.value("netlist_steps", c.netlist_steps);
    if (j.contains("disabled_tasks")) c.disabled_tasks = j["disabled_tasks"].get<std::set<std::string>>();
    c.seed = j.value("seed", c.seed);
    c.include_output_cones = j.value("include_output_cones", c.include_output_cones);
    c.metrics_csv = j.value("metrics_csv", c.metrics_csv);
    return c;
}

double learning_rate(const PretrainConfig& c, int step) {
    if (step <= 0) return 0.0;
    if (step < c.warmup_iters) return c.lr * static_cast<double>(step) / c.warmup_iters;
    const int decay_steps = std::max(1, c.steps - c.warmup_iters);
    const double progress = std::min(1.0, static_cast<double>(step - c.warmup_iters) / decay_steps);
    return c.min_lr + 0.5 * (c.lr - c.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

double AdamW::step(nn::ParamStore& ps, double lr) {
    ++t_;
    double sq = 0.0;
    for (const nn::Parameter* p : ps.all())
        if (!p->frozen) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    const double clip = (c_.clip_norm > 0.0 && norm > c_.clip_norm) ? c_.clip_norm / norm : 1.0;
    const double bc1 = 1.0 - std::pow(c_.beta1, t_);
    const double bc2 = 1.0 - std::pow(c_.beta2, t_);
    for (nn::Parameter* p : ps.all()) {
        if (p->frozen) continue;
        const Mat g = p->grad * clip;
        p->m = c_.beta1 * p->m + (1.0 - c_.beta1) * g;
        p->v = c_.beta2 * p->v + (1.0 - c_.beta2) * g.cwiseProduct(g);
        const Mat update =
            (p->m / bc1).array() / ((p->v / bc2).array().sqrt() + c_.adam_eps);
        if (p->decay) p->value -= lr * c_.weight_decay * p->value;
        p->value -= lr * update;
    }
    return norm;
}

// ---------------------------------------------------------------- batches

std::vector<Sample> prepare_samples(const std::vector<SubCircuitBundle>& bundles, const Vocab& vocab,
                                    const EncoderParams& p, bool include_output_cones) {
    std::map<std::string, int> class_ids;
    std::vector<Sample> out;
    for (const auto& b : bundles) {
        if (b.rtl_graph.is_output_cone && !include_output_cones) continue;
        auto [it, inserted] = class_ids.emplace(b.equivalence_class, static_cast<int>(class_ids.size()));
        Sample s;
        s.bundle = &b;
        s.cls = it->second;
        s.summary = tokenize(b.summary, vocab, p.max_summary_len);
        s.code = tokenize(b.code, vocab, p.max_code_len);
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

/// Marsaglia-Tsang gamma draw (shape >= 1 boosted for shape < 1).
double gamma_draw(nn::Rng& rng, double shape) {
    if (shape < 1.0) return gamma_draw(rng, shape + 1.0) * std::pow(rng.uniform(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace

BatchPlan plan_fixed(const std::vector<Sample>& samples, const std::vector<int>& rows, const PretrainConfig& c,
                     nn::Rng& rng) {
    BatchPlan plan;
    plan.samples = rows;
    for (int r : rows) plan.classes.push_back(samples[static_cast<std::size_t>(r)].cls);
    const std::size_t n = rows.size();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<int> others;
        for (std::size_t j = 0; j < n; ++j)
            if (plan.classes[j] != plan.classes[i]) others.push_back(static_cast<int>(j));
        plan.mismatch.push_back(others.empty() ? -1 : others[rng.below(others.size())]);
    }
    for (int r : rows) {
        const Sample& s = samples[static_cast<std::size_t>(r)];
        plan.masked_graphs.push_back(mask_graph(s.bundle->rtl_graph, c.mask_ratio, rng.next()));
        std::vector<int> positions;
        for (std::size_t k = 1; k < s.summary.size(); ++k)
            if (s.summary[k] != Vocab::kPad) positions.push_back(static_cast<int>(k));
        std::vector<int> chosen;
        if (!positions.empty()) {
            const int count = std::clamp(static_cast<int>(std::lround(c.summary_mask_ratio * positions.size())), 1,
                                         static_cast<int>(positions.size()));
            rng.shuffle(positions);
            chosen.assign(positions.begin(), positions.begin() + count);
            std::sort(chosen.begin(), chosen.end());
        }
        std::vector<int> masked = s.summary;
        std::vector<int> targets;
        for (int k : chosen) {
            targets.push_back(masked[static_cast<std::size_t>(k)]);
            masked[static_cast<std::size_t>(k)] = Vocab::kMask;
        }
        plan.masked_summaries.push_back(std::move(masked));
        plan.msm_positions.push_back(std::move(chosen));
        plan.msm_targets.push_back(std::move(targets));
    }
    if (c.sample_lambda) {
        const double a = gamma_draw(rng, c.mixup_alpha), b = gamma_draw(rng, c.mixup_alpha);
        plan.lambda = a / (a + b);
    } else {
        plan.lambda = c.lambda;
    }
    return plan;
}

BatchPlan plan_batch(const std::vector<Sample>& samples, const PretrainConfig& c, nn::Rng& rng) {
    std::map<int, std::vector<int>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].cls].push_back(static_cast<int>(i));
    std::vector<int> eligible;
    for (const auto& [cls, members] : by_class)
        if (members.size() >= 2) eligible.push_back(cls);
    if (eligible.size() < 2) throw EmptyNegatives();
    rng.shuffle(eligible);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(2, c.classes_per_batch)), eligible.size());
    std::vector<int> rows;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& members = by_class[eligible[i]];
        const std::size_t a = rng.below(members.size());
        std::size_t b = rng.below(members.size() - 1);
        if (b >= a) ++b;
        rows.push_back(members[a]);
        rows.push_back(members[b]);
    }
    return plan_fixed(samples, rows, c, rng);
}

// ---------------------------------------------------------------- forward

namespace {

Var zero(Tape& t) { return t.constant(Mat::Zero(1, 1)); }

Var weighted(Tape& t, const std::vector<std::pair<double, Var>>& terms) {
    Var acc = zero(t);
    for (auto [w, v] : terms) acc = add(t, acc, nn::scale(t, v, w));
    return acc;
}

}  // namespace

LossVars forward_losses(Tape& t, const CircuitFusionModel& m, const std::vector<Sample>& samples,
                        const BatchPlan& plan, const PretrainConfig& c, nn::Rng* dropout_rng) {
    const auto on = [&](const char* task) { return !c.disabled_tasks.contains(task); };
    const std::size_t n = plan.samples.size();
    std::vector<EmbeddingSeq> G, S, C;
    std::vector<MixupSeq> mix;
    std::vector<Var> g_cls, s_cls, c_cls, mgm_rows;
    Mat mgm_targets;
    std::vector<Eigen::VectorXd> targets;
    for (std::size_t i = 0; i < n; ++i) {
        const Sample& s = samples[static_cast<std::size_t>(plan.samples[i])];
        G.push_back(m.graph(t, s.bundle->rtl_graph, dropout_rng));
        S.push_back(m.summary(t, s.summary, dropout_rng));
        C.push_back(m.code(t, s.code, dropout_rng));
        mix.push_back(mixup(t, G.back(), C.back(), plan.lambda));
        g_cls.push_back(nn::rows(t, G.back().vectors, {0}));
        s_cls.push_back(nn::rows(t, S.back().vectors, {0}));
        c_cls.push_back(nn::rows(t, C.back().vectors, {0}));
        if (on("mgm")) {
            const MaskedGraph& mg = plan.masked_graphs[i];
            const EmbeddingSeq gm = m.graph(t, mg.cone, dropout_rng);
            std::vector<int> idx;
            for (NodeId id : mg.masked) {
                idx.push_back(static_cast<int>(mg.cone.graph.index_of(id)) + 1);
                targets.push_back(mg.targets.at(id));
            }
            mgm_rows.push_back(nn::rows(t, gm.vectors, idx));
        }
    }
    LossVars v;
    const Var Gc = nn::concat_rows(t, g_cls), Sc = nn::concat_rows(t, s_cls), Cc = nn::concat_rows(t, c_cls);
    const auto partners = class_partners(plan.classes);
    const auto id = identity(n);

    v.mgm = zero(t);
    if (on("mgm")) {
        mgm_targets.resize(static_cast<Eigen::Index>(targets.size()), kOpCount);
        for (std::size_t k = 0; k < targets.size(); ++k) mgm_targets.row(static_cast<Eigen::Index>(k)) = targets[k].transpose();
        v.mgm = nn::mse(t, m.mgm_head(t, nn::concat_rows(t, mgm_rows)), mgm_targets);
    }
    v.clg = on("intra") ? info_nce_rows(t, Gc, Gc, partners, plan.classes, c.tau) : zero(t);
    v.cls = on("intra") ? info_nce_rows(t, Sc, Sc, partners, plan.classes, c.tau) : zero(t);
    v.clmodal = on("cross_modal") ? add(t, info_nce_rows(t, Sc, Gc, id, plan.classes, c.tau),
                                        info_nce_rows(t, Sc, Cc, id, plan.classes, c.tau))
                                  : zero(t);

    std::vector<Var> r_pos;
    for (std::size_t i = 0; i < n; ++i) r_pos.push_back(nn::rows(t, m.fusion(t, S[i], mix[i], dropout_rng).vectors, {0}));
    v.r_cls = nn::concat_rows(t, r_pos);

    v.match = zero(t);
    if (on("match")) {
        std::vector<Var> pairs = r_pos;
        std::vector<int> labels(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            const int j = plan.mismatch[i];
            if (j < 0) continue;
            pairs.push_back(nn::rows(t, m.fusion(t, S[i], mix[static_cast<std::size_t>(j)], dropout_rng).vectors, {0}));
            labels.push_back(0);
        }
        v.match = nn::cross_entropy(t, m.match_head(t, nn::concat_rows(t, pairs)), labels);
    }

    v.msm = zero(t);
    if (on("msm")) {
        std::vector<Var> picked;
        std::vector<int> tgt;
        for (std::size_t i = 0; i < n; ++i) {
            if (plan.msm_positions[i].empty()) continue;
            const Sample& s = samples[static_cast<std::size_t>(plan.samples[i])];
            (void)s;
            const EmbeddingSeq sm = m.summary(t, plan.masked_summaries[i], dropout_rng);
            const FusedEmbedding f = m.fusion(t, sm, mix[i], dropout_rng);
            picked.push_back(nn::rows(t, f.vectors, plan.msm_positions[i]));
            tgt.insert(tgt.end(), plan.msm_targets[i].begin(), plan.msm_targets[i].end());
        }
        if (!picked.empty()) v.msm = nn::cross_entropy(t, m.msm_head(t, nn::concat_rows(t, picked)), tgt);
    }

    v.climpl = zero(t);
    bool all_netlists = true;
    for (int r : plan.samples) all_netlists &= samples[static_cast<std::size_t>(r)].bundle->netlist_graph.has_value();
    if (on("impl") && all_netlists) {
        std::vector<Var> pooled;
        for (int r : plan.samples) pooled.push_back(m.netlist(t, *samples[static_cast<std::size_t>(r)].bundle->netlist_graph).pooled);
        const Var Nc = nn::concat_rows(t, pooled);
        v.climpl = add(t, info_nce_rows(t, v.r_cls, Nc, id, plan.classes, c.tau),
                       info_nce_rows(t, Nc, v.r_cls, id, plan.classes, c.tau));
    }

    const LossWeights& w = c.weights;
    v.total = weighted(t, {{w.mgm, v.mgm},
                           {w.intra, v.clg},
                           {w.intra, v.cls},
                           {w.cross_modal, v.clmodal},
                           {w.msm, v.msm},
                           {w.match, v.match},
                           {w.impl, v.climpl}});
    return v;
}

LossReport read_report(const Tape& t, const LossVars& v) {
    LossReport r;
    r.mgm = t.scalar(v.mgm);
    r.clg = t.scalar(v.clg);
    r.cls = t.scalar(v.cls);
    r.clmodal = t.scalar(v.clmodal);
    r.msm = t.scalar(v.msm);
    r.match = t.scalar(v.match);
    r.climpl = t.scalar(v.climpl);
    r.total = t.scalar(v.total);
    return r;
}

// ---------------------------------------------------------------- training

namespace {

/// Freezes everything except the given prefixes for the lifetime of the guard.
class TrainOnly {
public:
    TrainOnly(nn::ParamStore& ps, const std::vector<std::string>& prefixes) : ps_(ps) {
        for (nn::Parameter* p : ps.all()) {
            saved_.push_back(p->frozen);
            bool keep = false;
            for (const auto& pre : prefixes) keep |= p->name.rfind(pre, 0) == 0;
            if (!keep) p->frozen = true;
        }
    }
    ~TrainOnly() {
        auto all = ps_.all();
        for (std::size_t i = 0; i < all.size(); ++i) all[i]->frozen = saved_[i];
    }

private:
    nn::ParamStore& ps_;
    std::vector<bool> saved_;
};

}  // namespace

std::vector<double> pretrain_netlist(CircuitFusionModel& m, const std::vector<Sample>& samples,
                                     const PretrainConfig& c) {
    std::map<int, std::vector<int>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].bundle->netlist_graph) by_class[samples[i].cls].push_back(static_cast<int>(i));
    std::vector<int> eligible;
    for (const auto& [cls, members] : by_class)
        if (members.size() >= 2) eligible.push_back(cls);
    std::vector<double> losses;
    if (eligible.size() < 2 || c.netlist_steps <= 0) return losses;

    TrainOnly guard(m.params, {"netlist.", "netlist_head."});
    PretrainConfig sched = c;
    sched.steps = c.netlist_steps;
    sched.warmup_iters = std::max(1, std::min(c.warmup_iters, c.netlist_steps / 10));
    AdamW opt(sched);
    nn::Rng rng(c.seed ^ 0x6e65746c697374ULL);
    for (int step = 0; step < c.netlist_steps; ++step) {
        rng.shuffle(eligible);
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(2, c.classes_per_batch)), eligible.size());
        std::vector<int> rows, classes;
        for (std::size_t i = 0; i < k; ++i) {
            const auto& members = by_class[eligible[i]];
            const std::size_t a = rng.below(members.size());
            std::size_t b = rng.below(members.size() - 1);
            if (b >= a) ++b;
            for (std::size_t r : {a, b}) {
                rows.push_back(members[r]);
                classes.push_back(eligible[i]);
            }
        }
        m.params.zero_grad();
        Tape t;
        std::vector<Var> pooled, masked_rows;
        std::vector<Eigen::VectorXd> targets;
        for (int r : rows) {
            const Cone& cone = *samples[static_cast<std::size_t>(r)].bundle->netlist_graph;
            pooled.push_back(m.netlist(t, cone).pooled);
            const MaskedGraph mg = mask_graph(cone, c.mask_ratio, rng.next());
            const NetlistEmbedding ne = m.netlist(t, mg.cone);
            std::vector<int> idx;
            for (NodeId id : mg.masked) {
                idx.push_back(static_cast<int>(mg.cone.graph.index_of(id)));
                targets.push_back(mg.targets.at(id));
            }
            masked_rows.push_back(nn::rows(t, ne.node_vectors, idx));
        }
        Mat tgt(static_cast<Eigen::Index>(targets.size()), kOpCount);
        for (std::size_t i = 0; i < targets.size(); ++i) tgt.row(static_cast<Eigen::Index>(i)) = targets[i].transpose();
        const Var P = nn::concat_rows(t, pooled);
        const Var loss = add(t, nn::mse(t, m.gate_head(t, nn::concat_rows(t, masked_rows)), tgt),
                             info_nce_rows(t, P, P, class_partners(classes), classes, c.tau));
        const double value = t.scalar(loss);
        if (!std::isfinite(value)) throw Diverged(step, "netlist pre-training loss " + std::to_string(value));
        t.backward(loss);
        opt.step(m.params, learning_rate(sched, step + 1));
        losses.push_back(value);
    }
    return losses;
}

std::vector<LossReport> run_pretraining(CircuitFusionModel& m, const std::vector<Sample>& samples,
                                        const PretrainConfig& c) {
    if (!c.disabled_tasks.contains("impl")) pretrain_netlist(m, samples, c);
    if (c.freeze_netlist) {
        m.params.set_frozen("netlist.", true);
        m.params.set_frozen("netlist_head.", true);
    }
    if (c.encoder.freeze_code) {
        m.params.set_frozen("code.", true);
        m.params.set_frozen("code.proj", false);
    }
    std::ofstream csv;
    if (!c.metrics_csv.empty()) {
        csv.open(c.metrics_csv);
        if (!csv) throw IoError("pretrain", "cannot write " + c.metrics_csv);
        csv << "step,lr,grad_norm,mgm,clg,cls,clmodal,msm,match,climpl,total\n";
        csv << std::setprecision(10);
    }
    AdamW opt(c);
    nn::Rng rng(c.seed);
    nn::Rng dropout_rng(c.seed ^ 0x64726f70ULL);
    std::vector<LossReport> reports;
    for (int step = 0; step < c.steps; ++step) {
        const BatchPlan plan = plan_batch(samples, c, rng);
        m.params.zero_grad();
        Tape t;
        const LossVars v = forward_losses(t, m, samples, plan, c, c.encoder.dropout > 0 ? &dropout_rng : nullptr);
        const LossReport r = read_report(t, v);
        if (!r.finite()) throw Diverged(step, r.str());
        t.backward(v.total);
        const double lr = learning_rate(c, step + 1);
        const double norm = opt.step(m.params, lr);
        if (csv) {
            csv << step << ',' << lr << ',' << norm << ',' << r.mgm << ',' << r.clg << ',' << r.cls << ','
                << r.clmodal << ',' << r.msm << ',' << r.match << ',' << r.climpl << ',' << r.total << '\n';
        }
        reports.push_back(r);
    }
    return reports;
}

std::vector<double> smooth(const std::vector<double>& xs, double alpha) {
    std::vector<double> out;
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        acc = i == 0 ? xs[0] : alpha * xs[i] + (1.0 - alpha) * acc;
        out.push_back(acc);
    }
    return out;
}

Eigen::RowVectorXd embed(const CircuitFusionModel& m, const Sample& s, double lambda,
                         const std::set<std::string>& drop) {
    Tape t;
    const std::vector<int> cls_only{Vocab::kCls};
    const bool no_graph = drop.contains("graph"), no_code = drop.contains("code");
    if (no_graph && no_code) throw std::invalid_argument("embed: cannot drop both graph and code");
    const EmbeddingSeq g = no_graph ? EmbeddingSeq{t.constant(Mat::Zero(1, m.config.d_model)), {true}}
                                    : m.graph(t, s.bundle->rtl_graph);
    const EmbeddingSeq c = m.code(t, no_code ? cls_only : s.code);
    const EmbeddingSeq sm = m.summary(t, drop.contains("summary") ? cls_only : s.summary);
    const double lam = no_graph ? 0.0 : (no_code ? 1.0 : lambda);
    const MixupSeq mix = mixup(t, g, c, lam);
    return t.value(m.fusion(t, sm, mix).vectors).row(0);
}

}  // namespace cfusion
