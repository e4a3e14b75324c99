// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "circuitfusion/augment.hpp"
#include "circuitfusion/fusion.hpp"
#include "circuitfusion/pipeline.hpp"
#include "fixtures.hpp"
#include "toy_bundles.hpp"

using namespace cfusion;
using nn::Mat;
using nn::Tape;
namespace fs = std::filesystem;

namespace {

const std::string kRoot = CF_SOURCE_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << title << " | " << o.detail << " ["
         << std::fixed << std::setprecision(1) << secs << "s]";
    std::cout << line.str() << std::endl;
}

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

PipelineConfig toy_config(const std::string& work_dir) {
    PipelineConfig c = PipelineConfig::load(kRoot + "/configs/toy.json");
    c.designs = kRoot + "/data/toy";
    c.labels = kRoot + "/data/toy_labels.json";
    c.work_dir = work_dir;
    return c;
}

// ---------------------------------------------------------------- 1

Outcome cone_extraction() {
    std::mt19937_64 rng(2024);
    int mismatches = 0, split_mismatch = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 1000; ++trial) {
        const CdfGraph g = fixtures::random_dag(rng, 200);
        int regs = 0;
        for (const auto& n : g.nodes()) {
            if (n.op != Op::Reg) continue;
            ++regs;
            const Cone c = extract_cone(g, n.id);
            const auto o = fixtures::reverse_reach(g, n.id);
            const std::set<NodeId> members(c.members.begin(), c.members.end());
            const std::set<NodeId> boundary(c.boundary.begin(), c.boundary.end());
            if (members != o.members || boundary != o.boundary) ++mismatches;
        }
        if (static_cast<int>(split_design(g).size()) != regs) ++split_mismatch;
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {mismatches == 0 && split_mismatch == 0 && secs < 10.0,
            "1000 DAGs, cone mismatches=" + std::to_string(mismatches) +
                ", split-count mismatches=" + std::to_string(split_mismatch) + ", " + fmt(secs) + "s (< 10s)"};
}

// ---------------------------------------------------------------- 2

Outcome augmentation_equivalence() {
    PipelineConfig c = toy_config("");
    std::vector<Cone> cones;
    for (const auto& d : load_designs(c))
        for (const auto& cone : split_design(d.graph)) cones.push_back(cone);
    for (const char* src : {fixtures::kTwoRegister, fixtures::kSharedAdder, fixtures::kCounter})
        for (const auto& cone : split_design(hdl::elaborate(hdl::parse_verilog(src)))) cones.push_back(cone);
    int checked = 0, failed = 0, skipped = 0;
    std::uint64_t seed = 1;
    while (checked < 100) {
        for (const Cone& cone : cones) {
            if (checked >= 100) break;
            if (boundary_bits(cone) > 20) continue;
            const auto v = apply_rewrites(cone, 1, seed++, 3).front();
            if (v.unchanged) {
                ++skipped;
                continue;
            }
            if (!check_equivalence(cone, v.cone)) ++failed;
            ++checked;
        }
    }
    return {failed == 0 && checked == 100,
            std::to_string(checked) + " structurally rewritten cones (" + std::to_string(skipped) +
                " no-op draws skipped), exhaustive-simulation failures=" + std::to_string(failed)};
}

// ---------------------------------------------------------------- 3

Outcome loss_oracles() {
    Eigen::RowVectorXd e1(2), e2(2), e0(2);
    e1 << 1, 0;
    e2 << 2, 0;
    e0 << 0, 3;
    const double sym = info_nce(e1, e1, {e1}, 0.3);
    const double tau1 = info_nce(e1, e2, {e0}, 1.0);
    Mat pred = Mat::Constant(1, 4, 0.5), target = Mat::Zero(1, 4);
    pred(0, 3) = 0.0;
    target(0, 0) = 1.0;
    const double mgm = mgm_loss(pred, target);
    const double msm = msm_loss(Mat::Zero(1, 7), {3});
    const double total = total_loss(LossReport{1, 1, 1, 1, 1, 1, 1, 0}, LossWeights{});
    const bool ok = std::abs(sym - std::log(2.0)) <= 1e-9 && std::abs(tau1 - 0.31326) <= 1e-4 &&
                    std::abs(mgm - 0.1875) <= 1e-9 && std::abs(msm - std::log(7.0)) <= 1e-6 &&
                    std::abs(total - 5.4) <= 1e-12;
    return {ok, "sym=" + fmt(sym) + " tau1=" + fmt(tau1) + " mgm=" + fmt(mgm) + " msm=" + fmt(msm) +
                    " total=" + fmt(total)};
}

// ---------------------------------------------------------------- 4

Outcome gradient_check() {
    const auto bundles = fixtures::toy_bundles(1);
    const auto vocab = fixtures::toy_vocab(bundles);
    EncoderParams p;
    p.d_model = 8;
    p.heads = 2;
    p.graph_layers = p.summary_layers = p.code_layers = p.fusion_layers = p.netlist_layers = 1;
    p.ffn_mult = 2;
    p.vocab_size = vocab.size();
    p.max_summary_len = 48;
    p.max_code_len = 160;
    CircuitFusionModel m(p, 21);
    const auto samples = prepare_samples(bundles, vocab, p);
    PretrainConfig c;
    nn::Rng rng(2);
    const auto plan = plan_fixed(samples, {0, 1, 2, 3}, c, rng);
    const auto loss = [&] {
        Tape t;
        return t.scalar(forward_losses(t, m, samples, plan, c).total);
    };
    m.params.zero_grad();
    {
        Tape t;
        const auto v = forward_losses(t, m, samples, plan, c);
        t.backward(v.total);
    }
    nn::Rng pick(3);
    double worst = 0.0;
    int checked = 0;
    for (nn::Parameter* prm : m.params.all()) {
        if (prm->name.rfind("netlist_head.", 0) == 0) continue;
        for (int k = 0; k < 4; ++k) {
            const auto r = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(prm->value.rows())));
            const auto col = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(prm->value.cols())));
            const double num = nn::finite_difference(*prm, r, col, 1e-4, loss);
            const double ana = prm->grad(r, col);
            worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-3}));
            ++checked;
        }
    }
    return {worst < 1e-4, "d_model=8, 4-sample batch, " + std::to_string(checked) +
                              " coordinates, max relative error=" + fmt(worst) + " (< 1e-4)"};
}

// ---------------------------------------------------------------- 5, 6

struct ToyRun {
    std::vector<SubCircuitBundle> bundles;
    Vocab vocab;
    std::unique_ptr<CircuitFusionModel> model;
    std::vector<Sample> samples;
    std::vector<LossReport> reports;
    PretrainConfig pc;
};

ToyRun& toy_run() {
    static ToyRun run = [] {
        ToyRun r;
        PipelineConfig c = toy_config("");
        std::vector<DesignSource> chosen;
        const std::set<std::string> names{"addsub", "parity", "counter", "minval", "shiftmask"};
        for (auto& d : load_designs(c))
            if (names.contains(d.name)) chosen.push_back(std::move(d));
        r.bundles = augment_bundles(split_bundles(chosen, c), c);
        summarize_bundles(r.bundles, c);
        std::vector<std::string> texts;
        for (const auto& b : r.bundles) {
            texts.push_back(b.code);
            texts.push_back(b.summary);
        }
        r.vocab = build_vocab(texts, 1);
        r.pc = c.pretrain;
        r.pc.seed = c.seed;
        r.pc.encoder.vocab_size = r.vocab.size();
        r.model = std::make_unique<CircuitFusionModel>(r.pc.encoder, c.seed);
        r.samples = prepare_samples(r.bundles, r.vocab, r.pc.encoder);
        r.reports = run_pretraining(*r.model, r.samples, r.pc);
        return r;
    }();
    return run;
}

Outcome toy_convergence() {
    const auto t0 = std::chrono::steady_clock::now();
    ToyRun& r = toy_run();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<double> totals;
    for (const auto& rep : r.reports) totals.push_back(rep.total);
    const auto sm = smooth(totals);
    const double ratio = sm.back() / totals.front();

    // masked op-type accuracy on fresh masks
    int correct = 0, total = 0;
    std::map<int, int> freq;
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        const auto mg = mask_graph(r.samples[i].bundle->rtl_graph, r.pc.mask_ratio, 1000 + i);
        Tape t;
        const auto g = r.model->graph(t, mg.cone);
        std::vector<int> idx;
        for (NodeId id : mg.masked) idx.push_back(static_cast<int>(mg.cone.graph.index_of(id)) + 1);
        const Mat logits = t.value(r.model->mgm_head(t, nn::rows(t, g.vectors, idx)));
        for (std::size_t k = 0; k < mg.masked.size(); ++k) {
            Eigen::Index guess, truth;
            logits.row(static_cast<Eigen::Index>(k)).maxCoeff(&guess);
            mg.targets.at(mg.masked[k]).maxCoeff(&truth);
            correct += guess == truth;
            ++freq[static_cast<int>(truth)];
            ++total;
        }
    }
    int majority = 0;
    for (const auto& [op, n] : freq) majority = std::max(majority, n);
    const double acc = static_cast<double>(correct) / total, base = static_cast<double>(majority) / total;

    // intra vs inter class cosine of R_cls
    std::vector<Eigen::RowVectorXd> emb;
    for (const auto& s : r.samples) emb.push_back(embed(*r.model, s, r.pc.lambda));
    double intra = 0, inter = 0;
    int ni = 0, nx = 0;
    for (std::size_t i = 0; i < emb.size(); ++i)
        for (std::size_t j = i + 1; j < emb.size(); ++j) {
            const double c = cosine_similarity(emb[i], emb[j]);
            if (r.samples[i].cls == r.samples[j].cls) {
                intra += c;
                ++ni;
            } else {
                inter += c;
                ++nx;
            }
        }
    const double gap = intra / ni - inter / nx;
    const bool ok = r.samples.size() == 50 && ratio < 0.5 && acc > base && gap >= 0.1 && secs < 600;
    return {ok, std::to_string(r.samples.size()) + " sub-circuits, " + std::to_string(r.reports.size()) +
                    " steps, smoothed/initial=" + fmt(ratio) + " (< 0.5), masked-op acc=" + fmt(acc) +
                    " vs majority " + fmt(base) + ", intra-inter cosine=" + fmt(gap) + " (>= 0.1), " + fmt(secs) +
                    "s (< 600s)"};
}

Outcome retrieval_correctness() {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal;
    VectorStore s;
    std::vector<Eigen::RowVectorXd> rows;
    for (int i = 0; i < 300; ++i) {
        Eigen::RowVectorXd e(12);
        for (int c = 0; c < 12; ++c) e(c) = normal(rng);
        rows.push_back(e);
        QualityMetrics m;
        m.slack = i;
        char id[8];
        std::snprintf(id, sizeof id, "e%03d", i);
        s.index_add(id, e, m);
    }
    double self_err = 0.0;
    int self_miss = 0, oracle_miss = 0, scale_miss = 0;
    for (int i = 0; i < 300; i += 7) {
        const auto h = s.query_topk(rows[static_cast<std::size_t>(i)], 1);
        char id[8];
        std::snprintf(id, sizeof id, "e%03d", i);
        self_miss += h[0].entry.id != id;
        self_err = std::max(self_err, std::abs(h[0].similarity - 1.0));
    }
    for (int q = 0; q < 50; ++q) {
        Eigen::RowVectorXd v(12);
        for (int c = 0; c < 12; ++c) v(c) = normal(rng);
        std::vector<std::pair<double, int>> scan;
        for (int i = 0; i < 300; ++i)
            scan.emplace_back(-cosine_similarity(v, rows[static_cast<std::size_t>(i)].cast<float>().cast<double>()), i);
        std::sort(scan.begin(), scan.end());
        const auto hits = s.query_topk(v, 10);
        const auto scaled = s.query_topk(v * 37.5, 10);
        for (int k = 0; k < 10; ++k) {
            char id[8];
            std::snprintf(id, sizeof id, "e%03d", scan[static_cast<std::size_t>(k)].second);
            oracle_miss += hits[static_cast<std::size_t>(k)].entry.id != id;
            scale_miss += scaled[static_cast<std::size_t>(k)].entry.id != hits[static_cast<std::size_t>(k)].entry.id ||
                          std::abs(scaled[static_cast<std::size_t>(k)].similarity -
                                   hits[static_cast<std::size_t>(k)].similarity) > 1e-12;
        }
    }

    ToyRun& r = toy_run();
    VectorStore anchors;
    std::vector<Eigen::RowVectorXd> emb;
    for (const auto& smp : r.samples) emb.push_back(embed(*r.model, smp, r.pc.lambda));
    for (std::size_t i = 0; i < r.samples.size(); ++i)
        if (!r.samples[i].bundle->is_augmented)
            anchors.index_add(r.samples[i].bundle->id, emb[i], {}, r.samples[i].bundle->equivalence_class);
    int queries = 0, same = 0;
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        if (!r.samples[i].bundle->is_augmented) continue;
        ++queries;
        same += anchors.query_topk(emb[i], 1)[0].entry.design == r.samples[i].bundle->equivalence_class;
    }
    const double top1 = static_cast<double>(same) / queries;
    const bool ok = self_miss == 0 && self_err <= 1e-6 && oracle_miss == 0 && scale_miss == 0 && top1 >= 0.8;
    return {ok, "self-sim max error=" + fmt(self_err) + ", brute-force mismatches=" + std::to_string(oracle_miss) +
                    ", scaling mismatches=" + std::to_string(scale_miss) + ", same-class top-1=" + std::to_string(same) +
                    "/" + std::to_string(queries) + " (" + fmt(100 * top1) + "% >= 80%)"};
}

// ---------------------------------------------------------------- 7, 10

int run_stage(const std::string& cmd, const PipelineConfig& c, const CommandArgs& a = {}) {
    std::ostringstream out, err;
    const int rc = run(cmd, c, a, out, err);
    if (rc != 0) throw std::runtime_error(cmd + " failed: " + err.str());
    return rc;
}

void full_pipeline(const PipelineConfig& c) {
    for (const char* cmd : {"build-corpus", "pretrain", "index", "finetune", "evaluate"}) run_stage(cmd, c);
}

Outcome zero_shot_self() {
    const auto dir = (fs::temp_directory_path() / "cf_accept_zs").string();
    fs::remove_all(dir);
    PipelineConfig c = toy_config(dir);
    full_pipeline(c);
    CommandArgs a;
    a.include_eval = true;
    a.out = dir + "/store_all";
    run_stage("index", c, a);
    c.store = a.out;
    const Workspace ws(c);
    const auto rows = zero_shot_report(ws, VectorStore::load(c.store));
    double slack = -1;
    int n = 0;
    for (const auto& row : rows)
        if (row.task == "slack") {
            slack = row.mape;
            n = row.n;
        }
    fs::remove_all(dir);
    return {slack == 0.0 && n > 0, "eval sub-circuits=" + std::to_string(n) + ", zero-shot slack MAPE=" + fmt(slack)};
}

Outcome metric_oracles() {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.5, 20.0);
    std::normal_distribution<double> noise;
    double worst_r = 0, worst_m = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 2 + rng() % 100;
        std::vector<double> y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = (rng() % 2 ? 1.0 : -1.0) * u(rng);
            p[i] = y[i] + 2.0 * noise(rng);
        }
        long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, ape = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sx += y[i];
            sy += p[i];
            sxx += static_cast<long double>(y[i]) * y[i];
            syy += static_cast<long double>(p[i]) * p[i];
            sxy += static_cast<long double>(y[i]) * p[i];
            ape += std::fabs((p[i] - y[i]) / y[i]);
        }
        const long double N = static_cast<long double>(n);
        const double ref_r = static_cast<double>((N * sxy - sx * sy) / std::sqrt((N * sxx - sx * sx) * (N * syy - sy * sy)));
        const double ref_m = static_cast<double>(100.0L * ape / N);
        worst_r = std::max(worst_r, std::abs(pearson_r(y, p) - ref_r));
        worst_m = std::max(worst_m, std::abs(mape(y, p) - ref_m));
    }
    const double hand_m = mape({1, 2}, {1.1, 1.8});
    const double hand_r = pearson_r({1, 2, 3}, {1, 3, 2});
    const bool ok = worst_r < 1e-9 && worst_m < 1e-9 && std::abs(hand_m - 10.0) < 1e-12 && hand_r == 0.5;
    return {ok, "max |r-ref|=" + fmt(worst_r) + ", max |mape-ref|=" + fmt(worst_m) + ", mape hand=" + fmt(hand_m) +
                    "%, r hand=" + fmt(hand_r)};
}

Outcome invariants() {
    nn::Rng rng(5);
    nn::ParamStore ps;
    EncoderParams p;
    p.d_model = 16;
    p.heads = 2;
    p.vocab_size = 20;
    p.max_summary_len = 16;
    const GraphEncoder genc(ps, p, rng);
    const TextEncoder text(ps, "summary", 1, p.max_summary_len, p, rng, false);
    const FusionEncoder fuse(ps, p, rng);
    Tape t;
    Mat g = Mat::Random(4, 16), c = Mat::Random(6, 16);
    const EmbeddingSeq gs{t.constant(g), std::vector<bool>(4, true)};
    const EmbeddingSeq cs{t.constant(c), std::vector<bool>(6, true)};
    const Mat m1 = t.value(mixup(t, gs, cs, 1.0).vectors);
    const Mat m0 = t.value(mixup(t, gs, cs, 0.0).vectors);
    Mat g_pad = Mat::Zero(5, 16);
    g_pad.topRows(3) = g.bottomRows(3);
    const bool endpoints = m1 == g_pad && m0 == c.bottomRows(5);

    const auto s = text(t, {Vocab::kCls, 5, 6, 7, Vocab::kPad});
    Mat mix = Mat::Random(4, 16), junk = mix;
    junk.row(2).setConstant(1e8);
    const auto fa = fuse(t, s, MixupSeq{t.constant(mix), 0.5, {true, true, false, true}});
    const auto fb = fuse(t, s, MixupSeq{t.constant(junk), 0.5, {true, true, false, true}});
    const bool length = fa.length == 5 && t.value(fa.vectors).rows() == 5;
    const Mat va = t.value(fa.vectors);
    const Mat vb = t.value(fb.vectors);
    const double masked_diff = (va - vb).cwiseAbs().maxCoeff();

    const auto bundles = fixtures::toy_bundles(0, false);
    const Cone& cone = bundles.back().rtl_graph;
    Cone shuffled;
    std::map<NodeId, NodeId> remap;
    NodeId next = 1000;
    std::vector<NodeId> ids;
    for (const auto& n : cone.graph.nodes()) ids.push_back(n.id);
    std::reverse(ids.begin(), ids.end());
    for (NodeId id : ids) remap[id] = next--;
    for (const auto& n : cone.graph.nodes()) {
        Node copy = n;
        copy.id = remap.at(n.id);
        shuffled.graph.add_node(copy);
    }
    for (const auto& n : cone.graph.nodes()) {
        const auto ops = cone.graph.operands(n.id);
        for (std::size_t k = 0; k < ops.size(); ++k)
            shuffled.graph.add_edge(remap.at(ops[k]), remap.at(n.id), static_cast<int>(k));
    }
    shuffled.root = remap.at(cone.root);
    shuffled.roots = {shuffled.root};
    const Mat ga = t.value(genc(t, cone).vectors).row(0);
    const Mat gb = t.value(genc(t, shuffled).vectors).row(0);
    const double perm_diff = (ga - gb).cwiseAbs().maxCoeff();
    const bool ok = endpoints && length && masked_diff == 0.0 && perm_diff < 1e-9;
    return {ok, std::string("mixup endpoints bitwise=") + (endpoints ? "yes" : "no") +
                    ", fuse length m=" + (length ? "yes" : "no") + ", masked-row effect=" + fmt(masked_diff) +
                    ", permutation G_cls diff=" + fmt(perm_diff)};
}

Outcome determinism() {
    const auto base = fs::temp_directory_path() / "cf_accept_det";
    fs::remove_all(base);
    std::vector<std::string> dirs{(base / "a").string(), (base / "b").string()};
    for (const auto& d : dirs) full_pipeline(toy_config(d));
    const std::vector<std::string> files{"corpus.jsonl", "vocab.json", "checkpoint/manifest.json",
                                         "checkpoint/weights.bin", "store/store.json", "report.csv"};
    std::string differing;
    for (const auto& f : files)
        if (slurp(dirs[0] + "/" + f) != slurp(dirs[1] + "/" + f) || slurp(dirs[0] + "/" + f).empty())
            differing += f + " ";
    fs::remove_all(base);
    return {differing.empty(), differing.empty() ? "two seeded runs byte-identical: corpus, vocab, checkpoint "
                                                   "manifest and weights, store, evaluation CSV"
                                                 : "differs: " + differing};
}

}  // namespace

int main() {
    std::cout << std::unitbuf;
    report(1, "cone extraction matches reverse reachability", cone_extraction);
    report(2, "rewritten cones are exhaustively equivalent", augmentation_equivalence);
    report(3, "loss-value oracles", loss_oracles);
    report(4, "analytic vs finite-difference gradients", gradient_check);
    report(5, "toy pre-training converges", toy_convergence);
    report(6, "retrieval correctness", retrieval_correctness);
    report(7, "zero-shot with self-indexed evaluation set", zero_shot_self);
    report(8, "metric oracles", metric_oracles);
    report(9, "shape and identity invariants", invariants);
    report(10, "end-to-end determinism", determinism);
    std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
