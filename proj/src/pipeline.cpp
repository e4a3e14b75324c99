#include "circuitfusion/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <mutex>
#include <thread>

#include "circuitfusion/augment.hpp"
#include "circuitfusion/corpus.hpp"
#include "circuitfusion/labels.hpp"
#include "circuitfusion/techmap.hpp"

namespace fs = std::filesystem;

namespace cfusion {

// ---------------------------------------------------------------- config

namespace {

const std::set<std::string> kModalities{"graph", "code", "summary"};
const std::set<std::string> kTasks{"mgm", "intra", "cross_modal", "msm", "match", "impl"};

}  // namespace

std::string Ablation::name() const {
    if (!drop_modality.empty()) return "no_" + drop_modality;
    if (!drop_task.empty()) return "no_" + drop_task;
    if (drop_retrieval) return "no_retrieval";
    return "none";
}

Ablation Ablation::parse(const std::string& name) {
    Ablation a;
    if (name.empty() || name == "none") return a;
    if (name.rfind("no_", 0) != 0) throw std::invalid_argument("unknown ablation: " + name);
    const std::string what = name.substr(3);
    if (what == "retrieval") a.drop_retrieval = true;
    else if (kModalities.contains(what)) a.drop_modality = what;
    else if (kTasks.contains(what)) a.drop_task = what;
    else throw std::invalid_argument("unknown ablation: " + name);
    return a;
}

std::set<std::string> Ablation::dropped_modalities() const {
    if (drop_modality.empty()) return {};
    return {drop_modality};
}

std::vector<std::string> all_ablations(bool include_tasks) {
    std::vector<std::string> out{"none", "no_graph", "no_code", "no_summary", "no_retrieval"};
    if (include_tasks)
        for (const char* t : {"mgm", "intra", "cross_modal", "msm", "match", "impl"}) out.push_back(std::string("no_") + t);
    return out;
}

std::string PipelineConfig::path(const std::string& artifact) const {
    const std::map<std::string, const std::string*> explicit_paths{
        {"corpus", &corpus}, {"vocab", &vocab},   {"checkpoint", &checkpoint}, {"store", &store},
        {"labels", &labels}, {"heads", &heads}, {"report", &report}};
    const std::map<std::string, std::string> defaults{
        {"corpus", "corpus.jsonl"}, {"vocab", "vocab.json"},   {"checkpoint", "checkpoint"},
        {"store", "store"},         {"labels", "labels.json"}, {"heads", "heads.json"},
        {"report", "report.csv"}};
    const auto it = explicit_paths.find(artifact);
    if (it == explicit_paths.end()) throw std::invalid_argument("unknown artifact: " + artifact);
    if (!it->second->empty()) return *it->second;
    return (fs::path(work_dir) / defaults.at(artifact)).string();
}

bool PipelineConfig::is_eval_design(const std::string& design) const {
    return std::find(eval_designs.begin(), eval_designs.end(), design) != eval_designs.end();
}

nlohmann::json PipelineConfig::to_json() const {
    return {{"designs", designs},
            {"work_dir", work_dir},
            {"paths",
             {{"corpus", corpus},
              {"vocab", vocab},
              {"checkpoint", checkpoint},
              {"store", store},
              {"labels", labels},
              {"heads", heads},
              {"report", report}}},
            {"eval_designs", eval_designs},
            {"variants", variants},
            {"max_rewrite_steps", max_rewrite_steps},
            {"summarizer", summarizer},
            {"output_cones", output_cones},
            {"vocab_min_count", vocab_min_count},
            {"pretrain", pretrain.to_json()},
            {"tasks", tasks},
            {"retrieval_k", retrieval_k},
            {"zero_shot_circuit", zero_shot_circuit},
            {"head",
             {{"kind", head_kind_name(head.kind)},
              {"hidden", head.hidden},
              {"epochs", head.epochs},
              {"lr", head.lr},
              {"ridge", head.ridge},
              {"trees", head.trees},
              {"depth", head.depth},
              {"shrinkage", head.shrinkage}}},
            {"seed", seed},
            {"workers", workers},
            {"ablate", ablation.name()},
            {"ablate_tasks", ablate_tasks}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.designs = j.value("designs", c.designs);
    c.work_dir = j.value("work_dir", c.work_dir);
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        c.corpus = p.value("corpus", "");
        c.vocab = p.value("vocab", "");
        c.checkpoint = p.value("checkpoint", "");
        c.store = p.value("store", "");
        c.labels = p.value("labels", "");
        c.heads = p.value("heads", "");
        c.report = p.value("report", "");
    }
    if (j.contains("eval_designs")) c.eval_designs = j.at("eval_designs").get<std::vector<std::string>>();
    c.variants = j.value("variants", c.variants);
    c.max_rewrite_steps = j.value("max_rewrite_steps", c.max_rewrite_steps);
    c.summarizer = j.value("summarizer", c.summarizer);
    if (c.summarizer != "offline" && c.summarizer != "http")
        throw std::invalid_argument("summarizer must be offline or http");
    c.output_cones = j.value("output_cones", c.output_cones);
    c.vocab_min_count = j.value("vocab_min_count", c.vocab_min_count);
    if (j.contains("pretrain")) c.pretrain = PretrainConfig::from_json(j.at("pretrain"));
    if (j.contains("tasks")) c.tasks = j.at("tasks").get<std::vector<std::string>>();
    for (const auto& t : c.tasks) (void)retrieval_metric(t);
    c.retrieval_k = j.value("retrieval_k", c.retrieval_k);
    c.zero_shot_circuit = j.value("zero_shot_circuit", c.zero_shot_circuit);
    if (c.zero_shot_circuit != "retrieved" && c.zero_shot_circuit != "derived")
        throw std::invalid_argument("zero_shot_circuit must be retrieved or derived");
    if (j.contains("head")) {
        const auto& h = j.at("head");
        c.head.kind = head_kind_from_name(h.value("kind", std::string("perceptron")));
        c.head.hidden = h.value("hidden", c.head.hidden);
        c.head.epochs = h.value("epochs", c.head.epochs);
        c.head.lr = h.value("lr", c.head.lr);
        c.head.ridge = h.value("ridge", c.head.ridge);
        c.head.trees = h.value("trees", c.head.trees);
        c.head.depth = h.value("depth", c.head.depth);
        c.head.shrinkage = h.value("shrinkage", c.head.shrinkage);
    }
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.ablation = Ablation::parse(j.value("ablate", std::string("none")));
    c.ablate_tasks = j.value("ablate_tasks", c.ablate_tasks);
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config", "cannot read " + path);
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("config", path + ": " + e.what());
    }
}

// ---------------------------------------------------------------- preprocessing

std::vector<DesignSource> load_designs(const PipelineConfig& config) {
    std::vector<std::string> files;
    if (fs::is_directory(config.designs)) {
        for (const auto& e : fs::directory_iterator(config.designs))
            if (e.path().extension() == ".v") files.push_back(e.path().string());
    } else if (fs::exists(config.designs)) {
        files.push_back(config.designs);
    } else {
        throw IoError("parse", "no such design path: " + config.designs);
    }
    std::sort(files.begin(), files.end());
    std::vector<DesignSource> out;
    std::set<std::string> names;
    for (const auto& f : files) {
        std::ifstream in(f);
        std::stringstream text;
        text << in.rdbuf();
        DesignSource d;
        d.path = f;
        d.ast = hdl::parse_verilog(text.str());
        d.graph = hdl::elaborate(d.ast);
        d.name = d.ast.name;
        if (!names.insert(d.name).second) throw IoError("parse", "duplicate module name " + d.name + " in " + f);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<SubCircuitBundle> split_bundles(const std::vector<DesignSource>& designs, const PipelineConfig& config) {
    std::vector<SubCircuitBundle> out;
    for (const auto& d : designs) {
        const CdfGraph netlist = techmap(d.graph);
        SplitOptions opt;
        opt.output_cones = config.output_cones;
        opt.workers = std::max(1u, config.workers);
        for (const Cone& cone : split_design(d.graph, opt)) {
            SubCircuitBundle b;
            b.design = d.name;
            b.reg = cone.root_node().name;
            b.id = bundle_id(b.design, b.reg);
            b.rtl_graph = cone;
            std::set<NodeId> ids{cone.root};
            ids.insert(cone.members.begin(), cone.members.end());
            b.code = cone.is_output_cone ? cone_to_verilog(cone, d.name + "_" + b.reg) : hdl::slice_code(d.ast, ids);
            if (!cone.is_output_cone) b.netlist_graph = align_netlist(cone, netlist);
            b.equivalence_class = b.id;
            out.push_back(std::move(b));
        }
    }
    return out;
}

std::vector<SubCircuitBundle> augment_bundles(std::vector<SubCircuitBundle> bundles, const PipelineConfig& config) {
    if (config.variants <= 0) return bundles;
    std::vector<SubCircuitBundle> out;
    for (auto& b : bundles) {
        if (b.is_augmented) continue;
        const std::uint64_t seed = config.seed ^ std::stoull(stable_hash(b.id), nullptr, 16);
        const auto variants = apply_rewrites(b.rtl_graph, config.variants, seed, config.max_rewrite_steps);
        out.push_back(b);
        for (std::size_t k = 0; k < variants.size(); ++k) {
            SubCircuitBundle v;
            v.design = b.design;
            v.reg = b.reg;
            v.id = bundle_id(b.design, b.reg, static_cast<int>(k + 1));
            v.rtl_graph = variants[k].cone;
            v.code = cone_to_verilog(v.rtl_graph, b.design + "_" + b.reg);
            if (b.netlist_graph) v.netlist_graph = align_netlist(v.rtl_graph, techmap(v.rtl_graph.graph));
            v.is_augmented = true;
            v.equivalence_class = b.equivalence_class;
            out.push_back(std::move(v));
        }
    }
    return out;
}

void summarize_bundles(std::vector<SubCircuitBundle>& bundles, const PipelineConfig& config) {
    if (config.summarizer == "offline") {
        for (auto& b : bundles) b.summary = offline_summary(b.rtl_graph);
        return;
    }
    const auto sc = SummarizerConfig::from_env();
    if (!sc) throw IoError("summarize", "summarizer is http but SUMMARIZER_URL is not set");
    const SummarizerClient client(*sc);
    std::vector<SummaryRequest> reqs;
    for (const auto& b : bundles) reqs.push_back({b.code, "functionality_v1", kSummaryMaxTokens});
    const auto texts = client.summarize_all(reqs);
    for (std::size_t i = 0; i < bundles.size(); ++i) bundles[i].summary = texts[i];
}

// ---------------------------------------------------------------- embeddings

std::vector<Eigen::RowVectorXd> embed_all(const CircuitFusionModel& model, const std::vector<Sample>& samples,
                                          const PipelineConfig& config, const std::set<std::string>& drop) {
    std::vector<Eigen::RowVectorXd> out(samples.size());
    const double lambda = config.pretrain.lambda;
    const unsigned workers = std::max(1u, std::min<unsigned>(config.workers, static_cast<unsigned>(samples.size())));
    if (workers <= 1) {
        for (std::size_t i = 0; i < samples.size(); ++i) out[i] = embed(model, samples[i], lambda, drop);
        return out;
    }
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex mu;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < samples.size(); i += workers) out[i] = embed(model, samples[i], lambda, drop);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

// ---------------------------------------------------------------- workspace

Workspace::Workspace(PipelineConfig config, const Ablation& ablation)
    : config_(std::move(config)), ablation_(ablation) {
    bundles_ = read_corpus(config_.path("corpus"));
    const Vocab vocab = Vocab::load(config_.path("vocab"));
    model_ = CircuitFusionModel::load(config_.path("checkpoint"));
    for (const auto& d : load_designs(config_)) design_counts_[d.name] = graph_counts(d.graph);

    std::vector<std::size_t> wanted;
    for (std::size_t i = 0; i < bundles_.size(); ++i)
        if (!bundles_[i].is_augmented && bundles_[i].labels && !bundles_[i].rtl_graph.is_output_cone) wanted.push_back(i);
    std::vector<SubCircuitBundle> subset;
    for (std::size_t i : wanted) subset.push_back(bundles_[i]);
    const auto samples = prepare_samples(subset, vocab, model_->config, true);
    const auto vecs = embed_all(*model_, samples, config_, ablation_.dropped_modalities());
    for (std::size_t k = 0; k < wanted.size(); ++k) embeddings_[wanted[k]] = vecs[k];
}

std::vector<std::size_t> Workspace::anchors(bool eval) const {
    std::vector<std::size_t> out;
    for (const auto& [i, e] : embeddings_)
        if (config_.is_eval_design(bundles_[i].design) == eval) out.push_back(i);
    return out;
}

const Eigen::RowVectorXd& Workspace::embedding(std::size_t bundle) const { return embeddings_.at(bundle); }

VectorStore Workspace::build_store(bool include_train, bool include_eval) const {
    VectorStore store;
    for (const auto& [i, e] : embeddings_) {
        const bool eval = config_.is_eval_design(bundles_[i].design);
        if ((eval && include_eval) || (!eval && include_train)) {
            const auto& b = bundles_[i];
            store.index_add(b.id, e, *b.labels, b.design, b.reg);
        }
    }
    return store;
}

TaskData Workspace::task_data(const std::string& task, bool eval, const VectorStore& store) const {
    TaskData out;
    std::vector<Eigen::VectorXd> rows;
    std::map<std::string, std::vector<Eigen::VectorXd>> per_design;
    std::map<std::string, double> design_label;
    for (std::size_t i : anchors(eval)) {
        const auto& b = bundles_[i];
        FeatureOptions opt;
        opt.retrieval = !ablation_.drop_retrieval;
        opt.k = config_.retrieval_k;
        opt.exclude_design = b.design;
        const auto f = build_features(b, embeddings_.at(i), opt.retrieval ? &store : nullptr, task, opt);
        const auto label = b.labels->get(task);
        if (!label) throw MetricMissing(task + " label on " + b.id);
        if (is_circuit_task(task)) {
            per_design[b.design].push_back(f);
            design_label[b.design] = *label;
        } else {
            rows.push_back(f);
            out.y.push_back(*label);
            out.keys.push_back(b.id);
        }
    }
    for (const auto& [design, feats] : per_design) {
        rows.push_back(aggregate_circuit(feats, design_counts_.at(design)));
        out.y.push_back(design_label.at(design));
        out.keys.push_back(design);
    }
    if (rows.empty()) throw EmptyDesign();
    out.X.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) out.X.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    return out;
}

nlohmann::json finetune_heads(const Workspace& ws, const VectorStore& store) {
    nlohmann::json heads = nlohmann::json::object();
    for (const auto& task : ws.config().tasks) {
        const TaskData d = ws.task_data(task, false, store);
        HeadConfig hc = ws.config().head;
        hc.seed = ws.config().seed;
        const Eigen::Map<const Eigen::VectorXd> y(d.y.data(), static_cast<Eigen::Index>(d.y.size()));
        heads[task] = fit_head(d.X, y, hc).to_json();
    }
    return heads;
}

std::vector<EvalRow> evaluate_heads(const Workspace& ws, const VectorStore& store, const nlohmann::json& heads) {
    std::vector<EvalRow> rows;
    for (const auto& task : ws.config().tasks) {
        if (!heads.contains(task)) throw MetricMissing("no fitted head for " + task);
        const TaskData d = ws.task_data(task, true, store);
        const auto head = RegressionHead::from_json(heads.at(task));
        const Eigen::VectorXd p = head.predict_all(d.X);
        rows.push_back(evaluate_task(task, d.y, std::vector<double>(p.data(), p.data() + p.size())));
    }
    return rows;
}

std::vector<EvalRow> zero_shot_report(const Workspace& ws, const VectorStore& store) {
    std::vector<EvalRow> rows;
    const auto& b = ws.bundles();
    for (const auto& task : ws.config().tasks) {
        std::vector<double> labels, preds;
        if (!is_circuit_task(task)) {
            for (std::size_t i : ws.anchors(true)) {
                labels.push_back(*b[i].labels->get(task));
                preds.push_back(zero_shot_predict(store, ws.embedding(i), task, ws.config().retrieval_k));
            }
        } else {
            std::map<std::string, std::vector<double>> per_design;
            std::map<std::string, double> label;
            const bool derived = ws.config().zero_shot_circuit == "derived";
            const std::string metric = derived ? retrieval_metric(task) : task;
            for (std::size_t i : ws.anchors(true)) {
                per_design[b[i].design].push_back(zero_shot_predict(store, ws.embedding(i), metric, ws.config().retrieval_k));
                const auto l = b[i].labels->get(task);
                if (!l) throw MetricMissing(task + " label on " + b[i].design);
                label[b[i].design] = *l;
            }
            for (const auto& [design, vals] : per_design) {
                labels.push_back(label.at(design));
                double p = 0.0;
                if (!derived) {
                    for (double v : vals) p += v;
                    p /= static_cast<double>(vals.size());
                } else if (task == "wns") {
                    p = wns_from_slacks(vals);
                } else if (task == "tns") {
                    p = tns_from_slacks(vals);
                } else {
                    for (double v : vals) p += v;
                }
                preds.push_back(p);
            }
        }
        if (labels.empty()) throw EmptyDesign();
        rows.push_back(evaluate_task(task, labels, preds));
    }
    return rows;
}

// ---------------------------------------------------------------- commands

namespace {

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

Vocab corpus_vocab(const std::vector<SubCircuitBundle>& bundles, int min_count) {
    std::vector<std::string> texts;
    for (const auto& b : bundles) {
        texts.push_back(b.code);
        texts.push_back(b.summary);
    }
    return build_vocab(texts, min_count);
}

void write_text(const std::string& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path);
    if (!out) throw IoError("write", "cannot write " + path);
    out << text;
}

void train_checkpoint(const PipelineConfig& config, const std::string& dir, const std::set<std::string>& disabled,
                      std::ostream& out) {
    const auto bundles = read_corpus(config.path("corpus"));
    const Vocab vocab = Vocab::load(config.path("vocab"));
    PretrainConfig pc = config.pretrain;
    pc.seed = config.seed;
    pc.encoder.vocab_size = vocab.size();
    pc.disabled_tasks.insert(disabled.begin(), disabled.end());
    pc.include_output_cones = config.output_cones;
    fs::create_directories(dir);
    pc.metrics_csv = (fs::path(dir) / "metrics.csv").string();
    CircuitFusionModel model(pc.encoder, config.seed);
    const auto samples = prepare_samples(bundles, vocab, pc.encoder, pc.include_output_cones);
    const auto reports = run_pretraining(model, samples, pc);
    model.save(dir);
    if (!reports.empty())
        out << "pretrain: " << reports.size() << " steps, first " << reports.front().str() << "\n          last  "
            << reports.back().str() << '\n';
}

int dispatch(const std::string& command, const PipelineConfig& config, const CommandArgs& args, std::ostream& out) {
    if (command == "parse") {
        if (args.input.empty()) throw IoError("parse", "parse needs an input file");
        PipelineConfig one = config;
        one.designs = args.input;
        const auto designs = load_designs(one);
        const std::string text = designs.front().graph.to_json().dump(2) + "\n";
        if (args.out.empty()) out << text;
        else write_text(args.out, text);
        return 0;
    }
    if (command == "split" || command == "augment" || command == "summarize" || command == "build-corpus") {
        const std::string path = args.out.empty() ? config.path("corpus") : args.out;
        std::vector<SubCircuitBundle> bundles;
        if (command == "split" || command == "build-corpus") {
            bundles = split_bundles(load_designs(config), config);
        } else {
            bundles = read_corpus(config.path("corpus"));
        }
        if (command == "augment" || command == "build-corpus") bundles = augment_bundles(std::move(bundles), config);
        if (command == "summarize" || command == "build-corpus") summarize_bundles(bundles, config);
        if (command == "build-corpus") {
            if (fs::exists(config.path("labels"))) {
                const int n = apply_labels(bundles, read_labels(config.path("labels")));
                out << "labels: " << n << " sub-circuits labelled\n";
            }
            const Vocab vocab = corpus_vocab(bundles, config.vocab_min_count);
            ensure_parent(config.path("vocab"));
            vocab.save(config.path("vocab"));
            out << "vocab: " << vocab.size() << " tokens\n";
        }
        ensure_parent(path);
        write_corpus(path, bundles);
        out << command << ": " << bundles.size() << " bundles -> " << path << '\n';
        return 0;
    }
    if (command == "pretrain") {
        std::set<std::string> disabled;
        if (!config.ablation.drop_task.empty()) disabled.insert(config.ablation.drop_task);
        train_checkpoint(config, args.out.empty() ? config.path("checkpoint") : args.out, disabled, out);
        return 0;
    }
    if (command == "index") {
        const Workspace ws(config, config.ablation);
        const VectorStore store = ws.build_store(true, args.include_eval);
        const std::string dir = args.out.empty() ? config.path("store") : args.out;
        store.save(dir);
        out << "index: " << store.size() << " entries -> " << dir << '\n';
        return 0;
    }
    if (command == "retrieve") {
        if (args.id.empty()) throw IoError("retrieve", "retrieve needs --id");
        const VectorStore store = VectorStore::load(config.path("store"));
        const auto bundles = read_corpus(config.path("corpus"));
        const auto it = std::find_if(bundles.begin(), bundles.end(), [&](const auto& b) { return b.id == args.id; });
        if (it == bundles.end()) throw IoError("retrieve", "no bundle with id " + args.id);
        const auto model = CircuitFusionModel::load(config.path("checkpoint"));
        const Vocab vocab = Vocab::load(config.path("vocab"));
        const std::vector<SubCircuitBundle> one{*it};
        const auto samples = prepare_samples(one, vocab, model->config, true);
        const auto q = embed(*model, samples.front(), config.pretrain.lambda, config.ablation.dropped_modalities());
        out << "rank,id,design,register,similarity\n";
        int rank = 1;
        for (const auto& h : store.query_topk(q, args.k > 0 ? args.k : std::max(1, config.retrieval_k)))
            out << rank++ << ',' << h.entry.id << ',' << h.entry.design << ',' << h.entry.reg << ',' << h.similarity
                << '\n';
        return 0;
    }
    if (command == "predict") {
        if (!args.zero_shot) throw IoError("predict", "only --zero-shot prediction is a standalone command; use finetune/evaluate");
        const Workspace ws(config, config.ablation);
        const VectorStore store = VectorStore::load(config.path("store"));
        const auto rows = zero_shot_report(ws, store);
        const std::string path = args.out.empty() ? config.path("report") : args.out;
        ensure_parent(path);
        write_report(path, rows);
        out << report_csv(rows);
        return 0;
    }
    if (command == "finetune") {
        const Workspace ws(config, config.ablation);
        const VectorStore store = ws.build_store(true, false);
        const auto heads = finetune_heads(ws, store);
        const std::string path = args.out.empty() ? config.path("heads") : args.out;
        write_text(path, heads.dump(1) + "\n");
        out << "finetune: " << heads.size() << " heads -> " << path << '\n';
        return 0;
    }
    if (command == "evaluate") {
        const Workspace ws(config, config.ablation);
        const VectorStore store = ws.build_store(true, false);
        std::ifstream in(config.path("heads"));
        if (!in) throw IoError("evaluate", "cannot read " + config.path("heads"));
        const auto rows = evaluate_heads(ws, store, nlohmann::json::parse(in));
        const std::string path = args.out.empty() ? config.path("report") : args.out;
        ensure_parent(path);
        write_report(path, rows);
        out << report_csv(rows);
        return 0;
    }
    if (command == "ablate") {
        std::vector<std::string> names;
        if (config.ablation.name() != "none") names = {"none", config.ablation.name()};
        else names = all_ablations(config.ablate_tasks);
        std::ostringstream csv;
        csv << "ablation,task,R,MAPE,n\n";
        for (const auto& name : names) {
            const Ablation a = Ablation::parse(name);
            PipelineConfig c = config;
            if (!a.drop_task.empty()) {
                c.checkpoint = config.path("checkpoint") + "_" + name;
                train_checkpoint(config, c.checkpoint, {a.drop_task}, out);
            }
            const Workspace ws(c, a);
            const VectorStore store = ws.build_store(true, false);
            const auto rows = evaluate_heads(ws, store, finetune_heads(ws, store));
            const std::string body = report_csv(rows);
            std::istringstream lines(body);
            std::string line;
            std::getline(lines, line);  // header
            while (std::getline(lines, line)) csv << name << ',' << line << '\n';
        }
        const std::string path = args.out.empty() ? (fs::path(config.work_dir) / "ablation.csv").string() : args.out;
        write_text(path, csv.str());
        out << csv.str();
        return 0;
    }
    throw std::invalid_argument("unknown command: " + command);
}

}  // namespace

int run(const std::string& command, const PipelineConfig& config, const CommandArgs& args, std::ostream& out,
        std::ostream& err) {
    try {
        return dispatch(command, config, args, out);
    } catch (const Error& e) {
        err << "error [" << e.stage() << "]: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error [" << command << "]: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace cfusion
