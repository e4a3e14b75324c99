#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "circuitfusion/hdl.hpp"
#include "circuitfusion/pretrain.hpp"
#include "circuitfusion/quality.hpp"
#include "circuitfusion/retrieval.hpp"

namespace cfusion {

/// One ablation of the evaluation protocol: drop an input modality, drop a
/// pre-training task (requires re-training), or drop the retrieved metric.
struct Ablation {
    std::string drop_modality;  // graph | code | summary
    std::string drop_task;      // mgm | intra | cross_modal | msm | match | impl
    bool drop_retrieval = false;

    [[nodiscard]] std::string name() const;
    /// "none", "no_graph", "no_code", "no_summary", "no_retrieval", "no_<task>".
    static Ablation parse(const std::string& name);
    [[nodiscard]] std::set<std::string> dropped_modalities() const;
};

std::vector<std::string> all_ablations(bool include_tasks);

struct PipelineConfig {
    std::string designs = "data/toy";  // directory of .v files or a single file
    std::string work_dir = "runs/toy";
    // artifact paths; empty means "<work_dir>/<default name>"
    std::string corpus, vocab, checkpoint, store, labels, heads, report;
    std::vector<std::string> eval_designs;  // module names held out from index/finetune
    int variants = 9;
    int max_rewrite_steps = 3;
    std::string summarizer = "offline";  // offline | http
    bool output_cones = false;
    int vocab_min_count = 1;
    PretrainConfig pretrain;
    std::vector<std::string> tasks{"slack", "power", "area", "wns", "tns", "total_power", "total_area"};
    int retrieval_k = 1;
    /// Zero-shot circuit metrics: "retrieved" averages the design-level metric
    /// of each sub-circuit's neighbours; "derived" takes min/sum of retrieved
    /// sub-circuit metrics.
    std::string zero_shot_circuit = "retrieved";
    HeadConfig head;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    Ablation ablation;
    bool ablate_tasks = false;

    [[nodiscard]] std::string path(const std::string& artifact) const;
    [[nodiscard]] bool is_eval_design(const std::string& design) const;
    [[nodiscard]] nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const std::string& path);
};

struct DesignSource {
    std::string name;
    std::string path;
    hdl::RtlDesign ast;
    CdfGraph graph;
};

/// Every .v file under `config.designs`, sorted by path. Module names must be unique.
std::vector<DesignSource> load_designs(const PipelineConfig& config);

/// One bundle per register cone (plus output cones when configured), with the
/// code slice and the tech-mapped netlist cone.
std::vector<SubCircuitBundle> split_bundles(const std::vector<DesignSource>& designs, const PipelineConfig& config);
/// Appends `config.variants` rewritten copies of every non-augmented bundle.
std::vector<SubCircuitBundle> augment_bundles(std::vector<SubCircuitBundle> bundles, const PipelineConfig& config);
void summarize_bundles(std::vector<SubCircuitBundle>& bundles, const PipelineConfig& config);

/// Fused R_cls for every bundle, computed on `config.workers` threads.
std::vector<Eigen::RowVectorXd> embed_all(const CircuitFusionModel& model, const std::vector<Sample>& samples,
                                          const PipelineConfig& config, const std::set<std::string>& drop = {});

struct TaskData {
    Eigen::MatrixXd X;
    std::vector<double> y;
    std::vector<std::string> keys;  // bundle id or design name per row
};

/// Everything downstream stages need: corpus, model, embeddings of labelled anchors.
class Workspace {
public:
    Workspace(PipelineConfig config, const Ablation& ablation = {});

    [[nodiscard]] const PipelineConfig& config() const { return config_; }
    [[nodiscard]] const std::vector<SubCircuitBundle>& bundles() const { return bundles_; }
    [[nodiscard]] const CircuitFusionModel& model() const { return *model_; }

    /// Labelled anchors of train (eval = false) or eval designs.
    [[nodiscard]] std::vector<std::size_t> anchors(bool eval) const;
    [[nodiscard]] const Eigen::RowVectorXd& embedding(std::size_t bundle) const;
    /// In-memory store over anchors of the given split(s).
    [[nodiscard]] VectorStore build_store(bool include_train, bool include_eval) const;
    /// Feature matrix and labels for one task over one split. Retrieval skips
    /// the design being featurized.
    [[nodiscard]] TaskData task_data(const std::string& task, bool eval, const VectorStore& store) const;

private:
    PipelineConfig config_;
    Ablation ablation_;
    std::vector<SubCircuitBundle> bundles_;
    std::unique_ptr<CircuitFusionModel> model_;
    std::map<std::string, Eigen::VectorXd> design_counts_;
    std::map<std::size_t, Eigen::RowVectorXd> embeddings_;
};

/// Fits one head per task on the train split; returns {task: head json}.
nlohmann::json finetune_heads(const Workspace& ws, const VectorStore& store);
std::vector<EvalRow> evaluate_heads(const Workspace& ws, const VectorStore& store, const nlohmann::json& heads);
/// Top-k retrieval predictions on the eval split.
std::vector<EvalRow> zero_shot_report(const Workspace& ws, const VectorStore& store);

struct CommandArgs {
    std::string input;   // parse: Verilog file
    std::string out;     // optional output path override
    std::string id;      // retrieve: bundle id
    int k = 0;           // retrieve: overrides retrieval_k when > 0
    bool zero_shot = false;
    bool include_eval = false;  // index: also index the eval designs
};

inline const std::vector<std::string> kCommands{"parse",    "split",    "augment", "summarize",
                                                "build-corpus", "pretrain", "index", "retrieve",
                                                "predict",  "finetune", "evaluate", "ablate"};

/// Runs one pipeline stage. Returns 0 on success; on failure prints
/// "error [stage]: message" to `err` and returns nonzero.
int run(const std::string& command, const PipelineConfig& config, const CommandArgs& args, std::ostream& out,
        std::ostream& err);

}  // namespace cfusion
