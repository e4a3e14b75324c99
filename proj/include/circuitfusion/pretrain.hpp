#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "circuitfusion/corpus.hpp"
#include "circuitfusion/encoders.hpp"
#include "circuitfusion/fusion.hpp"
#include "circuitfusion/subcircuit.hpp"

namespace cfusion {

/// Every trainable component plus the pre-training heads, over one ParamStore.
class CircuitFusionModel {
public:
    CircuitFusionModel(const EncoderParams& params, std::uint64_t seed);
    CircuitFusionModel(const CircuitFusionModel&) = delete;
    CircuitFusionModel& operator=(const CircuitFusionModel&) = delete;

    EncoderParams config;
    nn::ParamStore params;
    GraphEncoder graph;
    TextEncoder summary;
    TextEncoder code;
    FusionEncoder fusion;
    NetlistEncoder netlist;
    nn::Mlp mgm_head;      // node embedding -> op-type vector
    nn::Linear msm_head;   // fused token -> vocabulary logits
    nn::Linear match_head; // R_cls -> {unmatched, matched}
    nn::Mlp gate_head;     // netlist node -> gate-type vector

    /// <dir>/weights.bin, <dir>/manifest.json and <dir>/config.json.
    void save(const std::string& dir) const;
    static std::unique_ptr<CircuitFusionModel> load(const std::string& dir);
};

/// Graph masked for node modeling; masked nodes carry the MASK op.
struct MaskedGraph {
    Cone cone;
    std::vector<NodeId> masked;             // ascending
    std::map<NodeId, Eigen::VectorXd> targets;  // one-hot over kOpCount
};

/// round(ratio * n) nodes, at least 1, chosen deterministically from seed.
MaskedGraph mask_graph(const Cone& cone, double ratio, std::uint64_t seed);
int masked_count(int n, double ratio);

/// Mean squared error over masked nodes and vector components.
double mgm_loss(const nn::Mat& pred, const nn::Mat& targets);

/// -log(exp(s_p/tau) / (exp(s_p/tau) + sum_n exp(s_n/tau))) with cosine similarities.
double info_nce(const Eigen::RowVectorXd& anchor, const Eigen::RowVectorXd& positive,
                const std::vector<Eigen::RowVectorXd>& negatives, double tau);

/// Rows of a batch with their equivalence classes; row i's positive is the
/// next row with the same class, negatives are all rows of other classes.
struct ContrastiveBatch {
    nn::Mat embeddings;
    std::vector<int> classes;
    double tau = 0.3;
};

/// Mean InfoNCE over every anchor of one modality.
double intra_modal_loss(const ContrastiveBatch& batch);
/// Mean over the batch of info_nce(S->G) + info_nce(S->C), positives at the same row.
double cross_modal_loss(const nn::Mat& s_cls, const nn::Mat& g_cls, const nn::Mat& c_cls,
                        const std::vector<int>& classes, double tau);
/// Mean cross-entropy at masked positions; 0 when there are none.
double msm_loss(const nn::Mat& logits, const std::vector<int>& targets);
/// Cross-entropy of a 2-way head; labels 1 = matched.
double match_loss(const nn::Mat& logits, const std::vector<int>& labels);
/// CL(R->N) + CL(N->R) with positives at the same row.
double impl_align_loss(const nn::Mat& r_cls, const nn::Mat& n_pool, const std::vector<int>& classes, double tau);

/// Tape versions used for training.
nn::Var info_nce_rows(nn::Tape& t, nn::Var anchors, nn::Var candidates, const std::vector<int>& positive_of,
                      const std::vector<int>& classes, double tau);
/// Positive of row i: the next row (cyclically) with the same class.
std::vector<int> class_partners(const std::vector<int>& classes);

struct LossWeights {
    double mgm = 1.0;
    double intra = 1.0;  // L_CLG and L_CLS
    double cross_modal = 0.2;
    double msm = 1.0;
    double match = 1.0;
    double impl = 0.2;
    [[nodiscard]] nlohmann::json to_json() const;
    static LossWeights from_json(const nlohmann::json& j);
};

struct LossReport {
    double mgm = 0, clg = 0, cls = 0, clmodal = 0, msm = 0, match = 0, climpl = 0, total = 0;
    [[nodiscard]] bool finite() const;
    [[nodiscard]] std::string str() const;
};

/// Weighted sum of the seven task losses.
double total_loss(const LossReport& r, const LossWeights& w);

struct PretrainConfig {
    EncoderParams encoder;
    int steps = 200;
    int classes_per_batch = 8;  // two samples per class
    double lr = 1e-4;
    double min_lr = 1e-6;
    int warmup_iters = 1000;
    double weight_decay = 0.01;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double clip_norm = 1.0;  // 0 disables
    double tau = 0.3;
    double mask_ratio = 0.3;
    double summary_mask_ratio = 0.15;
    double lambda = 0.5;
    bool sample_lambda = false;
    double mixup_alpha = 1.0;
    LossWeights weights;
    bool freeze_netlist = true;
    int netlist_steps = 100;
    std::set<std::string> disabled_tasks;  // mgm, intra, cross_modal, msm, match, impl
    std::uint64_t seed = 0;
    bool include_output_cones = false;
    std::string metrics_csv;

    [[nodiscard]] nlohmann::json to_json() const;
    static PretrainConfig from_json(const nlohmann::json& j);
};

double learning_rate(const PretrainConfig& c, int step);

class AdamW {
public:
    explicit AdamW(const PretrainConfig& c) : c_(c) {}
    /// One update of every non-frozen parameter; returns the pre-clip gradient norm.
    double step(nn::ParamStore& ps, double lr);
    [[nodiscard]] int iterations() const { return t_; }

private:
    PretrainConfig c_;
    int t_ = 0;
};

/// Tokenized view of a bundle.
struct Sample {
    const SubCircuitBundle* bundle = nullptr;
    int cls = 0;
    std::vector<int> summary;
    std::vector<int> code;
};

std::vector<Sample> prepare_samples(const std::vector<SubCircuitBundle>& bundles, const Vocab& vocab,
                                    const EncoderParams& p, bool include_output_cones = false);

/// Everything random about one batch, fixed up front so a batch can be re-evaluated.
struct BatchPlan {
    std::vector<int> samples;       // indices into the sample list
    std::vector<int> classes;       // per batch row
    std::vector<int> mismatch;      // batch row whose mixup pairs with row i's summary as a negative
    std::vector<MaskedGraph> masked_graphs;
    std::vector<std::vector<int>> masked_summaries;
    std::vector<std::vector<int>> msm_positions;
    std::vector<std::vector<int>> msm_targets;
    double lambda = 0.5;
};

/// K classes x 2 samples drawn from classes that have at least two members.
BatchPlan plan_batch(const std::vector<Sample>& samples, const PretrainConfig& c, nn::Rng& rng);
/// Plan over an explicit list of sample indices (classes need >= 2 rows each).
BatchPlan plan_fixed(const std::vector<Sample>& samples, const std::vector<int>& rows, const PretrainConfig& c,
                     nn::Rng& rng);

struct LossVars {
    nn::Var mgm, clg, cls, clmodal, msm, match, climpl, total;
    nn::Var r_cls;  // fused CLS rows of the matched pass
};

LossVars forward_losses(nn::Tape& t, const CircuitFusionModel& m, const std::vector<Sample>& samples,
                        const BatchPlan& plan, const PretrainConfig& c, nn::Rng* dropout_rng = nullptr);
LossReport read_report(const nn::Tape& t, const LossVars& v);

/// Masked gate modeling plus pooled-embedding contrast between Boolean-equivalent
/// netlist cones; returns the per-step losses.
std::vector<double> pretrain_netlist(CircuitFusionModel& m, const std::vector<Sample>& samples,
                                     const PretrainConfig& c);

/// Netlist pre-training (when any sample has a netlist), then joint training.
/// Throws Diverged on a non-finite loss.
std::vector<LossReport> run_pretraining(CircuitFusionModel& m, const std::vector<Sample>& samples,
                                        const PretrainConfig& c);

/// Exponential moving average used to judge convergence.
std::vector<double> smooth(const std::vector<double>& xs, double alpha = 0.1);

/// Fused R_cls of one sample (no gradients kept). Ablation flags drop a
/// modality: "graph", "code" or "summary".
Eigen::RowVectorXd embed(const CircuitFusionModel& m, const Sample& s, double lambda = 0.5,
                         const std::set<std::string>& drop = {});

}  // namespace cfusion
