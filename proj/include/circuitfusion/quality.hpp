#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "circuitfusion/retrieval.hpp"
#include "circuitfusion/subcircuit.hpp"

namespace cfusion {

/// Sub-circuit tasks: slack, power, area. Circuit tasks: wns, tns,
/// total_power, total_area.
bool is_circuit_task(const std::string& task);
/// Sub-circuit metric retrieved as the reference value for a task.
std::string retrieval_metric(const std::string& task);

/// Per-op counts (kOpCount), register count, total bit-width.
Eigen::VectorXd graph_counts(const CdfGraph& g);
inline constexpr int kCountFeatures = kOpCount + 2;

struct FeatureOptions {
    bool retrieval = true;  // false zero-fills the metric slot
    int k = 1;
    std::string exclude_design;  // skip store entries of this design when retrieving
};

/// embedding (d) ++ retrieved metric (1) ++ cone counts (kOpCount + 2).
Eigen::VectorXd build_features(const SubCircuitBundle& bundle, const Eigen::RowVectorXd& embedding,
                               const VectorStore* store, const std::string& task, const FeatureOptions& opt = {});

/// Element-wise sum of the sub-circuit features followed by the design counts.
Eigen::VectorXd aggregate_circuit(const std::vector<Eigen::VectorXd>& features, const Eigen::VectorXd& design_counts);

enum class HeadKind { Perceptron, TreeEnsemble };
HeadKind head_kind_from_name(const std::string& name);
std::string head_kind_name(HeadKind kind);

struct HeadConfig {
    HeadKind kind = HeadKind::Perceptron;
    int hidden = 32;
    int epochs = 1500;
    double lr = 3e-3;
    double ridge = 1e-3;
    int trees = 150;
    int depth = 3;
    double shrinkage = 0.1;
    std::uint64_t seed = 0;
};

/// Regression head over standardized features. The perceptron is
/// out = tanh(z W1 + b1) w2 + z beta + b with beta started at the ridge fit.
class RegressionHead {
public:
    [[nodiscard]] double predict(const Eigen::VectorXd& x) const;
    [[nodiscard]] Eigen::VectorXd predict_all(const Eigen::MatrixXd& X) const;
    [[nodiscard]] bool constant() const { return constant_.has_value(); }
    [[nodiscard]] nlohmann::json to_json() const;
    static RegressionHead from_json(const nlohmann::json& j);

private:
    friend RegressionHead fit_head(const Eigen::MatrixXd&, const Eigen::VectorXd&, const HeadConfig&);
    struct TreeNode {
        int feature = -1;  // -1 for a leaf
        double threshold = 0.0;
        double value = 0.0;
        int left = -1, right = -1;
    };
    [[nodiscard]] double predict_standardized(const Eigen::RowVectorXd& z) const;

    HeadKind kind_ = HeadKind::Perceptron;
    std::optional<double> constant_;
    Eigen::RowVectorXd mean_, scale_;
    double y_mean_ = 0.0, y_scale_ = 1.0;
    Eigen::MatrixXd w1_;
    Eigen::RowVectorXd b1_, w2_, beta_;
    double b_ = 0.0;
    std::vector<std::vector<TreeNode>> trees_;
    double shrinkage_ = 0.1;
};

/// Rows of X are samples. Throws std::invalid_argument on size mismatch or
/// fewer than 2 samples; all-equal labels give a constant head and a warning.
RegressionHead fit_head(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const HeadConfig& config = {});

/// mean(|p - y| / |y|) * 100. Throws ZeroLabel.
double mape(const std::vector<double>& labels, const std::vector<double>& preds);
/// Throws ZeroVariance.
double pearson_r(const std::vector<double>& labels, const std::vector<double>& preds);

/// Circuit metrics derived from per-register slacks (baseline mode).
double wns_from_slacks(const std::vector<double>& slacks);
double tns_from_slacks(const std::vector<double>& slacks);

struct EvalRow {
    std::string task;
    double r = 0.0;  // NaN when undefined
    double mape = 0.0;
    int n = 0;
};

EvalRow evaluate_task(const std::string& task, const std::vector<double>& labels, const std::vector<double>& preds);
/// "task,R,MAPE,n" with fixed 6-digit precision.
void write_report(const std::string& path, const std::vector<EvalRow>& rows);
std::string report_csv(const std::vector<EvalRow>& rows);

}  // namespace cfusion
