#pragma once

#include <functional>
#include <shared_mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "circuitfusion/subcircuit.hpp"

namespace cfusion {

struct StoreEntry {
    std::string id;
    Eigen::RowVectorXf embedding;  // kept as stored on disk
    QualityMetrics metrics;
    std::string design;
    std::string reg;
};

struct Hit {
    StoreEntry entry;
    double similarity = 0.0;
};

/// Exact cosine-similarity store. Queries run under a shared lock and return
/// copies, so they see a consistent snapshot while writers wait.
class VectorStore {
public:
    VectorStore() = default;
    VectorStore(const VectorStore& other);
    VectorStore& operator=(const VectorStore& other);

    /// Throws DuplicateId, or std::invalid_argument for a non-finite or
    /// wrongly sized embedding.
    void index_add(StoreEntry entry);
    void index_add(const std::string& id, const Eigen::RowVectorXd& embedding, const QualityMetrics& metrics,
                   const std::string& design = {}, const std::string& reg = {});

    /// Top min(k, size) entries by cosine similarity, descending, ties by id.
    /// `keep` filters candidates before ranking. Throws EmptyStore.
    [[nodiscard]] std::vector<Hit> query_topk(const Eigen::RowVectorXd& query, int k,
                                              const std::function<bool(const StoreEntry&)>& keep = {}) const;

    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] int dim() const;
    [[nodiscard]] bool contains(const std::string& id) const;

    /// Writes `dir`/store.json and `dir`/embeddings.bin.
    void save(const std::string& dir) const;
    static VectorStore load(const std::string& dir);

private:
    mutable std::shared_mutex mu_;
    std::vector<StoreEntry> entries_;
    std::unordered_set<std::string> ids_;
    int dim_ = 0;
};

double cosine_similarity(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b);

/// Top-1 metric verbatim, or the mean over the top k. Throws MetricMissing if
/// any consulted entry lacks the metric.
double zero_shot_predict(const VectorStore& store, const Eigen::RowVectorXd& query, const std::string& metric,
                         int k = 1, const std::function<bool(const StoreEntry&)>& keep = {});

}  // namespace cfusion
