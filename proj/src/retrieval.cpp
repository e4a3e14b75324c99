#include "circuitfusion/retrieval.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>

#include <json.hpp>

namespace cfusion {

VectorStore::VectorStore(const VectorStore& other) {
    std::shared_lock lock(other.mu_);
    entries_ = other.entries_;
    ids_ = other.ids_;
    dim_ = other.dim_;
}

VectorStore& VectorStore::operator=(const VectorStore& other) {
    if (this == &other) return *this;
    std::unique_lock mine(mu_, std::defer_lock);
    std::shared_lock theirs(other.mu_, std::defer_lock);
    std::lock(mine, theirs);
    entries_ = other.entries_;
    ids_ = other.ids_;
    dim_ = other.dim_;
    return *this;
}

void VectorStore::index_add(StoreEntry entry) {
    if (entry.embedding.size() == 0) throw std::invalid_argument("index_add: empty embedding");
    if (!entry.embedding.allFinite()) throw std::invalid_argument("index_add: non-finite embedding for " + entry.id);
    std::unique_lock lock(mu_);
    if (dim_ != 0 && entry.embedding.size() != dim_) {
        throw std::invalid_argument("index_add: embedding has " + std::to_string(entry.embedding.size()) +
                                    " dims, store has " + std::to_string(dim_));
    }
    if (!ids_.insert(entry.id).second) throw DuplicateId(entry.id);
    dim_ = static_cast<int>(entry.embedding.size());
    entries_.push_back(std::move(entry));
}

void VectorStore::index_add(const std::string& id, const Eigen::RowVectorXd& embedding, const QualityMetrics& metrics,
                            const std::string& design, const std::string& reg) {
    index_add(StoreEntry{id, embedding.cast<float>(), metrics, design, reg});
}

double cosine_similarity(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

std::vector<Hit> VectorStore::query_topk(const Eigen::RowVectorXd& query, int k,
                                         const std::function<bool(const StoreEntry&)>& keep) const {
    if (k < 1) throw std::invalid_argument("query_topk: k must be >= 1");
    std::shared_lock lock(mu_);
    if (entries_.empty()) throw EmptyStore();
    if (query.size() != dim_) throw std::invalid_argument("query_topk: query has wrong dimension");
    std::vector<std::pair<double, const StoreEntry*>> scored;
    scored.reserve(entries_.size());
    for (const auto& e : entries_) {
        if (keep && !keep(e)) continue;
        scored.emplace_back(cosine_similarity(query, e.embedding.cast<double>()), &e);
    }
    if (scored.empty()) throw EmptyStore();
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    const auto better = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->id < b.second->id;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
    std::vector<Hit> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({*scored[i].second, scored[i].first});
    return out;
}

std::size_t VectorStore::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

int VectorStore::dim() const {
    std::shared_lock lock(mu_);
    return dim_;
}

bool VectorStore::contains(const std::string& id) const {
    std::shared_lock lock(mu_);
    return ids_.contains(id);
}

void VectorStore::save(const std::string& dir) const {
    std::shared_lock lock(mu_);
    std::filesystem::create_directories(dir);
    std::ofstream blob(dir + "/embeddings.bin", std::ios::binary);
    if (!blob) throw IoError("index", "cannot write " + dir + "/embeddings.bin");
    nlohmann::json entries = nlohmann::json::array();
    std::string all;
    std::size_t offset = 0;
    for (const auto& e : entries_) {
        const auto bytes = static_cast<std::size_t>(e.embedding.size()) * sizeof(float);
        blob.write(reinterpret_cast<const char*>(e.embedding.data()), static_cast<std::streamsize>(bytes));
        all.append(reinterpret_cast<const char*>(e.embedding.data()), bytes);
        entries.push_back({{"id", e.id},
                           {"design", e.design},
                           {"register", e.reg},
                           {"metrics", e.metrics.to_json()},
                           {"offset", offset}});
        offset += bytes;
    }
    const nlohmann::json manifest{{"dim", dim_},
                                  {"count", entries_.size()},
                                  {"dtype", "float32"},
                                  {"hash", stable_hash(all)},
                                  {"entries", entries}};
    std::ofstream man(dir + "/store.json");
    if (!man) throw IoError("index", "cannot write " + dir + "/store.json");
    man << manifest.dump(2) << '\n';
}

VectorStore VectorStore::load(const std::string& dir) {
    std::ifstream man(dir + "/store.json");
    if (!man) throw IoError("retrieve", "cannot read " + dir + "/store.json");
    const auto j = nlohmann::json::parse(man);
    std::ifstream blob(dir + "/embeddings.bin", std::ios::binary);
    if (!blob) throw IoError("retrieve", "cannot read " + dir + "/embeddings.bin");
    const int dim = j.at("dim").get<int>();
    VectorStore store;
    std::string all;
    for (const auto& e : j.at("entries")) {
        StoreEntry entry;
        entry.id = e.at("id").get<std::string>();
        entry.design = e.value("design", "");
        entry.reg = e.value("register", "");
        entry.metrics = QualityMetrics::from_json(e.at("metrics"));
        entry.embedding.resize(dim);
        blob.seekg(e.at("offset").get<std::streamoff>());
        blob.read(reinterpret_cast<char*>(entry.embedding.data()), static_cast<std::streamsize>(dim * sizeof(float)));
        if (!blob) throw IoError("retrieve", "truncated embedding blob at " + entry.id);
        all.append(reinterpret_cast<const char*>(entry.embedding.data()), dim * sizeof(float));
        store.index_add(std::move(entry));
    }
    if (stable_hash(all) != j.at("hash").get<std::string>()) throw IoError("retrieve", "embedding blob hash mismatch");
    return store;
}

double zero_shot_predict(const VectorStore& store, const Eigen::RowVectorXd& query, const std::string& metric,
                         int k, const std::function<bool(const StoreEntry&)>& keep) {
    const auto hits = store.query_topk(query, k, keep);
    double sum = 0.0;
    for (const auto& h : hits) {
        const auto v = h.entry.metrics.get(metric);
        if (!v) throw MetricMissing(metric + " on " + h.entry.id);
        sum += *v;
    }
    return hits.size() == 1 ? sum : sum / static_cast<double>(hits.size());
}

}  // namespace cfusion
