#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <atomic>
#include <fstream>
#include <thread>

#include "circuitfusion/retrieval.hpp"

using namespace cfusion;
using Eigen::RowVectorXd;

namespace {

RowVectorXd vec(std::initializer_list<double> v) {
    RowVectorXd r(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) r(i++) = x;
    return r;
}

QualityMetrics slack(double s) {
    QualityMetrics m;
    m.slack = s;
    return m;
}

/// Full scan in long double, sorted by (-sim, id).
std::vector<std::pair<std::string, double>> brute_force(const std::vector<std::pair<std::string, RowVectorXd>>& rows,
                                                        const RowVectorXd& q, int k) {
    std::vector<std::pair<std::string, double>> all;
    for (const auto& [id, e] : rows) {
        const RowVectorXd stored = e.cast<float>().cast<double>();
        long double dot = 0, na = 0, nb = 0;
        for (Eigen::Index i = 0; i < q.size(); ++i) {
            dot += static_cast<long double>(q(i)) * stored(i);
            na += static_cast<long double>(q(i)) * q(i);
            nb += static_cast<long double>(stored(i)) * stored(i);
        }
        all.emplace_back(id, static_cast<double>(dot / std::sqrt(na * nb)));
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (std::abs(a.second - b.second) > 1e-12) return a.second > b.second;
        return a.first < b.first;
    });
    all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
    return all;
}

}  // namespace

TEST_CASE("index_add and duplicates") {
    VectorStore s;
    CHECK_THROWS_AS(s.query_topk(vec({1, 0}), 1), EmptyStore);
    s.index_add("a", vec({1, 0}), slack(1.0));
    CHECK(s.size() == 1);
    CHECK_THROWS_AS(s.index_add("a", vec({0, 1}), slack(2.0)), DuplicateId);
    CHECK_THROWS(s.index_add("b", vec({0, 1, 2}), slack(2.0)));
    CHECK_THROWS(s.index_add("c", vec({NAN, 1}), slack(2.0)));
    CHECK(s.size() == 1);
    CHECK_THROWS(s.query_topk(vec({1, 0}), 0));
}

TEST_CASE("hand-computed similarities") {
    VectorStore s;
    s.index_add("x", vec({3, 4}), slack(1.0));
    s.index_add("y", vec({4, 3}), slack(2.0));
    const auto hits = s.query_topk(vec({3, 4}), 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].entry.id == "x");
    CHECK(hits[0].similarity == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(hits[1].similarity == doctest::Approx(0.96).epsilon(1e-6));
    CHECK(s.query_topk(vec({3, 4}), 10).size() == 2);

    const auto orth = s.query_topk(vec({0, 0}), 2);
    CHECK(orth[0].similarity == 0.0);
    VectorStore o;
    o.index_add("p", vec({1, 0, 0}), slack(1));
    o.index_add("q", vec({0, 1, 0}), slack(1));
    for (const auto& h : o.query_topk(vec({0, 0, 2}), 2)) CHECK(h.similarity == 0.0);
}

TEST_CASE("top-k matches a brute-force scan, with ties and scaling") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 20; ++trial) {
        VectorStore s;
        std::vector<std::pair<std::string, RowVectorXd>> rows;
        const int dim = 6;
        for (int i = 0; i < 200; ++i) {
            RowVectorXd e(dim);
            for (int c = 0; c < dim; ++c) e(c) = normal(rng);
            if (i % 10 == 3) e = rows[static_cast<std::size_t>(i - 1)].second * 2.0;  // exact tie in direction
            char id[16];
            std::snprintf(id, sizeof id, "id%03d", (i * 37) % 200);
            rows.emplace_back(id, e);
            s.index_add(id, e, slack(i + 1));
        }
        RowVectorXd q(dim);
        for (int c = 0; c < dim; ++c) q(c) = normal(rng);
        if (trial % 4 == 0) q = rows[5].second;
        for (int k : {1, 5, 50, 500}) {
            const auto hits = s.query_topk(q, k);
            const auto oracle = brute_force(rows, q, k);
            REQUIRE(hits.size() == oracle.size());
            for (std::size_t i = 0; i < hits.size(); ++i) {
                CHECK(hits[i].entry.id == oracle[i].first);
                CHECK(hits[i].similarity == doctest::Approx(oracle[i].second).epsilon(1e-12));
            }
            for (double c : {0.001, 3.0, 1e6}) {
                const auto scaled = s.query_topk(q * c, k);
                for (std::size_t i = 0; i < hits.size(); ++i) {
                    CHECK(scaled[i].entry.id == hits[i].entry.id);
                    CHECK(scaled[i].similarity == doctest::Approx(hits[i].similarity).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("self-retrieval and zero-shot prediction") {
    VectorStore s;
    s.index_add("a", vec({1, 0.2, 0}), slack(0.7));
    s.index_add("b", vec({0, 1, 0.3}), slack(1.2));
    s.index_add("c", vec({0.2, 0, 1}), slack(-0.4));
    const auto self = s.query_topk(vec({0, 1, 0.3}), 1);
    CHECK(self[0].entry.id == "b");
    CHECK(std::abs(self[0].similarity - 1.0) < 1e-6);
    CHECK(zero_shot_predict(s, vec({0, 1, 0.3}), "slack") == 1.2);
    CHECK(zero_shot_predict(s, vec({0.1, 0.9, 0.2}), "slack") == 1.2);
    CHECK_THROWS_AS(zero_shot_predict(s, vec({0, 1, 0.3}), "power"), MetricMissing);

    VectorStore eq;
    for (int i = 1; i <= 3; ++i) eq.index_add("e" + std::to_string(i), vec({1, 1}), slack(i));
    CHECK(zero_shot_predict(eq, vec({2, 2}), "slack", 3) == doctest::Approx(2.0));
    CHECK(zero_shot_predict(eq, vec({2, 2}), "slack", 1) == 1.0);
}

TEST_CASE("persistence round trip over 10k entries") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    VectorStore s;
    for (int i = 0; i < 10000; ++i) {
        RowVectorXd e(16);
        for (int c = 0; c < 16; ++c) e(c) = normal(rng);
        QualityMetrics m = slack(normal(rng));
        m.area = std::abs(normal(rng));
        s.index_add("n" + std::to_string(i), e, m, "d" + std::to_string(i % 7), "r" + std::to_string(i));
    }
    const auto dir = (std::filesystem::temp_directory_path() / "cf_store_rt").string();
    s.save(dir);
    const auto back = VectorStore::load(dir);
    CHECK(back.size() == s.size());
    for (int trial = 0; trial < 20; ++trial) {
        RowVectorXd q(16);
        for (int c = 0; c < 16; ++c) q(c) = normal(rng);
        const auto a = s.query_topk(q, 5), b = back.query_topk(q, 5);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].entry.id == b[i].entry.id);
            CHECK(a[i].similarity == b[i].similarity);
            CHECK(a[i].entry.metrics == b[i].entry.metrics);
            CHECK(a[i].entry.design == b[i].entry.design);
        }
    }
    {
        std::fstream f(dir + "/embeddings.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(100);
        f.put('\x7f');
    }
    CHECK_THROWS_AS(VectorStore::load(dir), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("concurrent readers see consistent snapshots while a writer appends") {
    VectorStore s;
    s.index_add("seed", vec({1, 0}), slack(1));
    std::atomic<bool> bad{false};
    std::thread writer([&] {
        for (int i = 0; i < 2000; ++i) s.index_add("w" + std::to_string(i), vec({0, 1.0 + i}), slack(i));
    });
    std::vector<std::thread> readers;
    for (int r = 0; r < 3; ++r) {
        readers.emplace_back([&] {
            for (int i = 0; i < 300; ++i) {
                const auto hits = s.query_topk(vec({1, 0}), 1);
                if (hits[0].entry.id != "seed" || std::abs(hits[0].similarity - 1.0) > 1e-9) bad = true;
            }
        });
    }
    writer.join();
    for (auto& t : readers) t.join();
    CHECK_FALSE(bad.load());
    CHECK(s.size() == 2001);
}
