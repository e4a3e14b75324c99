#include <doctest.h>

#include <cmath>
#include <random>

#include "circuitfusion/encoders.hpp"
#include "circuitfusion/hdl.hpp"
#include "circuitfusion/labels.hpp"
#include "circuitfusion/quality.hpp"
#include "fixtures.hpp"

using namespace cfusion;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

/// Textbook single-pass sums, evaluated in long double.
double reference_r(const std::vector<double>& x, const std::vector<double>& y) {
    long double n = static_cast<long double>(x.size()), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += static_cast<long double>(x[i]) * x[i];
        syy += static_cast<long double>(y[i]) * y[i];
        sxy += static_cast<long double>(x[i]) * y[i];
    }
    return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

double reference_mape(const std::vector<double>& y, const std::vector<double>& p) {
    long double acc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += std::fabs((p[i] - y[i]) / y[i]);
    return static_cast<double>(100.0L * acc / static_cast<long double>(y.size()));
}

SubCircuitBundle fixture_bundle(const char* src, const char* reg) {
    const auto g = hdl::elaborate(hdl::parse_verilog(src));
    SubCircuitBundle b;
    b.design = "fx";
    b.reg = reg;
    b.id = bundle_id("fx", reg);
    b.rtl_graph = extract_cone(g, *g.find_named(reg, Op::Reg));
    return b;
}

}  // namespace

TEST_CASE("metric hand cases") {
    CHECK(mape({1, 2}, {1.1, 1.8}) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(mape({3, -2}, {3, -2}) == 0.0);
    CHECK_THROWS_AS(mape({1, 0}, {1, 1}), ZeroLabel);
    try {
        mape({1, 2, 0}, {1, 1, 1});
    } catch (const ZeroLabel& e) {
        CHECK(e.index == 2);
    }
    CHECK(pearson_r({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(pearson_r({1, 2, 3, 4}, {3, 5, 7, 9}) == doctest::Approx(1.0));
    CHECK(pearson_r({1, 2, 3, 4}, {-1, -2, -3, -4}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(pearson_r({1, 1, 1}, {1, 2, 3}), ZeroVariance);
    CHECK_THROWS_AS(pearson_r({1, 2, 3}, {2, 2, 2}), ZeroVariance);
}

TEST_CASE("metrics agree with reference formulas on random vectors") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.5, 10.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    double worst_r = 0, worst_m = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng() % 60;
        std::vector<double> y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = (rng() % 2 ? 1 : -1) * u(rng);
            p[i] = y[i] + noise(rng);
        }
        worst_r = std::max(worst_r, std::abs(pearson_r(y, p) - reference_r(y, p)));
        worst_m = std::max(worst_m, std::abs(mape(y, p) - reference_mape(y, p)));
    }
    CHECK(worst_r < 1e-9);
    CHECK(worst_m < 1e-9);
}

TEST_CASE("feature layout, retrieval slot and aggregation") {
    const auto b = fixture_bundle(fixtures::kSharedAdder, "y");
    RowVectorXd emb = RowVectorXd::LinSpaced(8, 0.1, 0.8);
    VectorStore store;
    QualityMetrics m;
    m.slack = 0.37;
    store.index_add(b.id, emb, m, "fx", "y");

    const auto f = build_features(b, emb, &store, "slack");
    CHECK(f.size() == 8 + 1 + kOpCount + 2);
    CHECK(f(8) == doctest::Approx(0.37).epsilon(1e-12));
    CHECK(f.head(8).transpose() == emb);
    const auto counts = f.tail(kOpCount + 2);
    CHECK(counts(op_index(Op::Reg)) == 2);   // y and x
    CHECK(counts(op_index(Op::Add)) == 1);
    CHECK(counts(kOpCount) == 2);
    CHECK(counts(kOpCount + 1) == doctest::Approx(b.rtl_graph.graph.nodes().size() * 4.0));

    FeatureOptions off;
    off.retrieval = false;
    CHECK(build_features(b, emb, nullptr, "slack", off)(8) == 0.0);
    FeatureOptions excl;
    excl.exclude_design = "fx";
    CHECK_THROWS_AS(build_features(b, emb, &store, "slack", excl), EmptyStore);
    CHECK_THROWS_AS(build_features(b, emb, &store, "power"), MetricMissing);
    CHECK(build_features(b, emb, &store, "wns")(8) == doctest::Approx(0.37).epsilon(1e-12));

    VectorXd a(2), c(2), dc(3);
    a << 1, 2;
    c << 3, 4;
    dc << 7, 8, 9;
    VectorXd expect(5);
    expect << 4, 6, 7, 8, 9;
    CHECK(aggregate_circuit({a, c}, dc) == expect);
    CHECK(aggregate_circuit({a}, VectorXd()) == a);
    CHECK_THROWS_AS(aggregate_circuit({}, dc), EmptyDesign);
}

TEST_CASE("heads: linear fit, constants, errors, serialization") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    const int n = 40, f = 5;
    MatrixXd X(n, f);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < f; ++c) X(i, c) = normal(rng);
    VectorXd w(f);
    w << 0.5, -1.0, 2.0, 0.0, 0.25;
    const VectorXd y = (X * w).array() + 10.0;

    const auto head = fit_head(X, y);
    const VectorXd pred = head.predict_all(X);
    std::vector<double> ys(y.data(), y.data() + n), ps(pred.data(), pred.data() + n);
    CHECK(mape(ys, ps) < 1.0);

    const auto back = RegressionHead::from_json(nlohmann::json::parse(head.to_json().dump()));
    CHECK((back.predict_all(X) - pred).cwiseAbs().maxCoeff() < 1e-12);

    HeadConfig tc;
    tc.kind = HeadKind::TreeEnsemble;
    const auto trees = fit_head(X, y, tc);
    const VectorXd tp = trees.predict_all(X);
    std::vector<double> tps(tp.data(), tp.data() + n);
    CHECK(pearson_r(ys, tps) > 0.9);
    const auto tback = RegressionHead::from_json(nlohmann::json::parse(trees.to_json().dump()));
    CHECK((tback.predict_all(X) - tp).cwiseAbs().maxCoeff() == 0.0);

    const auto same = fit_head(X, VectorXd::Constant(n, 3.5));
    CHECK(same.constant());
    CHECK(same.predict(X.row(0).transpose()) == 3.5);
    CHECK_THROWS(fit_head(X, VectorXd::Ones(n - 1)));
    CHECK_THROWS(fit_head(X.topRows(1), VectorXd::Ones(1)));

    CHECK(fit_head(X, y).predict_all(X) == pred);  // deterministic per seed
}

TEST_CASE("baseline circuit metrics from slacks") {
    CHECK(wns_from_slacks({0.2, -0.1, -0.3}) == -0.3);
    CHECK(wns_from_slacks({0.2, 0.1}) == 0.0);
    CHECK(tns_from_slacks({0.2, -0.1, -0.3}) == doctest::Approx(-0.4));
}

TEST_CASE("report csv") {
    const auto row = evaluate_task("slack", {1, 2}, {1.1, 1.8});
    CHECK(row.n == 2);
    CHECK(report_csv({row}) == "task,R,MAPE,n\nslack,1.000000,10.000000,2\n");
    CHECK(report_csv({evaluate_task("area", {1, 2}, {1, 1})}) == "task,R,MAPE,n\narea,nan,25.000000,2\n");
}

TEST_CASE("synthetic labels are consistent with the design totals") {
    const auto g = hdl::elaborate(hdl::parse_verilog(fixtures::kSharedAdder));
    const auto labels = synthesize_labels(g);
    REQUIRE(labels.registers.size() == 2);
    double wns = 0.0, tns = 0.0;
    for (const auto& [name, m] : labels.registers) {
        REQUIRE(m.slack);
        CHECK(*m.area > 0.0);
        CHECK(*m.power == doctest::Approx(*m.area * GateLibrary{}.power_per_area));
        wns = std::min(wns, *m.slack);
        if (*m.slack < 0) tns += *m.slack;
    }
    CHECK(*labels.design.wns == wns);
    CHECK(*labels.design.tns == doctest::Approx(tns));
    CHECK(*labels.design.tns <= 0.0);
    // y depends on the adder and x, so its path is at least as long as x's
    CHECK(*labels.registers.at("y").slack <= *labels.registers.at("x").slack);

    LabelSet set{{"shared", labels}};
    const auto back = labels_from_json(nlohmann::json::parse(labels_to_json(set).dump()));
    CHECK(back.at("shared").registers.at("y") == labels.registers.at("y"));
    CHECK(back.at("shared").design == labels.design);

    std::vector<SubCircuitBundle> bundles(3);
    bundles[0].design = "shared";
    bundles[0].reg = "y";
    bundles[1].design = "shared";
    bundles[1].reg = "y";
    bundles[1].is_augmented = true;
    bundles[2].design = "other";
    bundles[2].reg = "y";
    CHECK(apply_labels(bundles, set) == 1);
    CHECK(bundles[0].labels->slack == labels.registers.at("y").slack);
    CHECK(bundles[0].labels->wns == labels.design.wns);
    CHECK_FALSE(bundles[1].labels.has_value());
}
