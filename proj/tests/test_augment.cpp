#include <doctest.h>

#include <random>

#include "circuitfusion/augment.hpp"
#include "circuitfusion/hdl.hpp"
#include "fixtures.hpp"

using namespace cfusion;

namespace {

Cone cone_of(const std::string& body, const std::string& ports, const std::string& reg = "q") {
    const auto g = hdl::elaborate(hdl::parse_verilog("module m(input clk, " + ports + "); always @(posedge clk) " +
                                                     body + "; endmodule"));
    return extract_cone(g, *g.find_named(reg, Op::Reg));
}

int count_op(const Cone& c, Op op) {
    int n = 0;
    for (const auto& node : c.graph.nodes()) n += node.op == op;
    return n;
}

NodeId first(const Cone& c, Op op) {
    for (const auto& n : c.graph.nodes())
        if (n.op == op) return n.id;
    return -1;
}

BoundaryAssignment by_name(const Cone& c, std::map<std::string, std::uint64_t> values) {
    BoundaryAssignment out;
    for (NodeId b : c.boundary) out[b] = values.at(c.graph.node(b).name);
    return out;
}

}  // namespace

TEST_CASE("simulate_cone basics") {
    const auto wire = cone_of("q <= a", "input a, output reg q");
    CHECK(simulate_cone(wire, by_name(wire, {{"a", 1}})) == 1);

    const auto and_cone = cone_of("q <= a & b", "input a, input b, output reg q");
    CHECK(simulate_cone(and_cone, by_name(and_cone, {{"a", 1}, {"b", 0}})) == 0);

    const auto add = cone_of("q <= a + b", "input [2:0] a, input [2:0] b, output reg [2:0] q");
    CHECK(simulate_cone(add, by_name(add, {{"a", 3}, {"b", 6}})) == 1);

    CHECK_THROWS_AS(simulate_cone(and_cone, {}), MissingAssignment);
    const auto wide = cone_of("q <= a & b", "input [15:0] a, input [15:0] b, output reg [15:0] q");
    CHECK_THROWS_AS(simulate_cone(wide, by_name(wide, {{"a", 1}, {"b", 1}})), BudgetExceeded);
}

TEST_CASE("double negation removes both NOT nodes") {
    const auto c = cone_of("q <= ~(~a)", "input a, output reg q");
    REQUIRE(count_op(c, Op::Not) == 2);
    NodeId outer = -1;
    for (NodeId m : c.members)
        if (c.graph.node(m).op == Op::Not && c.graph.fanout(m) == std::vector<NodeId>{c.root}) outer = m;
    REQUIRE(rule_applies(c, outer, RewriteRule::DoubleNegation));
    const auto r = apply_rule(c, outer, RewriteRule::DoubleNegation);
    CHECK(count_op(r, Op::Not) == 0);
    CHECK(r.members.empty());
    CHECK(check_equivalence(c, r));
}

TEST_CASE("de Morgan on AND") {
    const auto c = cone_of("q <= a & b", "input a, input b, output reg q");
    const auto r = apply_rule(c, first(c, Op::And), RewriteRule::DeMorganAnd);
    // NOT(OR(NOT a, NOT b))
    const auto top = r.graph.operands(r.root).at(0);
    CHECK(r.graph.node(top).op == Op::Not);
    const auto mid = r.graph.operands(top).at(0);
    CHECK(r.graph.node(mid).op == Op::Or);
    for (NodeId leg : r.graph.operands(mid)) CHECK(r.graph.node(leg).op == Op::Not);
    CHECK(check_equivalence(c, r));
}

TEST_CASE("mux to boolean is exhaustively equivalent") {
    const auto c = cone_of("q <= s ? x : y", "input s, input [2:0] x, input [2:0] y, output reg [2:0] q");
    const auto r = apply_rule(c, first(c, Op::Mux), RewriteRule::MuxToBoolean);
    CHECK(count_op(r, Op::Mux) == 0);
    CHECK(r.graph.node(r.graph.operands(r.root).at(0)).op == Op::Or);
    CHECK(check_equivalence(c, r));
}

TEST_CASE("every rule preserves semantics on 1-bit instances") {
    const auto base = cone_of("q <= (s ? (a & b) : (a | b)) ^ ~(~c)", "input s, input a, input b, input c, output reg q");
    int applied = 0;
    for (RewriteRule rule : kAllRules) {
        for (NodeId m : base.members) {
            if (!rule_applies(base, m, rule)) continue;
            const auto r = apply_rule(base, m, rule);
            CHECK_MESSAGE(check_equivalence(base, r), rule_name(rule));
            CHECK(validate(r.graph).empty());
            ++applied;
        }
    }
    CHECK(applied >= 7);
}

TEST_CASE("check_equivalence") {
    const auto a = cone_of("q <= a & b", "input a, input b, output reg q");
    const auto o = cone_of("q <= a | b", "input a, input b, output reg q");
    const auto dm = cone_of("q <= ~(~a | ~b)", "input a, input b, output reg q");
    CHECK(check_equivalence(a, a));
    CHECK(check_equivalence(a, dm));
    CHECK_FALSE(check_equivalence(a, o));
    const auto other = cone_of("q <= a & c", "input a, input c, output reg q");
    CHECK_THROWS_AS(check_equivalence(a, other), BoundaryMismatch);
}

TEST_CASE("apply_rewrites: distinct, equivalent, reproducible") {
    const auto c = hdl::elaborate(hdl::parse_verilog(fixtures::kSharedAdder));
    const auto cone = extract_cone(c, *c.find_named("y", Op::Reg));
    const auto v1 = apply_rewrites(cone, 7, 42);
    const auto v2 = apply_rewrites(cone, 7, 42);
    REQUIRE(v1.size() == 7);
    for (std::size_t i = 0; i < v1.size(); ++i) {
        CHECK_FALSE(v1[i].unchanged);
        CHECK_FALSE(cones_isomorphic(v1[i].cone, cone));
        CHECK(v1[i].cone.to_json() == v2[i].cone.to_json());
        CHECK(check_equivalence(cone, v1[i].cone));
        CHECK(v1[i].cone.root == cone.root);
        CHECK(v1[i].cone.boundary == cone.boundary);
    }

    const auto wire = cone_of("q <= a", "input a, output reg q");
    const auto same = apply_rewrites(wire, 2, 1);
    CHECK(same[0].unchanged);
    CHECK(same[0].cone.to_json() == wire.to_json());
}
