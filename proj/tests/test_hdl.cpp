#include <doctest.h>

#include <set>

#include "circuitfusion/augment.hpp"
#include "circuitfusion/hdl.hpp"
#include "circuitfusion/subcircuit.hpp"
#include "fixtures.hpp"

using namespace cfusion;

namespace {

int count_op(const CdfGraph& g, Op op) {
    int n = 0;
    for (const auto& node : g.nodes()) n += node.op == op;
    return n;
}

}  // namespace

TEST_CASE("parse: wire-through module") {
    const auto d = hdl::parse_verilog("module m(input a, output b); assign b = a; endmodule");
    CHECK(d.name == "m");
    CHECK(d.ports.size() == 2);
    CHECK(d.assigns.size() == 1);
    CHECK(d.always_blocks.empty());
}

TEST_CASE("parse: single register matches hand-built AST") {
    const std::string src =
        "module m(input clk, input a, output reg q); always @(posedge clk) q <= ~a; endmodule";
    const auto d = hdl::parse_verilog(src);
    REQUIRE(d.always_blocks.size() == 1);
    const auto& blk = d.always_blocks[0];
    CHECK(blk.clock == "clk");
    REQUIRE(blk.body->kind == hdl::Stmt::Kind::NonBlocking);
    CHECK(blk.body->target == "q");
    const auto& e = *blk.body->expr;
    CHECK(e.kind == hdl::Expr::Kind::Unary);
    CHECK(e.name == "~");
    REQUIRE(e.args.size() == 1);
    CHECK(e.args[0]->kind == hdl::Expr::Kind::Ident);
    CHECK(e.args[0]->name == "a");
    const auto* q = d.find_net("q");
    REQUIRE(q);
    CHECK(q->kind == hdl::NetKind::Reg);
    // spans point back into the text
    CHECK(src.substr(e.span.offset, e.span.length) == "~a");
}

TEST_CASE("parse: errors") {
    CHECK_THROWS_AS(hdl::parse_verilog("module m(input a); initial a = 0; endmodule"), UnsupportedConstruct);
    try {
        hdl::parse_verilog("module m(input a); initial a = 0; endmodule");
    } catch (const UnsupportedConstruct& e) {
        CHECK(e.construct == "initial");
    }
    CHECK_THROWS_AS(hdl::parse_verilog("module m(input a, output b); assign b = zz; endmodule"),
                    UndeclaredIdentifier);
    CHECK_THROWS_AS(hdl::parse_verilog("module m(input a, output b) assign b = a; endmodule"), SyntaxError);
    CHECK_THROWS_AS(hdl::parse_verilog(R"(module m(input c1, input c2, input a, output reg p, output reg q);
        always @(posedge c1) p <= a;
        always @(posedge c2) q <= a;
        endmodule)"),
                    UnsupportedConstruct);
    CHECK_THROWS_AS(hdl::parse_verilog("module m(input a, output b); generate endgenerate endmodule"),
                    UnsupportedConstruct);
}

TEST_CASE("elaborate: wire-through") {
    const auto g = hdl::elaborate(hdl::parse_verilog("module m(input a, output b); assign b = a; endmodule"));
    CHECK(g.size() == 2);
    CHECK(g.edges().size() == 1);
    CHECK(g.node(g.edges()[0].src).op == Op::Input);
    CHECK(g.node(g.edges()[0].dst).op == Op::Output);
}

TEST_CASE("elaborate: ternary becomes a MUX into the register") {
    const auto g = hdl::elaborate(hdl::parse_verilog(R"(
        module m(input clk, input sel, input x, input y, output reg q);
          always @(posedge clk) q <= sel ? x : y;
        endmodule)"));
    CHECK(count_op(g, Op::Mux) == 1);
    NodeId mux = -1;
    for (const auto& n : g.nodes()) if (n.op == Op::Mux) mux = n.id;
    const auto ops = g.operands(mux);
    REQUIRE(ops.size() == 3);
    CHECK(g.node(ops[0]).name == "sel");
    CHECK(g.node(ops[1]).name == "x");
    CHECK(g.node(ops[2]).name == "y");
    const auto out = g.fanout(mux);
    REQUIRE(out.size() == 1);
    CHECK(g.node(out[0]).op == Op::Reg);
    CHECK(g.node(out[0]).name == "q");
    CHECK(validate(g).empty());
}

TEST_CASE("elaborate: combinational loop") {
    const auto d = hdl::parse_verilog(R"(
        module m(output o);
          wire a;
          wire b;
          assign a = b;
          assign b = a;
          assign o = a;
        endmodule)");
    try {
        hdl::elaborate(d);
        FAIL("expected CombinationalLoop");
    } catch (const CombinationalLoop& e) {
        std::set<std::string> names(e.cycle.begin(), e.cycle.end());
        CHECK(names == std::set<std::string>{"a", "b"});
    }
}

TEST_CASE("elaborate: width mismatch") {
    CHECK_THROWS_AS(hdl::elaborate(hdl::parse_verilog(
                        "module m(input [3:0] a, output [1:0] b); assign b = a; endmodule")),
                    WidthMismatch);
}

TEST_CASE("elaborate is deterministic and acyclic") {
    for (const char* src : {fixtures::kTwoRegister, fixtures::kSharedAdder, fixtures::kCounter}) {
        const auto d = hdl::parse_verilog(src);
        const auto g1 = hdl::elaborate(d);
        const auto g2 = hdl::elaborate(hdl::parse_verilog(src));
        CHECK(g1 == g2);
        CHECK(g1.to_json().dump() == g2.to_json().dump());
        CHECK(find_combinational_cycle(g1).empty());
        CHECK(validate(g1).empty());
    }
}

TEST_CASE("graph JSON round trip") {
    const auto g = hdl::elaborate(hdl::parse_verilog(fixtures::kCounter));
    const auto back = CdfGraph::from_json(nlohmann::json::parse(g.to_json().dump()));
    CHECK(back == g);
}

TEST_CASE("simulation of elaborated cones matches hand evaluation") {
    // counter: next = rst ? 0 : (en ? cnt + 1 : cnt)
    const auto g = hdl::elaborate(hdl::parse_verilog(fixtures::kCounter));
    const auto cone = extract_cone(g, *g.find_named("cnt", Op::Reg));
    std::map<std::string, NodeId> by_name;
    for (NodeId b : cone.boundary) by_name[cone.graph.node(b).name] = b;
    REQUIRE(by_name.size() == 3);
    for (std::uint64_t rst = 0; rst < 2; ++rst)
        for (std::uint64_t en = 0; en < 2; ++en)
            for (std::uint64_t cnt = 0; cnt < 16; ++cnt) {
                const std::uint64_t expect = rst ? 0 : (en ? (cnt + 1) & 15 : cnt);
                const auto got = simulate_cone(cone, {{by_name["rst"], rst}, {by_name["en"], en}, {by_name["cnt"], cnt}});
                CHECK(got == expect);
            }

    // shared: y <= (a + b) ^ x
    const auto g2 = hdl::elaborate(hdl::parse_verilog(fixtures::kSharedAdder));
    const auto cy = extract_cone(g2, *g2.find_named("y", Op::Reg));
    by_name.clear();
    for (NodeId b : cy.boundary) by_name[cy.graph.node(b).name] = b;
    for (std::uint64_t a = 0; a < 16; ++a)
        for (std::uint64_t b = 0; b < 16; ++b)
            for (std::uint64_t x : {0ull, 5ull, 15ull}) {
                const auto got = simulate_cone(cy, {{by_name["a"], a}, {by_name["b"], b}, {by_name["x"], x}});
                CHECK(got == (((a + b) & 15) ^ x));
            }
}

TEST_CASE("slice_code: full and single-register slices") {
    const auto d = hdl::parse_verilog(fixtures::kTwoRegister);
    const auto g = hdl::elaborate(d);

    std::set<NodeId> all;
    for (const auto& n : g.nodes()) all.insert(n.id);
    const auto full = hdl::slice_code(d, all);
    const auto g_full = hdl::elaborate(hdl::parse_verilog(full));
    // Slices expose every register as an output port; everything else is unchanged.
    CHECK(g_full.size() == g.size() + 2);
    CHECK(count_op(g_full, Op::Reg) == 2);
    std::vector<NodeId> original_ids;
    for (const auto& n : g.nodes()) original_ids.push_back(n.id);
    CHECK(g_full.induced(original_ids) == g);

    const auto cone = extract_cone(g, *g.find_named("r2", Op::Reg));
    std::set<NodeId> ids{cone.root};
    ids.insert(cone.members.begin(), cone.members.end());
    const auto text = hdl::slice_code(d, ids);
    const auto sliced = hdl::parse_verilog(text);
    CHECK(sliced.always_blocks.size() == 1);
    const auto gs = hdl::elaborate(sliced);
    const auto re = extract_cone(gs, *gs.find_named("r2", Op::Reg));
    CHECK(cones_isomorphic(re, cone));

    CHECK_THROWS_AS(hdl::slice_code(d, {}), DanglingReference);
}
