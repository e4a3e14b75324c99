#include <doctest.h>

#include <random>

#include "circuitfusion/augment.hpp"
#include "circuitfusion/hdl.hpp"
#include "circuitfusion/techmap.hpp"
#include "fixtures.hpp"

using namespace cfusion;

namespace {

/// Values of every node given source values, evaluated in topological order.
std::map<NodeId, std::uint64_t> eval_graph(const CdfGraph& g, const std::map<NodeId, std::uint64_t>& sources) {
    std::map<NodeId, std::uint64_t> v;
    for (NodeId id : combinational_order(g)) {
        const Node& n = g.node(id);
        if (is_source(n.op)) {
            v[id] = sources.count(id) ? sources.at(id) & width_mask(n.width) : 0;
            continue;
        }
        std::vector<std::uint64_t> args;
        std::vector<int> widths;
        for (NodeId s : g.operands(id)) {
            args.push_back(v.at(s));
            widths.push_back(g.node(s).width);
        }
        v[id] = evaluate_op(n, args, widths);
    }
    return v;
}

constexpr const char* kAlu = R"(
module alu(input clk, input [3:0] a, input [3:0] b, input [1:0] op, input s, output [3:0] y, output f);
  reg [3:0] acc;
  reg [3:0] sh;
  reg [3:0] prod;
  reg flag;
  reg [2:0] mix;
  always @(posedge clk) begin
    case (op)
      2'd0: acc <= a + b;
      2'd1: acc <= a - b;
      2'd2: acc <= a & ~b;
      default: acc <= -a;
    endcase
    sh <= s ? (a << b[1:0]) : (a >> b);
    prod <= a * b;
    flag <= (a < b) || (a == acc) && !(b >= acc) || ^a || &b || (a > b) && (a <= b) || (a != b);
    mix <= {a[0], b[3:2]} ^ {3{s}};
  end
  assign y = acc | sh;
  assign f = flag ~^ s;
endmodule
)";

}  // namespace

TEST_CASE("techmap preserves next-state and output functions") {
    const auto rtl = hdl::elaborate(hdl::parse_verilog(kAlu));
    const auto net = techmap(rtl);
    CHECK(validate(net).empty());
    for (const auto& n : net.nodes()) {
        CHECK((is_gate_level(n.op) || n.op == Op::Input || n.op == Op::Output || n.op == Op::Const));
    }

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 300; ++trial) {
        std::map<NodeId, std::uint64_t> rtl_src;
        std::map<NodeId, std::uint64_t> net_src;
        for (const auto& n : rtl.nodes()) {
            if (!is_source(n.op)) continue;
            const std::uint64_t value = rng() & width_mask(n.width);
            rtl_src[n.id] = value;
            for (int i = 0; i < n.width; ++i) {
                const Op bit_op = n.op == Op::Input ? Op::Input : Op::Dff;
                const auto id = net.find_named(bit_name(n.name, n.width, i), bit_op);
                REQUIRE(id);
                net_src[*id] = (value >> i) & 1;
            }
        }
        const auto rv = eval_graph(rtl, rtl_src);
        const auto nv = eval_graph(net, net_src);
        for (const auto& n : rtl.nodes()) {
            if (!is_sequential(n.op) && n.op != Op::Output) continue;
            const std::uint64_t expect =
                n.op == Op::Output ? rv.at(n.id) : rv.at(rtl.operands(n.id).at(0)) & width_mask(n.width);
            std::uint64_t got = 0;
            for (int i = 0; i < n.width; ++i) {
                const Op bit_op = n.op == Op::Output ? Op::Output : Op::Dff;
                const NodeId b = *net.find_named(bit_name(n.name, n.width, i), bit_op);
                const std::uint64_t bit = n.op == Op::Output ? nv.at(b) : nv.at(net.operands(b).at(0));
                got |= bit << i;
            }
            CHECK_MESSAGE(got == expect, n.name);
        }
    }
}

TEST_CASE("techmapped registers align with their RTL cones") {
    const auto rtl = hdl::elaborate(hdl::parse_verilog(fixtures::kCounter));
    const auto net = techmap(rtl);
    const auto rc = extract_cone(rtl, *rtl.find_named("cnt", Op::Reg));
    const auto nc = align_netlist(rc, net);
    CHECK(nc.roots.size() == 4);
    for (NodeId r : nc.roots) CHECK(net.node(r).name.rfind("cnt[", 0) == 0);
}
