#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "circuitfusion/graph.hpp"
#include "circuitfusion/subcircuit.hpp"

namespace fixtures {

inline constexpr const char* kTwoRegister = R"(
module two_reg(input clk, input a, input b, input c, output q);
  reg r1;
  reg r2;
  always @(posedge clk) begin
    r1 <= a & b;
    r2 <= r1 | c;
  end
  assign q = r2;
endmodule
)";

inline constexpr const char* kSharedAdder = R"(
module shared(input clk, input [3:0] a, input [3:0] b, output [3:0] o);
  reg [3:0] x;
  reg [3:0] y;
  wire [3:0] s;
  assign s = a + b;
  always @(posedge clk) begin
    x <= s;
    y <= s ^ x;
  end
  assign o = x | y;
endmodule
)";

inline constexpr const char* kCounter = R"(
module counter(input clk, input rst, input en, output [3:0] count);
  reg [3:0] cnt;
  always @(posedge clk) begin
    if (rst)
      cnt <= 4'd0;
    else if (en)
      cnt <= cnt + 4'd1;
  end
  assign count = cnt;
endmodule
)";

/// Ids reachable backwards from `root` through combinational nodes only,
/// computed by repeated relaxation over the raw edge list.
struct Reach {
    std::set<cfusion::NodeId> members;
    std::set<cfusion::NodeId> boundary;
};

inline Reach reverse_reach(const cfusion::CdfGraph& g, cfusion::NodeId root) {
    using cfusion::Op;
    auto stops = [&](cfusion::NodeId id) {
        const Op op = g.node(id).op;
        return op == Op::Reg || op == Op::Dff || op == Op::Input;
    };
    Reach r;
    std::set<cfusion::NodeId> frontier{root};
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& e : g.edges()) {
            if (!frontier.contains(e.dst)) continue;
            if (stops(e.src)) {
                grew |= r.boundary.insert(e.src).second;
            } else if (e.src != root) {
                grew |= r.members.insert(e.src).second;
                frontier.insert(e.src);
            }
        }
    }
    return r;
}

/// Random design-like DAG: inputs, registers, combinational operators with
/// 1-3 operands drawn from earlier nodes, registers driven by one node each.
inline cfusion::CdfGraph random_dag(std::mt19937_64& rng, int max_nodes) {
    using cfusion::Op;
    cfusion::CdfGraph g;
    const int inputs = 1 + static_cast<int>(rng() % 6);
    const int regs = static_cast<int>(rng() % 8);
    const int comb = static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(1, max_nodes - inputs - 2 * regs)));
    cfusion::NodeId id = 0;
    std::vector<cfusion::NodeId> sources;
    for (int i = 0; i < inputs; ++i) {
        g.add_node({id, Op::Input, 1, "i" + std::to_string(i)});
        sources.push_back(id++);
    }
    std::vector<cfusion::NodeId> reg_ids;
    for (int i = 0; i < regs; ++i) {
        g.add_node({id, Op::Reg, 1, "r" + std::to_string(i)});
        reg_ids.push_back(id);
        sources.push_back(id++);
    }
    const Op ops2[] = {Op::And, Op::Or, Op::Xor, Op::Add};
    std::vector<cfusion::NodeId> all = sources;
    for (int i = 0; i < comb; ++i) {
        const int kind = static_cast<int>(rng() % 3);
        cfusion::Node n{id, Op::Not, 1};
        int arity = 1;
        if (kind == 1) {
            n.op = ops2[rng() % 4];
            arity = 2;
        } else if (kind == 2) {
            n.op = Op::Mux;
            arity = 3;
        }
        g.add_node(n);
        for (int k = 0; k < arity; ++k) g.connect(all[rng() % all.size()], id);
        all.push_back(id++);
    }
    for (cfusion::NodeId r : reg_ids) g.connect(all[rng() % all.size()], r);
    return g;
}

}  // namespace fixtures
