#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "circuitfusion/errors.hpp"
#include "circuitfusion/graph.hpp"

/** \file hdl.hpp
 *  \brief Frontend for a synthesizable, single-clock Verilog subset.
 *
 *  Supported: one module per source, ANSI or non-ANSI port lists, wire/reg
 *  declarations with [msb:lsb] ranges, continuous assigns, a single
 *  `always @(posedge clk)` clock domain with nonblocking assignments, if/else,
 *  case/default, unary/binary/ternary operators, bit and part selects,
 *  concatenation/replication and sized constants up to 64 bits.
 */

namespace cfusion::hdl {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind { Ident, Number, Unary, Binary, Ternary, Concat, Replicate, Index, Range };
    Kind kind = Kind::Ident;
    std::string name;  // Ident/Index/Range target; operator text for Unary/Binary
    std::uint64_t value = 0;
    int width = 0;        // Number: declared width, 0 when unsized
    int msb = 0, lsb = 0;  // Index (msb == lsb) / Range
    int count = 0;        // Replicate
    std::vector<ExprPtr> args;
    SourceSpan span;
};

struct Stmt;
using StmtPtr = std::shared_ptr<const Stmt>;

struct CaseItem {
    std::vector<ExprPtr> labels;  // empty = default
    StmtPtr body;
};

struct Stmt {
    enum class Kind { Block, NonBlocking, If, Case };
    Kind kind = Kind::Block;
    std::vector<StmtPtr> body;  // Block
    std::string target;         // NonBlocking
    ExprPtr expr;               // NonBlocking value / If condition / Case subject
    StmtPtr then_branch, else_branch;
    std::vector<CaseItem> items;
    SourceSpan span;
};

enum class Direction { Input, Output };
enum class NetKind { Wire, Reg };

struct Port {
    std::string name;
    Direction direction = Direction::Input;
    int width = 1;
    SourceSpan span;
};

struct Net {
    std::string name;
    NetKind kind = NetKind::Wire;
    int width = 1;
    SourceSpan span;
};

struct Assign {
    std::string target;
    ExprPtr expr;
    SourceSpan span;
};

struct AlwaysBlock {
    std::string clock;
    StmtPtr body;
    SourceSpan span;
};

/// Parsed, name-resolved single-module design. Every port also appears in
/// `nets` (output reg ports as Reg, the rest as Wire).
struct RtlDesign {
    std::string name;
    std::vector<Port> ports;
    std::vector<Net> nets;
    std::vector<Assign> assigns;
    std::vector<AlwaysBlock> always_blocks;
    SourceSpan span;

    [[nodiscard]] const Net* find_net(std::string_view n) const;
    [[nodiscard]] const Port* find_port(std::string_view n) const;
    /// The single clock, or empty for purely combinational designs.
    [[nodiscard]] std::string clock() const;
};

RtlDesign parse_verilog(std::string_view source);

CdfGraph elaborate(const RtlDesign& design);

/// Standalone module text realizing the statements that produced `node_ids`.
/// Signals read but not produced inside the slice become input ports.
std::string slice_code(const RtlDesign& design, const std::set<NodeId>& node_ids);

/// Verilog text of an expression, fully parenthesized where needed.
std::string to_verilog(const Expr& expr);

/// Which statement created each node. Exposed for slicing and tests.
struct NodeOrigin {
    enum class Kind { Port, Net, Assign, Always } kind = Kind::Port;
    std::size_t index = 0;  // into ports / nets / assigns / always_blocks
    std::string signal;     // net or port name for Port/Net/Always (the assigned reg)
};

struct Elaboration {
    CdfGraph graph;
    std::vector<NodeOrigin> origins;  // parallel to graph.nodes()
};

Elaboration elaborate_with_origins(const RtlDesign& design);

}  // namespace cfusion::hdl
