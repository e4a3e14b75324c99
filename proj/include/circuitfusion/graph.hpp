#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace cfusion {

using NodeId = std::int64_t;

/// Byte range into the original HDL text.
struct SourceSpan {
    std::size_t offset = 0;
    std::size_t length = 0;
    bool operator==(const SourceSpan&) const = default;
};

/// Operator vocabulary shared by RTL graphs and gate-level netlist graphs.
/// The RTL subset ends at Neg; Dff onwards is the gate-level vocabulary.
/// Mask is only ever produced by the pre-training masker.
enum class Op : std::uint8_t {
    Input,
    Output,
    Reg,
    Const,
    Add,
    Sub,
    Mul,
    And,
    Or,
    Xor,
    Xnor,
    Not,
    Mux,
    Eq,
    Neq,
    Lt,
    Gt,
    Le,
    Ge,
    Shl,
    Shr,
    Concat,
    Slice,
    LogicAnd,
    LogicOr,
    LogicNot,
    ReduceAnd,
    ReduceOr,
    ReduceXor,
    Neg,
    // gate level
    Dff,
    Inv,
    Buf,
    And2,
    Or2,
    Nand2,
    Nor2,
    Xor2,
    Xnor2,
    Mux2,
    Aoi,
    Oai,
    FaSum,
    FaCarry,
    Mask,
};

inline constexpr int kOpCount = static_cast<int>(Op::Mask) + 1;

std::string_view op_name(Op op);
/// Throws std::invalid_argument for unknown names.
Op op_from_name(std::string_view name);

bool is_sequential(Op op);  // REG or DFF
bool is_source(Op op);      // INPUT or sequential: cone traversal stops here
bool is_combinational(Op op);
bool is_gate_level(Op op);

/// Coarse operator class used to type edges. Six classes, so an edge type is a
/// (src class, dst class) pair in [0, 36) and its feature is two one-hots (12 dims).
enum class OpClass : std::uint8_t { Source, Sequential, Arith, Logic, Compare, Route };
inline constexpr int kOpClassCount = 6;
inline constexpr int kEdgeTypeCount = kOpClassCount * kOpClassCount;
inline constexpr int kEdgeFeatureDim = 2 * kOpClassCount;

OpClass op_class(Op op);
int edge_type(Op src, Op dst);

struct Node {
    NodeId id = 0;
    Op op = Op::Const;
    int width = 1;
    std::string name;          // set for INPUT/OUTPUT/REG/DFF
    std::uint64_t value = 0;   // CONST
    int lsb = 0;               // SLICE
    std::optional<SourceSpan> span;
};

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;
    int operand = 0;  // position among dst's operands
    int etype = 0;
};

/// Directed operator/register graph. Edges into a node are kept in operand order.
class CdfGraph {
public:
    CdfGraph() = default;

    const Node& add_node(Node node);
    void add_edge(NodeId src, NodeId dst, int operand);
    /// Appends an edge at the next free operand slot of dst.
    void connect(NodeId src, NodeId dst);

    [[nodiscard]] std::span<const Node> nodes() const { return nodes_; }
    [[nodiscard]] std::span<const Edge> edges() const { return edges_; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }
    [[nodiscard]] bool empty() const { return nodes_.empty(); }

    [[nodiscard]] bool contains(NodeId id) const { return index_.contains(id); }
    [[nodiscard]] const Node& node(NodeId id) const;
    Node& mutable_node(NodeId id);
    [[nodiscard]] std::size_t index_of(NodeId id) const;

    /// Source ids of dst's in-edges in operand order.
    [[nodiscard]] std::vector<NodeId> operands(NodeId dst) const;
    [[nodiscard]] std::vector<NodeId> fanout(NodeId src) const;
    [[nodiscard]] std::span<const std::size_t> in_edge_indices(NodeId id) const;
    [[nodiscard]] std::span<const std::size_t> out_edge_indices(NodeId id) const;

    [[nodiscard]] NodeId max_id() const;
    [[nodiscard]] std::optional<NodeId> find_named(std::string_view name, Op op) const;

    /// Subgraph over `keep`, preserving ids and the relative order of nodes and edges.
    [[nodiscard]] CdfGraph induced(std::span<const NodeId> keep) const;

    /// Replaces dst's operand list.
    void set_operands(NodeId dst, std::span<const NodeId> srcs);
    /// Changes a node's operator, re-typing its incident edges.
    void retype(NodeId id, Op op);
    /// Points every consumer of `from` at `to` instead.
    void redirect_fanout(NodeId from, NodeId to);
    /// Removes the node and every incident edge.
    void remove_node(NodeId id);

    [[nodiscard]] nlohmann::json to_json() const;
    static CdfGraph from_json(const nlohmann::json& j);

    bool operator==(const CdfGraph& other) const;

private:
    void rebuild_adjacency();

    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::unordered_map<NodeId, std::size_t> index_;
    std::vector<std::vector<std::size_t>> in_;
    std::vector<std::vector<std::size_t>> out_;
};

/// Checks every CdfGraph invariant; returns a list of violations (empty when valid).
std::vector<std::string> validate(const CdfGraph& graph);

/// Node ids of a cycle in the combinational subgraph (edges leaving sequential
/// nodes removed), or empty when acyclic.
std::vector<NodeId> find_combinational_cycle(const CdfGraph& graph);

/// Topological order of the combinational subgraph; sequential/input nodes first.
/// Throws std::logic_error on a combinational cycle.
std::vector<NodeId> combinational_order(const CdfGraph& graph);

}  // namespace cfusion
