#include "circuitfusion/graph.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <stdexcept>

namespace cfusion {
namespace {

constexpr std::array<std::string_view, kOpCount> kOpNames = {
    "INPUT", "OUTPUT", "REG",  "CONST", "ADD",  "SUB",   "MUL",   "AND",   "OR",    "XOR",   "XNOR",   "NOT",
    "MUX",   "EQ",     "NEQ",  "LT",    "GT",   "LE",    "GE",    "SHL",   "SHR",   "CONCAT", "SLICE",  "LAND",
    "LOR",   "LNOT",   "RAND", "ROR",   "RXOR", "NEG",   "DFF",   "INV",   "BUF",   "AND2",  "OR2",    "NAND2",
    "NOR2",  "XOR2",   "XNOR2", "MUX2", "AOI",  "OAI",   "FA_S",  "FA_C",  "MASK",
};

}  // namespace

std::string_view op_name(Op op) { return kOpNames[static_cast<std::size_t>(op)]; }

Op op_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kOpNames.size(); ++i) {
        if (kOpNames[i] == name) return static_cast<Op>(i);
    }
    throw std::invalid_argument("unknown op type: " + std::string(name));
}

bool is_sequential(Op op) { return op == Op::Reg || op == Op::Dff; }
bool is_source(Op op) { return op == Op::Input || is_sequential(op); }
bool is_combinational(Op op) { return !is_source(op) && op != Op::Output; }
bool is_gate_level(Op op) { return op >= Op::Dff && op != Op::Mask; }

OpClass op_class(Op op) {
    switch (op) {
        case Op::Input:
        case Op::Const:
        case Op::Mask:
            return OpClass::Source;
        case Op::Reg:
        case Op::Dff:
            return OpClass::Sequential;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Neg:
        case Op::FaSum:
        case Op::FaCarry:
            return OpClass::Arith;
        case Op::Eq:
        case Op::Neq:
        case Op::Lt:
        case Op::Gt:
        case Op::Le:
        case Op::Ge:
            return OpClass::Compare;
        case Op::Mux:
        case Op::Mux2:
        case Op::Shl:
        case Op::Shr:
        case Op::Concat:
        case Op::Slice:
        case Op::Output:
        case Op::Buf:
            return OpClass::Route;
        default:
            return OpClass::Logic;
    }
}

int edge_type(Op src, Op dst) {
    return static_cast<int>(op_class(src)) * kOpClassCount + static_cast<int>(op_class(dst));
}

const Node& CdfGraph::add_node(Node node) {
    if (index_.contains(node.id)) throw std::invalid_argument("duplicate node id " + std::to_string(node.id));
    index_.emplace(node.id, nodes_.size());
    nodes_.push_back(std::move(node));
    in_.emplace_back();
    out_.emplace_back();
    return nodes_.back();
}

void CdfGraph::add_edge(NodeId src, NodeId dst, int operand) {
    const std::size_t s = index_of(src);
    const std::size_t d = index_of(dst);
    const std::size_t e = edges_.size();
    edges_.push_back(Edge{src, dst, operand, edge_type(nodes_[s].op, nodes_[d].op)});
    auto& ins = in_[d];
    auto pos = std::upper_bound(ins.begin(), ins.end(), operand,
                                [&](int op, std::size_t idx) { return op < edges_[idx].operand; });
    ins.insert(pos, e);
    out_[s].push_back(e);
}

void CdfGraph::connect(NodeId src, NodeId dst) {
    add_edge(src, dst, static_cast<int>(in_[index_of(dst)].size()));
}

const Node& CdfGraph::node(NodeId id) const { return nodes_[index_of(id)]; }
Node& CdfGraph::mutable_node(NodeId id) { return nodes_[index_of(id)]; }

std::size_t CdfGraph::index_of(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range("no node with id " + std::to_string(id));
    return it->second;
}

std::vector<NodeId> CdfGraph::operands(NodeId dst) const {
    std::vector<NodeId> out;
    for (std::size_t e : in_[index_of(dst)]) out.push_back(edges_[e].src);
    return out;
}

std::vector<NodeId> CdfGraph::fanout(NodeId src) const {
    std::vector<NodeId> out;
    for (std::size_t e : out_[index_of(src)]) out.push_back(edges_[e].dst);
    return out;
}

std::span<const std::size_t> CdfGraph::in_edge_indices(NodeId id) const { return in_[index_of(id)]; }
std::span<const std::size_t> CdfGraph::out_edge_indices(NodeId id) const { return out_[index_of(id)]; }

NodeId CdfGraph::max_id() const {
    NodeId m = -1;
    for (const auto& n : nodes_) m = std::max(m, n.id);
    return m;
}

std::optional<NodeId> CdfGraph::find_named(std::string_view name, Op op) const {
    for (const auto& n : nodes_) {
        if (n.op == op && n.name == name) return n.id;
    }
    return std::nullopt;
}

CdfGraph CdfGraph::induced(std::span<const NodeId> keep) const {
    std::vector<char> kept(nodes_.size(), 0);
    for (NodeId id : keep) kept[index_of(id)] = 1;
    CdfGraph g;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (kept[i]) g.add_node(nodes_[i]);
    }
    for (const auto& e : edges_) {
        if (kept[index_of(e.src)] && kept[index_of(e.dst)]) g.add_edge(e.src, e.dst, e.operand);
    }
    return g;
}

void CdfGraph::set_operands(NodeId dst, std::span<const NodeId> srcs) {
    const std::size_t d = index_of(dst);
    std::vector<Edge> kept;
    kept.reserve(edges_.size());
    for (const auto& e : edges_) {
        if (e.dst != dst) kept.push_back(e);
    }
    for (std::size_t i = 0; i < srcs.size(); ++i) {
        const Op src_op = nodes_[index_of(srcs[i])].op;
        kept.push_back(Edge{srcs[i], dst, static_cast<int>(i), edge_type(src_op, nodes_[d].op)});
    }
    edges_ = std::move(kept);
    rebuild_adjacency();
}

void CdfGraph::retype(NodeId id, Op op) {
    nodes_[index_of(id)].op = op;
    for (auto& e : edges_) {
        if (e.src == id || e.dst == id) e.etype = edge_type(node(e.src).op, node(e.dst).op);
    }
}

void CdfGraph::redirect_fanout(NodeId from, NodeId to) {
    const Op to_op = node(to).op;
    for (auto& e : edges_) {
        if (e.src == from) {
            e.src = to;
            e.etype = edge_type(to_op, node(e.dst).op);
        }
    }
    rebuild_adjacency();
}

void CdfGraph::remove_node(NodeId id) {
    const std::size_t idx = index_of(id);
    nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(idx));
    std::erase_if(edges_, [&](const Edge& e) { return e.src == id || e.dst == id; });
    index_.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
    rebuild_adjacency();
}

void CdfGraph::rebuild_adjacency() {
    in_.assign(nodes_.size(), {});
    out_.assign(nodes_.size(), {});
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        in_[index_of(edges_[e].dst)].push_back(e);
        out_[index_of(edges_[e].src)].push_back(e);
    }
    for (auto& ins : in_) {
        std::stable_sort(ins.begin(), ins.end(),
                         [&](std::size_t a, std::size_t b) { return edges_[a].operand < edges_[b].operand; });
    }
}

nlohmann::json CdfGraph::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : nodes_) {
        nlohmann::json jn = {{"id", n.id}, {"op", op_name(n.op)}, {"width", n.width}};
        if (!n.name.empty()) jn["name"] = n.name;
        if (n.op == Op::Const) jn["value"] = n.value;
        if (n.op == Op::Slice) jn["lsb"] = n.lsb;
        nodes.push_back(std::move(jn));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : edges_) {
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"etype", e.etype}, {"operand", e.operand}});
    }
    return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

CdfGraph CdfGraph::from_json(const nlohmann::json& j) {
    CdfGraph g;
    for (const auto& jn : j.at("nodes")) {
        Node n;
        n.id = jn.at("id").get<NodeId>();
        n.op = op_from_name(jn.at("op").get<std::string>());
        n.width = jn.value("width", 1);
        n.name = jn.value("name", std::string{});
        n.value = jn.value("value", std::uint64_t{0});
        n.lsb = jn.value("lsb", 0);
        g.add_node(std::move(n));
    }
    // Edges without an explicit operand index take the next free slot.
    for (const auto& je : j.at("edges")) {
        const NodeId src = je.at("src").get<NodeId>();
        const NodeId dst = je.at("dst").get<NodeId>();
        if (je.contains("operand")) {
            g.add_edge(src, dst, je.at("operand").get<int>());
        } else {
            g.connect(src, dst);
        }
    }
    return g;
}

bool CdfGraph::operator==(const CdfGraph& other) const {
    if (nodes_.size() != other.nodes_.size() || edges_.size() != other.edges_.size()) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& a = nodes_[i];
        const auto& b = other.nodes_[i];
        if (a.id != b.id || a.op != b.op || a.width != b.width || a.name != b.name || a.value != b.value ||
            a.lsb != b.lsb)
            return false;
    }
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const auto& a = edges_[i];
        const auto& b = other.edges_[i];
        if (a.src != b.src || a.dst != b.dst || a.operand != b.operand || a.etype != b.etype) return false;
    }
    return true;
}

std::vector<NodeId> find_combinational_cycle(const CdfGraph& graph) {
    const auto nodes = graph.nodes();
    const auto edges = graph.edges();
    enum : char { kWhite, kGrey, kBlack };
    std::vector<char> colour(nodes.size(), kWhite);
    std::vector<std::size_t> stack_path;
    std::vector<NodeId> cycle;

    // Iterative DFS over edges whose source is not sequential.
    std::function<bool(std::size_t)> dfs = [&](std::size_t u) -> bool {
        colour[u] = kGrey;
        stack_path.push_back(u);
        if (!is_sequential(nodes[u].op)) {
            for (std::size_t e : graph.out_edge_indices(nodes[u].id)) {
                const std::size_t v = graph.index_of(edges[e].dst);
                if (colour[v] == kGrey) {
                    auto it = std::find(stack_path.begin(), stack_path.end(), v);
                    for (; it != stack_path.end(); ++it) cycle.push_back(nodes[*it].id);
                    return true;
                }
                if (colour[v] == kWhite && dfs(v)) return true;
            }
        }
        stack_path.pop_back();
        colour[u] = kBlack;
        return false;
    };
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (colour[i] == kWhite && dfs(i)) return cycle;
    }
    return {};
}

std::vector<NodeId> combinational_order(const CdfGraph& graph) {
    const auto nodes = graph.nodes();
    const auto edges = graph.edges();
    std::vector<int> pending(nodes.size(), 0);
    for (const auto& e : edges) {
        if (!is_sequential(graph.node(e.src).op) && !is_source(graph.node(e.dst).op)) {
            ++pending[graph.index_of(e.dst)];
        }
    }
    std::vector<NodeId> order;
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (is_source(nodes[i].op) || pending[i] == 0) ready.push_back(i);
    }
    std::vector<char> emitted(nodes.size(), 0);
    // Kahn's algorithm with a FIFO keeps the order stable w.r.t. node order.
    for (std::size_t head = 0; head < ready.size(); ++head) {
        const std::size_t u = ready[head];
        if (emitted[u]) continue;
        emitted[u] = 1;
        order.push_back(nodes[u].id);
        if (is_sequential(nodes[u].op)) continue;
        for (std::size_t e : graph.out_edge_indices(nodes[u].id)) {
            const std::size_t v = graph.index_of(edges[e].dst);
            if (is_source(nodes[v].op)) continue;
            if (--pending[v] == 0) ready.push_back(v);
        }
    }
    if (order.size() != nodes.size()) throw std::logic_error("combinational cycle in graph");
    return order;
}

std::vector<std::string> validate(const CdfGraph& graph) {
    std::vector<std::string> problems;
    for (const auto& n : graph.nodes()) {
        const auto ins = graph.in_edge_indices(n.id);
        if (n.width < 1) problems.push_back("node " + std::to_string(n.id) + " has width < 1");
        if ((n.op == Op::Mux || n.op == Op::Mux2) && ins.size() != 3) {
            problems.push_back("MUX node " + std::to_string(n.id) + " has " + std::to_string(ins.size()) +
                               " in-edges");
        }
        if (n.op != Op::Input && n.op != Op::Const && ins.empty()) {
            problems.push_back("node " + std::to_string(n.id) + " (" + std::string(op_name(n.op)) +
                               ") has no in-edge");
        }
    }
    if (auto cycle = find_combinational_cycle(graph); !cycle.empty()) {
        problems.push_back("combinational cycle through node " + std::to_string(cycle.front()));
    }
    return problems;
}

}  // namespace cfusion
