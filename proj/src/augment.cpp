#include "circuitfusion/augment.hpp"

#include <algorithm>
#include <bit>
#include <random>
#include <set>

namespace cfusion {
namespace {

bool commutative(Op op) {
    switch (op) {
        case Op::Add:
        case Op::Mul:
        case Op::And:
        case Op::Or:
        case Op::Xor:
        case Op::Xnor:
        case Op::Eq:
        case Op::Neq:
        case Op::LogicAnd:
        case Op::LogicOr:
            return true;
        default:
            return false;
    }
}

/// True when both operands of a two-input bitwise node have the node's width,
/// so that bitwise identities hold without zero-extension artifacts.
bool same_width_binary(const CdfGraph& g, NodeId id) {
    const auto ops = g.operands(id);
    if (ops.size() != 2) return false;
    const int w = g.node(id).width;
    return g.node(ops[0]).width == w && g.node(ops[1]).width == w;
}

class Rewriter {
public:
    explicit Rewriter(const Cone& c) : cone_(c), g_(c.graph), next_(c.graph.max_id() + 1) {}

    NodeId add(Op op, int width, std::initializer_list<NodeId> operands) {
        Node n;
        n.id = next_++;
        n.op = op;
        n.width = width;
        g_.add_node(std::move(n));
        for (NodeId s : operands) g_.connect(s, next_ - 1);
        return next_ - 1;
    }

    NodeId replicate(NodeId bit, int width) {
        if (width == 1) return bit;
        Node n;
        n.id = next_++;
        n.op = Op::Concat;
        n.width = width;
        g_.add_node(std::move(n));
        for (int i = 0; i < width; ++i) g_.connect(bit, next_ - 1);
        return next_ - 1;
    }

    CdfGraph& graph() { return g_; }

    Cone finish() {
        const std::set<NodeId> keep_fixed = [&] {
            std::set<NodeId> s(cone_.roots.begin(), cone_.roots.end());
            s.insert(cone_.boundary.begin(), cone_.boundary.end());
            return s;
        }();
        // Drop members that no longer feed anything.
        for (bool changed = true; changed;) {
            changed = false;
            for (const auto& n : g_.nodes()) {
                if (!keep_fixed.contains(n.id) && g_.out_edge_indices(n.id).empty()) {
                    g_.remove_node(n.id);
                    changed = true;
                    break;
                }
            }
        }
        Cone out = cone_;
        out.graph = std::move(g_);
        out.members.clear();
        for (const auto& n : out.graph.nodes()) {
            if (!keep_fixed.contains(n.id)) out.members.push_back(n.id);
        }
        std::sort(out.members.begin(), out.members.end());
        return out;
    }

private:
    const Cone& cone_;
    CdfGraph g_;
    NodeId next_;
};

bool is_member(const Cone& c, NodeId id) { return std::binary_search(c.members.begin(), c.members.end(), id); }

std::uint64_t next_random(std::mt19937_64& rng, std::uint64_t bound) { return bound == 0 ? 0 : rng() % bound; }

}  // namespace

std::string_view rule_name(RewriteRule rule) {
    switch (rule) {
        case RewriteRule::DoubleNegation: return "double_negation";
        case RewriteRule::DeMorganAnd: return "de_morgan_and";
        case RewriteRule::DeMorganOr: return "de_morgan_or";
        case RewriteRule::CommuteOperands: return "commute_operands";
        case RewriteRule::MuxToBoolean: return "mux_to_boolean";
        case RewriteRule::XorExpand: return "xor_expand";
        case RewriteRule::AndAbsorbInverse: return "and_absorb_inverse";
    }
    return "unknown";
}

bool rule_applies(const Cone& cone, NodeId node, RewriteRule rule) {
    if (!is_member(cone, node)) return false;
    const CdfGraph& g = cone.graph;
    const Node& n = g.node(node);
    const auto ops = g.operands(node);
    switch (rule) {
        case RewriteRule::DoubleNegation: {
            if (n.op != Op::Not || ops.size() != 1) return false;
            const Node& inner = g.node(ops[0]);
            if (inner.op != Op::Not || !is_member(cone, inner.id)) return false;
            const auto inner_ops = g.operands(inner.id);
            return inner_ops.size() == 1 && inner.width == n.width && g.node(inner_ops[0]).width == n.width;
        }
        case RewriteRule::DeMorganAnd:
            return n.op == Op::And && same_width_binary(g, node);
        case RewriteRule::DeMorganOr:
            return n.op == Op::Or && same_width_binary(g, node);
        case RewriteRule::CommuteOperands:
            return commutative(n.op) && ops.size() == 2 && ops[0] != ops[1];
        case RewriteRule::MuxToBoolean:
            return n.op == Op::Mux && ops.size() == 3 && g.node(ops[0]).width == 1 &&
                   g.node(ops[1]).width <= n.width && g.node(ops[2]).width <= n.width;
        case RewriteRule::XorExpand:
            return n.op == Op::Xor && same_width_binary(g, node);
        case RewriteRule::AndAbsorbInverse:
            return n.op == Op::And && same_width_binary(g, node);
    }
    return false;
}

Cone apply_rule(const Cone& cone, NodeId node, RewriteRule rule) {
    if (!rule_applies(cone, node, rule)) {
        throw std::invalid_argument(std::string(rule_name(rule)) + " does not apply at node " + std::to_string(node));
    }
    Rewriter rw(cone);
    CdfGraph& g = rw.graph();
    const auto ops = g.operands(node);
    const int w = g.node(node).width;
    switch (rule) {
        case RewriteRule::DoubleNegation: {
            const NodeId x = g.operands(ops[0]).at(0);
            g.redirect_fanout(node, x);
            break;
        }
        case RewriteRule::DeMorganAnd:
        case RewriteRule::DeMorganOr: {
            const NodeId na = rw.add(Op::Not, w, {ops[0]});
            const NodeId nb = rw.add(Op::Not, w, {ops[1]});
            const Op inner = rule == RewriteRule::DeMorganAnd ? Op::Or : Op::And;
            const NodeId mid = rw.add(inner, w, {na, nb});
            g.retype(node, Op::Not);
            const NodeId operand[] = {mid};
            g.set_operands(node, operand);
            break;
        }
        case RewriteRule::CommuteOperands: {
            const NodeId swapped[] = {ops[1], ops[0]};
            g.set_operands(node, swapped);
            break;
        }
        case RewriteRule::MuxToBoolean: {
            const NodeId sel = rw.replicate(ops[0], w);
            const NodeId inv = rw.add(Op::Not, 1, {ops[0]});
            const NodeId inv_sel = rw.replicate(inv, w);
            const NodeId lhs = rw.add(Op::And, w, {sel, ops[1]});
            const NodeId rhs = rw.add(Op::And, w, {inv_sel, ops[2]});
            g.retype(node, Op::Or);
            const NodeId operand[] = {lhs, rhs};
            g.set_operands(node, operand);
            break;
        }
        case RewriteRule::XorExpand: {
            const NodeId na = rw.add(Op::Not, w, {ops[0]});
            const NodeId nb = rw.add(Op::Not, w, {ops[1]});
            const NodeId lhs = rw.add(Op::And, w, {ops[0], nb});
            const NodeId rhs = rw.add(Op::And, w, {na, ops[1]});
            g.retype(node, Op::Or);
            const NodeId operand[] = {lhs, rhs};
            g.set_operands(node, operand);
            break;
        }
        case RewriteRule::AndAbsorbInverse: {
            // a & b == a & (~a | b)
            const NodeId na = rw.add(Op::Not, w, {ops[0]});
            const NodeId either = rw.add(Op::Or, w, {na, ops[1]});
            const NodeId operand[] = {ops[0], either};
            g.set_operands(node, operand);
            break;
        }
    }
    return rw.finish();
}

std::vector<RewriteVariant> apply_rewrites(const Cone& cone, int count, std::uint64_t seed, int max_steps) {
    if (count < 1) throw std::invalid_argument("apply_rewrites: count must be >= 1");
    std::vector<RewriteVariant> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int v = 0; v < count; ++v) {
        std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(v) + 1);
        RewriteVariant variant{cone, true, {}};
        const int steps = 1 + static_cast<int>(next_random(rng, static_cast<std::uint64_t>(std::max(1, max_steps))));
        // A later step can undo an earlier one (commuting twice); keep going until
        // the result differs or a step budget runs out.
        for (int attempt = 0; attempt < steps + 8; ++attempt) {
            if (attempt >= steps && !cones_isomorphic(variant.cone, cone)) break;
            std::vector<std::pair<NodeId, RewriteRule>> sites;
            for (NodeId m : variant.cone.members) {
                for (RewriteRule r : kAllRules) {
                    if (rule_applies(variant.cone, m, r)) sites.emplace_back(m, r);
                }
            }
            if (sites.empty()) break;
            const auto [node, rule] = sites[next_random(rng, sites.size())];
            variant.cone = apply_rule(variant.cone, node, rule);
            variant.applied.emplace_back(rule_name(rule));
            variant.unchanged = false;
        }
        if (!variant.unchanged && !verify_equivalent(cone, variant.cone)) {
            throw std::logic_error("rewrite produced a non-equivalent cone");
        }
        out.push_back(std::move(variant));
    }
    return out;
}

std::uint64_t width_mask(int width) {
    return width >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1;
}

std::uint64_t evaluate_op(const Node& node, std::span<const std::uint64_t> v, std::span<const int> widths) {
    const std::uint64_t mask = width_mask(node.width);
    auto arg = [&](std::size_t i) { return v[i] & width_mask(widths[i]); };
    auto boolean = [](bool b) -> std::uint64_t { return b ? 1 : 0; };
    switch (node.op) {
        case Op::Const: return node.value & mask;
        case Op::Add: return (arg(0) + arg(1)) & mask;
        case Op::Sub: return (arg(0) - arg(1)) & mask;
        case Op::Mul: return (arg(0) * arg(1)) & mask;
        case Op::And: return arg(0) & arg(1) & mask;
        case Op::Or: return (arg(0) | arg(1)) & mask;
        case Op::Xor: return (arg(0) ^ arg(1)) & mask;
        case Op::Xnor: return ~(arg(0) ^ arg(1)) & mask;
        case Op::Not: return ~arg(0) & mask;
        case Op::Neg: return (~arg(0) + 1) & mask;
        case Op::Mux: return (arg(0) != 0 ? arg(1) : arg(2)) & mask;
        case Op::Eq: return boolean(arg(0) == arg(1));
        case Op::Neq: return boolean(arg(0) != arg(1));
        case Op::Lt: return boolean(arg(0) < arg(1));
        case Op::Gt: return boolean(arg(0) > arg(1));
        case Op::Le: return boolean(arg(0) <= arg(1));
        case Op::Ge: return boolean(arg(0) >= arg(1));
        case Op::Shl: return arg(1) >= 64 ? 0 : (arg(0) << arg(1)) & mask;
        case Op::Shr: return arg(1) >= 64 ? 0 : (arg(0) >> arg(1)) & mask;
        case Op::Concat: {
            std::uint64_t acc = 0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                acc = (widths[i] >= 64 ? 0 : acc << widths[i]) | arg(i);
            }
            return acc & mask;
        }
        case Op::Slice: return node.lsb >= 64 ? 0 : (arg(0) >> node.lsb) & mask;
        case Op::LogicAnd: return boolean(arg(0) != 0 && arg(1) != 0);
        case Op::LogicOr: return boolean(arg(0) != 0 || arg(1) != 0);
        case Op::LogicNot: return boolean(arg(0) == 0);
        case Op::ReduceAnd: return boolean(arg(0) == width_mask(widths[0]));
        case Op::ReduceOr: return boolean(arg(0) != 0);
        case Op::ReduceXor: return static_cast<std::uint64_t>(std::popcount(arg(0)) & 1);
        case Op::Output:
        case Op::Buf: return arg(0) & mask;
        case Op::Inv: return ~arg(0) & mask;
        case Op::And2: return arg(0) & arg(1) & mask;
        case Op::Or2: return (arg(0) | arg(1)) & mask;
        case Op::Nand2: return ~(arg(0) & arg(1)) & mask;
        case Op::Nor2: return ~(arg(0) | arg(1)) & mask;
        case Op::Xor2: return (arg(0) ^ arg(1)) & mask;
        case Op::Xnor2: return ~(arg(0) ^ arg(1)) & mask;
        case Op::Mux2: return (arg(0) != 0 ? arg(1) : arg(2)) & mask;
        case Op::Aoi: return ~((arg(0) & arg(1)) | arg(2)) & mask;
        case Op::Oai: return ~((arg(0) | arg(1)) & arg(2)) & mask;
        case Op::FaSum: return (arg(0) ^ arg(1) ^ arg(2)) & mask;
        case Op::FaCarry: return ((arg(0) & arg(1)) | (arg(0) & arg(2)) | (arg(1) & arg(2))) & mask;
        default:
            throw std::invalid_argument("cannot evaluate op " + std::string(op_name(node.op)));
    }
}

int boundary_bits(const Cone& cone) {
    int bits = 0;
    for (NodeId b : cone.boundary) bits += cone.graph.node(b).width;
    return bits;
}

std::uint64_t evaluate_cone(const Cone& cone, const BoundaryAssignment& assignment) {
    const CdfGraph& g = cone.graph;
    std::vector<std::uint64_t> value(g.size(), 0);
    for (NodeId b : cone.boundary) {
        auto it = assignment.find(b);
        if (it == assignment.end()) throw MissingAssignment(b);
        value[g.index_of(b)] = it->second & width_mask(g.node(b).width);
    }
    std::vector<std::uint64_t> args;
    std::vector<int> widths;
    for (NodeId id : combinational_order(g)) {
        const Node& n = g.node(id);
        if (is_source(n.op)) continue;
        args.clear();
        widths.clear();
        for (NodeId s : g.operands(id)) {
            args.push_back(value[g.index_of(s)]);
            widths.push_back(g.node(s).width);
        }
        value[g.index_of(id)] = evaluate_op(n, args, widths);
    }
    const auto drivers = g.operands(cone.root);
    if (drivers.empty()) throw std::invalid_argument("cone root has no driver");
    return value[g.index_of(drivers.front())] & width_mask(cone.root_node().width);
}

std::uint64_t simulate_cone(const Cone& cone, const BoundaryAssignment& assignment) {
    const int bits = boundary_bits(cone);
    if (bits > kExhaustiveBudgetBits) throw BudgetExceeded(bits, kExhaustiveBudgetBits);
    return evaluate_cone(cone, assignment);
}

namespace {

struct Signature {
    std::vector<std::pair<std::string, int>> boundary;  // sorted by name
    std::vector<NodeId> a_ids;
    std::vector<NodeId> b_ids;
};

Signature match_boundaries(const Cone& a, const Cone& b) {
    auto named = [](const Cone& c) {
        std::vector<std::tuple<std::string, int, NodeId>> out;
        for (NodeId id : c.boundary) out.emplace_back(c.graph.node(id).name, c.graph.node(id).width, id);
        std::sort(out.begin(), out.end());
        return out;
    };
    const auto na = named(a);
    const auto nb = named(b);
    if (a.root_node().width != b.root_node().width) throw BoundaryMismatch("root widths differ");
    if (na.size() != nb.size()) throw BoundaryMismatch("boundary sizes differ");
    Signature sig;
    for (std::size_t i = 0; i < na.size(); ++i) {
        const auto& [name_a, width_a, id_a] = na[i];
        const auto& [name_b, width_b, id_b] = nb[i];
        if (name_a != name_b || width_a != width_b) {
            throw BoundaryMismatch(name_a + "/" + std::to_string(width_a) + " vs " + name_b + "/" +
                                   std::to_string(width_b));
        }
        sig.boundary.emplace_back(name_a, width_a);
        sig.a_ids.push_back(id_a);
        sig.b_ids.push_back(id_b);
    }
    return sig;
}

bool agree(const Cone& a, const Cone& b, const Signature& sig, std::uint64_t packed_or_unused,
           const std::vector<std::uint64_t>& values) {
    (void)packed_or_unused;
    BoundaryAssignment va;
    BoundaryAssignment vb;
    for (std::size_t i = 0; i < values.size(); ++i) {
        va[sig.a_ids[i]] = values[i];
        vb[sig.b_ids[i]] = values[i];
    }
    return evaluate_cone(a, va) == evaluate_cone(b, vb);
}

}  // namespace

bool check_equivalence(const Cone& a, const Cone& b) {
    const Signature sig = match_boundaries(a, b);
    int bits = 0;
    for (const auto& [name, w] : sig.boundary) bits += w;
    if (bits > kExhaustiveBudgetBits) throw BudgetExceeded(bits, kExhaustiveBudgetBits);
    std::vector<std::uint64_t> values(sig.boundary.size());
    const std::uint64_t total = std::uint64_t{1} << bits;
    for (std::uint64_t packed = 0; packed < total; ++packed) {
        std::uint64_t rest = packed;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const int w = sig.boundary[i].second;
            values[i] = rest & width_mask(w);
            rest >>= w;
        }
        if (!agree(a, b, sig, packed, values)) return false;
    }
    return true;
}

bool spot_check_equivalence(const Cone& a, const Cone& b, int samples, std::uint64_t seed) {
    const Signature sig = match_boundaries(a, b);
    std::mt19937_64 rng(seed);
    std::vector<std::uint64_t> values(sig.boundary.size());
    for (int s = 0; s < samples; ++s) {
        for (std::size_t i = 0; i < values.size(); ++i) values[i] = rng() & width_mask(sig.boundary[i].second);
        if (!agree(a, b, sig, 0, values)) return false;
    }
    return true;
}

bool verify_equivalent(const Cone& a, const Cone& b) {
    if (boundary_bits(a) <= kExhaustiveBudgetBits) return check_equivalence(a, b);
    return spot_check_equivalence(a, b, kSpotCheckSamples, 0x5eed);
}

}  // namespace cfusion
