#include <algorithm>
#include <map>
#include <optional>

#include "circuitfusion/hdl.hpp"

namespace cfusion::hdl {
namespace {

int bits_needed(std::uint64_t v) {
    int w = 1;
    while (w < 64 && (v >> w) != 0) ++w;
    return w;
}

class Elaborator {
public:
    explicit Elaborator(const RtlDesign& d) : d_(d) {}

    Elaboration run() {
        for (std::size_t i = 0; i < d_.ports.size(); ++i) {
            const auto& p = d_.ports[i];
            if (p.direction != Direction::Input) continue;
            origin_ = NodeOrigin{NodeOrigin::Kind::Port, i, p.name};
            inputs_[p.name] = add(Op::Input, p.width, p.span, p.name);
        }
        for (std::size_t i = 0; i < d_.nets.size(); ++i) {
            const auto& n = d_.nets[i];
            if (n.kind != NetKind::Reg) continue;
            origin_ = NodeOrigin{NodeOrigin::Kind::Net, i, n.name};
            regs_[n.name] = add(Op::Reg, n.width, n.span, n.name);
        }
        for (std::size_t i = 0; i < d_.assigns.size(); ++i) wire_value(d_.assigns[i].target);
        for (std::size_t b = 0; b < d_.always_blocks.size(); ++b) {
            block_ = b;
            std::map<std::string, NodeId> env;
            statement(*d_.always_blocks[b].body, env);
            for (const auto& [reg, value] : env) {
                const NodeId r = regs_.at(reg);
                check_fits(value, g_.node(r).width, reg);
                g_.connect(value, r);
            }
        }
        for (std::size_t i = 0; i < d_.ports.size(); ++i) {
            const auto& p = d_.ports[i];
            if (p.direction != Direction::Output) continue;
            const Net* net = d_.find_net(p.name);
            const NodeId driver = net->kind == NetKind::Reg ? regs_.at(p.name) : wire_value(p.name);
            origin_ = NodeOrigin{NodeOrigin::Kind::Port, i, p.name};
            const NodeId out = add(Op::Output, p.width, p.span, p.name);
            check_fits(driver, p.width, p.name);
            g_.connect(driver, out);
        }
        return Elaboration{std::move(g_), std::move(origins_)};
    }

private:
    NodeId add(Op op, int width, SourceSpan span, std::string name = {}) {
        Node n;
        n.id = next_id_++;
        n.op = op;
        n.width = width;
        n.name = std::move(name);
        n.span = span;
        g_.add_node(std::move(n));
        origins_.push_back(origin_);
        return next_id_ - 1;
    }

    NodeId op_node(Op op, int width, SourceSpan span, std::initializer_list<NodeId> operands) {
        const NodeId id = add(op, width, span);
        for (NodeId src : operands) g_.connect(src, id);
        return id;
    }

    int width_of(NodeId id) const { return g_.node(id).width; }

    void check_fits(NodeId value, int target_width, const std::string& target) const {
        if (width_of(value) > target_width) {
            throw WidthMismatch(value, "expression of width " + std::to_string(width_of(value)) + " assigned to '" +
                                           target + "' of width " + std::to_string(target_width));
        }
    }

    NodeId wire_value(const std::string& name) {
        if (auto it = wires_.find(name); it != wires_.end()) return it->second;
        if (auto it = std::find(resolving_.begin(), resolving_.end(), name); it != resolving_.end()) {
            throw CombinationalLoop(std::vector<std::string>(it, resolving_.end()));
        }
        auto a = std::find_if(d_.assigns.begin(), d_.assigns.end(), [&](const Assign& x) { return x.target == name; });
        if (a == d_.assigns.end()) throw UnsupportedConstruct("undriven wire " + name, 0);
        resolving_.push_back(name);
        const NodeOrigin saved = origin_;
        origin_ = NodeOrigin{NodeOrigin::Kind::Assign, static_cast<std::size_t>(a - d_.assigns.begin()), name};
        const NodeId v = expr(*a->expr);
        origin_ = saved;
        resolving_.pop_back();
        check_fits(v, d_.find_net(name)->width, name);
        wires_[name] = v;
        return v;
    }

    NodeId ident(const std::string& name) {
        if (auto it = inputs_.find(name); it != inputs_.end()) return it->second;
        if (auto it = regs_.find(name); it != regs_.end()) return it->second;
        if (!d_.find_net(name)) throw UndeclaredIdentifier(name);
        return wire_value(name);
    }

    NodeId expr(const Expr& e) {
        switch (e.kind) {
            case Expr::Kind::Ident:
                return ident(e.name);
            case Expr::Kind::Number: {
                const int w = e.width > 0 ? e.width : bits_needed(e.value);
                const NodeId id = add(Op::Const, w, e.span);
                g_.mutable_node(id).value = e.value;
                return id;
            }
            case Expr::Kind::Index:
            case Expr::Kind::Range: {
                const NodeId src = ident(e.name);
                const NodeId id = op_node(Op::Slice, e.msb - e.lsb + 1, e.span, {src});
                g_.mutable_node(id).lsb = e.lsb;
                const int declared = d_.find_net(e.name)->width;
                if (e.msb >= declared) {
                    throw WidthMismatch(id, "select [" + std::to_string(e.msb) + "] beyond width " +
                                                std::to_string(declared) + " of '" + e.name + "'");
                }
                return id;
            }
            case Expr::Kind::Unary: {
                const NodeId a = expr(*e.args[0]);
                const int w = width_of(a);
                if (e.name == "~") return op_node(Op::Not, w, e.span, {a});
                if (e.name == "-") return op_node(Op::Neg, w, e.span, {a});
                if (e.name == "!") return op_node(Op::LogicNot, 1, e.span, {a});
                if (e.name == "&") return op_node(Op::ReduceAnd, 1, e.span, {a});
                if (e.name == "|") return op_node(Op::ReduceOr, 1, e.span, {a});
                if (e.name == "^") return op_node(Op::ReduceXor, 1, e.span, {a});
                const Op inner = e.name == "~&" ? Op::ReduceAnd : e.name == "~|" ? Op::ReduceOr : Op::ReduceXor;
                const NodeId r = op_node(inner, 1, e.span, {a});
                return op_node(Op::Not, 1, e.span, {r});
            }
            case Expr::Kind::Binary: {
                const NodeId a = expr(*e.args[0]);
                const NodeId b = expr(*e.args[1]);
                const int wmax = std::max(width_of(a), width_of(b));
                static const std::map<std::string, Op, std::less<>> arith = {
                    {"+", Op::Add}, {"-", Op::Sub}, {"*", Op::Mul}, {"&", Op::And}, {"|", Op::Or}, {"^", Op::Xor},
                    {"~^", Op::Xnor}};
                static const std::map<std::string, Op, std::less<>> boolean = {
                    {"==", Op::Eq}, {"!=", Op::Neq}, {"<", Op::Lt},        {">", Op::Gt},
                    {"<=", Op::Le}, {">=", Op::Ge},  {"&&", Op::LogicAnd}, {"||", Op::LogicOr}};
                if (auto it = arith.find(e.name); it != arith.end()) return op_node(it->second, wmax, e.span, {a, b});
                if (auto it = boolean.find(e.name); it != boolean.end()) return op_node(it->second, 1, e.span, {a, b});
                if (e.name == "<<") return op_node(Op::Shl, width_of(a), e.span, {a, b});
                if (e.name == ">>") return op_node(Op::Shr, width_of(a), e.span, {a, b});
                throw UnsupportedConstruct("operator " + e.name, e.span.offset);
            }
            case Expr::Kind::Ternary: {
                const NodeId s = expr(*e.args[0]);
                const NodeId a = expr(*e.args[1]);
                const NodeId b = expr(*e.args[2]);
                return op_node(Op::Mux, std::max(width_of(a), width_of(b)), e.span, {s, a, b});
            }
            case Expr::Kind::Concat: {
                std::vector<NodeId> parts;
                int w = 0;
                for (const auto& arg : e.args) {
                    parts.push_back(expr(*arg));
                    w += width_of(parts.back());
                }
                const NodeId id = add(Op::Concat, std::min(w, 64), e.span);
                for (NodeId p : parts) g_.connect(p, id);
                if (w > 64) throw UnsupportedConstruct("width > 64", e.span.offset);
                return id;
            }
            case Expr::Kind::Replicate: {
                const NodeId part = expr(*e.args[0]);
                const int w = width_of(part) * e.count;
                if (w > 64) throw UnsupportedConstruct("width > 64", e.span.offset);
                const NodeId id = add(Op::Concat, w, e.span);
                for (int i = 0; i < e.count; ++i) g_.connect(part, id);
                return id;
            }
        }
        throw UnsupportedConstruct("expression", e.span.offset);
    }

    NodeId hold(const std::map<std::string, NodeId>& env, const std::string& reg) const {
        auto it = env.find(reg);
        return it == env.end() ? regs_.at(reg) : it->second;
    }

    NodeId mux(NodeId sel, NodeId a, NodeId b, SourceSpan span, const std::string& reg) {
        const NodeOrigin saved = origin_;
        origin_ = NodeOrigin{NodeOrigin::Kind::Always, block_, reg};
        const NodeId id = op_node(Op::Mux, std::max(width_of(a), width_of(b)), span, {sel, a, b});
        origin_ = saved;
        return id;
    }

    /// Merges branch environments into `env`: registers whose value differs
    /// between branches get a MUX selecting on `sel`.
    void merge(std::map<std::string, NodeId>& env, NodeId sel, const std::map<std::string, NodeId>& then_env,
               const std::map<std::string, NodeId>& else_env, SourceSpan span) {
        std::vector<std::string> regs;
        for (const auto& [r, v] : then_env) regs.push_back(r);
        for (const auto& [r, v] : else_env) {
            if (!then_env.contains(r)) regs.push_back(r);
        }
        std::sort(regs.begin(), regs.end());
        std::map<std::string, NodeId> merged = env;
        for (const auto& r : regs) {
            const NodeId t = hold(then_env, r);
            const NodeId f = hold(else_env, r);
            merged[r] = t == f ? t : mux(sel, t, f, span, r);
        }
        env = std::move(merged);
    }

    void statement(const Stmt& s, std::map<std::string, NodeId>& env) {
        switch (s.kind) {
            case Stmt::Kind::Block:
                for (const auto& b : s.body) statement(*b, env);
                return;
            case Stmt::Kind::NonBlocking: {
                origin_ = NodeOrigin{NodeOrigin::Kind::Always, block_, s.target};
                const NodeId v = expr(*s.expr);
                check_fits(v, g_.node(regs_.at(s.target)).width, s.target);
                env[s.target] = v;
                return;
            }
            case Stmt::Kind::If: {
                origin_ = NodeOrigin{NodeOrigin::Kind::Always, block_, {}};
                const NodeId cond = expr(*s.expr);
                auto then_env = env;
                statement(*s.then_branch, then_env);
                auto else_env = env;
                if (s.else_branch) statement(*s.else_branch, else_env);
                merge(env, cond, then_env, else_env, s.span);
                return;
            }
            case Stmt::Kind::Case: {
                origin_ = NodeOrigin{NodeOrigin::Kind::Always, block_, {}};
                const NodeId subject = expr(*s.expr);
                std::vector<NodeId> conds;
                std::vector<std::map<std::string, NodeId>> envs;
                std::optional<std::map<std::string, NodeId>> default_env;
                for (const auto& item : s.items) {
                    if (item.labels.empty()) {
                        default_env = env;
                        statement(*item.body, *default_env);
                        continue;
                    }
                    origin_ = NodeOrigin{NodeOrigin::Kind::Always, block_, {}};
                    NodeId cond = -1;
                    for (const auto& label : item.labels) {
                        const NodeId l = expr(*label);
                        const NodeId eq = op_node(Op::Eq, 1, label->span, {subject, l});
                        cond = cond < 0 ? eq : op_node(Op::LogicOr, 1, label->span, {cond, eq});
                    }
                    conds.push_back(cond);
                    envs.push_back(env);
                    statement(*item.body, envs.back());
                }
                // First matching item wins: fold the chain from the last item back.
                std::map<std::string, NodeId> acc = default_env ? *default_env : env;
                for (std::size_t i = envs.size(); i-- > 0;) merge(acc, conds[i], envs[i], acc, s.span);
                env = std::move(acc);
                return;
            }
        }
    }

    const RtlDesign& d_;
    CdfGraph g_;
    std::vector<NodeOrigin> origins_;
    NodeOrigin origin_;
    NodeId next_id_ = 0;
    std::size_t block_ = 0;
    std::map<std::string, NodeId> inputs_;
    std::map<std::string, NodeId> regs_;
    std::map<std::string, NodeId> wires_;
    std::vector<std::string> resolving_;
};

}  // namespace

Elaboration elaborate_with_origins(const RtlDesign& design) {
    Elaborator e(design);
    Elaboration out = e.run();
    if (auto cycle = find_combinational_cycle(out.graph); !cycle.empty()) {
        std::vector<std::string> names;
        for (NodeId id : cycle) {
            const auto& n = out.graph.node(id);
            names.push_back(n.name.empty() ? std::string(op_name(n.op)) + "#" + std::to_string(id) : n.name);
        }
        throw CombinationalLoop(std::move(names));
    }
    return out;
}

CdfGraph elaborate(const RtlDesign& design) { return elaborate_with_origins(design).graph; }

}  // namespace cfusion::hdl
