#include <algorithm>
#include <map>
#include <sstream>

#include "circuitfusion/hdl.hpp"

namespace cfusion::hdl {
namespace {

using RegSet = std::set<std::string, std::less<>>;

StmtPtr empty_block() {
    auto s = std::make_shared<Stmt>();
    s->kind = Stmt::Kind::Block;
    return s;
}

/// Drops every nonblocking assignment to a register outside `keep`. Case items
/// are kept (with empty bodies) so label priority is unchanged.
StmtPtr prune(const StmtPtr& s, const RegSet& keep) {
    if (!s) return nullptr;
    switch (s->kind) {
        case Stmt::Kind::NonBlocking:
            return keep.contains(s->target) ? s : nullptr;
        case Stmt::Kind::Block: {
            auto out = std::make_shared<Stmt>(*s);
            out->body.clear();
            for (const auto& b : s->body) {
                if (auto p = prune(b, keep)) out->body.push_back(p);
            }
            return out->body.empty() ? nullptr : out;
        }
        case Stmt::Kind::If: {
            auto t = prune(s->then_branch, keep);
            auto e = prune(s->else_branch, keep);
            if (!t && !e) return nullptr;
            auto out = std::make_shared<Stmt>(*s);
            out->then_branch = t ? t : empty_block();
            out->else_branch = e;
            return out;
        }
        case Stmt::Kind::Case: {
            auto out = std::make_shared<Stmt>(*s);
            bool any = false;
            for (auto& item : out->items) {
                auto p = prune(item.body, keep);
                any = any || p != nullptr;
                item.body = p ? p : empty_block();
            }
            return any ? out : nullptr;
        }
    }
    return nullptr;
}

void reads_of(const Expr& e, std::vector<std::string>& out) {
    if (e.kind == Expr::Kind::Ident || e.kind == Expr::Kind::Index || e.kind == Expr::Kind::Range) out.push_back(e.name);
    for (const auto& a : e.args) reads_of(*a, out);
}

void reads_of(const Stmt& s, std::vector<std::string>& out) {
    if (s.expr) reads_of(*s.expr, out);
    for (const auto& b : s.body) reads_of(*b, out);
    if (s.then_branch) reads_of(*s.then_branch, out);
    if (s.else_branch) reads_of(*s.else_branch, out);
    for (const auto& item : s.items) {
        for (const auto& l : item.labels) reads_of(*l, out);
        reads_of(*item.body, out);
    }
}

std::string range(int width) { return width > 1 ? "[" + std::to_string(width - 1) + ":0] " : ""; }

void print(const Stmt& s, int indent, std::ostringstream& os) {
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    switch (s.kind) {
        case Stmt::Kind::Block:
            if (s.body.empty()) {
                os << "begin end\n";
                return;
            }
            os << "begin\n";
            for (const auto& b : s.body) {
                os << pad << "  ";
                print(*b, indent + 1, os);
            }
            os << pad << "end\n";
            return;
        case Stmt::Kind::NonBlocking:
            os << s.target << " <= " << to_verilog(*s.expr) << ";\n";
            return;
        case Stmt::Kind::If:
            os << "if (" << to_verilog(*s.expr) << ") ";
            print(*s.then_branch, indent, os);
            if (s.else_branch) {
                os << pad << "else ";
                print(*s.else_branch, indent, os);
            }
            return;
        case Stmt::Kind::Case:
            os << "case (" << to_verilog(*s.expr) << ")\n";
            for (const auto& item : s.items) {
                os << pad << "  ";
                if (item.labels.empty()) {
                    os << "default";
                } else {
                    for (std::size_t i = 0; i < item.labels.size(); ++i) os << (i ? ", " : "") << to_verilog(*item.labels[i]);
                }
                os << ": ";
                print(*item.body, indent + 1, os);
            }
            os << pad << "endcase\n";
            return;
    }
}

}  // namespace

std::string slice_code(const RtlDesign& design, const std::set<NodeId>& node_ids) {
    if (node_ids.empty()) throw DanglingReference("empty node set");
    const Elaboration elab = elaborate_with_origins(design);

    std::set<std::size_t> kept_assigns;
    RegSet kept_regs;
    RegSet kept_inputs;
    for (NodeId id : node_ids) {
        if (!elab.graph.contains(id)) throw DanglingReference("node " + std::to_string(id) + " not in design graph");
        const NodeOrigin& o = elab.origins[elab.graph.index_of(id)];
        const Node& n = elab.graph.node(id);
        switch (o.kind) {
            case NodeOrigin::Kind::Port:
                if (n.op == Op::Input) {
                    kept_inputs.insert(o.signal);
                } else if (design.find_net(o.signal)->kind == NetKind::Reg) {
                    kept_regs.insert(o.signal);
                } else {
                    for (std::size_t i = 0; i < design.assigns.size(); ++i) {
                        if (design.assigns[i].target == o.signal) kept_assigns.insert(i);
                    }
                }
                break;
            case NodeOrigin::Kind::Net:
                kept_regs.insert(o.signal);
                break;
            case NodeOrigin::Kind::Assign:
                kept_assigns.insert(o.index);
                break;
            case NodeOrigin::Kind::Always:
                if (!o.signal.empty()) kept_regs.insert(o.signal);
                break;
        }
    }
    if (kept_assigns.empty() && kept_regs.empty() && kept_inputs.empty()) {
        throw DanglingReference("no declaration or statement produced the selected nodes");
    }

    std::vector<std::pair<std::size_t, StmtPtr>> blocks;
    for (std::size_t b = 0; b < design.always_blocks.size(); ++b) {
        if (auto body = prune(design.always_blocks[b].body, kept_regs)) blocks.emplace_back(b, body);
    }

    // Pure alias wires (`assign t = a;`) produce no node; keep them so that
    // boundary signal names match the original design.
    std::vector<std::string> reads;
    for (std::size_t a : kept_assigns) reads_of(*design.assigns[a].expr, reads);
    for (const auto& [b, body] : blocks) reads_of(*body, reads);
    for (std::size_t i = 0; i < reads.size(); ++i) {
        const std::string name = reads[i];
        for (std::size_t a = 0; a < design.assigns.size(); ++a) {
            const auto& as = design.assigns[a];
            if (as.target == name && as.expr->kind == Expr::Kind::Ident && !kept_assigns.contains(a)) {
                kept_assigns.insert(a);
                reads.push_back(as.expr->name);
            }
        }
    }

    RegSet defined(kept_regs.begin(), kept_regs.end());
    for (std::size_t a : kept_assigns) defined.insert(design.assigns[a].target);
    RegSet inputs = kept_inputs;
    for (const auto& r : reads) {
        if (!defined.contains(r)) inputs.insert(r);
    }
    const std::string clock = design.clock();

    std::vector<std::string> port_lines;
    if (!blocks.empty()) port_lines.push_back("input " + clock);
    for (const auto& net : design.nets) {
        if (inputs.contains(net.name) && (net.name != clock || blocks.empty())) port_lines.push_back("input " + range(net.width) + net.name);
    }
    std::vector<std::string> wire_lines;
    for (const auto& net : design.nets) {
        if (kept_regs.contains(net.name)) {
            port_lines.push_back("output reg " + range(net.width) + net.name);
        } else if (defined.contains(net.name)) {
            const Port* p = design.find_port(net.name);
            if (p && p->direction == Direction::Output) {
                port_lines.push_back("output " + range(net.width) + net.name);
            } else {
                wire_lines.push_back("wire " + range(net.width) + net.name + ";");
            }
        }
    }

    std::ostringstream os;
    os << "module " << design.name << " (\n";
    for (std::size_t i = 0; i < port_lines.size(); ++i) {
        os << "  " << port_lines[i] << (i + 1 < port_lines.size() ? ",\n" : "\n");
    }
    os << ");\n";
    for (const auto& w : wire_lines) os << "  " << w << "\n";
    for (std::size_t a : kept_assigns) {
        os << "  assign " << design.assigns[a].target << " = " << to_verilog(*design.assigns[a].expr) << ";\n";
    }
    for (const auto& [b, body] : blocks) {
        os << "  always @(posedge " << clock << ") ";
        print(*body, 1, os);
    }
    os << "endmodule\n";
    return os.str();
}

}  // namespace cfusion::hdl
