#include "circuitfusion/techmap.hpp"

#include <stdexcept>
#include <unordered_map>

namespace cfusion {
namespace {

using Bits = std::vector<NodeId>;

class Mapper {
public:
    explicit Mapper(const CdfGraph& rtl) : rtl_(rtl) {}

    CdfGraph run() {
        // Sources first so every register bit exists before logic references it.
        for (const auto& n : rtl_.nodes()) {
            if (n.op == Op::Input || is_sequential(n.op)) {
                Bits bits;
                for (int i = 0; i < n.width; ++i) {
                    bits.push_back(add(n.op == Op::Input ? Op::Input : Op::Dff, {}, bit_name(n.name, n.width, i)));
                }
                bits_[n.id] = std::move(bits);
            }
        }
        for (NodeId id : combinational_order(rtl_)) {
            const Node& n = rtl_.node(id);
            if (n.op == Op::Input || is_sequential(n.op)) continue;
            bits_[id] = map_node(n);
        }
        for (const auto& n : rtl_.nodes()) {
            if (!is_sequential(n.op)) continue;
            const auto ops = rtl_.operands(n.id);
            if (ops.empty()) continue;
            const Bits d = fit(bits_.at(ops[0]), n.width);
            for (int i = 0; i < n.width; ++i) out_.connect(d[i], bits_.at(n.id)[i]);
        }
        return std::move(out_);
    }

private:
    NodeId add(Op op, std::initializer_list<NodeId> ins, std::string name = {}) {
        Node n;
        n.id = next_++;
        n.op = op;
        n.width = 1;
        n.name = std::move(name);
        out_.add_node(std::move(n));
        for (NodeId s : ins) out_.connect(s, next_ - 1);
        return next_ - 1;
    }

    NodeId constant(bool one) {
        NodeId& slot = one ? one_ : zero_;
        if (slot < 0) {
            Node n;
            n.id = next_++;
            n.op = Op::Const;
            n.width = 1;
            n.value = one ? 1 : 0;
            out_.add_node(std::move(n));
            slot = next_ - 1;
        }
        return slot;
    }

    Bits fit(const Bits& b, int width) {
        Bits out(b.begin(), b.begin() + std::min<std::size_t>(b.size(), static_cast<std::size_t>(width)));
        while (static_cast<int>(out.size()) < width) out.push_back(constant(false));
        return out;
    }

    NodeId reduce(Op gate, const Bits& b) {
        if (b.size() == 1) return b[0];
        Bits level = b;
        while (level.size() > 1) {
            Bits next;
            for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(add(gate, {level[i], level[i + 1]}));
            if (level.size() % 2) next.push_back(level.back());
            level = std::move(next);
        }
        return level[0];
    }

    NodeId any(const Bits& b) { return reduce(Op::Or2, b); }

    Bits bitwise(Op gate, const Bits& a, const Bits& b, int w) {
        const Bits x = fit(a, w), y = fit(b, w);
        Bits out;
        for (int i = 0; i < w; ++i) out.push_back(add(gate, {x[i], y[i]}));
        return out;
    }

    /// Ripple-carry a + b + cin over w bits; returns sum bits and the carry out.
    std::pair<Bits, NodeId> adder(const Bits& a, const Bits& b, NodeId cin, int w) {
        const Bits x = fit(a, w), y = fit(b, w);
        Bits sum;
        NodeId carry = cin;
        for (int i = 0; i < w; ++i) {
            sum.push_back(add(Op::FaSum, {x[i], y[i], carry}));
            carry = add(Op::FaCarry, {x[i], y[i], carry});
        }
        return {sum, carry};
    }

    Bits invert(const Bits& b) {
        Bits out;
        for (NodeId x : b) out.push_back(add(Op::Inv, {x}));
        return out;
    }

    /// Carry out of a - b (1 when a >= b, unsigned).
    NodeId no_borrow(const Bits& a, const Bits& b) {
        const int w = static_cast<int>(std::max(a.size(), b.size()));
        return adder(a, invert(fit(b, w)), constant(true), w).second;
    }

    Bits shift(const Bits& a, const Bits& amount, bool left, int w) {
        Bits cur = fit(a, w);
        Bits overflow;
        for (std::size_t k = 0; k < amount.size(); ++k) {
            const std::uint64_t step = k < 63 ? (std::uint64_t{1} << k) : 0;
            if (k >= 63 || step >= static_cast<std::uint64_t>(w)) {
                overflow.push_back(amount[k]);
                continue;
            }
            Bits next;
            for (int i = 0; i < w; ++i) {
                const long src = left ? static_cast<long>(i) - static_cast<long>(step) : i + static_cast<long>(step);
                const NodeId moved = (src >= 0 && src < w) ? cur[static_cast<std::size_t>(src)] : constant(false);
                next.push_back(add(Op::Mux2, {amount[k], moved, cur[static_cast<std::size_t>(i)]}));
            }
            cur = std::move(next);
        }
        if (!overflow.empty()) {
            const NodeId keep = add(Op::Inv, {any(overflow)});
            for (auto& bit : cur) bit = add(Op::And2, {keep, bit});
        }
        return cur;
    }

    Bits map_node(const Node& n) {
        const auto ops = rtl_.operands(n.id);
        auto in = [&](std::size_t i) -> const Bits& { return bits_.at(ops.at(i)); };
        const int w = n.width;
        switch (n.op) {
            case Op::Const: {
                Bits out;
                for (int i = 0; i < w; ++i) out.push_back(constant(i < 64 && ((n.value >> i) & 1)));
                return out;
            }
            case Op::Output: {
                const Bits src = fit(in(0), w);
                Bits out;
                for (int i = 0; i < w; ++i) out.push_back(add(Op::Output, {src[i]}, bit_name(n.name, w, i)));
                return out;
            }
            case Op::And: return bitwise(Op::And2, in(0), in(1), w);
            case Op::Or: return bitwise(Op::Or2, in(0), in(1), w);
            case Op::Xor: return bitwise(Op::Xor2, in(0), in(1), w);
            case Op::Xnor: return bitwise(Op::Xnor2, in(0), in(1), w);
            case Op::Not: return invert(fit(in(0), w));
            case Op::Add: return adder(in(0), in(1), constant(false), w).first;
            case Op::Sub: return adder(in(0), invert(fit(in(1), w)), constant(true), w).first;
            case Op::Neg: return adder(Bits{}, invert(fit(in(0), w)), constant(true), w).first;
            case Op::Mul: {
                const Bits a = fit(in(0), w), b = fit(in(1), w);
                Bits acc = fit({}, w);
                for (int j = 0; j < w; ++j) {
                    Bits partial(static_cast<std::size_t>(j), constant(false));
                    for (int i = 0; i + j < w; ++i) partial.push_back(add(Op::And2, {a[i], b[j]}));
                    acc = adder(acc, partial, constant(false), w).first;
                }
                return acc;
            }
            case Op::Mux: {
                const NodeId sel = any(in(0));
                const Bits t = fit(in(1), w), e = fit(in(2), w);
                Bits out;
                for (int i = 0; i < w; ++i) out.push_back(add(Op::Mux2, {sel, t[i], e[i]}));
                return out;
            }
            case Op::Eq:
            case Op::Neq: {
                const int cw = static_cast<int>(std::max(in(0).size(), in(1).size()));
                const NodeId eq = reduce(Op::And2, bitwise(Op::Xnor2, in(0), in(1), cw));
                return {n.op == Op::Eq ? eq : add(Op::Inv, {eq})};
            }
            case Op::Ge: return {no_borrow(in(0), in(1))};
            case Op::Lt: return {add(Op::Inv, {no_borrow(in(0), in(1))})};
            case Op::Le: return {no_borrow(in(1), in(0))};
            case Op::Gt: return {add(Op::Inv, {no_borrow(in(1), in(0))})};
            case Op::Shl: return shift(in(0), in(1), true, w);
            case Op::Shr: return shift(in(0), in(1), false, w);
            case Op::Concat: {
                Bits out;
                for (std::size_t k = ops.size(); k-- > 0;) {
                    const Bits part = fit(in(k), rtl_.node(ops[k]).width);
                    out.insert(out.end(), part.begin(), part.end());
                }
                return fit(out, w);
            }
            case Op::Slice: {
                const Bits& src = in(0);
                Bits out;
                for (int i = 0; i < w; ++i) {
                    const std::size_t k = static_cast<std::size_t>(n.lsb + i);
                    out.push_back(k < src.size() ? src[k] : constant(false));
                }
                return out;
            }
            case Op::LogicAnd: return {add(Op::And2, {any(in(0)), any(in(1))})};
            case Op::LogicOr: return {add(Op::Or2, {any(in(0)), any(in(1))})};
            case Op::LogicNot: return {add(Op::Inv, {any(in(0))})};
            case Op::ReduceAnd: return {reduce(Op::And2, in(0))};
            case Op::ReduceOr: return {any(in(0))};
            case Op::ReduceXor: return {reduce(Op::Xor2, in(0))};
            default:
                throw std::invalid_argument("techmap: unsupported op " + std::string(op_name(n.op)));
        }
    }

    const CdfGraph& rtl_;
    CdfGraph out_;
    NodeId next_ = 0;
    NodeId zero_ = -1;
    NodeId one_ = -1;
    std::unordered_map<NodeId, Bits> bits_;
};

}  // namespace

std::string bit_name(const std::string& name, int width, int bit) {
    return width == 1 ? name : name + "[" + std::to_string(bit) + "]";
}

CdfGraph techmap(const CdfGraph& rtl) { return Mapper(rtl).run(); }

}  // namespace cfusion
