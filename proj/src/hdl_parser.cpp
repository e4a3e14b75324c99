#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>

#include "circuitfusion/hdl.hpp"

namespace cfusion {

SyntaxError::SyntaxError(std::size_t pos, std::string exp, const std::string& detail)
    : Error("parse", "syntax error at byte " + std::to_string(pos) + ": expected " + exp +
                         (detail.empty() ? std::string{} : ", got " + detail)),
      position(pos),
      expected(std::move(exp)) {}

UnsupportedConstruct::UnsupportedConstruct(std::string c, std::size_t pos)
    : Error("parse", "unsupported construct '" + c + "' at byte " + std::to_string(pos)),
      construct(std::move(c)),
      position(pos) {}

UndeclaredIdentifier::UndeclaredIdentifier(std::string n)
    : Error("parse", "undeclared identifier '" + n + "'"), name(std::move(n)) {}

namespace {
std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
    return out;
}
}  // namespace

CombinationalLoop::CombinationalLoop(std::vector<std::string> c)
    : Error("elaborate", "combinational loop through [" + join_names(c) + "]"), cycle(std::move(c)) {}

WidthMismatch::WidthMismatch(NodeId n, const std::string& detail)
    : Error("elaborate", "width mismatch at node " + std::to_string(n) + ": " + detail), node(n) {}

namespace hdl {

const Net* RtlDesign::find_net(std::string_view n) const {
    auto it = std::find_if(nets.begin(), nets.end(), [&](const Net& x) { return x.name == n; });
    return it == nets.end() ? nullptr : &*it;
}

const Port* RtlDesign::find_port(std::string_view n) const {
    auto it = std::find_if(ports.begin(), ports.end(), [&](const Port& x) { return x.name == n; });
    return it == ports.end() ? nullptr : &*it;
}

std::string RtlDesign::clock() const { return always_blocks.empty() ? std::string{} : always_blocks.front().clock; }

namespace {

constexpr int kMaxWidth = 64;

struct Token {
    enum class Kind { Ident, Number, Punct, End } kind = Kind::End;
    std::string text;
    std::uint64_t value = 0;
    int width = 0;  // Number: 0 = unsized
    std::size_t pos = 0;
    std::size_t len = 0;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_space();
            if (i_ >= src_.size()) break;
            out.push_back(next());
        }
        out.push_back(Token{Token::Kind::End, "<end of input>", 0, 0, src_.size(), 0});
        return out;
    }

private:
    void skip_space() {
        while (i_ < src_.size()) {
            const char c = src_[i_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++i_;
            } else if (src_.substr(i_, 2) == "//") {
                while (i_ < src_.size() && src_[i_] != '\n') ++i_;
            } else if (src_.substr(i_, 2) == "/*") {
                const auto end = src_.find("*/", i_ + 2);
                if (end == std::string_view::npos) throw SyntaxError(i_, "end of block comment", "end of input");
                i_ = end + 2;
            } else {
                break;
            }
        }
    }

    Token next() {
        const std::size_t start = i_;
        const char c = src_[i_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$') {
            if (c == '$') throw UnsupportedConstruct("system task", start);
            while (i_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[i_])) || src_[i_] == '_' ||
                                        src_[i_] == '$'))
                ++i_;
            return Token{Token::Kind::Ident, std::string(src_.substr(start, i_ - start)), 0, 0, start, i_ - start};
        }
        if (c == '`') throw UnsupportedConstruct("compiler directive", start);
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '\'') return number(start);
        static const std::vector<std::string_view> multi = {"<=", ">=", "==", "!=", "&&", "||", "<<", ">>",
                                                            "~^", "^~", "~&", "~|", "(*"};
        for (auto m : multi) {
            if (src_.substr(i_, m.size()) == m) {
                if (m == "(*") throw UnsupportedConstruct("attribute", start);
                if (src_.substr(i_, 3) == "===" || src_.substr(i_, 3) == "!==") {
                    throw UnsupportedConstruct("case equality", start);
                }
                if (src_.substr(i_, 3) == "<<<" || src_.substr(i_, 3) == ">>>") {
                    throw UnsupportedConstruct("arithmetic shift", start);
                }
                i_ += m.size();
                return Token{Token::Kind::Punct, std::string(m), 0, 0, start, m.size()};
            }
        }
        static const std::string_view single = "()[]{}:;,.=?+-*/%&|^~!<>@#";
        if (single.find(c) != std::string_view::npos) {
            ++i_;
            return Token{Token::Kind::Punct, std::string(1, c), 0, 0, start, 1};
        }
        throw SyntaxError(start, "token", std::string("'") + c + "'");
    }

    std::string digits(auto pred) {
        std::string d;
        while (i_ < src_.size() && (pred(src_[i_]) || src_[i_] == '_')) {
            if (src_[i_] != '_') d.push_back(src_[i_]);
            ++i_;
        }
        return d;
    }

    Token number(std::size_t start) {
        auto is_dec = [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)) != 0; };
        std::string size_text;
        if (src_[i_] != '\'') size_text = digits(is_dec);
        while (i_ < src_.size() && src_[i_] == ' ') ++i_;
        if (i_ >= src_.size() || src_[i_] != '\'') {
            i_ = start + 0;
            std::string d = digits(is_dec);
            return make_number(start, d, 10, 0);
        }
        ++i_;  // '
        if (i_ < src_.size() && (src_[i_] == 's' || src_[i_] == 'S')) throw UnsupportedConstruct("signed literal", start);
        if (i_ >= src_.size()) throw SyntaxError(i_, "number base", "end of input");
        const char base_ch = static_cast<char>(std::tolower(static_cast<unsigned char>(src_[i_])));
        int base = 0;
        switch (base_ch) {
            case 'b': base = 2; break;
            case 'o': base = 8; break;
            case 'd': base = 10; break;
            case 'h': base = 16; break;
            default: throw SyntaxError(i_, "number base [bodh]", std::string(1, src_[i_]));
        }
        ++i_;
        while (i_ < src_.size() && src_[i_] == ' ') ++i_;
        std::string d = digits([](char ch) { return std::isxdigit(static_cast<unsigned char>(ch)) || ch == 'x' ||
                                                    ch == 'X' || ch == 'z' || ch == 'Z' || ch == '?'; });
        if (d.empty()) throw SyntaxError(i_, "digits", "nothing");
        int width = 0;
        if (!size_text.empty()) {
            width = std::stoi(size_text);
            if (width < 1) throw SyntaxError(start, "positive literal width", size_text);
            if (width > kMaxWidth) throw UnsupportedConstruct("width > 64", start);
        }
        return make_number(start, d, base, width);
    }

    Token make_number(std::size_t start, const std::string& d, int base, int width) {
        std::uint64_t v = 0;
        for (char ch : d) {
            const char lc = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            if (lc == 'x' || lc == 'z' || lc == '?') throw UnsupportedConstruct("x/z literal", start);
            const int digit = std::isdigit(static_cast<unsigned char>(lc)) ? lc - '0' : lc - 'a' + 10;
            if (digit >= base) throw SyntaxError(start, "digit valid for base " + std::to_string(base), d);
            const unsigned __int128 wide = static_cast<unsigned __int128>(v) * base + digit;
            if (wide > UINT64_MAX) throw UnsupportedConstruct("width > 64", start);
            v = static_cast<std::uint64_t>(wide);
        }
        if (width > 0 && width < 64) v &= (std::uint64_t{1} << width) - 1;
        return Token{Token::Kind::Number, d, v, width, start, i_ - start};
    }

    std::string_view src_;
    std::size_t i_ = 0;
};

const std::set<std::string, std::less<>> kUnsupportedKeywords = {
    "initial",  "generate", "endgenerate", "function", "task",    "for",       "while",     "repeat",
    "forever",  "integer",  "parameter",   "localparam", "genvar", "inout",    "real",      "time",
    "casez",    "casex",    "fork",        "specify",  "primitive", "supply0", "supply1",   "tri",
    "signed",   "defparam", "assert",      "wait",     "disable",  "event",    "macromodule",
};

const std::set<std::string, std::less<>> kKeywords = {
    "module", "endmodule", "input", "output", "wire", "reg",    "assign",  "always",
    "posedge", "negedge",  "begin", "end",    "if",   "else",   "case",    "endcase",
    "default", "or",
};

class Parser {
public:
    Parser(std::string_view src, std::vector<Token> toks) : src_(src), toks_(std::move(toks)) {}

    RtlDesign parse() {
        RtlDesign d;
        const std::size_t start = peek().pos;
        expect_kw("module");
        d.name = expect_ident("module name");
        if (is_punct("#")) throw UnsupportedConstruct("parameter", peek().pos);

        std::vector<std::string> port_order;
        if (accept_punct("(")) {
            if (!is_punct(")")) {
                if (is_kw("input") || is_kw("output") || is_kw("inout")) {
                    ansi_ports(d);
                } else {
                    do {
                        port_order.push_back(expect_ident("port name"));
                    } while (accept_punct(","));
                }
            }
            expect_punct(")");
        }
        expect_punct(";");

        std::map<std::string, Port, std::less<>> late_ports;
        while (!is_kw("endmodule")) {
            if (peek().kind == Token::Kind::End) throw SyntaxError(peek().pos, "endmodule", "end of input");
            item(d, late_ports);
        }
        const Token& end_tok = next();
        d.span = SourceSpan{start, end_tok.pos + end_tok.len - start};
        if (peek().kind != Token::Kind::End) {
            if (is_kw("module")) throw UnsupportedConstruct("multiple modules", peek().pos);
            throw SyntaxError(peek().pos, "end of input", describe(peek()));
        }

        for (const auto& name : port_order) {
            auto it = late_ports.find(name);
            if (it == late_ports.end()) throw SyntaxError(d.span.offset, "direction declaration for port " + name, "none");
            d.ports.push_back(it->second);
        }
        if (late_ports.size() != port_order.size()) {
            for (const auto& [name, p] : late_ports) {
                if (std::find(port_order.begin(), port_order.end(), name) == port_order.end()) {
                    throw SyntaxError(p.span.offset, "declaration of a listed port", name);
                }
            }
        }
        return d;
    }

private:
    // ---- token helpers
    const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(i_ + ahead, toks_.size() - 1)]; }
    const Token& next() { return toks_[std::min(i_++, toks_.size() - 1)]; }
    bool is_punct(std::string_view p, std::size_t ahead = 0) const {
        return peek(ahead).kind == Token::Kind::Punct && peek(ahead).text == p;
    }
    bool is_kw(std::string_view k) const { return peek().kind == Token::Kind::Ident && peek().text == k; }
    bool accept_punct(std::string_view p) {
        if (!is_punct(p)) return false;
        ++i_;
        return true;
    }
    bool accept_kw(std::string_view k) {
        if (!is_kw(k)) return false;
        ++i_;
        return true;
    }
    static std::string describe(const Token& t) {
        return t.kind == Token::Kind::End ? t.text : "'" + t.text + "'";
    }
    void expect_punct(std::string_view p) {
        if (!accept_punct(p)) throw SyntaxError(peek().pos, "'" + std::string(p) + "'", describe(peek()));
    }
    void expect_kw(std::string_view k) {
        if (!accept_kw(k)) throw SyntaxError(peek().pos, "'" + std::string(k) + "'", describe(peek()));
    }
    std::string expect_ident(std::string_view what) {
        const Token& t = peek();
        if (t.kind != Token::Kind::Ident) throw SyntaxError(t.pos, std::string(what), describe(t));
        check_unsupported(t);
        if (kKeywords.contains(t.text)) throw SyntaxError(t.pos, std::string(what), describe(t));
        ++i_;
        return t.text;
    }
    static void check_unsupported(const Token& t) {
        if (t.kind == Token::Kind::Ident && kUnsupportedKeywords.contains(t.text)) {
            throw UnsupportedConstruct(t.text, t.pos);
        }
    }
    SourceSpan span_from(std::size_t start) const {
        const Token& last = toks_[i_ == 0 ? 0 : i_ - 1];
        return SourceSpan{start, last.pos + last.len - start};
    }

    // ---- declarations
    int optional_range() {
        if (!is_punct("[")) return 1;
        const std::size_t pos = peek().pos;
        next();
        const Token msb = next();
        if (msb.kind != Token::Kind::Number) throw SyntaxError(msb.pos, "constant range bound", describe(msb));
        expect_punct(":");
        const Token lsb = next();
        if (lsb.kind != Token::Kind::Number) throw SyntaxError(lsb.pos, "constant range bound", describe(lsb));
        expect_punct("]");
        if (msb.value < lsb.value) throw UnsupportedConstruct("ascending range", pos);
        if (lsb.value != 0) throw UnsupportedConstruct("range with nonzero lsb", pos);
        if (msb.value + 1 > kMaxWidth) throw UnsupportedConstruct("width > 64", pos);
        return static_cast<int>(msb.value) + 1;
    }

    void ansi_ports(RtlDesign& d) {
        Direction dir = Direction::Input;
        bool is_reg = false;
        int width = 1;
        do {
            if (is_kw("inout")) throw UnsupportedConstruct("inout", peek().pos);
            if (is_kw("input") || is_kw("output")) {
                dir = next().text == "input" ? Direction::Input : Direction::Output;
                is_reg = false;
                if (accept_kw("reg")) {
                    is_reg = true;
                } else {
                    accept_kw("wire");
                }
                width = optional_range();
            }
            const std::size_t pos = peek().pos;
            const std::string name = expect_ident("port name");
            if (dir == Direction::Input && is_reg) throw SyntaxError(pos, "input port without reg", name);
            add_port(d, Port{name, dir, width, span_from(pos)}, is_reg);
        } while (accept_punct(","));
    }

    void add_port(RtlDesign& d, Port port, bool is_reg) {
        if (d.find_net(port.name)) throw SyntaxError(port.span.offset, "unique declaration", port.name);
        d.nets.push_back(Net{port.name, is_reg ? NetKind::Reg : NetKind::Wire, port.width, port.span});
        d.ports.push_back(std::move(port));
    }

    void item(RtlDesign& d, std::map<std::string, Port, std::less<>>& late_ports) {
        const Token& t = peek();
        check_unsupported(t);
        const std::size_t start = t.pos;
        if (accept_kw("input") || accept_kw("output")) {
            const Direction dir = toks_[i_ - 1].text == "input" ? Direction::Input : Direction::Output;
            bool is_reg = accept_kw("reg");
            if (!is_reg) accept_kw("wire");
            const int width = optional_range();
            do {
                const std::size_t pos = peek().pos;
                const std::string name = expect_ident("port name");
                if (late_ports.contains(name) || d.find_net(name)) throw SyntaxError(pos, "unique declaration", name);
                Port p{name, dir, width, span_from(pos)};
                late_ports.emplace(name, p);
                d.nets.push_back(Net{name, is_reg ? NetKind::Reg : NetKind::Wire, width, p.span});
            } while (accept_punct(","));
            expect_punct(";");
            return;
        }
        if (is_kw("wire") || is_kw("reg")) {
            const bool is_reg = next().text == "reg";
            const int width = optional_range();
            do {
                const std::size_t pos = peek().pos;
                const std::string name = expect_ident("net name");
                if (is_punct("[")) throw UnsupportedConstruct("memory", peek().pos);
                Net* existing = nullptr;
                for (auto& n : d.nets) {
                    if (n.name == name) existing = &n;
                }
                // `output q; reg q;` upgrades the port's net to a reg.
                if (existing && late_ports.contains(name) && existing->width == width) {
                    existing->kind = is_reg ? NetKind::Reg : NetKind::Wire;
                } else if (existing) {
                    throw SyntaxError(pos, "unique declaration", name);
                } else {
                    d.nets.push_back(Net{name, is_reg ? NetKind::Reg : NetKind::Wire, width, span_from(pos)});
                }
                if (accept_punct("=")) {
                    if (is_reg) throw UnsupportedConstruct("reg initializer", pos);
                    auto e = expr();
                    d.assigns.push_back(Assign{name, e, span_from(pos)});
                }
            } while (accept_punct(","));
            expect_punct(";");
            return;
        }
        if (accept_kw("assign")) {
            do {
                const std::size_t pos = peek().pos;
                const std::string target = expect_ident("assignment target");
                if (is_punct("[")) throw UnsupportedConstruct("part-select assignment", peek().pos);
                if (is_punct("{", 0)) throw UnsupportedConstruct("concatenation assignment", peek().pos);
                expect_punct("=");
                auto e = expr();
                d.assigns.push_back(Assign{target, e, span_from(pos)});
            } while (accept_punct(","));
            expect_punct(";");
            return;
        }
        if (accept_kw("always")) {
            if (!accept_punct("@")) throw UnsupportedConstruct("always without event control", start);
            if (accept_punct("*")) throw UnsupportedConstruct("combinational always", start);
            expect_punct("(");
            if (is_punct("*")) throw UnsupportedConstruct("combinational always", start);
            if (is_kw("negedge")) throw UnsupportedConstruct("negedge", peek().pos);
            if (!accept_kw("posedge")) throw UnsupportedConstruct("combinational always", start);
            const std::string clk = expect_ident("clock signal");
            if (is_kw("or") || is_punct(",")) throw UnsupportedConstruct("asynchronous reset", peek().pos);
            expect_punct(")");
            auto body = stmt();
            d.always_blocks.push_back(AlwaysBlock{clk, body, span_from(start)});
            return;
        }
        if (t.kind == Token::Kind::Ident && peek(1).kind == Token::Kind::Ident) {
            throw UnsupportedConstruct("module instantiation", start);
        }
        throw SyntaxError(t.pos, "module item", describe(t));
    }

    // ---- statements
    StmtPtr stmt() {
        const Token& t = peek();
        check_unsupported(t);
        const std::size_t start = t.pos;
        auto s = std::make_shared<Stmt>();
        if (accept_kw("begin")) {
            s->kind = Stmt::Kind::Block;
            if (accept_punct(":")) expect_ident("block label");
            while (!accept_kw("end")) {
                if (peek().kind == Token::Kind::End) throw SyntaxError(peek().pos, "'end'", "end of input");
                s->body.push_back(stmt());
            }
        } else if (accept_punct(";")) {
            s->kind = Stmt::Kind::Block;
        } else if (accept_kw("if")) {
            s->kind = Stmt::Kind::If;
            expect_punct("(");
            s->expr = expr();
            expect_punct(")");
            s->then_branch = stmt();
            if (accept_kw("else")) s->else_branch = stmt();
        } else if (accept_kw("case")) {
            s->kind = Stmt::Kind::Case;
            expect_punct("(");
            s->expr = expr();
            expect_punct(")");
            bool seen_default = false;
            while (!accept_kw("endcase")) {
                if (peek().kind == Token::Kind::End) throw SyntaxError(peek().pos, "'endcase'", "end of input");
                CaseItem item;
                if (accept_kw("default")) {
                    if (seen_default) throw SyntaxError(toks_[i_ - 1].pos, "single default item", "second default");
                    seen_default = true;
                    accept_punct(":");
                } else {
                    do {
                        item.labels.push_back(expr());
                    } while (accept_punct(","));
                    expect_punct(":");
                }
                item.body = stmt();
                s->items.push_back(std::move(item));
            }
        } else if (t.kind == Token::Kind::Ident && !kKeywords.contains(t.text)) {
            s->kind = Stmt::Kind::NonBlocking;
            s->target = expect_ident("assignment target");
            if (is_punct("[")) throw UnsupportedConstruct("part-select assignment", peek().pos);
            if (is_punct("=")) throw UnsupportedConstruct("blocking assignment", peek().pos);
            if (is_punct("#")) throw UnsupportedConstruct("delay", peek().pos);
            expect_punct("<=");
            if (is_punct("#")) throw UnsupportedConstruct("delay", peek().pos);
            s->expr = expr();
            expect_punct(";");
        } else if (is_punct("{")) {
            throw UnsupportedConstruct("concatenation assignment", t.pos);
        } else if (is_punct("#")) {
            throw UnsupportedConstruct("delay", t.pos);
        } else {
            throw SyntaxError(t.pos, "statement", describe(t));
        }
        s->span = span_from(start);
        return s;
    }

    // ---- expressions (precedence climbing)
    ExprPtr expr() { return ternary(); }

    ExprPtr ternary() {
        const std::size_t start = peek().pos;
        auto cond = binary(0);
        if (!accept_punct("?")) return cond;
        auto a = ternary();
        expect_punct(":");
        auto b = ternary();
        auto e = std::make_shared<Expr>();
        e->kind = Expr::Kind::Ternary;
        e->args = {cond, a, b};
        e->span = span_from(start);
        return e;
    }

    static int precedence(const Token& t) {
        if (t.kind != Token::Kind::Punct) return -1;
        static const std::map<std::string, int, std::less<>> table = {
            {"||", 0}, {"&&", 1}, {"|", 2},  {"^", 3},  {"~^", 3}, {"^~", 3}, {"&", 4},  {"==", 5},
            {"!=", 5}, {"<", 6},  {"<=", 6}, {">", 6},  {">=", 6}, {"<<", 7}, {">>", 7}, {"+", 8},
            {"-", 8},  {"*", 9},  {"/", 9},  {"%", 9},
        };
        auto it = table.find(t.text);
        return it == table.end() ? -1 : it->second;
    }

    ExprPtr binary(int min_prec) {
        const std::size_t start = peek().pos;
        auto lhs = unary();
        for (;;) {
            const int prec = precedence(peek());
            if (prec < min_prec || prec < 0) return lhs;
            const Token op = next();
            if (op.text == "/" || op.text == "%") throw UnsupportedConstruct("division", op.pos);
            auto rhs = binary(prec + 1);
            auto e = std::make_shared<Expr>();
            e->kind = Expr::Kind::Binary;
            e->name = op.text == "^~" ? "~^" : op.text;
            e->args = {lhs, rhs};
            e->span = span_from(start);
            lhs = e;
        }
    }

    ExprPtr unary() {
        const Token& t = peek();
        static const std::set<std::string, std::less<>> unary_ops = {"~", "!", "-", "+", "&", "|", "^", "~&", "~|", "~^", "^~"};
        if (t.kind == Token::Kind::Punct && unary_ops.contains(t.text)) {
            const std::size_t start = t.pos;
            std::string op = next().text;
            if (op == "^~") op = "~^";
            auto operand = unary();
            if (op == "+") return operand;
            auto e = std::make_shared<Expr>();
            e->kind = Expr::Kind::Unary;
            e->name = op;
            e->args = {operand};
            e->span = span_from(start);
            return e;
        }
        return primary();
    }

    ExprPtr primary() {
        const Token& t = peek();
        const std::size_t start = t.pos;
        auto e = std::make_shared<Expr>();
        if (t.kind == Token::Kind::Number) {
            next();
            e->kind = Expr::Kind::Number;
            e->value = t.value;
            e->width = t.width;
            e->span = span_from(start);
            return e;
        }
        if (accept_punct("(")) {
            auto inner = expr();
            expect_punct(")");
            return inner;
        }
        if (accept_punct("{")) {
            // {n{...}} replication or {a, b, ...} concatenation
            if (peek().kind == Token::Kind::Number && is_punct("{", 1)) {
                const Token count = next();
                next();
                auto inner = std::make_shared<Expr>();
                inner->kind = Expr::Kind::Concat;
                const std::size_t inner_start = peek().pos;
                do {
                    inner->args.push_back(expr());
                } while (accept_punct(","));
                expect_punct("}");
                inner->span = span_from(inner_start);
                expect_punct("}");
                if (count.value < 1 || count.value > kMaxWidth) throw UnsupportedConstruct("replication count", count.pos);
                e->kind = Expr::Kind::Replicate;
                e->count = static_cast<int>(count.value);
                e->args = {inner->args.size() == 1 ? inner->args.front() : ExprPtr(inner)};
                e->span = span_from(start);
                return e;
            }
            e->kind = Expr::Kind::Concat;
            do {
                e->args.push_back(expr());
            } while (accept_punct(","));
            expect_punct("}");
            e->span = span_from(start);
            return e;
        }
        if (t.kind == Token::Kind::Ident) {
            check_unsupported(t);
            const std::string name = expect_ident("identifier");
            if (is_punct("(")) throw UnsupportedConstruct("function call", start);
            e->name = name;
            e->kind = Expr::Kind::Ident;
            if (accept_punct("[")) {
                const Token hi = next();
                if (hi.kind != Token::Kind::Number) throw UnsupportedConstruct("variable index", hi.pos);
                if (accept_punct(":")) {
                    const Token lo = next();
                    if (lo.kind != Token::Kind::Number) throw UnsupportedConstruct("variable index", lo.pos);
                    if (hi.value < lo.value) throw UnsupportedConstruct("ascending range", hi.pos);
                    e->kind = Expr::Kind::Range;
                    e->msb = static_cast<int>(std::min<std::uint64_t>(hi.value, 1 << 20));
                    e->lsb = static_cast<int>(std::min<std::uint64_t>(lo.value, 1 << 20));
                } else if (is_punct("+") || is_punct("-")) {
                    throw UnsupportedConstruct("indexed part-select", peek().pos);
                } else {
                    e->kind = Expr::Kind::Index;
                    e->msb = e->lsb = static_cast<int>(std::min<std::uint64_t>(hi.value, 1 << 20));
                }
                expect_punct("]");
                if (is_punct("[")) throw UnsupportedConstruct("memory", peek().pos);
            }
            e->span = span_from(start);
            return e;
        }
        throw SyntaxError(t.pos, "expression", describe(t));
    }

    std::string_view src_;
    std::vector<Token> toks_;
    std::size_t i_ = 0;
};

// ---- name resolution and design-level checks

void collect_idents(const Expr& e, std::vector<const Expr*>& out) {
    if (e.kind == Expr::Kind::Ident || e.kind == Expr::Kind::Index || e.kind == Expr::Kind::Range) out.push_back(&e);
    for (const auto& a : e.args) collect_idents(*a, out);
}

void collect_stmt(const Stmt& s, std::vector<const Expr*>& reads, std::vector<const Stmt*>& nbas) {
    if (s.expr) collect_idents(*s.expr, reads);
    if (s.kind == Stmt::Kind::NonBlocking) nbas.push_back(&s);
    for (const auto& b : s.body) collect_stmt(*b, reads, nbas);
    if (s.then_branch) collect_stmt(*s.then_branch, reads, nbas);
    if (s.else_branch) collect_stmt(*s.else_branch, reads, nbas);
    for (const auto& item : s.items) {
        for (const auto& l : item.labels) collect_idents(*l, reads);
        if (item.body) collect_stmt(*item.body, reads, nbas);
    }
}

void resolve(const RtlDesign& d) {
    std::set<std::string> assigned_wires;
    std::vector<const Expr*> reads;
    for (const auto& a : d.assigns) {
        const Net* n = d.find_net(a.target);
        if (!n) throw UndeclaredIdentifier(a.target);
        if (n->kind == NetKind::Reg) throw UnsupportedConstruct("continuous assign to reg", a.span.offset);
        if (const Port* p = d.find_port(a.target); p && p->direction == Direction::Input) {
            throw UnsupportedConstruct("assign to input", a.span.offset);
        }
        if (!assigned_wires.insert(a.target).second) throw UnsupportedConstruct("multiple drivers", a.span.offset);
        collect_idents(*a.expr, reads);
    }
    std::map<std::string, std::size_t> reg_block;
    std::string clock;
    for (std::size_t b = 0; b < d.always_blocks.size(); ++b) {
        const auto& blk = d.always_blocks[b];
        if (clock.empty()) clock = blk.clock;
        if (blk.clock != clock) throw UnsupportedConstruct("multiple clocks", blk.span.offset);
        const Port* cp = d.find_port(blk.clock);
        if (!d.find_net(blk.clock)) throw UndeclaredIdentifier(blk.clock);
        if (!cp || cp->direction != Direction::Input) throw UnsupportedConstruct("derived clock", blk.span.offset);
        std::vector<const Stmt*> nbas;
        collect_stmt(*blk.body, reads, nbas);
        for (const Stmt* s : nbas) {
            const Net* n = d.find_net(s->target);
            if (!n) throw UndeclaredIdentifier(s->target);
            if (n->kind != NetKind::Reg) throw UnsupportedConstruct("nonblocking assign to wire", s->span.offset);
            auto [it, fresh] = reg_block.emplace(s->target, b);
            if (!fresh && it->second != b) throw UnsupportedConstruct("reg driven from multiple always blocks", s->span.offset);
        }
    }
    for (const Expr* e : reads) {
        const Net* n = d.find_net(e->name);
        if (!n) throw UndeclaredIdentifier(e->name);
        if (e->name == clock) throw UnsupportedConstruct("clock used as data", e->span.offset);
    }
    for (const auto& n : d.nets) {
        const Port* p = d.find_port(n.name);
        const bool is_input = p && p->direction == Direction::Input;
        if (n.kind == NetKind::Reg && !reg_block.contains(n.name)) {
            throw UnsupportedConstruct("undriven reg " + n.name, n.span.offset);
        }
        if (n.kind == NetKind::Wire && !is_input && !assigned_wires.contains(n.name)) {
            const bool used = std::any_of(reads.begin(), reads.end(), [&](const Expr* e) { return e->name == n.name; });
            if (used || p) throw UnsupportedConstruct("undriven wire " + n.name, n.span.offset);
        }
    }
}

}  // namespace

RtlDesign parse_verilog(std::string_view source) {
    Lexer lexer(source);
    Parser parser(source, lexer.run());
    RtlDesign d = parser.parse();
    resolve(d);
    return d;
}

std::string to_verilog(const Expr& e) {
    switch (e.kind) {
        case Expr::Kind::Ident:
            return e.name;
        case Expr::Kind::Number:
            return e.width > 0 ? std::to_string(e.width) + "'d" + std::to_string(e.value) : std::to_string(e.value);
        case Expr::Kind::Index:
            return e.name + "[" + std::to_string(e.msb) + "]";
        case Expr::Kind::Range:
            return e.name + "[" + std::to_string(e.msb) + ":" + std::to_string(e.lsb) + "]";
        case Expr::Kind::Unary:
            return "(" + e.name + to_verilog(*e.args[0]) + ")";
        case Expr::Kind::Binary:
            return "(" + to_verilog(*e.args[0]) + " " + e.name + " " + to_verilog(*e.args[1]) + ")";
        case Expr::Kind::Ternary:
            return "(" + to_verilog(*e.args[0]) + " ? " + to_verilog(*e.args[1]) + " : " + to_verilog(*e.args[2]) + ")";
        case Expr::Kind::Concat: {
            std::string out = "{";
            for (std::size_t i = 0; i < e.args.size(); ++i) out += (i ? ", " : "") + to_verilog(*e.args[i]);
            return out + "}";
        }
        case Expr::Kind::Replicate: {
            const std::string inner = to_verilog(*e.args[0]);
            const bool braced = e.args[0]->kind == Expr::Kind::Concat;
            return "{" + std::to_string(e.count) + (braced ? inner : "{" + inner + "}") + "}";
        }
    }
    return {};
}

}  // namespace hdl
}  // namespace cfusion
