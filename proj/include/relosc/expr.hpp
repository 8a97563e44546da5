#pragma once

// Force laws f(t, q, p) and barrier functions h(t) are supplied as text in a
// small arithmetic language:
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//
// Functions: sin cos tan exp log sqrt abs, plus dq(.) (partial derivative in q).
// Evaluation can propagate second-order jets in one active variable.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relosc/error.hpp"

namespace relosc {

enum class Var : std::uint8_t { t = 0, q = 1, p = 2 };

inline constexpr std::string_view var_name(Var v) {
    switch (v) {
        case Var::t: return "t";
        case Var::q: return "q";
        case Var::p: return "p";
    }
    return "?";
}

class VarSet {
public:
    constexpr VarSet() = default;
    constexpr VarSet(std::initializer_list<Var> vars) {
        for (Var v : vars) bits_ |= bit(v);
    }

    static constexpr VarSet all() { return {Var::t, Var::q, Var::p}; }
    static constexpr VarSet time_only() { return {Var::t}; }

    constexpr bool contains(Var v) const { return (bits_ & bit(v)) != 0; }
    constexpr void insert(Var v) { bits_ |= bit(v); }
    constexpr bool subset_of(VarSet other) const { return (bits_ & ~other.bits_) == 0; }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr bool operator==(const VarSet&) const = default;

private:
    static constexpr std::uint8_t bit(Var v) { return std::uint8_t(1u << unsigned(v)); }
    std::uint8_t bits_ = 0;
};

/// Value with first and second derivative in one active variable.
struct Jet2 {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;

    static constexpr Jet2 constant(double v) { return {v, 0.0, 0.0}; }
    static constexpr Jet2 variable(double v) { return {v, 1.0, 0.0}; }
};

inline Jet2 operator+(const Jet2& a, const Jet2& b) { return {a.value + b.value, a.d1 + b.d1, a.d2 + b.d2}; }
inline Jet2 operator-(const Jet2& a, const Jet2& b) { return {a.value - b.value, a.d1 - b.d1, a.d2 - b.d2}; }
inline Jet2 operator-(const Jet2& a) { return {-a.value, -a.d1, -a.d2}; }
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
    return {a.value * b.value, a.d1 * b.value + a.value * b.d1,
            a.d2 * b.value + 2.0 * a.d1 * b.d1 + a.value * b.d2};
}
inline Jet2 operator/(const Jet2& a, const Jet2& b) {
    const double c = a.value / b.value;
    const double c1 = (a.d1 - c * b.d1) / b.value;
    const double c2 = (a.d2 - 2.0 * c1 * b.d1 - c * b.d2) / b.value;
    return {c, c1, c2};
}

/// g(a) given g, g', g'' evaluated at a.value.
inline Jet2 chain(const Jet2& a, double g, double g1, double g2) {
    return {g, g1 * a.d1, g2 * a.d1 * a.d1 + g1 * a.d2};
}

enum class Func : std::uint8_t { sin, cos, tan, exp, log, sqrt, abs };

inline constexpr std::array<std::pair<std::string_view, Func>, 7> kFunctions{{
    {"sin", Func::sin},
    {"cos", Func::cos},
    {"tan", Func::tan},
    {"exp", Func::exp},
    {"log", Func::log},
    {"sqrt", Func::sqrt},
    {"abs", Func::abs},
}};

inline constexpr std::string_view func_name(Func f) {
    for (const auto& [name, fn] : kFunctions)
        if (fn == f) return name;
    return "?";
}

class Expression {
public:
    enum class Op : std::uint8_t { constant, pi, variable, neg, add, sub, mul, div, pow, call, diff_q };

    struct Node {
        Op op = Op::constant;
        Func func = Func::sin;
        Var var = Var::t;
        double value = 0.0;
        int lhs = -1;
        int rhs = -1;
        std::size_t offset = 0;
    };

    Expression() : nodes_{Node{}}, source_("0") {}

    static Expression parse(std::string_view text, VarSet allowed = VarSet::all());

    static Expression constant(double v) {
        Expression e;
        e.nodes_.clear();
        e.nodes_.push_back(Node{Op::constant, Func::sin, Var::t, v, -1, -1, 0});
        e.root_ = 0;
        e.source_ = e.print();
        return e;
    }

    /// dq(y): the partial derivative of y with respect to q, evaluated by jets.
    static Expression derivative_q(const Expression& y) {
        Expression e = y;
        e.nodes_.push_back(Node{Op::diff_q, Func::sin, Var::t, 0.0, y.root_, -1, 0});
        e.root_ = int(e.nodes_.size()) - 1;
        e.source_ = e.print();
        return e;
    }

    double eval(double t, double q, double p) const {
        const std::array<double, 3> env{t, q, p};
        return eval_node(root_, env);
    }

    /// (h, dh/dt, d2h/dt2) at t.
    Jet2 eval_jet2(double t) const { return eval_jet(Var::t, t, 0.0, 0.0); }

    Jet2 eval_jet(Var active, double t, double q, double p) const {
        const std::array<double, 3> env{t, q, p};
        return jet_node(root_, env, active);
    }

    VarSet variables() const {
        VarSet used;
        for (const Node& n : nodes_)
            if (n.op == Op::variable) used.insert(n.var);
        return used;
    }

    bool uses(Func f) const {
        for (const Node& n : nodes_)
            if (n.op == Op::call && n.func == f) return true;
        return false;
    }

    bool uses_derivative() const {
        for (const Node& n : nodes_)
            if (n.op == Op::diff_q) return true;
        return false;
    }

    /// Text as supplied to parse (or the printed form for built expressions).
    const std::string& source() const { return source_; }

    /// Canonical text with minimal parentheses; parse(print()) rebuilds the same tree.
    std::string print() const {
        std::string out;
        print_node(root_, out);
        return out;
    }

    /// Structural equality of the trees (source text ignored).
    bool same_tree(const Expression& other) const { return same_node(root_, other, other.root_); }

    const std::vector<Node>& nodes() const { return nodes_; }
    int root() const { return root_; }

private:
    friend class ExpressionParser;

    static int precedence(Op op) {
        switch (op) {
            case Op::add:
            case Op::sub: return 1;
            case Op::mul:
            case Op::div: return 2;
            case Op::neg: return 3;
            case Op::pow: return 4;
            default: return 5;
        }
    }

    int node_precedence(int i) const { return precedence(nodes_[std::size_t(i)].op); }

    std::string describe(int i) const {
        const Node& n = nodes_[std::size_t(i)];
        std::string what;
        switch (n.op) {
            case Op::call: what = std::string(func_name(n.func)); break;
            case Op::diff_q: what = "dq"; break;
            case Op::add: what = "+"; break;
            case Op::sub: what = "-"; break;
            case Op::mul: what = "*"; break;
            case Op::div: what = "/"; break;
            case Op::pow: what = "^"; break;
            case Op::neg: what = "unary -"; break;
            default: what = "leaf"; break;
        }
        return "'" + what + "' at byte " + std::to_string(n.offset) + " of \"" + source_ + "\"";
    }

    double checked(double v, int i) const {
        if (!std::isfinite(v)) throw EvalError("non-finite value at node " + describe(i));
        return v;
    }

    Jet2 checked(const Jet2& j, int i) const {
        if (!std::isfinite(j.value) || !std::isfinite(j.d1) || !std::isfinite(j.d2))
            throw EvalError("non-finite jet at node " + describe(i));
        return j;
    }

    double eval_node(int i, const std::array<double, 3>& env) const {
        const Node& n = nodes_[std::size_t(i)];
        switch (n.op) {
            case Op::constant: return n.value;
            case Op::pi: return std::numbers::pi;
            case Op::variable: return env[std::size_t(n.var)];
            case Op::neg: return -eval_node(n.lhs, env);
            case Op::add: return checked(eval_node(n.lhs, env) + eval_node(n.rhs, env), i);
            case Op::sub: return checked(eval_node(n.lhs, env) - eval_node(n.rhs, env), i);
            case Op::mul: return checked(eval_node(n.lhs, env) * eval_node(n.rhs, env), i);
            case Op::div: {
                const double den = eval_node(n.rhs, env);
                if (den == 0.0) throw EvalError("division by zero at node " + describe(i));
                return checked(eval_node(n.lhs, env) / den, i);
            }
            case Op::pow: return checked(std::pow(eval_node(n.lhs, env), eval_node(n.rhs, env)), i);
            case Op::call: {
                const double a = eval_node(n.lhs, env);
                switch (n.func) {
                    case Func::sin: return std::sin(a);
                    case Func::cos: return std::cos(a);
                    case Func::tan: return checked(std::tan(a), i);
                    case Func::exp: return checked(std::exp(a), i);
                    case Func::log:
                        if (a <= 0.0) throw EvalError("log of non-positive value at node " + describe(i));
                        return std::log(a);
                    case Func::sqrt:
                        if (a < 0.0) throw EvalError("sqrt of negative value at node " + describe(i));
                        return std::sqrt(a);
                    case Func::abs: return std::fabs(a);
                }
                break;
            }
            case Op::diff_q: return jet_node(n.lhs, env, Var::q).d1;
        }
        throw EvalError("corrupt expression tree");
    }

    Jet2 jet_node(int i, const std::array<double, 3>& env, Var active) const {
        const Node& n = nodes_[std::size_t(i)];
        switch (n.op) {
            case Op::constant: return Jet2::constant(n.value);
            case Op::pi: return Jet2::constant(std::numbers::pi);
            case Op::variable: {
                const double v = env[std::size_t(n.var)];
                return n.var == active ? Jet2::variable(v) : Jet2::constant(v);
            }
            case Op::neg: return -jet_node(n.lhs, env, active);
            case Op::add: return checked(jet_node(n.lhs, env, active) + jet_node(n.rhs, env, active), i);
            case Op::sub: return checked(jet_node(n.lhs, env, active) - jet_node(n.rhs, env, active), i);
            case Op::mul: return checked(jet_node(n.lhs, env, active) * jet_node(n.rhs, env, active), i);
            case Op::div: {
                const Jet2 den = jet_node(n.rhs, env, active);
                if (den.value == 0.0) throw EvalError("division by zero at node " + describe(i));
                return checked(jet_node(n.lhs, env, active) / den, i);
            }
            case Op::pow: return checked(jet_pow(jet_node(n.lhs, env, active), jet_node(n.rhs, env, active), i), i);
            case Op::call: return checked(jet_call(n.func, jet_node(n.lhs, env, active), i), i);
            case Op::diff_q:
                throw EvalError("derivative node cannot be differentiated further: " + describe(i));
        }
        throw EvalError("corrupt expression tree");
    }

    Jet2 jet_pow(const Jet2& base, const Jet2& ex, int i) const {
        if (ex.d1 == 0.0 && ex.d2 == 0.0) {
            const double n = ex.value;
            const double x = base.value;
            if (base.d1 == 0.0 && base.d2 == 0.0) return Jet2::constant(std::pow(x, n));
            const double g = std::pow(x, n);
            const double g1 = n == 0.0 ? 0.0 : n * std::pow(x, n - 1.0);
            const double g2 = (n == 0.0 || n == 1.0) ? 0.0 : n * (n - 1.0) * std::pow(x, n - 2.0);
            if (!std::isfinite(g1) || !std::isfinite(g2))
                throw EvalError("power not differentiable at node " + describe(i));
            return chain(base, g, g1, g2);
        }
        if (base.value <= 0.0)
            throw EvalError("variable exponent needs a positive base at node " + describe(i));
        // a^b = exp(b log a)
        const Jet2 log_a = chain(base, std::log(base.value), 1.0 / base.value, -1.0 / (base.value * base.value));
        const Jet2 prod = ex * log_a;
        const double e = std::exp(prod.value);
        return chain(prod, e, e, e);
    }

    Jet2 jet_call(Func f, const Jet2& a, int i) const {
        const double x = a.value;
        switch (f) {
            case Func::sin: return chain(a, std::sin(x), std::cos(x), -std::sin(x));
            case Func::cos: return chain(a, std::cos(x), -std::sin(x), -std::cos(x));
            case Func::tan: {
                const double tn = std::tan(x);
                const double sec2 = 1.0 + tn * tn;
                return chain(a, tn, sec2, 2.0 * sec2 * tn);
            }
            case Func::exp: {
                const double e = std::exp(x);
                return chain(a, e, e, e);
            }
            case Func::log:
                if (x <= 0.0) throw EvalError("log of non-positive value at node " + describe(i));
                return chain(a, std::log(x), 1.0 / x, -1.0 / (x * x));
            case Func::sqrt: {
                if (x <= 0.0) throw EvalError("sqrt not differentiable at node " + describe(i));
                const double s = std::sqrt(x);
                return chain(a, s, 0.5 / s, -0.25 / (x * s));
            }
            case Func::abs:
                if (x == 0.0) throw EvalError("abs not differentiable at 0, node " + describe(i));
                return chain(a, std::fabs(x), x > 0.0 ? 1.0 : -1.0, 0.0);
        }
        throw EvalError("corrupt expression tree");
    }

    static std::string format_number(double v) {
        std::array<char, 64> buf{};
        auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
        return std::string(buf.data(), res.ptr);
    }

    void print_child(int child, bool parens, std::string& out) const {
        if (parens) out += '(';
        print_node(child, out);
        if (parens) out += ')';
    }

    void print_node(int i, std::string& out) const {
        const Node& n = nodes_[std::size_t(i)];
        switch (n.op) {
            case Op::constant: {
                if (std::signbit(n.value)) {
                    out += "(-" + format_number(-n.value) + ")";
                } else {
                    out += format_number(n.value);
                }
                return;
            }
            case Op::pi: out += "pi"; return;
            case Op::variable: out += var_name(n.var); return;
            case Op::neg:
                out += '-';
                print_child(n.lhs, node_precedence(n.lhs) < 3, out);
                return;
            case Op::call:
                out += func_name(n.func);
                print_child(n.lhs, true, out);
                return;
            case Op::diff_q:
                out += "dq";
                print_child(n.lhs, true, out);
                return;
            case Op::pow:
                print_child(n.lhs, node_precedence(n.lhs) <= 4, out);
                out += '^';
                print_child(n.rhs, node_precedence(n.rhs) < 3, out);
                return;
            default: {
                const int prec = precedence(n.op);
                print_child(n.lhs, node_precedence(n.lhs) < prec, out);
                out += n.op == Op::add ? " + " : n.op == Op::sub ? " - " : n.op == Op::mul ? "*" : "/";
                print_child(n.rhs, node_precedence(n.rhs) <= prec, out);
                return;
            }
        }
    }

    bool same_node(int a, const Expression& other, int b) const {
        const Node& x = nodes_[std::size_t(a)];
        const Node& y = other.nodes_[std::size_t(b)];
        if (x.op != y.op) return false;
        switch (x.op) {
            case Op::constant: return x.value == y.value;
            case Op::pi: return true;
            case Op::variable: return x.var == y.var;
            case Op::call:
                return x.func == y.func && same_node(x.lhs, other, y.lhs);
            case Op::neg:
            case Op::diff_q: return same_node(x.lhs, other, y.lhs);
            default: return same_node(x.lhs, other, y.lhs) && same_node(x.rhs, other, y.rhs);
        }
    }

    std::vector<Node> nodes_;
    int root_ = 0;
    std::string source_;
};

/// Recursive-descent parser producing the flat node array of an Expression.
class ExpressionParser {
public:
    ExpressionParser(std::string_view text, VarSet allowed) : text_(text), allowed_(allowed) {}

    Expression run() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
        const int root = parse_sum();
        skip_ws();
        if (pos_ < text_.size())
            throw ParseError(std::string("unexpected character '") + text_[pos_] + "'", pos_);
        Expression e;
        e.nodes_ = std::move(nodes_);
        e.root_ = root;
        e.source_ = std::string(text_);
        return e;
    }

private:
    using Op = Expression::Op;
    using Node = Expression::Node;

    int add(Node n) {
        nodes_.push_back(n);
        return int(nodes_.size()) - 1;
    }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                       text_[pos_] == '\r'))
            ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            if (pos_ >= text_.size()) throw ParseError(std::string("expected '") + c + "' before end of input", pos_);
            throw ParseError(std::string("expected '") + c + "'", pos_);
        }
    }

    int parse_sum() {
        int lhs = parse_product();
        for (;;) {
            skip_ws();
            const std::size_t at = pos_;
            if (accept('+')) {
                lhs = add(Node{Op::add, Func::sin, Var::t, 0.0, lhs, parse_product(), at});
            } else if (accept('-')) {
                lhs = add(Node{Op::sub, Func::sin, Var::t, 0.0, lhs, parse_product(), at});
            } else {
                return lhs;
            }
        }
    }

    int parse_product() {
        int lhs = parse_unary();
        for (;;) {
            skip_ws();
            const std::size_t at = pos_;
            if (accept('*')) {
                lhs = add(Node{Op::mul, Func::sin, Var::t, 0.0, lhs, parse_unary(), at});
            } else if (accept('/')) {
                lhs = add(Node{Op::div, Func::sin, Var::t, 0.0, lhs, parse_unary(), at});
            } else {
                return lhs;
            }
        }
    }

    int parse_unary() {
        skip_ws();
        const std::size_t at = pos_;
        if (accept('-')) return add(Node{Op::neg, Func::sin, Var::t, 0.0, parse_unary(), -1, at});
        return parse_power();
    }

    int parse_power() {
        const int base = parse_primary();
        skip_ws();
        const std::size_t at = pos_;
        if (accept('^')) return add(Node{Op::pow, Func::sin, Var::t, 0.0, base, parse_unary(), at});
        return base;
    }

    int parse_primary() {
        skip_ws();
        const std::size_t at = pos_;
        if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            const int inner = parse_sum();
            expect(')');
            return inner;
        }
        if ((c >= '0' && c <= '9') || c == '.') return parse_number();
        if (is_ident_start(c)) {
            std::size_t end = pos_;
            while (end < text_.size() && is_ident_char(text_[end])) ++end;
            const std::string_view ident = text_.substr(pos_, end - pos_);
            pos_ = end;
            if (ident == "pi") return add(Node{Op::pi, Func::sin, Var::t, 0.0, -1, -1, at});
            for (Var v : {Var::t, Var::q, Var::p}) {
                if (ident == var_name(v)) {
                    if (!allowed_.contains(v))
                        throw ParseError("variable '" + std::string(ident) + "' is not allowed here", at);
                    return add(Node{Op::variable, Func::sin, v, 0.0, -1, -1, at});
                }
            }
            for (const auto& [name, fn] : kFunctions) {
                if (ident == name) {
                    expect('(');
                    const int arg = parse_sum();
                    expect(')');
                    return add(Node{Op::call, fn, Var::t, 0.0, arg, -1, at});
                }
            }
            if (ident == "dq") {
                if (!allowed_.contains(Var::q)) throw ParseError("dq(.) needs q to be an allowed variable", at);
                expect('(');
                const int arg = parse_sum();
                expect(')');
                return add(Node{Op::diff_q, Func::sin, Var::t, 0.0, arg, -1, at});
            }
            throw ParseError("unknown identifier '" + std::string(ident) + "'", at);
        }
        throw ParseError(std::string("unexpected character '") + c + "'", at);
    }

    int parse_number() {
        const std::size_t at = pos_;
        std::size_t end = pos_;
        while (end < text_.size() && ((text_[end] >= '0' && text_[end] <= '9') || text_[end] == '.')) ++end;
        if (end < text_.size() && (text_[end] == 'e' || text_[end] == 'E')) {
            std::size_t k = end + 1;
            if (k < text_.size() && (text_[k] == '+' || text_[k] == '-')) ++k;
            if (k < text_.size() && text_[k] >= '0' && text_[k] <= '9') {
                end = k;
                while (end < text_.size() && text_[end] >= '0' && text_[end] <= '9') ++end;
            }
        }
        double value = 0.0;
        const auto res = std::from_chars(text_.data() + at, text_.data() + end, value);
        if (res.ec != std::errc{} || res.ptr != text_.data() + end)
            throw ParseError("malformed number '" + std::string(text_.substr(at, end - at)) + "'", at);
        pos_ = end;
        return add(Node{Op::constant, Func::sin, Var::t, value, -1, -1, at});
    }

    static bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
    static bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

    std::string_view text_;
    VarSet allowed_;
    std::size_t pos_ = 0;
    std::vector<Node> nodes_;
};

inline Expression Expression::parse(std::string_view text, VarSet allowed) {
    return ExpressionParser(text, allowed).run();
}

}  // namespace relosc
