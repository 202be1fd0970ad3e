#pragma once

// Scalar expressions of time t and parameter components b1..bd, used for the
// entries of A(t,beta), B(t,beta), G(t,beta) and the boundary states.
// Immutable after parsing; evaluation is a pure function of (t, beta).

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "enscon/errors.hpp"

namespace enscon {

enum class ExprKind { Literal, Time, Param, Neg, Add, Sub, Mul, Div, Pow, Call };
enum class ExprFunc { Sin, Cos, Exp, Sqrt, Abs };

namespace detail {

struct ExprNode {
    ExprKind kind;
    double literal = 0.0;       // Literal
    int param_index = 0;        // Param: 1-based component of beta
    ExprFunc func = ExprFunc::Sin;
    std::shared_ptr<const ExprNode> lhs;
    std::shared_ptr<const ExprNode> rhs;
};

using NodePtr = std::shared_ptr<const ExprNode>;

inline double pow_eval(double base, double exponent) {
    // Integer-exponent fast path; negative base with fractional exponent
    // falls through to std::pow and yields NaN, rejected by strict callers.
    double ip;
    if (std::modf(exponent, &ip) == 0.0 && std::abs(ip) <= 64.0) {
        long e = static_cast<long>(ip);
        bool inv = e < 0;
        unsigned long ue = static_cast<unsigned long>(inv ? -e : e);
        double acc = 1.0, b = base;
        while (ue) {
            if (ue & 1ul) acc *= b;
            b *= b;
            ue >>= 1;
        }
        return inv ? 1.0 / acc : acc;
    }
    return std::pow(base, exponent);
}

inline double eval_node(const ExprNode& n, double t, std::span<const double> beta) {
    switch (n.kind) {
    case ExprKind::Literal: return n.literal;
    case ExprKind::Time: return t;
    case ExprKind::Param: return beta[static_cast<std::size_t>(n.param_index - 1)];
    case ExprKind::Neg: return -eval_node(*n.lhs, t, beta);
    case ExprKind::Add: return eval_node(*n.lhs, t, beta) + eval_node(*n.rhs, t, beta);
    case ExprKind::Sub: return eval_node(*n.lhs, t, beta) - eval_node(*n.rhs, t, beta);
    case ExprKind::Mul: return eval_node(*n.lhs, t, beta) * eval_node(*n.rhs, t, beta);
    case ExprKind::Div: return eval_node(*n.lhs, t, beta) / eval_node(*n.rhs, t, beta);
    case ExprKind::Pow: return pow_eval(eval_node(*n.lhs, t, beta), eval_node(*n.rhs, t, beta));
    case ExprKind::Call: {
        double a = eval_node(*n.lhs, t, beta);
        switch (n.func) {
        case ExprFunc::Sin: return std::sin(a);
        case ExprFunc::Cos: return std::cos(a);
        case ExprFunc::Exp: return std::exp(a);
        case ExprFunc::Sqrt: return std::sqrt(a);
        case ExprFunc::Abs: return std::abs(a);
        }
        return std::numeric_limits<double>::quiet_NaN();
    }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline bool equal_nodes(const ExprNode& a, const ExprNode& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case ExprKind::Literal: {
        // Compare by bit pattern so -0.0 and 0.0 stay distinguishable.
        double x = a.literal, y = b.literal;
        return std::memcmp(&x, &y, sizeof(double)) == 0;
    }
    case ExprKind::Time: return true;
    case ExprKind::Param: return a.param_index == b.param_index;
    case ExprKind::Neg: return equal_nodes(*a.lhs, *b.lhs);
    case ExprKind::Call: return a.func == b.func && equal_nodes(*a.lhs, *b.lhs);
    default: return equal_nodes(*a.lhs, *b.lhs) && equal_nodes(*a.rhs, *b.rhs);
    }
}

inline const char* func_name(ExprFunc f) {
    switch (f) {
    case ExprFunc::Sin: return "sin";
    case ExprFunc::Cos: return "cos";
    case ExprFunc::Exp: return "exp";
    case ExprFunc::Sqrt: return "sqrt";
    case ExprFunc::Abs: return "abs";
    }
    return "?";
}

// Binding strength used when printing with minimal parentheses.
inline int precedence(const ExprNode& n) {
    switch (n.kind) {
    case ExprKind::Add:
    case ExprKind::Sub: return 1;
    case ExprKind::Mul:
    case ExprKind::Div: return 2;
    case ExprKind::Neg: return 3;
    case ExprKind::Pow: return 4;
    default: return 5;
    }
}

inline void print_node(const ExprNode& n, std::string& out);

inline void print_child(const ExprNode& child, int parent_prec, bool needs_paren_on_tie,
                        std::string& out) {
    int p = precedence(child);
    bool paren = p < parent_prec || (p == parent_prec && needs_paren_on_tie);
    if (paren) out += '(';
    print_node(child, out);
    if (paren) out += ')';
}

inline void print_node(const ExprNode& n, std::string& out) {
    switch (n.kind) {
    case ExprKind::Literal: {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof(buf), n.literal);
        out.append(buf, res.ptr);
        return;
    }
    case ExprKind::Time: out += 't'; return;
    case ExprKind::Param:
        out += 'b';
        out += std::to_string(n.param_index);
        return;
    case ExprKind::Neg:
        out += '-';
        // The operand of unary minus must bind at least as tightly as the
        // minus itself, except ^ which binds tighter and stays bare.
        print_child(*n.lhs, precedence(n), false, out);
        return;
    case ExprKind::Add:
        print_child(*n.lhs, 1, false, out);
        out += '+';
        print_child(*n.rhs, 1, true, out);
        return;
    case ExprKind::Sub:
        print_child(*n.lhs, 1, false, out);
        out += '-';
        print_child(*n.rhs, 1, true, out);
        return;
    case ExprKind::Mul:
        print_child(*n.lhs, 2, false, out);
        out += '*';
        print_child(*n.rhs, 2, true, out);
        return;
    case ExprKind::Div:
        print_child(*n.lhs, 2, false, out);
        out += '/';
        print_child(*n.rhs, 2, true, out);
        return;
    case ExprKind::Pow:
        // Right-associative: parenthesize a left child of equal precedence.
        print_child(*n.lhs, 4, true, out);
        out += '^';
        print_child(*n.rhs, 4, false, out);
        return;
    case ExprKind::Call:
        out += func_name(n.func);
        out += '(';
        print_node(*n.lhs, out);
        out += ')';
        return;
    }
}

} // namespace detail

/// Immutable expression handle; cheap to copy, safe to share across threads.
class Expr {
public:
    Expr() = default;
    explicit Expr(detail::NodePtr root) : root_(std::move(root)) {}

    /// A constant expression.
    static Expr literal(double v) {
        auto n = std::make_shared<detail::ExprNode>();
        n->kind = ExprKind::Literal;
        n->literal = v;
        return Expr(n);
    }

    bool valid() const { return root_ != nullptr; }
    const detail::ExprNode& root() const { return *root_; }

    /// IEEE double evaluation; non-finite results are returned as-is.
    double eval(double t, std::span<const double> beta) const {
        return detail::eval_node(*root_, t, beta);
    }

    /// Evaluation that rejects NaN and +-inf.
    double eval_checked(double t, std::span<const double> beta) const {
        double v = eval(t, beta);
        if (!std::isfinite(v)) {
            throw NonFiniteResult("expression '" + to_string() + "' evaluated to a non-finite value");
        }
        return v;
    }

    std::string to_string() const {
        std::string out;
        detail::print_node(*root_, out);
        return out;
    }

    bool structurally_equal(const Expr& other) const {
        return detail::equal_nodes(*root_, *other.root_);
    }

private:
    detail::NodePtr root_;
};

namespace detail {

class Parser {
public:
    Parser(std::string_view src, int param_dim) : src_(src), dim_(param_dim) {}

    NodePtr parse() {
        skip_ws();
        if (pos_ >= src_.size()) throw SyntaxError(pos_, "expression", "end of input");
        NodePtr e = parse_sum();
        skip_ws();
        if (pos_ < src_.size()) throw SyntaxError(pos_, "end of input", token_preview());
        return e;
    }

private:
    std::string_view src_;
    int dim_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    std::string token_preview() {
        skip_ws();
        if (pos_ >= src_.size()) return "end of input";
        return "'" + std::string(1, src_[pos_]) + "'";
    }

    static NodePtr make_binary(ExprKind k, NodePtr l, NodePtr r) {
        auto n = std::make_shared<ExprNode>();
        n->kind = k;
        n->lhs = std::move(l);
        n->rhs = std::move(r);
        return n;
    }

    NodePtr parse_sum() {
        NodePtr lhs = parse_term();
        for (;;) {
            if (consume('+')) lhs = make_binary(ExprKind::Add, lhs, parse_term());
            else if (consume('-')) lhs = make_binary(ExprKind::Sub, lhs, parse_term());
            else return lhs;
        }
    }

    NodePtr parse_term() {
        NodePtr lhs = parse_factor();
        for (;;) {
            if (consume('*')) lhs = make_binary(ExprKind::Mul, lhs, parse_factor());
            else if (consume('/')) lhs = make_binary(ExprKind::Div, lhs, parse_factor());
            else return lhs;
        }
    }

    // factor := '-' factor | power ; unary minus binds looser than '^',
    // so -2^2 == -(2^2) while 2^-2 still parses (the exponent is a factor).
    NodePtr parse_factor() {
        if (consume('-')) {
            auto n = std::make_shared<ExprNode>();
            n->kind = ExprKind::Neg;
            n->lhs = parse_factor();
            return n;
        }
        return parse_power();
    }

    NodePtr parse_power() {
        NodePtr base = parse_atom();
        if (consume('^')) return make_binary(ExprKind::Pow, base, parse_factor());
        return base;
    }

    NodePtr parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw SyntaxError(pos_, "expression", "end of input");
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr e = parse_sum();
            if (!consume(')')) throw SyntaxError(pos_, "')'", token_preview());
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
        throw SyntaxError(pos_, "expression", token_preview());
    }

    NodePtr parse_number() {
        const char* begin = src_.data() + pos_;
        const char* end = src_.data() + src_.size();
        double value = 0.0;
        auto res = std::from_chars(begin, end, value);
        if (res.ec != std::errc{}) throw SyntaxError(pos_, "number", token_preview());
        pos_ = static_cast<std::size_t>(res.ptr - src_.data());
        auto n = std::make_shared<ExprNode>();
        n->kind = ExprKind::Literal;
        n->literal = value;
        return n;
    }

    NodePtr parse_identifier() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string name(src_.substr(start, pos_ - start));

        if (name == "t") {
            auto n = std::make_shared<ExprNode>();
            n->kind = ExprKind::Time;
            return n;
        }
        if (name == "pi") {
            auto n = std::make_shared<ExprNode>();
            n->kind = ExprKind::Literal;
            n->literal = 3.14159265358979323846;
            return n;
        }
        if (name == "b" && dim_ == 1) return param_node(1, start);
        if (name.size() >= 2 && name[0] == 'b') {
            bool digits = true;
            for (std::size_t i = 1; i < name.size(); ++i)
                if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
            if (digits) {
                int idx = std::stoi(name.substr(1));
                return param_node(idx, start);
            }
        }
        // Function call?
        static const std::pair<const char*, ExprFunc> fns[] = {
            {"sin", ExprFunc::Sin}, {"cos", ExprFunc::Cos}, {"exp", ExprFunc::Exp},
            {"sqrt", ExprFunc::Sqrt}, {"abs", ExprFunc::Abs}};
        for (const auto& [fname, f] : fns) {
            if (name == fname) {
                if (!consume('(')) throw SyntaxError(pos_, "'(' after function name", token_preview());
                NodePtr arg = parse_sum();
                if (!consume(')')) throw SyntaxError(pos_, "')'", token_preview());
                auto n = std::make_shared<ExprNode>();
                n->kind = ExprKind::Call;
                n->func = f;
                n->lhs = arg;
                return n;
            }
        }
        throw UnknownIdentifier(name, start);
    }

    NodePtr param_node(int index, std::size_t offset) {
        if (index < 1 || index > dim_) throw ParamIndexOutOfRange(index, dim_, offset);
        auto n = std::make_shared<ExprNode>();
        n->kind = ExprKind::Param;
        n->param_index = index;
        return n;
    }
};

} // namespace detail

/// Parse an infix expression over t, b1..bd (alias b for d=1), the constant pi,
/// and the functions sin, cos, exp, sqrt, abs. Precedence ^ > unary- > */ > +-,
/// with ^ right-associative.
inline Expr parse(std::string_view source, int param_dim) {
    if (source.empty()) throw SyntaxError(0, "expression", "empty input");
    detail::Parser p(source, param_dim);
    return Expr(p.parse());
}

} // namespace enscon
