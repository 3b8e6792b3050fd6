#ifndef RP_EXPR_HPP
#define RP_EXPR_HPP

#include <cctype>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "jet.hpp"

// Small expression language for user-supplied charts and connections.
//
// Grammar (precedence climbing):
//   expr    := term (('+' | '-') term)*
//   term    := factor (('*' | '/') factor)*
//   factor  := unary ('^' factor)?            -- right associative power
//   unary   := ('-' | '+') unary | primary
//   primary := number | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
//   variable := x1, x2, ... (1-based); plain x, y, z alias x1, x2, x3
//   func    := sin | cos | tan | exp | sqrt | abs | atan2 | pow
//
// Expressions evaluate on order-2 jets, so parsed maps provide first and
// second derivatives for Lip validation and one-form calculus.

namespace rp {
namespace expr {

struct Node {
    enum Kind { Num, Var, Add, Sub, Mul, Div, Pow, Neg, Fun } kind;
    double value = 0.0;            // Num
    int var = 0;                   // Var index (0-based)
    std::string fun;               // Fun name
    std::vector<std::shared_ptr<Node>> args;
};

using NodePtr = std::shared_ptr<Node>;

class parse_error : public domain_error {
  public:
    using domain_error::domain_error;
};

namespace detail {

struct Parser {
    const std::string& src;
    std::size_t pos = 0;

    void skip() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }
    bool eat(char c) {
        skip();
        if (pos < src.size() && src[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& what) {
        throw parse_error("expr: " + what + " at position " + std::to_string(pos) + " in \"" +
                          src + "\"");
    }

    NodePtr parse() {
        NodePtr e = expr();
        skip();
        if (pos != src.size()) fail("trailing input");
        return e;
    }

    NodePtr expr() {
        NodePtr lhs = term();
        for (;;) {
            if (eat('+')) {
                auto n = std::make_shared<Node>(Node{Node::Add});
                n->args = {lhs, term()};
                lhs = n;
            } else if (eat('-')) {
                auto n = std::make_shared<Node>(Node{Node::Sub});
                n->args = {lhs, term()};
                lhs = n;
            } else {
                return lhs;
            }
        }
    }

    NodePtr term() {
        NodePtr lhs = factor();
        for (;;) {
            if (eat('*')) {
                auto n = std::make_shared<Node>(Node{Node::Mul});
                n->args = {lhs, factor()};
                lhs = n;
            } else if (eat('/')) {
                auto n = std::make_shared<Node>(Node{Node::Div});
                n->args = {lhs, factor()};
                lhs = n;
            } else {
                return lhs;
            }
        }
    }

    NodePtr factor() {
        NodePtr base = unary();
        if (eat('^')) {
            auto n = std::make_shared<Node>(Node{Node::Pow});
            n->args = {base, factor()};
            return n;
        }
        return base;
    }

    NodePtr unary() {
        if (eat('-')) {
            auto n = std::make_shared<Node>(Node{Node::Neg});
            n->args = {unary()};
            return n;
        }
        if (eat('+')) return unary();
        return primary();
    }

    NodePtr primary() {
        skip();
        if (pos >= src.size()) fail("unexpected end of input");
        char c = src[pos];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return ident();
        if (eat('(')) {
            NodePtr e = expr();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        fail("unexpected character");
    }

    NodePtr number() {
        std::size_t end = pos;
        while (end < src.size() &&
               (std::isdigit(static_cast<unsigned char>(src[end])) || src[end] == '.' ||
                src[end] == 'e' || src[end] == 'E' ||
                ((src[end] == '+' || src[end] == '-') && end > pos &&
                 (src[end - 1] == 'e' || src[end - 1] == 'E'))))
            ++end;
        auto n = std::make_shared<Node>(Node{Node::Num});
        try {
            n->value = std::stod(src.substr(pos, end - pos));
        } catch (const std::exception&) {
            fail("bad number");
        }
        pos = end;
        return n;
    }

    NodePtr ident() {
        std::size_t end = pos;
        while (end < src.size() && (std::isalnum(static_cast<unsigned char>(src[end])) ||
                                    src[end] == '_'))
            ++end;
        std::string name = src.substr(pos, end - pos);
        pos = end;
        skip();
        if (pos < src.size() && src[pos] == '(') {
            ++pos;
            auto n = std::make_shared<Node>(Node{Node::Fun});
            n->fun = name;
            n->args.push_back(expr());
            while (eat(',')) n->args.push_back(expr());
            if (!eat(')')) fail("expected ')' after arguments");
            const std::size_t want = (name == "atan2" || name == "pow") ? 2 : 1;
            if (n->args.size() != want) fail("wrong argument count for " + name);
            return n;
        }
        auto n = std::make_shared<Node>(Node{Node::Var});
        if (name == "pi") {
            n->kind = Node::Num;
            n->value = M_PI;
            return n;
        }
        if (name == "x") n->var = 0;
        else if (name == "y") n->var = 1;
        else if (name == "z") n->var = 2;
        else if (name.size() >= 2 && name[0] == 'x') {
            int idx = 0;
            for (std::size_t k = 1; k < name.size(); ++k) {
                if (!std::isdigit(static_cast<unsigned char>(name[k]))) fail("unknown identifier " + name);
                idx = idx * 10 + (name[k] - '0');
            }
            if (idx < 1) fail("variable index must be >= 1");
            n->var = idx - 1;
        } else {
            fail("unknown identifier " + name);
        }
        return n;
    }
};

inline Jet2 eval_node(const Node& n, const std::vector<Jet2>& x) {
    switch (n.kind) {
        case Node::Num:
            return Jet2::constant(n.value, x.empty() ? 0 : x[0].n, x.empty() ? 0 : x[0].ord);
        case Node::Var:
            if (n.var >= static_cast<int>(x.size()))
                throw domain_error("expr: variable x" + std::to_string(n.var + 1) +
                                   " out of range");
            return x[static_cast<std::size_t>(n.var)];
        case Node::Add:
            return eval_node(*n.args[0], x) + eval_node(*n.args[1], x);
        case Node::Sub:
            return eval_node(*n.args[0], x) - eval_node(*n.args[1], x);
        case Node::Mul:
            return eval_node(*n.args[0], x) * eval_node(*n.args[1], x);
        case Node::Div:
            return eval_node(*n.args[0], x) / eval_node(*n.args[1], x);
        case Node::Neg:
            return eval_node(*n.args[0], x) * (-1.0);
        case Node::Pow: {
            Jet2 b = eval_node(*n.args[0], x);
            const Node& e = *n.args[1];
            if (e.kind == Node::Num && e.value == std::floor(e.value))
                return pow(b, static_cast<int>(e.value));
            return pow(b, eval_node(e, x).v);
        }
        case Node::Fun: {
            if (n.fun == "atan2")
                return atan2(eval_node(*n.args[0], x), eval_node(*n.args[1], x));
            if (n.fun == "pow") {
                Jet2 b = eval_node(*n.args[0], x);
                const Node& e = *n.args[1];
                if (e.kind == Node::Num && e.value == std::floor(e.value))
                    return pow(b, static_cast<int>(e.value));
                return pow(b, eval_node(e, x).v);
            }
            Jet2 a = eval_node(*n.args[0], x);
            if (n.fun == "sin") return sin(a);
            if (n.fun == "cos") return cos(a);
            if (n.fun == "tan") return sin(a) / cos(a);
            if (n.fun == "exp") return exp(a);
            if (n.fun == "sqrt") return sqrt(a);
            if (n.fun == "abs") return a.v >= 0.0 ? a : a * (-1.0);
            throw parse_error("expr: unknown function " + n.fun);
        }
    }
    throw parse_error("expr: corrupt node");
}

}  // namespace detail

inline NodePtr parse(const std::string& src) {
    detail::Parser p{src};
    return p.parse();
}

// reject out-of-range variables and unknown function names up front
inline void check(const Node& n, int dim_in) {
    if (n.kind == Node::Var && n.var >= dim_in)
        throw parse_error("expr: variable x" + std::to_string(n.var + 1) +
                          " exceeds input dimension " + std::to_string(dim_in));
    if (n.kind == Node::Fun && n.fun != "sin" && n.fun != "cos" && n.fun != "tan" &&
        n.fun != "exp" && n.fun != "sqrt" && n.fun != "abs" && n.fun != "atan2" &&
        n.fun != "pow")
        throw parse_error("expr: unknown function " + n.fun);
    for (const auto& a : n.args) check(*a, dim_in);
}

}  // namespace expr

// compile a list of component expressions into a jet map R^dim_in -> R^m
inline JetFn compile_exprs(const std::vector<std::string>& components, int dim_in) {
    std::vector<expr::NodePtr> nodes;
    nodes.reserve(components.size());
    for (const auto& s : components) {
        nodes.push_back(expr::parse(s));
        expr::check(*nodes.back(), dim_in);
    }
    JetFn fn;
    fn.dim_in = dim_in;
    fn.dim_out = static_cast<int>(components.size());
    fn.f = [nodes](const std::vector<Jet2>& x) {
        std::vector<Jet2> out;
        out.reserve(nodes.size());
        for (const auto& n : nodes) out.push_back(expr::detail::eval_node(*n, x));
        return out;
    };
    return fn;
}

}  // namespace rp

#endif
