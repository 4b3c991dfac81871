#include "nlsc/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "nlsc/errors.hpp"

namespace nlsc {

struct Expression::Node {
    enum class Kind { Number, Coord, Norm, Neg, Add, Sub, Mul, Div, Pow, Func } kind;
    double value = 0.0;
    int index = 0;
    double (*fn)(double) = nullptr;
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

NodePtr leaf(Kind k, double v = 0.0, int idx = 0) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = k;
    n->value = v;
    n->index = idx;
    return n;
}

NodePtr binary(Kind k, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

double fn_abs(double v) { return std::abs(v); }
double fn_exp(double v) { return std::exp(v); }
double fn_log(double v) { return std::log(v); }
double fn_sqrt(double v) { return std::sqrt(v); }
double fn_sin(double v) { return std::sin(v); }
double fn_cos(double v) { return std::cos(v); }

class Parser {
public:
    Parser(const std::string& s, int dim) : s_(s), dim_(dim) {}

    NodePtr run() {
        NodePtr e = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return e;
    }

private:
    const std::string& s_;
    int dim_;
    std::size_t pos_ = 0;
    bool in_bars_ = false;

    [[noreturn]] void fail(const std::string& why) const {
        throw ValidationError("potential expression '" + s_ + "': " + why + " at position " +
                              std::to_string(pos_));
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        NodePtr left = term();
        for (;;) {
            if (eat('+'))
                left = binary(Kind::Add, left, term());
            else if (eat('-'))
                left = binary(Kind::Sub, left, term());
            else
                return left;
        }
    }

    NodePtr term() {
        NodePtr left = unary();
        for (;;) {
            if (eat('*'))
                left = binary(Kind::Mul, left, unary());
            else if (eat('/'))
                left = binary(Kind::Div, left, unary());
            else
                return left;
        }
    }

    NodePtr unary() {
        if (eat('-')) {
            auto n = std::make_shared<Expression::Node>();
            n->kind = Kind::Neg;
            n->a = unary();
            return n;
        }
        if (eat('+')) return unary();
        return power();
    }

    // Right associative: 2^3^2 = 2^9.
    NodePtr power() {
        NodePtr base = primary();
        if (eat('^')) return binary(Kind::Pow, base, unary());
        return base;
    }

    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of input");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr e = expr();
            if (!eat(')')) fail("missing ')'");
            return e;
        }
        if (c == '|' && !in_bars_) {
            ++pos_;
            in_bars_ = true;
            skip();
            if (pos_ < s_.size() && s_[pos_] == 'x') {
                const std::size_t save = pos_;
                ++pos_;
                if (eat('|')) {
                    in_bars_ = false;
                    return leaf(Kind::Norm);
                }
                pos_ = save;
            }
            NodePtr e = expr();
            if (!eat('|')) fail("missing closing '|'");
            in_bars_ = false;
            auto n = std::make_shared<Expression::Node>();
            n->kind = Kind::Func;
            n->fn = fn_abs;
            n->a = e;
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("bad number");
            pos_ += static_cast<std::size_t>(end - begin);
            return leaf(Kind::Number, v);
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::string id;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                id += s_[pos_++];
            return identifier(id);
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    NodePtr identifier(const std::string& id) {
        if (id == "r") return leaf(Kind::Norm);
        if (id == "pi") return leaf(Kind::Number, 3.14159265358979323846);
        if (id.size() >= 2 && id[0] == 'x') {
            std::string digits = id.substr(id[1] == '_' ? 2 : 1);
            if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
                const int k = std::stoi(digits);
                if (k < 1 || k > dim_)
                    fail("coordinate " + id + " outside dimension " + std::to_string(dim_));
                return leaf(Kind::Coord, 0.0, k - 1);
            }
        }
        double (*f)(double) = nullptr;
        if (id == "exp") f = fn_exp;
        else if (id == "log") f = fn_log;
        else if (id == "sqrt") f = fn_sqrt;
        else if (id == "sin") f = fn_sin;
        else if (id == "cos") f = fn_cos;
        else if (id == "abs") f = fn_abs;
        if (!f) fail("unknown identifier '" + id + "'");
        if (!eat('(')) fail("expected '(' after " + id);
        NodePtr arg = expr();
        if (!eat(')')) fail("missing ')' after argument of " + id);
        auto n = std::make_shared<Expression::Node>();
        n->kind = Kind::Func;
        n->fn = f;
        n->a = arg;
        return n;
    }
};

double eval(const Expression::Node& n, std::span<const double> x, double norm) {
    switch (n.kind) {
        case Kind::Number: return n.value;
        case Kind::Coord: return x[static_cast<std::size_t>(n.index)];
        case Kind::Norm: return norm;
        case Kind::Neg: return -eval(*n.a, x, norm);
        case Kind::Add: return eval(*n.a, x, norm) + eval(*n.b, x, norm);
        case Kind::Sub: return eval(*n.a, x, norm) - eval(*n.b, x, norm);
        case Kind::Mul: return eval(*n.a, x, norm) * eval(*n.b, x, norm);
        case Kind::Div: return eval(*n.a, x, norm) / eval(*n.b, x, norm);
        case Kind::Pow: {
            const double e = eval(*n.b, x, norm);
            const double b = eval(*n.a, x, norm);
            if (e == 2.0) return b * b;
            return std::pow(b, e);
        }
        case Kind::Func: return n.fn(eval(*n.a, x, norm));
    }
    return 0.0;
}

}  // namespace

Expression Expression::parse(const std::string& text, int dim) {
    if (dim < 1) throw ValidationError("expression dimension must be positive");
    Expression e;
    e.root_ = Parser(text, dim).run();
    e.text_ = text;
    e.dim_ = dim;
    return e;
}

double Expression::operator()(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim_)
        throw ValidationError("expression evaluated with wrong dimension");
    double n2 = 0.0;
    for (double v : x) n2 += v * v;
    return eval(*root_, x, std::sqrt(n2));
}

}  // namespace nlsc
