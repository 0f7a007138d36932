#include "platefsi/expr.hpp"

#include "platefsi/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <functional>
#include <vector>

namespace platefsi {

struct Expression::Node {
    enum class Op {
        constant,
        var_t,
        var_x,
        var_z,
        add,
        sub,
        mul,
        div,
        pow,
        neg,
        fn,
        table
    };
    Op op = Op::constant;
    double value = 0.0;
    double (*fn)(double) = nullptr;
    std::shared_ptr<const Node> lhs, rhs;
    std::vector<double> xs, vals;

    double interpolate(double x) const {
        if (x <= xs.front())
            return vals.front();
        if (x >= xs.back())
            return vals.back();
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - xs.begin());
        const double s = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
        return vals[i - 1] + s * (vals[i] - vals[i - 1]);
    }

    double eval(double t, double x, double z) const {
        switch (op) {
        case Op::constant:
            return value;
        case Op::var_t:
            return t;
        case Op::var_x:
            return x;
        case Op::var_z:
            return z;
        case Op::add:
            return lhs->eval(t, x, z) + rhs->eval(t, x, z);
        case Op::sub:
            return lhs->eval(t, x, z) - rhs->eval(t, x, z);
        case Op::mul:
            return lhs->eval(t, x, z) * rhs->eval(t, x, z);
        case Op::div:
            return lhs->eval(t, x, z) / rhs->eval(t, x, z);
        case Op::pow:
            return std::pow(lhs->eval(t, x, z), rhs->eval(t, x, z));
        case Op::neg:
            return -lhs->eval(t, x, z);
        case Op::fn:
            return fn(lhs->eval(t, x, z));
        case Op::table:
            return interpolate(x);
        }
        return 0.0;
    }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

NodePtr make_const(double v) {
    auto n = std::make_shared<Expression::Node>();
    n->op = Expression::Node::Op::constant;
    n->value = v;
    return n;
}

NodePtr make_binary(Expression::Node::Op op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Expression::Node>();
    n->op = op;
    n->lhs = std::move(a);
    n->rhs = std::move(b);
    return n;
}

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        auto e = expr();
        skip_ws();
        if (pos_ != s_.size())
            fail("unexpected trailing input");
        return e;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("expression '" + s_ + "' at position " + std::to_string(pos_) + ": " +
                         what);
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])))
            ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        auto lhs = term();
        for (;;) {
            if (consume('+'))
                lhs = make_binary(Expression::Node::Op::add, lhs, term());
            else if (consume('-'))
                lhs = make_binary(Expression::Node::Op::sub, lhs, term());
            else
                return lhs;
        }
    }

    NodePtr term() {
        auto lhs = factor();
        for (;;) {
            if (consume('*'))
                lhs = make_binary(Expression::Node::Op::mul, lhs, factor());
            else if (consume('/'))
                lhs = make_binary(Expression::Node::Op::div, lhs, factor());
            else
                return lhs;
        }
    }

    // unary minus binds looser than '^': -x^2 = -(x^2)
    NodePtr factor() {
        if (consume('-')) {
            auto n = std::make_shared<Expression::Node>();
            n->op = Expression::Node::Op::neg;
            n->lhs = factor();
            return n;
        }
        return power();
    }

    NodePtr power() {
        auto base = primary();
        if (consume('^'))
            return make_binary(Expression::Node::Op::pow, base, factor()); // right assoc
        return base;
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= s_.size())
            fail("expected a value");
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(s_.substr(pos_), &used);
            } catch (const std::exception&) {
                fail("bad number");
            }
            pos_ += used;
            return make_const(v);
        }
        if (c == '(') {
            ++pos_;
            auto e = expr();
            if (!consume(')'))
                fail("missing ')'");
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c)))
            return ident();
        fail(std::string("unexpected character '") + c + "'");
    }

    NodePtr ident() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        const std::string name = s_.substr(start, pos_ - start);
        auto var = [&](Expression::Node::Op op) {
            auto n = std::make_shared<Expression::Node>();
            n->op = op;
            return NodePtr(n);
        };
        if (name == "t")
            return var(Expression::Node::Op::var_t);
        if (name == "x")
            return var(Expression::Node::Op::var_x);
        if (name == "z")
            return var(Expression::Node::Op::var_z);
        if (name == "pi")
            return make_const(M_PI);

        static const std::vector<std::pair<const char*, double (*)(double)>> fns = {
            {"sin", std::sin}, {"cos", std::cos},   {"tan", std::tan},
            {"exp", std::exp}, {"log", std::log},   {"sqrt", std::sqrt},
            {"abs", std::fabs}, {"tanh", std::tanh}, {"sinh", std::sinh},
            {"cosh", std::cosh}};
        for (const auto& [fname, fptr] : fns) {
            if (name == fname) {
                if (!consume('('))
                    fail("function '" + name + "' needs '('");
                auto arg = expr();
                if (!consume(')'))
                    fail("missing ')' after function argument");
                auto n = std::make_shared<Expression::Node>();
                n->op = Expression::Node::Op::fn;
                n->fn = fptr;
                n->lhs = arg;
                return n;
            }
        }
        fail("unknown identifier '" + name + "'");
    }
};

} // namespace

Expression::Expression() : root_(make_const(0.0)), source_("0") {}

Expression Expression::parse(const std::string& text) {
    Expression e;
    e.root_ = Parser(text).parse();
    e.source_ = text;
    return e;
}

Expression Expression::constant(double value) {
    Expression e;
    e.root_ = make_const(value);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    e.source_ = buf;
    return e;
}

Expression Expression::tabulated(std::vector<double> xs, std::vector<double> values) {
    if (xs.size() < 2 || xs.size() != values.size())
        throw ParseError("tabulated forcing: need matching x/values arrays of length >= 2");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1]))
            throw ParseError("tabulated forcing: x grid must be strictly increasing");
    auto n = std::make_shared<Expression::Node>();
    n->op = Expression::Node::Op::table;
    n->xs = std::move(xs);
    n->vals = std::move(values);
    Expression e;
    e.root_ = n;
    e.source_ = "<table>";
    return e;
}

Expression Expression::from_spec(const nlohmann::json& spec) {
    if (spec.is_number())
        return constant(spec.get<double>());
    if (spec.is_string())
        return parse(spec.get<std::string>());
    if (spec.is_object() && spec.contains("x") && spec.contains("values"))
        return tabulated(spec.at("x").get<std::vector<double>>(),
                         spec.at("values").get<std::vector<double>>());
    throw ParseError("forcing spec must be a number, an expression string, or a "
                     "{\"x\", \"values\"} table");
}

nlohmann::json Expression::spec_json() const {
    if (root_->op == Node::Op::table) {
        nlohmann::json j;
        j["x"] = root_->xs;
        j["values"] = root_->vals;
        return j;
    }
    return source_;
}

double Expression::eval(double t, double x, double z) const { return root_->eval(t, x, z); }

bool Expression::is_constant_zero() const {
    return root_->op == Node::Op::constant && root_->value == 0.0;
}

} // namespace platefsi
