#pragma once

// Scalar observables of the (latent) state: the three built-in functions and a
// small arithmetic expression language over z1, z2, ... for ad-hoc use.
//
//   gauss3 = 3 exp(-(z1^2 + z2^2) / 10)
//   sumsq  = z1^2 + z2^2
//   gauss6 = 3 exp(-(z1^2 + ... + z6^2) / 10)
//
// Expression grammar (^ binds tightest and is right-associative):
//   expr  := term (('+' | '-') term)*
//   term  := unary (('*' | '/') unary)*
//   unary := ('+' | '-') unary | power
//   power := atom ('^' unary)?
//   atom  := number | z<index> | exp '(' expr ')' | '(' expr ')'

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "koopdict/error.hpp"

namespace koopdict {

struct Observable {
    std::string id;
    /// Number of latent coordinates the function reads.
    int arity = 0;
    /// Built-ins need exactly `arity` inputs; expressions accept any width >= arity.
    bool exact_arity = true;
    std::function<double(const Eigen::VectorXd&)> fn;

    double operator()(const Eigen::VectorXd& z) const { return fn(z); }

    bool accepts(Eigen::Index width) const { return exact_arity ? width == arity : width >= arity; }
};

namespace expr {

struct Node {
    enum class Kind { number, variable, add, sub, mul, div, pow, neg, exp } kind;
    double value = 0.0;
    int index = 0;
    std::unique_ptr<Node> lhs, rhs;

    double eval(const Eigen::VectorXd& z) const {
        switch (kind) {
            case Kind::number: return value;
            case Kind::variable: return z[index];
            case Kind::add: return lhs->eval(z) + rhs->eval(z);
            case Kind::sub: return lhs->eval(z) - rhs->eval(z);
            case Kind::mul: return lhs->eval(z) * rhs->eval(z);
            case Kind::div: return lhs->eval(z) / rhs->eval(z);
            case Kind::pow: {
                const double e = rhs->eval(z);
                // Integer exponents by repeated multiplication keep z^2 exact for negative z.
                if (e == std::round(e) && std::abs(e) <= 64) {
                    const double b = lhs->eval(z);
                    double r = 1.0;
                    for (int k = 0; k < static_cast<int>(std::abs(e)); ++k) r *= b;
                    return e < 0 ? 1.0 / r : r;
                }
                return std::pow(lhs->eval(z), e);
            }
            case Kind::neg: return -lhs->eval(z);
            case Kind::exp: return std::exp(lhs->eval(z));
        }
        return 0.0;
    }
};

class Parser {
public:
    explicit Parser(std::string_view src) : s_(src) {}

    std::unique_ptr<Node> parse() {
        auto n = expression();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

    int max_index() const { return max_index_; }

private:
    using Kind = Node::Kind;

    static std::unique_ptr<Node> make(Kind k, std::unique_ptr<Node> a = nullptr, std::unique_ptr<Node> b = nullptr) {
        auto n = std::make_unique<Node>();
        n->kind = k;
        n->lhs = std::move(a);
        n->rhs = std::move(b);
        return n;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("observable expression at column " + std::to_string(pos_ + 1) + ": " + msg);
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

    std::unique_ptr<Node> expression() {
        auto n = term();
        for (;;) {
            if (eat('+'))
                n = make(Kind::add, std::move(n), term());
            else if (eat('-'))
                n = make(Kind::sub, std::move(n), term());
            else
                return n;
        }
    }

    std::unique_ptr<Node> term() {
        auto n = unary();
        for (;;) {
            if (eat('*'))
                n = make(Kind::mul, std::move(n), unary());
            else if (eat('/'))
                n = make(Kind::div, std::move(n), unary());
            else
                return n;
        }
    }

    std::unique_ptr<Node> unary() {
        if (eat('-')) return make(Kind::neg, unary());
        if (eat('+')) return unary();
        return power();
    }

    std::unique_ptr<Node> power() {
        auto base = atom();
        if (eat('^')) return make(Kind::pow, std::move(base), unary());
        return base;
    }

    std::unique_ptr<Node> atom() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        const char c = s_[pos_];
        if (eat('(')) {
            auto n = expression();
            if (!eat(')')) fail("expected ')'");
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const std::string rest(s_.substr(pos_));
            char* end = nullptr;
            const double v = std::strtod(rest.c_str(), &end);
            if (end == rest.c_str()) fail("bad number");
            pos_ += static_cast<std::size_t>(end - rest.c_str());
            auto n = make(Kind::number);
            n->value = v;
            return n;
        }
        if (c == 'z') {
            ++pos_;
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            if (start == pos_) fail("expected a variable index after 'z'");
            const int idx = std::stoi(std::string(s_.substr(start, pos_ - start)));
            if (idx < 1) fail("variables are numbered from z1");
            max_index_ = std::max(max_index_, idx);
            auto n = make(Kind::variable);
            n->index = idx - 1;
            return n;
        }
        if (s_.substr(pos_, 3) == "exp") {
            pos_ += 3;
            if (!eat('(')) fail("expected '(' after exp");
            auto arg = expression();
            if (!eat(')')) fail("expected ')'");
            return make(Kind::exp, std::move(arg));
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int max_index_ = 0;
};

}  // namespace expr

inline Observable gaussian_observable(std::string id, int arity) {
    return Observable{std::move(id), arity, true,
                      [](const Eigen::VectorXd& z) { return 3.0 * std::exp(-z.squaredNorm() / 10.0); }};
}

inline Observable make_builtin_observable(std::string_view id) {
    if (id == "gauss3") return gaussian_observable("gauss3", 2);
    if (id == "gauss6") return gaussian_observable("gauss6", 6);
    if (id == "sumsq")
        return Observable{"sumsq", 2, true, [](const Eigen::VectorXd& z) { return z.squaredNorm(); }};
    throw ConfigError("unknown observable id '" + std::string(id) + "' (expected gauss3, sumsq or gauss6)");
}

inline Observable parse_observable_expression(std::string_view text) {
    expr::Parser parser(text);
    std::shared_ptr<const expr::Node> root = parser.parse();
    return Observable{std::string(text), parser.max_index(), false,
                      [root](const Eigen::VectorXd& z) { return root->eval(z); }};
}

}  // namespace koopdict
