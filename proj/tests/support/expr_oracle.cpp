#include "expr_oracle.hpp"

#include <charconv>
#include <cmath>

namespace testing {

namespace {

using K = OracleNode::Kind;

std::string number_text(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double finite_or_zero(double v, bool& degenerate)
{
    if (!std::isfinite(v)) {
        degenerate = true;
        return 0.0;
    }
    return v;
}

} // namespace

OracleTree random_tree(std::mt19937_64& rng, const std::vector<std::string>& idents, int max_depth)
{
    auto node = std::make_shared<OracleNode>();
    std::uniform_int_distribution<int> pick(0, 99);
    if (max_depth <= 0 || pick(rng) < 25) {
        const int r = pick(rng);
        if (r < 60) {
            node->kind = K::ident;
            node->ident = idents[std::uniform_int_distribution<std::size_t>(0, idents.size() - 1)(rng)];
        } else {
            node->kind = K::number;
            if (r < 70) {
                node->number = 0.0;
            } else if (r < 75) {
                node->number = 750.0;
            } else {
                node->number = std::uniform_int_distribution<int>(1, 40)(rng) / 4.0;
            }
        }
        return node;
    }
    static constexpr K ops[] = {
        K::neg, K::add, K::sub, K::mul, K::div, K::log10, K::exp, K::abs, K::min, K::max,
        K::add, K::mul, K::div, K::sub};
    node->kind = ops[std::uniform_int_distribution<std::size_t>(0, std::size(ops) - 1)(rng)];
    int arity = 2;
    if (node->kind == K::neg || node->kind == K::log10 || node->kind == K::exp || node->kind == K::abs) {
        arity = 1;
    }
    for (int i = 0; i < arity; ++i) {
        node->kids.push_back(random_tree(rng, idents, max_depth - 1));
    }
    return node;
}

std::string print_tree(const OracleNode& n)
{
    auto binary = [&](const char* op) { return "(" + print_tree(*n.kids[0]) + op + print_tree(*n.kids[1]) + ")"; };
    auto call = [&](const char* fn) {
        std::string s = std::string(fn) + "(" + print_tree(*n.kids[0]);
        if (n.kids.size() == 2) {
            s += ", " + print_tree(*n.kids[1]);
        }
        return s + ")";
    };
    switch (n.kind) {
    case K::number: return number_text(n.number);
    case K::ident: return n.ident;
    case K::neg: return "(-" + print_tree(*n.kids[0]) + ")";
    case K::add: return binary(" + ");
    case K::sub: return binary(" - ");
    case K::mul: return binary("*");
    case K::div: return binary("/");
    case K::log10: return call("log10");
    case K::exp: return call("exp");
    case K::abs: return call("abs");
    case K::min: return call("min");
    case K::max: return call("max");
    }
    return {};
}

double eval_tree(const OracleNode& n, const std::map<std::string, double>& vars, bool& degenerate)
{
    auto kid = [&](int i) { return eval_tree(*n.kids[i], vars, degenerate); };
    switch (n.kind) {
    case K::number: return n.number;
    case K::ident: return vars.at(n.ident);
    case K::neg: return -kid(0);
    case K::add: {
        const double a = kid(0);
        const double b = kid(1);
        return finite_or_zero(a + b, degenerate);
    }
    case K::sub: {
        const double a = kid(0);
        const double b = kid(1);
        return finite_or_zero(a - b, degenerate);
    }
    case K::mul: {
        const double a = kid(0);
        const double b = kid(1);
        return finite_or_zero(a * b, degenerate);
    }
    case K::div: {
        const double a = kid(0);
        const double b = kid(1);
        if (b == 0.0) {
            degenerate = true;
            return 0.0;
        }
        return finite_or_zero(a / b, degenerate);
    }
    case K::log10: {
        const double a = kid(0);
        if (a <= 0.0) {
            degenerate = true;
            return 0.0;
        }
        return std::log10(a);
    }
    case K::exp: return finite_or_zero(std::exp(kid(0)), degenerate);
    case K::abs: return std::fabs(kid(0));
    case K::min: {
        const double a = kid(0);
        const double b = kid(1);
        return b < a ? b : a;
    }
    case K::max: {
        const double a = kid(0);
        const double b = kid(1);
        return a < b ? b : a;
    }
    }
    return 0.0;
}

} // namespace testing
