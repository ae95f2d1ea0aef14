#include <cubeviz/error.hpp>
#include <cubeviz/expr.hpp>
#include <cubeviz/synthetic.hpp>

#include "support/expr_oracle.hpp"
#include "support/test_support.hpp"

#include <bit>
#include <cmath>
#include <random>

#include <doctest.h>

using namespace cubeviz;

namespace {

const BinaryNode& as_binary(const ExprNode& n)
{
    return std::get<BinaryNode>(n.node);
}

std::size_t error_offset(std::string_view text)
{
    try {
        parse_expression(text);
    } catch (const ExprSyntaxError& e) {
        return e.offset();
    }
    return 0;
}

FieldSet fields_of(std::initializer_list<ScalarField> fs)
{
    FieldSet set;
    for (const auto& f : fs) {
        set.emplace(f.name(), f);
    }
    return set;
}

} // namespace

TEST_CASE("parse: function call")
{
    const FieldExpr e = parse_expression("log10(rho)");
    const auto& call = std::get<CallNode>(e.root().node);
    CHECK(call.fn == Function::log10);
    REQUIRE(call.args.size() == 1);
    CHECK(std::get<IdentNode>(call.args[0]->node).name == "rho");
    CHECK(e.identifiers() == std::set<std::string>{"rho"});
}

TEST_CASE("parse: precedence and associativity")
{
    const FieldExpr e = parse_expression("0.5*a + 0.5*b");
    const auto& add = as_binary(e.root());
    CHECK(add.op == BinaryOp::add);
    CHECK(as_binary(*add.lhs).op == BinaryOp::mul);
    CHECK(std::get<NumberNode>(as_binary(*add.lhs).lhs->node).value == 0.5);
    CHECK(std::get<IdentNode>(as_binary(*add.lhs).rhs->node).name == "a");
    CHECK(as_binary(*add.rhs).op == BinaryOp::mul);

    const auto& sub = as_binary(parse_expression("a - b - c").root());
    CHECK(sub.op == BinaryOp::sub);
    CHECK(std::get<IdentNode>(sub.rhs->node).name == "c");
    CHECK(as_binary(*sub.lhs).op == BinaryOp::sub);

    const auto& div = as_binary(parse_expression("a / b * c").root());
    CHECK(div.op == BinaryOp::mul);
    CHECK(as_binary(*div.lhs).op == BinaryOp::div);

    // Unary minus binds tighter than multiplication.
    const auto& mul = as_binary(parse_expression("-a * b").root());
    CHECK(mul.op == BinaryOp::mul);
    CHECK(std::holds_alternative<NegateNode>(mul.lhs->node));

    CHECK(parse_expression("(a + b) * c") == parse_expression("((a+b))*c"));
    CHECK_FALSE(parse_expression("a + b * c") == parse_expression("(a + b) * c"));
}

TEST_CASE("parse: numbers")
{
    CHECK(std::get<NumberNode>(parse_expression("1e-24").root().node).value == 1e-24);
    CHECK(std::get<NumberNode>(parse_expression("2.5E3").root().node).value == 2500.0);
    CHECK(std::get<NumberNode>(parse_expression(".5").root().node).value == 0.5);
}

TEST_CASE("parse: errors carry 1-based offsets")
{
    CHECK(error_offset("a +") == 4);
    CHECK(error_offset("") == 1);
    CHECK(error_offset("a $ b") == 3);
    CHECK(error_offset("(a + b") == 7);
    CHECK(error_offset("a b") == 3);
    CHECK(error_offset("min(a)") > 0);
    CHECK(error_offset("log10(a, b)") > 0);
    CHECK_THROWS_AS(parse_expression("sqrt(a)"), ExprSyntaxError);
    CHECK_THROWS_AS(parse_expression("a +"), FormatError);
}

TEST_CASE("print then parse is idempotent")
{
    std::mt19937_64 rng(2024);
    const std::vector<std::string> ids{"a", "rho_ej", "b2"};
    for (int i = 0; i < 500; ++i) {
        const auto tree = testing::random_tree(rng, ids, 6);
        const FieldExpr e = parse_expression(testing::print_tree(*tree));
        const std::string canonical = e.to_string();
        const FieldExpr again = parse_expression(canonical);
        CHECK(again == e);
        CHECK(again.to_string() == canonical);
    }
    CHECK(parse_expression("((a))+(b*c)").to_string() == "a + b * c");
    CHECK(parse_expression("a-(b-c)").to_string() == "a - (b - c)");
    CHECK(parse_expression("-(-a)").to_string() == "--a");
}

TEST_CASE("evaluate: examples")
{
    const ScalarField rho = testing::make_field("rho", {2, 2, 2}, std::vector<double>(8, 100.0));
    const auto r = evaluate_expression(parse_expression("log10(rho)"), fields_of({rho}), "lrho", "dex");
    CHECK(r.degenerate_voxels == 0);
    CHECK(r.field.name() == "lrho");
    CHECK(r.field.units() == "dex");
    for (double v : r.field.values()) {
        CHECK(v == 2.0);
    }

    const ScalarField a = testing::make_field("a", {2, 2, 2}, std::vector<double>(8, 3.0));
    const ScalarField b = testing::make_field("b", {2, 2, 2}, {1, 2, 0, 4, 5, 6, 7, 8});
    const auto q = evaluate_expression(parse_expression("a/b"), fields_of({a, b}));
    CHECK(q.degenerate_voxels == 1);
    CHECK(q.field.values()[2] == 0.0);
    CHECK(q.field.values()[3] == 0.75);

    const ScalarField neg = testing::make_field("n", {2, 2, 2}, {-1, 0, 1, 10, 100, 1, 1, 1});
    const auto l = evaluate_expression(parse_expression("log10(n)"), fields_of({neg}));
    CHECK(l.degenerate_voxels == 2);
    CHECK(l.field.values()[0] == 0.0);
    CHECK(l.field.values()[3] == 1.0);

    const ScalarField big = testing::make_field("x", {2, 2, 2}, {1000, 0, 0, 0, 0, 0, 0, 0});
    const auto ex = evaluate_expression(parse_expression("exp(x)"), fields_of({big}));
    CHECK(ex.degenerate_voxels == 1);
    CHECK(ex.field.values()[0] == 0.0);
    CHECK(ex.field.values()[1] == 1.0);

    const auto mm = evaluate_expression(parse_expression("max(min(b, 5), 2) + abs(-b)"), fields_of({b}));
    CHECK(mm.field.values()[0] == 2.0 + 1.0);
    CHECK(mm.field.values()[7] == 5.0 + 8.0);
}

TEST_CASE("evaluate: 2*a - a - a vanishes")
{
    const ScalarField a = synthetic::random_field("a", 8, -1e3, 1e3, 4);
    const auto r = evaluate_expression(parse_expression("2*a - a - a"), fields_of({a}));
    for (double v : r.field.values()) {
        CHECK(std::abs(v) <= 1e-12);
    }
}

TEST_CASE("evaluate: errors")
{
    const ScalarField a = testing::make_field("a", {2, 2, 2}, std::vector<double>(8, 1.0));
    const ScalarField b = testing::make_field("b", {2, 2, 4}, std::vector<double>(16, 1.0));
    CHECK_THROWS_AS(evaluate_expression(parse_expression("a + c"), fields_of({a})), InvalidArgument);
    CHECK_THROWS_AS(evaluate_expression(parse_expression("a + b"), fields_of({a, b})), InvalidArgument);
}

TEST_CASE("evaluate is pointwise")
{
    const ScalarField a = synthetic::random_field("a", 8, -2.0, 2.0, 21);
    const ScalarField b = synthetic::random_field("b", 8, -2.0, 2.0, 22);
    const FieldExpr e = parse_expression("log10(abs(a) + 1) * b / (a - b) + exp(min(a, b))");
    const auto base = evaluate_expression(e, fields_of({a, b}));
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = std::uniform_int_distribution<std::size_t>(0, a.values().size() - 1)(rng);
        auto v = a.values();
        v[k] += 0.25;
        const ScalarField a2("a", a.grid(), "", v);
        const auto r = evaluate_expression(e, fields_of({a2, b}));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i != k) {
                CHECK(std::bit_cast<std::uint64_t>(r.field.values()[i])
                    == std::bit_cast<std::uint64_t>(base.field.values()[i]));
            }
        }
    }
}

TEST_CASE("evaluate matches the reference evaluator on random expressions")
{
    std::mt19937_64 rng(99);
    const std::vector<std::string> ids{"a", "b", "c"};
    FieldSet fields;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto f = synthetic::random_field(ids[i], 8, -4.0, 4.0, 100 + i);
        auto v = f.values();
        for (std::size_t k = 0; k < v.size(); k += 7) {
            v[k] = 0.0;
        }
        fields.emplace(ids[i], ScalarField(ids[i], f.grid(), "", v));
    }
    for (int n = 0; n < 200; ++n) {
        const auto tree = testing::random_tree(rng, ids, 5);
        const auto r = evaluate_expression(parse_expression(testing::print_tree(*tree)), fields);
        std::size_t degenerate = 0;
        std::size_t mismatches = 0;
        for (std::size_t i = 0; i < r.field.values().size(); ++i) {
            std::map<std::string, double> vars;
            for (const auto& id : ids) {
                vars[id] = fields.at(id).values()[i];
            }
            bool flag = false;
            const double want = testing::eval_tree(*tree, vars, flag);
            degenerate += flag;
            mismatches += std::bit_cast<std::uint64_t>(want) != std::bit_cast<std::uint64_t>(r.field.values()[i]);
        }
        CHECK(mismatches == 0);
        CHECK(degenerate == r.degenerate_voxels);
    }
}
