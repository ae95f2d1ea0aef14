#include <cubeviz/expr.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>

namespace cubeviz {

ExprSyntaxError::ExprSyntaxError(const std::string& message, std::size_t offset)
    : FormatError("syntax error at offset " + std::to_string(offset) + ": " + message)
    , offset_(offset)
{}

std::string_view function_name(Function fn)
{
    switch (fn) {
    case Function::log10: return "log10";
    case Function::exp: return "exp";
    case Function::abs: return "abs";
    case Function::min: return "min";
    case Function::max: return "max";
    }
    return "?";
}

namespace {

std::size_t arity(Function fn)
{
    return (fn == Function::min || fn == Function::max) ? 2 : 1;
}

bool lookup_function(std::string_view name, Function& out)
{
    for (auto fn : {Function::log10, Function::exp, Function::abs, Function::min, Function::max}) {
        if (function_name(fn) == name) {
            out = fn;
            return true;
        }
    }
    return false;
}

ExprPtr make(auto node)
{
    return std::make_shared<const ExprNode>(ExprNode{std::move(node)});
}

enum class Tok { number, ident, plus, minus, star, slash, lparen, rparen, comma, end };

struct Token
{
    Tok kind;
    std::size_t offset; // 1-based
    std::string_view text;
    double number = 0.0;
};

class Parser
{
public:
    explicit Parser(std::string_view text)
        : text_(text)
    {
        advance();
    }

    ExprPtr parse()
    {
        ExprPtr e = expression();
        if (tok_.kind != Tok::end) {
            fail("unexpected '" + std::string(tok_.text) + "'");
        }
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ExprSyntaxError(msg, tok_.offset); }

    void advance()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
        const std::size_t start = pos_;
        tok_ = Token{Tok::end, start + 1, {}};
        if (pos_ >= text_.size()) {
            return;
        }

        const char c = text_[pos_];
        auto single = [&](Tok k) {
            tok_.kind = k;
            tok_.text = text_.substr(pos_, 1);
            ++pos_;
        };
        switch (c) {
        case '+': return single(Tok::plus);
        case '-': return single(Tok::minus);
        case '*': return single(Tok::star);
        case '/': return single(Tok::slash);
        case '(': return single(Tok::lparen);
        case ')': return single(Tok::rparen);
        case ',': return single(Tok::comma);
        default: break;
        }

        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
                ++pos_;
            }
            tok_.kind = Tok::ident;
            tok_.text = text_.substr(start, pos_ - start);
            return;
        }

        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            auto digits = [&] {
                std::size_t n = 0;
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                    ++pos_;
                    ++n;
                }
                return n;
            };
            std::size_t mantissa = digits();
            if (pos_ < text_.size() && text_[pos_] == '.') {
                ++pos_;
                mantissa += digits();
            }
            if (mantissa == 0) {
                throw ExprSyntaxError("malformed number", start + 1);
            }
            if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
                ++pos_;
                if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
                    ++pos_;
                }
                if (digits() == 0) {
                    throw ExprSyntaxError("malformed exponent", pos_ + 1);
                }
            }
            tok_.kind = Tok::number;
            tok_.text = text_.substr(start, pos_ - start);
            const char* first = tok_.text.data();
            const char* last = first + tok_.text.size();
            auto [ptr, ec] = std::from_chars(first, last, tok_.number);
            if (ec != std::errc() || ptr != last || !std::isfinite(tok_.number)) {
                throw ExprSyntaxError("number out of range", start + 1);
            }
            return;
        }

        throw ExprSyntaxError(std::string("unexpected character '") + c + "'", start + 1);
    }

    void expect(Tok kind, const char* what)
    {
        if (tok_.kind != kind) {
            fail(std::string("expected ") + what);
        }
        advance();
    }

    ExprPtr expression()
    {
        ExprPtr lhs = term();
        while (tok_.kind == Tok::plus || tok_.kind == Tok::minus) {
            const BinaryOp op = tok_.kind == Tok::plus ? BinaryOp::add : BinaryOp::sub;
            advance();
            lhs = make(BinaryNode{op, lhs, term()});
        }
        return lhs;
    }

    ExprPtr term()
    {
        ExprPtr lhs = unary();
        while (tok_.kind == Tok::star || tok_.kind == Tok::slash) {
            const BinaryOp op = tok_.kind == Tok::star ? BinaryOp::mul : BinaryOp::div;
            advance();
            lhs = make(BinaryNode{op, lhs, unary()});
        }
        return lhs;
    }

    ExprPtr unary()
    {
        if (tok_.kind == Tok::minus) {
            advance();
            return make(NegateNode{unary()});
        }
        return primary();
    }

    ExprPtr primary()
    {
        switch (tok_.kind) {
        case Tok::number: {
            const double v = tok_.number;
            advance();
            return make(NumberNode{v});
        }
        case Tok::ident: {
            const Token name = tok_;
            advance();
            if (tok_.kind != Tok::lparen) {
                return make(IdentNode{std::string(name.text)});
            }
            Function fn;
            if (!lookup_function(name.text, fn)) {
                throw ExprSyntaxError("unknown function '" + std::string(name.text) + "'", name.offset);
            }
            advance();
            std::vector<ExprPtr> args;
            args.push_back(expression());
            while (tok_.kind == Tok::comma) {
                advance();
                args.push_back(expression());
            }
            if (args.size() != arity(fn)) {
                throw ExprSyntaxError(
                    std::string(function_name(fn)) + " takes " + std::to_string(arity(fn)) +
                        " argument(s)",
                    name.offset);
            }
            expect(Tok::rparen, "')'");
            return make(CallNode{fn, std::move(args)});
        }
        case Tok::lparen: {
            advance();
            ExprPtr inner = expression();
            expect(Tok::rparen, "')'");
            return inner;
        }
        case Tok::end: fail("unexpected end of input, expected operand");
        default: fail("unexpected '" + std::string(tok_.text) + "', expected operand");
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    Token tok_{Tok::end, 1, {}};
};

// Precedence levels used by the printer.
constexpr int prec_additive = 1;
constexpr int prec_multiplicative = 2;
constexpr int prec_unary = 3;
constexpr int prec_atom = 4;

int precedence(const ExprNode& n)
{
    if (const auto* b = std::get_if<BinaryNode>(&n.node)) {
        return (b->op == BinaryOp::add || b->op == BinaryOp::sub) ? prec_additive
                                                                  : prec_multiplicative;
    }
    if (std::holds_alternative<NegateNode>(n.node)) {
        return prec_unary;
    }
    return prec_atom;
}

void print(const ExprNode& n, std::string& out)
{
    auto child = [&out](const ExprNode& c, bool parens) {
        if (parens) {
            out += '(';
        }
        print(c, out);
        if (parens) {
            out += ')';
        }
    };

    std::visit(
        [&](const auto& node) {
            using T = std::decay_t<decltype(node)>;
            if constexpr (std::is_same_v<T, NumberNode>) {
                char buf[64];
                auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, node.value);
                out.append(buf, ptr);
            } else if constexpr (std::is_same_v<T, IdentNode>) {
                out += node.name;
            } else if constexpr (std::is_same_v<T, NegateNode>) {
                out += '-';
                child(*node.operand, precedence(*node.operand) < prec_unary);
            } else if constexpr (std::is_same_v<T, BinaryNode>) {
                const int p = precedence(n);
                child(*node.lhs, precedence(*node.lhs) < p);
                static constexpr const char* ops[] = {" + ", " - ", " * ", " / "};
                out += ops[static_cast<int>(node.op)];
                child(*node.rhs, precedence(*node.rhs) <= p);
            } else {
                out += function_name(node.fn);
                out += '(';
                for (std::size_t i = 0; i < node.args.size(); ++i) {
                    if (i > 0) {
                        out += ", ";
                    }
                    print(*node.args[i], out);
                }
                out += ')';
            }
        },
        n.node);
}

bool equal(const ExprNode& a, const ExprNode& b)
{
    if (a.node.index() != b.node.index()) {
        return false;
    }
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b.node);
            if constexpr (std::is_same_v<T, NumberNode>) {
                return x.value == y.value;
            } else if constexpr (std::is_same_v<T, IdentNode>) {
                return x.name == y.name;
            } else if constexpr (std::is_same_v<T, NegateNode>) {
                return equal(*x.operand, *y.operand);
            } else if constexpr (std::is_same_v<T, BinaryNode>) {
                return x.op == y.op && equal(*x.lhs, *y.lhs) && equal(*x.rhs, *y.rhs);
            } else {
                if (x.fn != y.fn || x.args.size() != y.args.size()) {
                    return false;
                }
                for (std::size_t i = 0; i < x.args.size(); ++i) {
                    if (!equal(*x.args[i], *y.args[i])) {
                        return false;
                    }
                }
                return true;
            }
        },
        a.node);
}

void collect_identifiers(const ExprNode& n, std::set<std::string>& out)
{
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, IdentNode>) {
                out.insert(x.name);
            } else if constexpr (std::is_same_v<T, NegateNode>) {
                collect_identifiers(*x.operand, out);
            } else if constexpr (std::is_same_v<T, BinaryNode>) {
                collect_identifiers(*x.lhs, out);
                collect_identifiers(*x.rhs, out);
            } else if constexpr (std::is_same_v<T, CallNode>) {
                for (const auto& a : x.args) {
                    collect_identifiers(*a, out);
                }
            }
        },
        n.node);
}

// Array evaluator. Each node produces a full voxel array; `degenerate` marks
// voxels where a substitution happened anywhere in the tree.
class ArrayEvaluator
{
public:
    ArrayEvaluator(const FieldSet& fields, std::size_t n)
        : fields_(fields)
        , n_(n)
        , degenerate_(n, 0)
    {}

    std::vector<double> eval(const ExprNode& node)
    {
        return std::visit([&](const auto& x) { return eval_node(x); }, node.node);
    }

    const std::vector<std::uint8_t>& degenerate() const { return degenerate_; }

private:
    double guard(double r, std::size_t i)
    {
        if (!std::isfinite(r)) {
            degenerate_[i] = 1;
            return 0.0;
        }
        return r;
    }

    std::vector<double> eval_node(const NumberNode& x) { return std::vector<double>(n_, x.value); }

    std::vector<double> eval_node(const IdentNode& x)
    {
        return fields_.find(x.name)->second.values();
    }

    std::vector<double> eval_node(const NegateNode& x)
    {
        auto v = eval(*x.operand);
        for (double& e : v) {
            e = -e;
        }
        return v;
    }

    std::vector<double> eval_node(const BinaryNode& x)
    {
        auto a = eval(*x.lhs);
        const auto b = eval(*x.rhs);
        for (std::size_t i = 0; i < n_; ++i) {
            switch (x.op) {
            case BinaryOp::add: a[i] = guard(a[i] + b[i], i); break;
            case BinaryOp::sub: a[i] = guard(a[i] - b[i], i); break;
            case BinaryOp::mul: a[i] = guard(a[i] * b[i], i); break;
            case BinaryOp::div:
                if (b[i] == 0.0) {
                    degenerate_[i] = 1;
                    a[i] = 0.0;
                } else {
                    a[i] = guard(a[i] / b[i], i);
                }
                break;
            }
        }
        return a;
    }

    std::vector<double> eval_node(const CallNode& x)
    {
        auto a = eval(*x.args[0]);
        switch (x.fn) {
        case Function::log10:
            for (std::size_t i = 0; i < n_; ++i) {
                if (a[i] <= 0.0) {
                    degenerate_[i] = 1;
                    a[i] = 0.0;
                } else {
                    a[i] = std::log10(a[i]);
                }
            }
            break;
        case Function::exp:
            for (std::size_t i = 0; i < n_; ++i) {
                a[i] = guard(std::exp(a[i]), i);
            }
            break;
        case Function::abs:
            for (double& e : a) {
                e = std::abs(e);
            }
            break;
        case Function::min:
        case Function::max: {
            const auto b = eval(*x.args[1]);
            for (std::size_t i = 0; i < n_; ++i) {
                a[i] = x.fn == Function::min ? std::min(a[i], b[i]) : std::max(a[i], b[i]);
            }
            break;
        }
        }
        return a;
    }

    const FieldSet& fields_;
    std::size_t n_;
    std::vector<std::uint8_t> degenerate_;
};

} // namespace

FieldExpr::FieldExpr(ExprPtr root)
    : root_(std::move(root))
{
    if (!root_) {
        throw InvalidArgument("empty expression tree");
    }
}

std::set<std::string> FieldExpr::identifiers() const
{
    std::set<std::string> out;
    collect_identifiers(*root_, out);
    return out;
}

std::string FieldExpr::to_string() const
{
    std::string out;
    print(*root_, out);
    return out;
}

bool operator==(const FieldExpr& a, const FieldExpr& b)
{
    return equal(*a.root_, *b.root_);
}

FieldExpr parse_expression(std::string_view text)
{
    return FieldExpr(Parser(text).parse());
}

EvaluationResult evaluate_expression(
    const FieldExpr& expr,
    const FieldSet& fields,
    std::string output_name,
    std::string output_units)
{
    const auto names = expr.identifiers();
    const Grid* grid = nullptr;
    for (const auto& name : names) {
        auto it = fields.find(name);
        if (it == fields.end()) {
            throw InvalidArgument("unresolved identifier '" + name + "'");
        }
        if (grid == nullptr) {
            grid = &it->second.grid();
        } else if (!grid->same_geometry(it->second.grid())) {
            throw InvalidArgument("field '" + name + "' is on a different grid");
        }
    }
    if (grid == nullptr) {
        // Constant expression: evaluate on the grid of any supplied field.
        if (fields.empty()) {
            throw InvalidArgument("expression references no field and no grid was supplied");
        }
        grid = &fields.begin()->second.grid();
    }

    ArrayEvaluator evaluator(fields, grid->voxel_count());
    auto values = evaluator.eval(expr.root());
    const auto& flags = evaluator.degenerate();
    const auto count = static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
    return {ScalarField(std::move(output_name), *grid, std::move(output_units), std::move(values)), count};
}

} // namespace cubeviz
