#pragma once

#include <cubeviz/error.hpp>
#include <cubeviz/field.hpp>

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cubeviz {

// Field expressions: a small arithmetic language for deriving visualization
// quantities from simulation variables, e.g. "log10(rho_ej + rho_cl)".
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | primary
//   primary := number | identifier | function '(' args ')' | '(' expr ')'
//   function: log10, exp, abs (one argument), min, max (two arguments)

enum class BinaryOp { add, sub, mul, div };
enum class Function { log10, exp, abs, min, max };

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct NumberNode
{
    double value;
};

struct IdentNode
{
    std::string name;
};

struct NegateNode
{
    ExprPtr operand;
};

struct BinaryNode
{
    BinaryOp op;
    ExprPtr lhs;
    ExprPtr rhs;
};

struct CallNode
{
    Function fn;
    std::vector<ExprPtr> args;
};

struct ExprNode
{
    std::variant<NumberNode, IdentNode, NegateNode, BinaryNode, CallNode> node;
};

/// Syntax error carrying the 1-based character offset of the offending token
/// (end of input reports size + 1).
class ExprSyntaxError : public FormatError
{
public:
    ExprSyntaxError(const std::string& message, std::size_t offset);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class FieldExpr
{
public:
    explicit FieldExpr(ExprPtr root);

    const ExprNode& root() const { return *root_; }

    /// Every identifier referenced, sorted.
    std::set<std::string> identifiers() const;

    /// Canonical text form with minimal parentheses; parses back to an
    /// identical tree.
    std::string to_string() const;

    friend bool operator==(const FieldExpr& a, const FieldExpr& b);

private:
    ExprPtr root_;
};

FieldExpr parse_expression(std::string_view text);

std::string_view function_name(Function fn);

using FieldSet = std::map<std::string, ScalarField, std::less<>>;

struct EvaluationResult
{
    ScalarField field;
    /// Voxels where at least one degenerate operation (division by zero,
    /// log10 of a non-positive value, non-finite intermediate) was replaced by 0.
    std::size_t degenerate_voxels = 0;
};

/// Voxel-wise evaluation. All referenced fields must share the same grid.
EvaluationResult evaluate_expression(
    const FieldExpr& expr,
    const FieldSet& fields,
    std::string output_name = "expr",
    std::string output_units = "");

} // namespace cubeviz
