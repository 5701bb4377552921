#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "confir/ir/taint.hpp"

namespace confir::ir {

enum class UnaryOp : std::uint8_t { Neg, Not, LogicalNot };

enum class BinaryOp : std::uint8_t { Add, Sub, Mul, Div, Mod, And, Or, Xor, Shl, Shr, Eq, Ne, Lt, Le, Gt, Ge };

std::string_view to_string(UnaryOp op);
std::string_view to_string(BinaryOp op);

/// Total 64-bit operator semantics: wrap-around arithmetic, unsigned
/// division/modulo with x/0 = x%0 = 0, shift counts taken mod 64,
/// signed comparisons returning 0 or 1.
std::uint64_t apply(UnaryOp op, std::uint64_t v);
std::uint64_t apply(BinaryOp op, std::uint64_t a, std::uint64_t b);

/// Immutable expression tree. Children are shared, so copies are cheap.
///
/// `GlobalAddr` and `Label` only occur in source programs; instrumentation
/// lowers both to constants.
class Expr {
  public:
    enum class Kind : std::uint8_t { Const, Reg, Unary, Binary, FuncAddr, GlobalAddr, Label };

    Expr() : Expr(constant(0)) {}

    static Expr constant(std::uint64_t v);
    static Expr reg(Reg r);
    static Expr unary(UnaryOp op, Expr e);
    static Expr binary(BinaryOp op, Expr a, Expr b);
    static Expr func_addr(std::string f);
    static Expr global_addr(std::string g);
    static Expr label(std::string l);

    Kind kind() const { return kind_; }
    bool is_const() const { return kind_ == Kind::Const; }
    std::uint64_t value() const { return payload_; }
    Reg reg() const { return Reg{static_cast<std::uint8_t>(payload_)}; }
    UnaryOp unary_op() const { return static_cast<UnaryOp>(payload_); }
    BinaryOp binary_op() const { return static_cast<BinaryOp>(payload_); }
    const Expr& operand() const { return *lhs_; }
    const Expr& lhs() const { return *lhs_; }
    const Expr& rhs() const { return *rhs_; }
    const std::string& name() const { return name_; }

    /// Bitmask of registers read by the expression.
    std::uint16_t reg_mask() const;
    /// True when no GlobalAddr/Label nodes remain.
    bool is_lowered() const;

    friend bool operator==(const Expr& a, const Expr& b);

  private:
    struct RawTag {};
    explicit Expr(RawTag) {}

    Kind kind_ = Kind::Const;
    std::uint64_t payload_ = 0;
    std::string name_;
    std::shared_ptr<const Expr> lhs_;
    std::shared_ptr<const Expr> rhs_;
};

std::string to_string(const Expr& e);

} // namespace confir::ir
