#include "confir/ir/expr.hpp"

#include <cstdio>
#include <cstdint>
#include <string>
#include <utility>

namespace confir::ir {

std::string to_string(Reg r) { return "r" + std::to_string(r.index); }

std::string to_string(const TaintEnv& env) {
    std::string s;
    s.reserve(kNumRegs);
    for (std::uint8_t i = 0; i < kNumRegs; ++i) {
        s.push_back(to_char(env[Reg{i}]));
    }
    return s;
}

std::string TaintVec5::str() const {
    const auto b = bits();
    std::string s(5, '0');
    for (int i = 0; i < 5; ++i) {
        if ((b >> (4 - i)) & 1u) {
            s[static_cast<std::size_t>(i)] = '1';
        }
    }
    return s;
}

std::string_view to_string(UnaryOp op) {
    switch (op) {
    case UnaryOp::Neg: return "-";
    case UnaryOp::Not: return "~";
    case UnaryOp::LogicalNot: return "!";
    }
    return "?";
}

std::string_view to_string(BinaryOp op) {
    switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Mod: return "%";
    case BinaryOp::And: return "&";
    case BinaryOp::Or: return "|";
    case BinaryOp::Xor: return "^";
    case BinaryOp::Shl: return "<<";
    case BinaryOp::Shr: return ">>";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    }
    return "?";
}

std::uint64_t apply(UnaryOp op, std::uint64_t v) {
    switch (op) {
    case UnaryOp::Neg: return std::uint64_t{0} - v;
    case UnaryOp::Not: return ~v;
    case UnaryOp::LogicalNot: return v == 0 ? 1 : 0;
    }
    return 0;
}

std::uint64_t apply(BinaryOp op, std::uint64_t a, std::uint64_t b) {
    const auto sa = static_cast<std::int64_t>(a);
    const auto sb = static_cast<std::int64_t>(b);
    switch (op) {
    case BinaryOp::Add: return a + b;
    case BinaryOp::Sub: return a - b;
    case BinaryOp::Mul: return a * b;
    case BinaryOp::Div: return b == 0 ? 0 : a / b;
    case BinaryOp::Mod: return b == 0 ? 0 : a % b;
    case BinaryOp::And: return a & b;
    case BinaryOp::Or: return a | b;
    case BinaryOp::Xor: return a ^ b;
    case BinaryOp::Shl: return a << (b & 63u);
    case BinaryOp::Shr: return a >> (b & 63u);
    case BinaryOp::Eq: return a == b;
    case BinaryOp::Ne: return a != b;
    case BinaryOp::Lt: return sa < sb;
    case BinaryOp::Le: return sa <= sb;
    case BinaryOp::Gt: return sa > sb;
    case BinaryOp::Ge: return sa >= sb;
    }
    return 0;
}

Expr Expr::constant(std::uint64_t v) {
    Expr e{RawTag{}};
    e.kind_ = Kind::Const;
    e.payload_ = v;
    return e;
}

Expr Expr::reg(Reg r) {
    Expr e{RawTag{}};
    e.kind_ = Kind::Reg;
    e.payload_ = r.index;
    return e;
}

Expr Expr::unary(UnaryOp op, Expr sub) {
    Expr e{RawTag{}};
    e.kind_ = Kind::Unary;
    e.payload_ = static_cast<std::uint64_t>(op);
    e.lhs_ = std::make_shared<const Expr>(std::move(sub));
    return e;
}

Expr Expr::binary(BinaryOp op, Expr a, Expr b) {
    Expr e{RawTag{}};
    e.kind_ = Kind::Binary;
    e.payload_ = static_cast<std::uint64_t>(op);
    e.lhs_ = std::make_shared<const Expr>(std::move(a));
    e.rhs_ = std::make_shared<const Expr>(std::move(b));
    return e;
}

Expr Expr::func_addr(std::string f) {
    Expr e{RawTag{}};
    e.kind_ = Kind::FuncAddr;
    e.name_ = std::move(f);
    return e;
}

Expr Expr::global_addr(std::string g) {
    Expr e{RawTag{}};
    e.kind_ = Kind::GlobalAddr;
    e.name_ = std::move(g);
    return e;
}

Expr Expr::label(std::string l) {
    Expr e{RawTag{}};
    e.kind_ = Kind::Label;
    e.name_ = std::move(l);
    return e;
}

std::uint16_t Expr::reg_mask() const {
    switch (kind_) {
    case Kind::Reg: return reg().bit();
    case Kind::Unary: return lhs_->reg_mask();
    case Kind::Binary: return static_cast<std::uint16_t>(lhs_->reg_mask() | rhs_->reg_mask());
    default: return 0;
    }
}

bool Expr::is_lowered() const {
    switch (kind_) {
    case Kind::GlobalAddr:
    case Kind::Label: return false;
    case Kind::Unary: return lhs_->is_lowered();
    case Kind::Binary: return lhs_->is_lowered() && rhs_->is_lowered();
    default: return true;
    }
}

bool operator==(const Expr& a, const Expr& b) {
    if (a.kind_ != b.kind_ || a.payload_ != b.payload_ || a.name_ != b.name_) {
        return false;
    }
    switch (a.kind_) {
    case Expr::Kind::Unary: return *a.lhs_ == *b.lhs_;
    case Expr::Kind::Binary: return *a.lhs_ == *b.lhs_ && *a.rhs_ == *b.rhs_;
    default: return true;
    }
}

namespace {

int precedence(BinaryOp op) {
    switch (op) {
    case BinaryOp::Mul:
    case BinaryOp::Div:
    case BinaryOp::Mod: return 7;
    case BinaryOp::Add:
    case BinaryOp::Sub: return 6;
    case BinaryOp::Shl:
    case BinaryOp::Shr: return 5;
    case BinaryOp::Lt:
    case BinaryOp::Le:
    case BinaryOp::Gt:
    case BinaryOp::Ge: return 4;
    case BinaryOp::Eq:
    case BinaryOp::Ne: return 3;
    case BinaryOp::And: return 2;
    case BinaryOp::Xor: return 1;
    case BinaryOp::Or: return 0;
    }
    return 0;
}

void print(const Expr& e, std::string& out, int parent_prec) {
    switch (e.kind()) {
    case Expr::Kind::Const: {
        const auto v = e.value();
        if (v > 0xFFFF) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
            out += buf;
        } else {
            out += std::to_string(v);
        }
        return;
    }
    case Expr::Kind::Reg: out += to_string(e.reg()); return;
    case Expr::Kind::FuncAddr: out += "&" + e.name(); return;
    case Expr::Kind::GlobalAddr: out += "@" + e.name(); return;
    case Expr::Kind::Label: out += e.name(); return;
    case Expr::Kind::Unary:
        out += to_string(e.unary_op());
        print(e.operand(), out, 100);
        return;
    case Expr::Kind::Binary: {
        const int prec = precedence(e.binary_op());
        const bool paren = prec < parent_prec;
        if (paren) {
            out += '(';
        }
        print(e.lhs(), out, prec);
        out += ' ';
        out += to_string(e.binary_op());
        out += ' ';
        print(e.rhs(), out, prec + 1);
        if (paren) {
            out += ')';
        }
        return;
    }
    }
}

} // namespace

std::string to_string(const Expr& e) {
    std::string s;
    print(e, s, 0);
    return s;
}

} // namespace confir::ir
