#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "confir/ir/expr.hpp"
#include "confir/ir/taint.hpp"

namespace confir::ir {

// Structured assert predicates. The verifier pattern-matches these.

/// assert(addr ∈ Dom(μ_region))
struct AddrInRegion {
    Expr addr;
    Taint region = Taint::L;
    bool operator==(const AddrInRegion&) const = default;
};

/// Target is a U entry whose call magic is ⊒ `want` on args and equal on ret.
struct MagicCallMatch {
    Expr target;
    TaintVec5 want;
    bool operator==(const MagicCallMatch&) const = default;
};

/// top(σ_L) is a return site whose ret-magic bit is ⊒ `ret`.
struct MagicRetMatch {
    Taint ret = Taint::H;
    bool operator==(const MagicRetMatch&) const = default;
};

using AssertPred = std::variant<AddrInRegion, MagicCallMatch, MagicRetMatch>;

/// Register move. Not part of the core command syntax of the formal model,
/// but needed for any program that computes on registers.
struct Mov {
    Reg dst;
    Expr src;
    bool operator==(const Mov&) const = default;
};
struct Ldr {
    Reg dst;
    Expr addr;
    bool operator==(const Ldr&) const = default;
};
/// Stores register `src` at the address `addr` evaluates to.
struct Str {
    Reg src;
    Expr addr;
    bool operator==(const Str&) const = default;
};
struct Goto {
    Expr target;
    bool operator==(const Goto&) const = default;
};
struct IfThenElse {
    Expr cond;
    Expr then_pc;
    Expr else_pc;
    bool operator==(const IfThenElse&) const = default;
};
struct Ret {
    bool operator==(const Ret&) const = default;
};
struct CallU {
    std::string callee;
    std::vector<Expr> args;
    bool operator==(const CallU&) const = default;
};
struct CallT {
    std::string callee;
    std::vector<Expr> args;
    bool operator==(const CallT&) const = default;
};
struct ICall {
    Expr target;
    std::vector<Expr> args;
    bool operator==(const ICall&) const = default;
};
struct Assert {
    AssertPred pred;
    bool operator==(const Assert&) const = default;
};

using Command = std::variant<Mov, Ldr, Str, Goto, IfThenElse, Ret, CallU, CallT, ICall, Assert>;

inline constexpr std::size_t kMaxCallArgs = kNumArgRegs;

/// True for commands that continue at pc+1.
bool falls_through(const Command& c);
bool is_call(const Command& c);
/// Registers written by the command itself (calls clobber more; see callers).
std::uint16_t written_regs(const Command& c);

std::string to_string(const AssertPred& p);
std::string to_string(const Command& c);

} // namespace confir::ir
