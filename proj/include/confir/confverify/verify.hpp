#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "confir/ir/program.hpp"

namespace confir::verify {

enum class RuleId : std::uint8_t {
    // Type rules.
    Ldr,
    Str,
    Mov,
    Call,
    ICall,
    Ret,
    Goto,
    If,
    Assert,
    Flow,
    // Structural side conditions.
    NonConstantJump,
    JumpEscapesFunction,
    EdgeMismatch,
    FallOffFunction,
    CallTarget,
    ICallToTrusted,
    MissingRetMagic,
    SpuriousRetMagic,
    BadMagic,
    MagicNotUnique,
    EntryMagic,
};

std::string_view rule_name(RuleId r);

enum class Severity : std::uint8_t { Reject, Warning };

struct Diagnostic {
    std::uint64_t pc = 0;
    RuleId rule = RuleId::Flow;
    Severity severity = Severity::Reject;
    std::string message;
    bool operator==(const Diagnostic&) const = default;
};

/// "REJECT pc=12 rule=Str ..." / "WARN pc=..."
std::string to_string(const Diagnostic& d);

struct Verdict {
    bool accepted = true;
    std::vector<Diagnostic> diagnostics; // stably sorted by pc
};

struct VerifyOptions {
    /// Downgrade branch-on-private to a warning.
    bool allow_implicit = false;
};

/// Type rule for one node of a U function.
std::vector<Diagnostic> check_node(const ir::Program& p, const ir::FuncInfo& f, const ir::Node& v,
                                   const VerifyOptions& opts = {});

/// Edge consistency, entry magic against entry Γ, and recomputation of Γ
/// from the M_call bits.
std::vector<Diagnostic> check_flow(const ir::Program& p);

/// Jumps, edges, call targets, return-site magic, magic well-formedness and
/// uniqueness over the canonical byte stream.
std::vector<Diagnostic> check_structural(const ir::Program& p);

Verdict verify(const ir::Program& p, const VerifyOptions& opts = {});

} // namespace confir::verify
