#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "confir/ir/command.hpp"
#include "confir/ir/taint.hpp"

namespace confir::ir {

/// Raised when a Program (or container) breaks a structural invariant.
class InvariantViolation : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kPrefixMask = (std::uint64_t{1} << 59) - 1;

enum class MagicKind : std::uint8_t { CallSite = 0, RetSite = 1 };

/// 59-bit prefix followed by a 5-bit suffix. Call form: TaintVec5 bits.
/// Ret form: four zero padding bits then the return taint.
struct MagicSeq {
    MagicKind kind = MagicKind::CallSite;
    std::uint64_t prefix = 0;
    std::uint8_t suffix = 0;

    static MagicSeq call(std::uint64_t prefix, const TaintVec5& taints) {
        return {MagicKind::CallSite, prefix & kPrefixMask, taints.bits()};
    }
    static MagicSeq ret(std::uint64_t prefix, Taint t) {
        return {MagicKind::RetSite, prefix & kPrefixMask, static_cast<std::uint8_t>(t)};
    }
    static MagicSeq decode(MagicKind kind, std::uint64_t encoding) {
        return {kind, encoding >> 5, static_cast<std::uint8_t>(encoding & 0x1F)};
    }

    std::uint64_t encoding() const { return (prefix << 5) | (suffix & 0x1Fu); }
    TaintVec5 call_taints() const { return TaintVec5::from_bits(suffix); }
    Taint ret_taint() const { return static_cast<Taint>(suffix & 1u); }
    /// Ret form must carry zero padding.
    bool well_formed() const { return prefix <= kPrefixMask && suffix < 32 && (kind == MagicKind::CallSite || suffix <= 1); }
    /// "#M_call#01111#"
    std::string str() const;
    bool operator==(const MagicSeq&) const = default;
};

enum class Trust : std::uint8_t { U = 0, T = 1 };

struct Node {
    std::uint64_t pc = 0;
    Command cmd;
    TaintEnv gamma_in;
    TaintEnv gamma_out;
    /// Present iff this node is a valid return site.
    std::optional<MagicSeq> ret_magic;
    bool operator==(const Node&) const = default;
};

using Edge = std::pair<std::uint64_t, std::uint64_t>;

struct FuncInfo {
    std::string name;
    Trust trust = Trust::U;
    std::uint64_t entry_pc = 0;
    MagicSeq magic;
    std::vector<Node> body; // empty iff trust == T; sorted by pc
    std::vector<Edge> edges; // sorted, unique
    bool operator==(const FuncInfo&) const = default;
};

/// One row of the record F = {f ↦ ⟨entry, M_call⟩}.
struct FuncEntry {
    std::uint64_t entry_pc = 0;
    MagicSeq magic;
    bool operator==(const FuncEntry&) const = default;
};

enum class Scheme : std::uint8_t { Mpx = 0, Segment = 1 };

struct MemoryLayout {
    Scheme scheme = Scheme::Mpx;
    std::uint64_t public_base = 0;
    std::uint64_t public_size = 0;
    std::uint64_t private_base = 0;
    std::uint64_t private_size = 0;
    std::uint64_t stack_offset = 0;
    std::uint64_t guard_low = 0;
    std::uint64_t guard_between = 0;
    std::uint64_t trusted_base = 0;
    std::uint64_t trusted_size = 0;

    bool in_region(std::uint64_t addr, Taint region) const {
        const auto base = region == Taint::H ? private_base : public_base;
        const auto size = region == Taint::H ? private_size : public_size;
        return addr >= base && addr - base < size;
    }
    bool in_trusted(std::uint64_t addr) const { return addr >= trusted_base && addr - trusted_base < trusted_size; }
    std::uint64_t region_base(Taint region) const { return region == Taint::H ? private_base : public_base; }
    std::uint64_t region_size(Taint region) const { return region == Taint::H ? private_size : public_size; }
    bool operator==(const MemoryLayout&) const = default;
};

/// A named block of cells in one region. Addresses are cell indices: each
/// address holds one 64-bit value.
struct GlobalSym {
    std::string name;
    Taint region = Taint::L;
    std::uint64_t address = 0;
    std::uint64_t size = 0;
    bool operator==(const GlobalSym&) const = default;
};

/// The CFG G together with the function table F.
struct Program {
    std::map<std::string, FuncInfo> functions;
    std::map<std::string, FuncEntry> func_table;
    std::string entry;
    RegisterConvention convention;
    std::uint64_t m_call_prefix = 0;
    std::uint64_t m_ret_prefix = 0;
    MemoryLayout layout;
    std::vector<GlobalSym> globals; // sorted by address

    /// Throws InvariantViolation: unique pcs, sorted bodies, edges between
    /// own nodes, T functions without bodies, table consistency, U entry.
    void validate() const;
    bool operator==(const Program&) const = default;
};

/// pc → node lookup over a Program. Holds pointers into the program, which
/// must outlive it.
class PcIndex {
  public:
    struct Entry {
        const FuncInfo* func = nullptr;
        const Node* node = nullptr;
    };

    explicit PcIndex(const Program& p);

    const Entry* find(std::uint64_t pc) const;
    /// U function whose entry pc is `pc`, or nullptr.
    const FuncInfo* u_entry(std::uint64_t pc) const;
    const FuncInfo* any_entry(std::uint64_t pc) const;

  private:
    std::unordered_map<std::uint64_t, Entry> nodes_;
    std::unordered_map<std::uint64_t, const FuncInfo*> entries_;
};

/// Successor pcs implied by a node's command (fall-through, constant jump
/// targets). Non-constant targets are skipped.
std::vector<std::uint64_t> command_successors(const Node& n);

/// Human-readable listing with magic sequences, e.g. for `compile --listing`.
std::string listing(const Program& p);

} // namespace confir::ir
