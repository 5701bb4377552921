#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "confir/ir/command.hpp"
#include "confir/ir/program.hpp"

namespace confir::ir {

class SyntaxError : public std::runtime_error {
  public:
    SyntaxError(int line, int column, const std::string& msg);
    int line() const { return line_; }
    int column() const { return column_; }

  private:
    int line_;
    int column_;
};

class UnresolvedName : public std::runtime_error {
  public:
    UnresolvedName(std::string name, int line);
    const std::string& name() const { return name_; }
    int line() const { return line_; }

  private:
    std::string name_;
    int line_;
};

/// One source statement. Jump targets are `Expr::label`, global references
/// `Expr::global_addr`; neither survives instrumentation.
struct SourceStmt {
    Command cmd;
    /// Explicit `public`/`private` qualifier on a load or store.
    std::optional<Taint> region;
    /// Expected return taint of an indirect call.
    Taint icall_ret = Taint::H;
    int line = 0;
};

struct SourceFunction {
    std::string name;
    Trust trust = Trust::U;
    std::vector<Taint> params; // at most four, bound to r1..r4
    Taint ret = Taint::L;
    std::vector<SourceStmt> body;
    std::map<std::string, std::size_t> labels; // label -> statement index
    int line = 0;

    /// Unused argument positions are H.
    TaintVec5 signature() const;
};

struct SourceGlobal {
    std::string name;
    Taint region = Taint::L;
    std::uint64_t size = 1;
    int line = 0;
};

struct SourceProgram {
    std::vector<SourceFunction> functions; // declaration order
    std::vector<SourceGlobal> globals;
    std::string entry;

    const SourceFunction* find(std::string_view name) const;
    const SourceGlobal* find_global(std::string_view name) const;
};

/// Statement index a jump target names: a label, or a constant statement
/// index. Nothing for computed targets or out-of-range constants.
std::optional<std::size_t> resolve_target(const SourceFunction& f, const Expr& target);

/// Intra-procedural successors of statement `i` (calls fall through).
std::vector<std::size_t> source_successors(const SourceFunction& f, std::size_t i);

/// Parses the textual IR. Throws SyntaxError or UnresolvedName.
SourceProgram parse_source(std::string_view text);

/// Renders a SourceProgram back to text accepted by parse_source.
std::string to_text(const SourceProgram& sp);

} // namespace confir::ir
