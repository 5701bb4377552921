#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "confir/ir/program.hpp"
#include "confir/ir/source.hpp"

namespace confir::qualinfer {

using ir::Taint;

using VarId = std::uint32_t;

/// Either a taint variable or a concrete label.
struct Term {
    bool is_var = false;
    VarId var = 0;
    Taint label = Taint::L;

    static Term of(VarId v) { return {true, v, Taint::L}; }
    static Term of(Taint t) { return {false, 0, t}; }
    bool operator==(const Term&) const = default;
};

struct Constraint {
    enum class Kind : std::uint8_t { Le, Eq };
    Kind kind = Kind::Le;
    Term lhs;
    Term rhs;
    std::string reason;
    int line = 0;

    static Constraint le(Term a, Term b, std::string why = {}, int line = 0) {
        return {Kind::Le, a, b, std::move(why), line};
    }
    static Constraint eq(Term a, Term b, std::string why = {}, int line = 0) {
        return {Kind::Eq, a, b, std::move(why), line};
    }
};

struct VarInfo {
    std::string function;
    std::string what; // "r5 defined at line 7", "region of store at line 9"
};

/// A branch whose condition depends on `deps`; recorded instead of a
/// constraint when implicit flows only warn.
struct BranchSite {
    std::string function;
    std::size_t stmt = 0;
    int line = 0;
    std::vector<VarId> deps;
};

struct ConstraintSystem {
    std::vector<VarInfo> vars;
    std::vector<Constraint> constraints;
    /// function -> statement index -> region variable of that load/store.
    std::map<std::string, std::vector<std::optional<VarId>>> access_region;
    std::vector<BranchSite> implicit_flows;

    std::string describe(const Term& t) const;
    std::string describe(const Constraint& c) const;
};

struct Options {
    /// Reject branches on private data. When false they become warnings.
    bool strict = true;
    ir::RegisterConvention convention;
};

ConstraintSystem generate_constraints(const ir::SourceProgram& sp, const Options& opts = {});

using Assignment = std::vector<Taint>;

struct TypeError {
    /// Shortest chain of constraints leading from an H source to an L sink.
    std::vector<Constraint> witness;
};

std::variant<Assignment, TypeError> solve_constraints(const std::vector<Constraint>& constraints,
                                                      std::size_t num_vars);

/// Renders a TypeError against the system that produced it.
std::string format_type_error(const TypeError& e, const ConstraintSystem& sys);

/// Solved inference for a whole source program.
struct Inference {
    ConstraintSystem system;
    Assignment solution;
    std::vector<std::string> warnings;

    /// Region of the load/store at `stmt` of `function`.
    Taint access_region(const std::string& function, std::size_t stmt) const;
};

std::variant<Inference, TypeError> infer(const ir::SourceProgram& sp, const Options& opts = {});

// ---------------------------------------------------------------------------
// Register-taint dataflow.

/// Supplies the facts the transfer function cannot read off a node.
struct TaintOracle {
    ir::RegisterConvention convention;
    std::function<Taint(const ir::Node&)> load_region;
    /// Taint of r0 after the call at this node.
    std::function<Taint(const ir::Node&)> call_ret;
    /// Registers whose taint survives a call unchanged. Source-level bodies
    /// keep callee-save registers (instrumentation spills them); instrumented
    /// bodies use 0, matching the call rule.
    std::uint16_t preserved_across_calls = 0;
};

/// Γ at a function entry: arguments from the signature, callee-save L,
/// every other register H.
ir::TaintEnv entry_env(const ir::TaintVec5& sig, const ir::RegisterConvention& conv);

ir::TaintEnv transfer(const ir::Node& n, const ir::TaintEnv& in, const TaintOracle& oracle);

/// Least fixpoint of Γ(v) = ⊔ Γ′(pred v) (⊔ `entry` at the first node),
/// Γ′(v) = transfer(v, Γ(v)). Writes gamma_in/gamma_out of every node.
/// Nodes must be sorted by pc.
void compute_node_taints(std::vector<ir::Node>& body, const ir::TaintEnv& entry, const TaintOracle& oracle);

} // namespace confir::qualinfer
