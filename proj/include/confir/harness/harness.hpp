#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "confir/confverify/verify.hpp"
#include "confir/instrument/instrument.hpp"
#include "confir/ir/source.hpp"
#include "confir/machine/machine.hpp"

namespace confir::harness {

std::uint64_t splitmix64(std::uint64_t x);
/// Seed for item `index` of a campaign rooted at `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// ---------------------------------------------------------------------------
// Program generation

struct GenParams {
    int helpers = 3;  // U functions besides main; 0 gives a bare main
    int budget = 12;  // random statements per function body
};

inline constexpr int kMaxHelpers = 7;
inline constexpr int kMaxBudget = 40;

/// Random source program. Taints are tracked while emitting so the result
/// normally passes inference. With helpers > 0 every program has a loop,
/// an indirect call, a direct call, loads and stores in both regions and a
/// t_read_secret call.
ir::SourceProgram gen_program(std::uint64_t seed, const GenParams& params = {});
std::string gen_program_text(std::uint64_t seed, const GenParams& params = {});

// ---------------------------------------------------------------------------
// Two-run checks

/// pc, σ_L, μ_L and the registers that are L in Γ at the node at pc.
bool low_equiv(const ir::Program& p, const machine::Configuration& s0, const machine::Configuration& s1);

/// Random initial configuration: all registers, public and private globals
/// and the trusted seed are drawn from `seed`.
machine::Configuration random_initial(const ir::Program& p, std::uint64_t seed);

/// Copy of `s` with private globals, H registers (per Γ at the entry node)
/// and the trusted seed redrawn from `seed`.
machine::Configuration vary_high(const ir::Program& p, const machine::Configuration& s, std::uint64_t seed);

enum class NiOutcome : std::uint8_t { Equivalent, OneBottom, BothNonTerm, Violation };
std::string_view to_string(NiOutcome o);

struct NiVerdict {
    std::uint64_t program_id = 0;
    std::uint64_t pair_id = 0;
    std::uint64_t program_seed = 0;
    std::uint64_t pair_seed = 0;
    NiOutcome outcome = NiOutcome::Equivalent;
    machine::Status status0 = machine::Status::Final;
    machine::Status status1 = machine::Status::Final;
    std::uint64_t steps0 = 0;
    std::uint64_t steps1 = 0;
    /// Final configurations, set for violations only.
    std::optional<machine::Configuration> witness0, witness1;
};

NiVerdict ni_pair(const ir::Program& p, const machine::TrustedRegistry& trusted, std::uint64_t pair_seed,
                  std::uint64_t fuel);

/// `n_pairs` low-equivalent pairs with seeds derived from `seed`.
std::vector<NiVerdict> ni_check(const ir::Program& p, const machine::TrustedRegistry& trusted, int n_pairs,
                                std::uint64_t fuel, std::uint64_t seed);

struct LightningRun {
    std::uint64_t run_seed = 0;
    machine::Status status = machine::Status::Final;
    std::uint64_t steps = 0;
};

std::vector<LightningRun> lightning_runs(const ir::Program& p, const machine::TrustedRegistry& trusted, int n_runs,
                                         std::uint64_t fuel, std::uint64_t seed);
int lightning_check(const ir::Program& p, const machine::TrustedRegistry& trusted, int n_runs, std::uint64_t fuel,
                    std::uint64_t seed);

/// Replaces every AddrInRegion assert with a jump to the next node.
ir::Program strip_region_checks(const ir::Program& p);

// ---------------------------------------------------------------------------
// Mutation catalog

enum class MutationKind : std::uint8_t {
    DropAssert,
    FlipMagicTaintBit,
    RetargetStoreRegion,
    WeakenGammaRecord,
    DuplicateMagicInData,
    CrossFunctionGoto,
    ICallWithoutCheck,
};
inline constexpr MutationKind kAllMutations[] = {
    MutationKind::DropAssert,          MutationKind::FlipMagicTaintBit, MutationKind::RetargetStoreRegion,
    MutationKind::WeakenGammaRecord,   MutationKind::DuplicateMagicInData, MutationKind::CrossFunctionGoto,
    MutationKind::ICallWithoutCheck,
};
std::string_view to_string(MutationKind k);
std::optional<MutationKind> parse_mutation_kind(std::string_view s);

class NoApplicableSite : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Mutant {
    ir::Program program;
    std::uint64_t pc = 0; // mutated node, or the function entry for magic flips
    std::string site;
    /// Rules expected to fire; empty when any rejection counts.
    std::vector<verify::RuleId> targeted;
};

/// One-site mutation of a verified program. Throws NoApplicableSite.
Mutant mutate(const ir::Program& p, MutationKind kind, std::uint64_t site_seed);

// ---------------------------------------------------------------------------
// Campaigns. Every campaign has a serial reference and an OpenMP variant that
// produce identical results.

struct Exec {
    bool parallel = true;
    int jobs = 0; // 0: OpenMP default
};

struct CorpusItem {
    std::uint64_t id = 0;
    std::uint64_t seed = 0;
    bool inferred = false;
    bool accepted = false;
    std::string error; // inference witness or verifier diagnostics
    std::optional<ir::Program> program;
};

/// Generates, compiles and verifies `count` programs.
std::vector<CorpusItem> build_corpus(std::uint64_t base_seed, std::size_t count, const GenParams& params,
                                     const Exec& exec);

struct NiReport {
    std::uint64_t programs_tested = 0;
    std::uint64_t pairs_per_program = 0;
    std::vector<NiVerdict> verdicts; // ordered by (program_id, pair_id)
    std::uint64_t count(NiOutcome o) const;
};

NiReport ni_campaign(const std::vector<CorpusItem>& corpus, const machine::TrustedRegistry& trusted, int n_pairs,
                     std::uint64_t fuel, const Exec& exec);

struct LightningReport {
    std::uint64_t programs_tested = 0;
    std::uint64_t runs_per_program = 0;
    std::vector<std::pair<std::uint64_t, LightningRun>> runs; // (program_id, run)
    std::uint64_t lightning() const;
};

LightningReport lightning_campaign(const std::vector<CorpusItem>& corpus, const machine::TrustedRegistry& trusted,
                                   int n_runs, std::uint64_t fuel, const Exec& exec);

struct AuditRow {
    std::uint64_t program_id = 0;
    MutationKind kind = MutationKind::DropAssert;
    bool applicable = false;
    bool rejected = false;
    bool matched = false; // targeted rule fired (true when nothing is targeted)
    bool has_target = false;
    std::uint64_t pc = 0;
    std::string site;
    std::vector<std::string> rules; // distinct rejecting rules
};

struct KindSummary {
    std::uint64_t programs = 0;
    std::uint64_t applicable = 0;
    std::uint64_t rejected = 0;
    std::uint64_t matched = 0;
};

struct AuditReport {
    std::vector<AuditRow> rows; // ordered by (program_id, kind)
    KindSummary summary(MutationKind k) const;
};

AuditReport mutation_audit(const std::vector<CorpusItem>& corpus, const Exec& exec);

// ---------------------------------------------------------------------------
// JSON-lines reports

std::string to_jsonl(const std::vector<CorpusItem>& corpus);
std::string to_jsonl(const NiReport& r);
std::string to_jsonl(const LightningReport& r);
std::string to_jsonl(const AuditReport& r);

} // namespace confir::harness
