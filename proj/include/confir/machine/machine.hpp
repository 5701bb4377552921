#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "confir/ir/program.hpp"

namespace confir::machine {

/// Sparse memory; absent cells read as 0 and writing 0 erases the cell, so
/// map equality is pointwise equality.
using Memory = std::map<std::uint64_t, std::uint64_t>;

void write_cell(Memory& m, std::uint64_t addr, std::uint64_t value);
std::uint64_t read_cell(const Memory& m, std::uint64_t addr);

/// ⟨τ, μ, ρ, [σ_H:σ_L], pc⟩. μ is split by region; the domains are the
/// layout's intervals.
struct Configuration {
    Memory tau;
    Memory mu_l;
    Memory mu_h;
    std::array<std::uint64_t, ir::kNumRegs> rho{};
    std::vector<std::uint64_t> sigma_h;
    std::vector<std::uint64_t> sigma_l;
    std::uint64_t pc = 0;
    bool operator==(const Configuration&) const = default;
};

enum class StepResult : std::uint8_t { Continue, Final, Bottom, Lightning };

enum class Status : std::uint8_t { Final, Bottom, Lightning, OutOfFuel };
std::string_view to_string(Status s);

struct TrustedContext {
    Configuration& state;
    const ir::Program& program;
};
using TrustedImpl = std::function<void(TrustedContext&)>;

/// Host implementations of T functions, keyed by name.
class TrustedRegistry {
  public:
    void register_trusted(std::string name, TrustedImpl impl);
    const TrustedImpl* find(const std::string& name) const;

    /// t_read_secret, t_copy_pub, t_declassify_const.
    static TrustedRegistry builtins();
    /// builtins() plus t_leaky, which copies private cells to public ones.
    static TrustedRegistry builtins_with_leaky();

  private:
    std::map<std::string, TrustedImpl, std::less<>> impls_;
};

/// Cells of τ used by the builtins: PRNG seed and call counter.
std::uint64_t trusted_seed_addr(const ir::MemoryLayout& l);
std::uint64_t trusted_counter_addr(const ir::MemoryLayout& l);
void set_trusted_seed(Configuration& s, const ir::MemoryLayout& l, std::uint64_t seed);

std::uint64_t eval_expr(const std::array<std::uint64_t, ir::kNumRegs>& rho,
                        const std::map<std::string, ir::FuncEntry>& func_table, const ir::Expr& e);

/// Step context: program, pc index and trusted registry.
class Machine {
  public:
    Machine(const ir::Program& p, const TrustedRegistry& trusted);

    const ir::Program& program() const { return p_; }
    const ir::PcIndex& index() const { return idx_; }

    /// Initial configuration: pc at the entry function, empty stacks.
    Configuration initial() const;

    bool eval_assert(const Configuration& s, const ir::AssertPred& pred) const;
    StepResult step(Configuration& s) const;

  private:
    const ir::Program& p_;
    ir::PcIndex idx_;
    const TrustedRegistry& trusted_;
};

inline constexpr std::uint64_t kDefaultFuel = 10000;

struct RunResult {
    Status status = Status::OutOfFuel;
    std::uint64_t steps = 0;
    Configuration state;
};

RunResult run(const Machine& m, Configuration s0, std::uint64_t fuel = kDefaultFuel);

/// Observable output: public globals and L registers as `name=value`.
std::vector<std::string> observable(const ir::Program& p, const Configuration& s);

} // namespace confir::machine
