#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "confir/ir/program.hpp"
#include "confir/ir/source.hpp"
#include "confir/qualinfer/qualinfer.hpp"

namespace confir::instrument {

using ir::MemoryLayout;
using ir::Scheme;

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InstrumentError : public std::runtime_error {
  public:
    InstrumentError(std::string function, int line, const std::string& reason);
    const std::string& function() const { return function_; }
    int line() const { return line_; }

  private:
    std::string function_;
    int line_;
};

class ExhaustedAttempts : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t KiB = 1024;
inline constexpr std::uint64_t MiB = 1024 * KiB;
inline constexpr std::uint64_t GiB = 1024 * MiB;

/// Region sizes for the MPX scheme; ignored by the segment scheme.
struct LayoutConfig {
    std::uint64_t public_size = 1 * MiB;
    std::uint64_t private_size = 1 * MiB;
    /// Distance between lock-step public and private stack slots.
    std::uint64_t stack_offset = 64 * KiB;
};

/// Segment: fixed 4 GiB usable segments, 36 GiB guards, 40 GiB stride.
/// MPX: contiguous public then private region; the public stack occupies
/// the top `stack_offset` bytes of the public region so its private twin
/// starts at the private base.
MemoryLayout compute_layout(Scheme scheme, const LayoutConfig& cfg = {});

/// Largest displacement an access may add to a checked address without
/// leaving the guard zone around its region.
std::uint64_t guard_reach(const MemoryLayout& l);

struct MagicPrefixes {
    std::uint64_t call = 0;
    std::uint64_t ret = 0;
};

inline constexpr int kMaxPrefixAttempts = 1000;

/// Draws (call, ret) prefix pairs until both are absent from the canonical
/// bytes of `p` outside designated magic offsets. `draw` yields raw 64-bit
/// values; only the low 59 bits are used.
MagicPrefixes assign_magic_prefixes(const ir::Program& p, const std::function<std::uint64_t()>& draw,
                                    int max_attempts = kMaxPrefixAttempts);
/// Seeded variant (mt19937_64).
MagicPrefixes assign_magic_prefixes(const ir::Program& p, std::uint64_t seed);

/// Rewrites every magic sequence in `p` to use the given prefixes.
void apply_prefixes(ir::Program& p, const MagicPrefixes& m);

/// Lowers an inferred source program. Adds region asserts before every
/// load/store, magic sequences at entries and return sites, CFI asserts
/// before ret/icall, register clearing around calls, and final Γ/Γ′.
ir::Program instrument_program(const ir::SourceProgram& sp, const qualinfer::Inference& inf,
                               const MemoryLayout& layout, std::uint64_t seed,
                               const ir::RegisterConvention& conv = {});

struct CompileOptions {
    qualinfer::Options infer;
    MemoryLayout layout = compute_layout(Scheme::Mpx);
    std::uint64_t seed = 0;
};

struct Compiled {
    ir::Program program;
    std::vector<std::string> warnings;
};

struct Rejected {
    qualinfer::TypeError error;
    std::string message;
};

/// infer + instrument. Throws InstrumentError / ConfigError.
std::variant<Compiled, Rejected> compile(const ir::SourceProgram& sp, const CompileOptions& opts = {});

} // namespace confir::instrument
