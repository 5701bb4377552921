#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace confir::cli {

// Stable exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRejected = 3;
inline constexpr int kExitBottom = 4;
inline constexpr int kExitLightning = 5;
inline constexpr int kExitOutOfFuel = 6;

/// Bad flag values detected after parsing; mapped to exit 2.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Common {
    bool json = false;
    std::optional<std::uint64_t> seed;
    bool warn_implicit = false;
    std::string scheme = "mpx";
    int jobs = 0;
    bool serial = false;
};

struct CompileArgs {
    std::string input;
    std::string output;
    bool listing = false;
    std::uint64_t public_size = 0;
    std::uint64_t private_size = 0;
    std::uint64_t stack_offset = 0;
};

struct RunArgs {
    std::string input;
    std::vector<std::string> entry_args;
    std::uint64_t fuel = 10000;
    std::uint64_t trusted_seed = 0;
    bool leaky = false;
};

struct NiArgs {
    std::string input;
    int pairs = 20;
    std::uint64_t fuel = 10000;
    bool leaky = false;
    std::string report;
};

struct CorpusArgs {
    int programs = 200;
    int helpers = 3;
    int budget = 12;
    int pairs = 20;
    int runs = 10;
    std::uint64_t fuel = 10000;
    std::string report; // file for mutate-audit, directory for fuzz
};

struct LayoutArgs {
    std::uint64_t public_size = 0;
    std::uint64_t private_size = 0;
    std::uint64_t stack_offset = 0;
};

int cmd_compile(const Common& c, const CompileArgs& a);
int cmd_verify(const Common& c, const std::string& input);
int cmd_run(const Common& c, const RunArgs& a);
int cmd_ni_check(const Common& c, const NiArgs& a);
int cmd_mutate_audit(const Common& c, const CorpusArgs& a);
int cmd_fuzz(const Common& c, const CorpusArgs& a);
int cmd_layout(const Common& c, const LayoutArgs& a);

} // namespace confir::cli
