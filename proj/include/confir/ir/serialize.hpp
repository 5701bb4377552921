#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "confir/ir/program.hpp"

namespace confir::ir {

class MalformedContainer : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint8_t kContainerVersion = 1;

/// Canonical `.ccfg` bytes plus the offsets where magic sequences were
/// written (designated positions for the uniqueness scan).
struct Serialized {
    std::vector<std::uint8_t> bytes;
    std::vector<std::size_t> call_magic_offsets;
    std::vector<std::size_t> ret_magic_offsets;
};

Serialized serialize_with_offsets(const Program& p);
std::vector<std::uint8_t> serialize_cfg(const Program& p);

/// Throws MalformedContainer on bad header, truncation, trailing bytes or
/// non-canonical encoding; InvariantViolation when Program::validate fails.
Program deserialize_cfg(std::span<const std::uint8_t> bytes);

/// Offsets o (outside `designated`) whose little-endian 64-bit window has
/// `prefix` as its top 59 bits.
std::vector<std::size_t> find_prefix_windows(std::span<const std::uint8_t> bytes, std::uint64_t prefix,
                                             std::span<const std::size_t> designated);

} // namespace confir::ir
