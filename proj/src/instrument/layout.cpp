#include <string>

#include "confir/instrument/instrument.hpp"

namespace confir::instrument {

namespace {

constexpr std::uint64_t kMaxStackOffset = (std::uint64_t{1} << 31) - 1;
constexpr std::uint64_t kMaxRegionSize = std::uint64_t{1} << 40;

constexpr std::uint64_t kSegmentUsable = 4 * GiB;
constexpr std::uint64_t kSegmentGuard = 36 * GiB;
constexpr std::uint64_t kSegmentLowGuard = 4 * GiB;
constexpr std::uint64_t kMpxGuard = 1 * MiB;

} // namespace

MemoryLayout compute_layout(Scheme scheme, const LayoutConfig& cfg) {
    MemoryLayout l;
    l.scheme = scheme;
    if (scheme == Scheme::Segment) {
        // Each segment is 4 GiB usable followed by 36 GiB of guard; a 32-bit
        // offset plus a displacement below 2 GiB cannot cross the guard.
        const std::uint64_t stride = kSegmentUsable + kSegmentGuard;
        l.guard_low = kSegmentLowGuard;
        l.guard_between = kSegmentGuard;
        l.public_base = l.guard_low;
        l.public_size = kSegmentUsable;
        l.private_base = l.public_base + stride;
        l.private_size = kSegmentUsable;
        l.stack_offset = stride;
        l.trusted_base = l.private_base + stride;
        l.trusted_size = kSegmentUsable;
        return l;
    }

    if (cfg.public_size == 0 || cfg.private_size == 0) {
        throw ConfigError("region sizes must be positive");
    }
    if (cfg.public_size > kMaxRegionSize || cfg.private_size > kMaxRegionSize) {
        throw ConfigError("region size exceeds 1 TiB");
    }
    if (cfg.stack_offset == 0) {
        throw ConfigError("stack offset must be positive");
    }
    if (cfg.stack_offset > kMaxStackOffset) {
        throw ConfigError("stack offset " + std::to_string(cfg.stack_offset) + " exceeds 2^31-1");
    }
    if (cfg.stack_offset > cfg.public_size || cfg.stack_offset > cfg.private_size) {
        throw ConfigError("stack offset does not fit in both regions");
    }
    l.guard_low = kMpxGuard;
    l.guard_between = 0;
    l.public_base = l.guard_low;
    l.public_size = cfg.public_size;
    l.private_base = l.public_base + l.public_size;
    l.private_size = cfg.private_size;
    l.stack_offset = cfg.stack_offset;
    l.trusted_base = l.private_base + l.private_size + kMpxGuard;
    l.trusted_size = kMpxGuard;
    return l;
}

std::uint64_t guard_reach(const MemoryLayout& l) { return l.scheme == Scheme::Segment ? l.guard_between : 0; }

} // namespace confir::instrument
