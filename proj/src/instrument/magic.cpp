#include <random>
#include <vector>

#include "confir/instrument/instrument.hpp"
#include "confir/ir/serialize.hpp"

namespace confir::instrument {

using namespace confir::ir;

void apply_prefixes(Program& p, const MagicPrefixes& m) {
    p.m_call_prefix = m.call & kPrefixMask;
    p.m_ret_prefix = m.ret & kPrefixMask;
    for (auto& [name, f] : p.functions) {
        f.magic.prefix = p.m_call_prefix;
        for (auto& n : f.body) {
            if (n.ret_magic) {
                n.ret_magic->prefix = p.m_ret_prefix;
            }
        }
    }
    for (auto& [name, e] : p.func_table) {
        e.magic.prefix = p.m_call_prefix;
    }
}

MagicPrefixes assign_magic_prefixes(const Program& p, const std::function<std::uint64_t()>& draw, int max_attempts) {
    Program candidate = p;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        MagicPrefixes m{draw() & kPrefixMask, draw() & kPrefixMask};
        if (m.call == m.ret) {
            continue;
        }
        apply_prefixes(candidate, m);
        const auto s = serialize_with_offsets(candidate);
        std::vector<std::size_t> designated = s.call_magic_offsets;
        designated.insert(designated.end(), s.ret_magic_offsets.begin(), s.ret_magic_offsets.end());
        std::sort(designated.begin(), designated.end());
        if (find_prefix_windows(s.bytes, m.call, designated).empty() &&
            find_prefix_windows(s.bytes, m.ret, designated).empty()) {
            return m;
        }
    }
    throw ExhaustedAttempts("no unique magic prefixes after " + std::to_string(max_attempts) + " draws");
}

MagicPrefixes assign_magic_prefixes(const Program& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return assign_magic_prefixes(p, [&] { return rng(); });
}

} // namespace confir::instrument
