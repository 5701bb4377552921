#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "confir/harness/harness.hpp"
#include "confir/ir/serialize.hpp"
#include "support.hpp"

using namespace confir;
using namespace confir::ir;

namespace {

// Independent window scan: reassembles each 8-byte window bit by bit.
std::vector<std::size_t> naive_windows(const std::vector<std::uint8_t>& bytes, std::uint64_t prefix,
                                       const std::vector<std::size_t>& designated) {
    std::vector<std::size_t> out;
    for (std::size_t o = 0; o + 8 <= bytes.size(); ++o) {
        std::uint64_t v = 0;
        for (int b = 7; b >= 0; --b) {
            v = v * 256 + bytes[o + static_cast<std::size_t>(b)];
        }
        if (v / 32 == prefix && std::find(designated.begin(), designated.end(), o) == designated.end()) {
            out.push_back(o);
        }
    }
    return out;
}

} // namespace

TEST_CASE("container round trip is exact and canonical") {
    std::vector<Program> programs = {test::compile_text(test::fixture("add_incr.cir")),
                                     test::compile_text(test::fixture("ok.cir"))};
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        programs.push_back(test::compile_text(harness::gen_program_text(seed), seed));
    }
    for (const auto& p : programs) {
        const auto bytes = serialize_cfg(p);
        const auto back = deserialize_cfg(bytes);
        CHECK(back == p);
        CHECK(serialize_cfg(back) == bytes);
    }
}

TEST_CASE("designated offsets hold the magic encodings") {
    const auto p = test::compile_text(test::fixture("add_incr.cir"));
    const auto s = serialize_with_offsets(p);
    CHECK_FALSE(s.call_magic_offsets.empty());
    CHECK_FALSE(s.ret_magic_offsets.empty());
    for (const auto o : s.call_magic_offsets) {
        std::uint64_t v = 0;
        std::memcpy(&v, s.bytes.data() + o, 8);
        CHECK((v >> 5) == p.m_call_prefix);
    }
    for (const auto o : s.ret_magic_offsets) {
        std::uint64_t v = 0;
        std::memcpy(&v, s.bytes.data() + o, 8);
        CHECK((v >> 5) == p.m_ret_prefix);
    }
    // Uniqueness holds: no window outside the designated offsets matches.
    CHECK(find_prefix_windows(s.bytes, p.m_call_prefix, s.call_magic_offsets).empty());
    CHECK(find_prefix_windows(s.bytes, p.m_ret_prefix, s.ret_magic_offsets).empty());
}

TEST_CASE("window scan agrees with a bytewise oracle") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::uint8_t> bytes(static_cast<std::size_t>(rng() % 64));
        for (auto& b : bytes) {
            b = static_cast<std::uint8_t>(rng() % 4); // small alphabet makes hits likely
        }
        std::uint64_t prefix = 0;
        if (bytes.size() >= 8) {
            const auto o = static_cast<std::size_t>(rng() % (bytes.size() - 7));
            for (int b = 7; b >= 0; --b) {
                prefix = prefix * 256 + bytes[o + static_cast<std::size_t>(b)];
            }
            prefix >>= 5;
        }
        std::vector<std::size_t> designated;
        if (!bytes.empty() && rng() % 2) {
            designated.push_back(static_cast<std::size_t>(rng() % bytes.size()));
        }
        CHECK(find_prefix_windows(bytes, prefix, designated) == naive_windows(bytes, prefix, designated));
    }
}

TEST_CASE("malformed containers are refused") {
    const auto bytes = serialize_cfg(test::compile_text(test::fixture("add_incr.cir")));
    CHECK_THROWS_AS(deserialize_cfg(std::span(bytes.data(), 3)), MalformedContainer);
    CHECK_THROWS_AS(deserialize_cfg(std::span(bytes.data(), bytes.size() - 1)), MalformedContainer);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize_cfg(trailing), MalformedContainer);
    auto bad_magic = bytes;
    bad_magic[0] ^= 0xFF;
    CHECK_THROWS_AS(deserialize_cfg(bad_magic), MalformedContainer);
}

TEST_CASE("validate rejects broken invariants") {
    auto p = test::compile_text(test::fixture("add_incr.cir"));
    CHECK_NOTHROW(p.validate());

    auto dup = p;
    auto& body = dup.functions.at("add").body;
    body.push_back(body.back());
    CHECK_THROWS_AS(dup.validate(), InvariantViolation);

    auto table = p;
    table.func_table.at("incr").entry_pc += 1;
    CHECK_THROWS_AS(table.validate(), InvariantViolation);

    auto entry = p;
    entry.entry = "nope";
    CHECK_THROWS_AS(entry.validate(), InvariantViolation);
}
