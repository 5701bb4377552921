#include <doctest.h>

#include "confir/harness/harness.hpp"
#include "confir/ir/serialize.hpp"
#include "support.hpp"

using namespace confir;
using namespace confir::ir;
using instrument::GiB;

namespace {

std::size_t count_region_asserts(const FuncInfo& f) {
    std::size_t n = 0;
    for (const auto& node : f.body) {
        if (const auto* a = std::get_if<Assert>(&node.cmd)) {
            n += std::holds_alternative<AddrInRegion>(a->pred);
        }
    }
    return n;
}

} // namespace

TEST_CASE("worked example: entry and return-site magic bits") {
    const auto p = test::compile_text(test::fixture("add_incr.cir"));
    CHECK(p.functions.at("add").magic.str() == "#M_call#11111#");
    CHECK(p.functions.at("incr").magic.str() == "#M_call#01111#");
    CHECK(p.func_table.at("add").magic == p.functions.at("add").magic);

    const auto& incr = p.functions.at("incr");
    const Node* after_call = nullptr;
    for (std::size_t i = 0; i + 1 < incr.body.size(); ++i) {
        if (const auto* c = std::get_if<CallU>(&incr.body[i].cmd); c && c->callee == "add") {
            after_call = &incr.body[i + 1];
        }
    }
    REQUIRE(after_call);
    REQUIRE(after_call->ret_magic);
    CHECK(after_call->ret_magic->str() == "#M_ret#00001#");
    CHECK(after_call->ret_magic->prefix == p.m_ret_prefix);

    const auto text = listing(p);
    CHECK(text.find("#M_call#11111#") != std::string::npos);
    CHECK(text.find("#M_ret#00001#") != std::string::npos);
}

TEST_CASE("segment layout constants") {
    const auto l = instrument::compute_layout(Scheme::Segment);
    CHECK(l.public_size == 4 * GiB);
    CHECK(l.private_size == 4 * GiB);
    CHECK(l.guard_between == 36 * GiB);
    CHECK(l.private_base - l.public_base == 40 * GiB);
    CHECK(l.guard_low >= 2 * GiB);
    CHECK(l.public_base >= l.guard_low);
    CHECK(instrument::guard_reach(l) == 36 * GiB);
}

TEST_CASE("mpx layout validation") {
    using instrument::ConfigError;
    using instrument::LayoutConfig;
    const auto l = instrument::compute_layout(Scheme::Mpx);
    CHECK(l.private_base == l.public_base + l.public_size);
    CHECK(l.trusted_base > l.private_base + l.private_size - 1);
    CHECK_THROWS_AS(instrument::compute_layout(Scheme::Mpx, LayoutConfig{0, 1024, 16}), ConfigError);
    CHECK_THROWS_AS(instrument::compute_layout(Scheme::Mpx, LayoutConfig{1024, 1024, 0}), ConfigError);
    CHECK_THROWS_AS(instrument::compute_layout(Scheme::Mpx, LayoutConfig{1024, 1024, 2048}), ConfigError);
    CHECK_THROWS_AS(instrument::compute_layout(Scheme::Mpx, LayoutConfig{1ull << 33, 1ull << 33, 1ull << 31}),
                    ConfigError);
    CHECK_NOTHROW(instrument::compute_layout(Scheme::Mpx, LayoutConfig{1ull << 32, 1ull << 32, (1ull << 31) - 1}));
}

TEST_CASE("globals that do not fit are a configuration error") {
    instrument::CompileOptions opts;
    opts.layout = instrument::compute_layout(Scheme::Mpx, {64, 64, 16});
    const auto sp = parse_source("global big region=public size=100\nfn main() -> public {\n  r0 = 0\n  ret\n}\n");
    CHECK_THROWS_AS(instrument::compile(sp, opts), instrument::ConfigError);
}

TEST_CASE("magic prefixes avoid colliding windows") {
    const auto p = test::compile_text(test::fixture("add_incr.cir"));
    const auto s = serialize_with_offsets(p);
    // Premise: prefix 0 occurs in the container (runs of zero bytes).
    REQUIRE_FALSE(find_prefix_windows(s.bytes, 0, {}).empty());

    std::vector<std::uint64_t> draws = {5, 5, 0, 1, 0x1234567, 0x7654321};
    std::size_t i = 0;
    const auto m = instrument::assign_magic_prefixes(p, [&] { return draws.at(i++); });
    CHECK(m.call == 0x1234567);
    CHECK(m.ret == 0x7654321);
    CHECK(i == 6);

    CHECK_THROWS_AS(instrument::assign_magic_prefixes(p, [] { return std::uint64_t{0}; }, 10),
                    instrument::ExhaustedAttempts);
}

TEST_CASE("compiled programs are deterministic in the seed") {
    const auto text = harness::gen_program_text(5);
    CHECK(serialize_cfg(test::compile_text(text, 9)) == serialize_cfg(test::compile_text(text, 9)));
    const auto a = test::compile_text(text, 9);
    const auto b = test::compile_text(text, 10);
    CHECK(a.m_call_prefix != b.m_call_prefix);
}

TEST_CASE("every access, return and indirect call is guarded") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto p = test::compile_text(harness::gen_program_text(seed), seed);
        for (const auto& [name, f] : p.functions) {
            if (f.trust == Trust::T) {
                CHECK(f.body.empty());
                continue;
            }
            for (std::size_t i = 0; i < f.body.size(); ++i) {
                const auto& c = f.body[i].cmd;
                const auto prev = [&]() -> const AssertPred* {
                    if (i == 0) {
                        return nullptr;
                    }
                    const auto* a = std::get_if<Assert>(&f.body[i - 1].cmd);
                    return a ? &a->pred : nullptr;
                };
                if (std::holds_alternative<Ret>(c)) {
                    REQUIRE(prev());
                    CHECK(std::holds_alternative<MagicRetMatch>(*prev()));
                }
                if (std::holds_alternative<ICall>(c)) {
                    REQUIRE(prev());
                    CHECK(std::holds_alternative<MagicCallMatch>(*prev()));
                }
                CHECK(std::visit([](const auto& x) {
                    if constexpr (requires { x.addr; }) {
                        return x.addr.is_lowered();
                    } else {
                        return true;
                    }
                }, c));
            }
        }
    }
}

TEST_CASE("a region check in force is reused within a block") {
    const auto twice = test::compile_text("fn main(public r1) -> public {\n"
                                          "  r2 = load public [r1]\n"
                                          "  r3 = load public [r1]\n"
                                          "  r0 = r2 + r3\n"
                                          "  ret\n"
                                          "}\n");
    CHECK(count_region_asserts(twice.functions.at("main")) == 1);

    const auto moved = test::compile_text("fn main(public r1) -> public {\n"
                                          "  r2 = load public [r1]\n"
                                          "  r1 = r1 + 1\n"
                                          "  r3 = load public [r1]\n"
                                          "  r0 = r2 + r3\n"
                                          "  ret\n"
                                          "}\n");
    CHECK(count_region_asserts(moved.functions.at("main")) == 2);

    const auto store_after_load = test::compile_text("fn main(public r1) -> public {\n"
                                                     "  r2 = load public [r1]\n"
                                                     "  store public [r1], r2\n"
                                                     "  r0 = 0\n"
                                                     "  ret\n"
                                                     "}\n");
    CHECK(count_region_asserts(store_after_load.functions.at("main")) == 1);

    // A jump target starts a new block.
    const auto labelled = test::compile_text("fn main(public r1) -> public {\n"
                                             "  r2 = load public [r1]\n"
                                             "next:\n"
                                             "  r3 = load public [r1]\n"
                                             "  r0 = r2 + r3\n"
                                             "  if r0 goto next else out\n"
                                             "out:\n"
                                             "  ret\n"
                                             "}\n");
    CHECK(count_region_asserts(labelled.functions.at("main")) == 2);
}

TEST_CASE("unsupported source constructs raise InstrumentError") {
    // Computed jump targets cannot be lowered to constant edges.
    const auto sp = parse_source("fn main(public r1) -> public {\n  goto r1\n}\n");
    CHECK_THROWS_AS(instrument::compile(sp), instrument::InstrumentError);
}
