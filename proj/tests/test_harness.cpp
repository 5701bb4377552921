#include <doctest.h>

#include "confir/harness/harness.hpp"
#include "confir/ir/serialize.hpp"
#include "support.hpp"

using namespace confir;
using namespace confir::harness;
using namespace confir::ir;
using machine::Status;

TEST_CASE("seed derivation is a fixed function") {
    CHECK(splitmix64(0) == 0xE220A8397B1DCDAFull);
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(42, 7) == derive_seed(42, 7));
}

TEST_CASE("generator") {
    CHECK(gen_program_text(3) == gen_program_text(3));
    CHECK(gen_program_text(3) != gen_program_text(4));

    const auto bare = gen_program(9, {0, 12});
    REQUIRE(bare.find("main"));
    REQUIRE(bare.find("main")->body.size() == 1);
    CHECK(std::holds_alternative<Ret>(bare.find("main")->body.front().cmd));

    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto sp = gen_program(seed, {kMaxHelpers, kMaxBudget});
        CHECK(sp.functions.size() <= 1 + kMaxHelpers + 3);
        CHECK(std::holds_alternative<qualinfer::Inference>(qualinfer::infer(sp)));
    }
}

TEST_CASE("low equivalence") {
    const auto p = test::compile_text(test::fixture("ok.cir"));
    const auto reg = machine::TrustedRegistry::builtins();
    const machine::Machine m(p, reg);
    const auto s = m.initial();
    const auto& g = test::find_node(p.functions.at(p.entry), s.pc)->gamma_in;

    auto t = s;
    machine::write_cell(t.mu_h, p.layout.private_base, 5);
    t.sigma_h.push_back(3);
    CHECK(low_equiv(p, s, t));

    for (std::uint8_t r = 0; r < kNumRegs; ++r) {
        auto u = s;
        u.rho[r] ^= 1;
        CHECK(low_equiv(p, s, u) == (g[Reg{r}] == Taint::H));
    }

    auto l = s;
    machine::write_cell(l.mu_l, p.layout.public_base, 1);
    CHECK_FALSE(low_equiv(p, s, l));
    auto pc = s;
    pc.pc += 1;
    CHECK_FALSE(low_equiv(p, s, pc));
    auto stack = s;
    stack.sigma_l.push_back(1);
    CHECK_FALSE(low_equiv(p, s, stack));
}

TEST_CASE("vary_high keeps the low part") {
    const auto p = test::compile_text(gen_program_text(1), 1);
    const auto s = random_initial(p, 10);
    const auto t = vary_high(p, s, 11);
    CHECK(low_equiv(p, s, t));
    CHECK(s.mu_h != t.mu_h);
    CHECK(random_initial(p, 10) == s);
}

TEST_CASE("noninterference on a verified program, and the leaky control") {
    const auto ok = test::compile_text(test::fixture("ok.cir"));
    const auto reg = machine::TrustedRegistry::builtins();
    for (const auto& v : ni_check(ok, reg, 20, machine::kDefaultFuel, 5)) {
        CHECK(v.outcome != NiOutcome::Violation);
    }

    const auto leaky = test::compile_text(test::fixture("leaky.cir"));
    const auto bad = machine::TrustedRegistry::builtins_with_leaky();
    const auto verdicts = ni_check(leaky, bad, 20, machine::kDefaultFuel, 5);
    const auto it = std::find_if(verdicts.begin(), verdicts.end(),
                                 [](const NiVerdict& v) { return v.outcome == NiOutcome::Violation; });
    REQUIRE(it != verdicts.end());
    REQUIRE(it->witness0);
    // Replayable from the pair seed alone.
    const auto again = ni_pair(leaky, bad, it->pair_seed, machine::kDefaultFuel);
    CHECK(again.outcome == NiOutcome::Violation);
    CHECK(*again.witness0 == *it->witness0);
    CHECK(*again.witness1 == *it->witness1);
}

TEST_CASE("NI classification of asymmetric outcomes") {
    // Divergence depends on a public register only: both runs agree.
    const auto spin = test::compile_text("fn main() -> public {\nspin:\n  goto spin\n}\n");
    const auto reg = machine::TrustedRegistry::builtins();
    const auto v = ni_pair(spin, reg, 1, 50);
    CHECK(v.outcome == NiOutcome::BothNonTerm);
    CHECK(v.steps0 == 50);
}

TEST_CASE("lightning checks") {
    const auto reg = machine::TrustedRegistry::builtins();
    const auto ok = test::compile_text(test::fixture("ok.cir"));
    CHECK(lightning_check(ok, reg, 10, machine::kDefaultFuel, 1) == 0);
    const auto stripped = strip_region_checks(test::compile_text(test::fixture("unguarded_load.cir")));
    CHECK(lightning_check(stripped, reg, 10, machine::kDefaultFuel, 1) > 0);
}

TEST_CASE("mutations") {
    const auto p = test::compile_text(gen_program_text(2), 2);
    for (const auto k : kAllMutations) {
        CAPTURE(to_string(k));
        CHECK(parse_mutation_kind(to_string(k)) == k);
        const auto a = mutate(p, k, 99);
        const auto b = mutate(p, k, 99);
        CHECK(a.program == b.program);
        CHECK(a.site == b.site);
        CHECK_FALSE(a.program == p);
    }
    CHECK_FALSE(parse_mutation_kind("NoSuchKind"));

    const auto plain = test::compile_text("fn main() -> public {\n  r0 = 1\n  ret\n}\n");
    CHECK_THROWS_AS(mutate(plain, MutationKind::RetargetStoreRegion, 0), NoApplicableSite);
    CHECK_THROWS_AS(mutate(plain, MutationKind::ICallWithoutCheck, 0), NoApplicableSite);
}

TEST_CASE("serial and parallel campaigns agree") {
    const GenParams params{3, 12};
    const auto serial = build_corpus(77, 24, params, {false, 0});
    const auto parallel = build_corpus(77, 24, params, {true, 4});
    CHECK(to_jsonl(serial) == to_jsonl(parallel));
    const auto reg = machine::TrustedRegistry::builtins();
    CHECK(to_jsonl(ni_campaign(serial, reg, 4, 2000, {false, 0})) ==
          to_jsonl(ni_campaign(parallel, reg, 4, 2000, {true, 4})));
    CHECK(to_jsonl(lightning_campaign(serial, reg, 3, 2000, {false, 0})) ==
          to_jsonl(lightning_campaign(parallel, reg, 3, 2000, {true, 4})));
    CHECK(to_jsonl(mutation_audit(serial, {false, 0})) == to_jsonl(mutation_audit(parallel, {true, 4})));
}

TEST_CASE("reports end with a summary line") {
    const auto corpus = build_corpus(1, 3, {}, {false, 0});
    const auto text = to_jsonl(corpus);
    CHECK(text.find("{\"summary\"") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
