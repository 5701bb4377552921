#include <doctest.h>

#include "confir/harness/harness.hpp"
#include "confir/machine/machine.hpp"
#include "support.hpp"

using namespace confir;
using namespace confir::ir;
using namespace confir::machine;

namespace {

const TrustedRegistry& builtins() {
    static const auto r = TrustedRegistry::builtins();
    return r;
}

Program tiny(const std::string& body) { return test::compile_text("fn main() -> public {\n" + body + "}\n"); }

Node& first_node(Program& p) { return p.functions.at(p.entry).body.front(); }

} // namespace

TEST_CASE("memory cells") {
    Memory m;
    write_cell(m, 5, 9);
    CHECK(read_cell(m, 5) == 9);
    CHECK(read_cell(m, 6) == 0);
    write_cell(m, 5, 0);
    CHECK(m.empty());
}

TEST_CASE("add with r1=4 returns 5") {
    auto p = test::compile_text(test::fixture("add_incr.cir"));
    p.entry = "add";
    const Machine m(p, builtins());
    auto s = m.initial();
    CHECK(s.pc == p.functions.at("add").entry_pc);
    s.rho[1] = 4;
    const auto r = run(m, s);
    CHECK(r.status == Status::Final);
    CHECK(r.state.rho[0] == 5);
}

TEST_CASE("arithmetic and division by zero") {
    const auto p = tiny("  r1 = 2\n  r2 = 3\n  r3 = r1 + r2\n  r4 = r3 / r5\n  r5 = r3 % r5\n  r0 = r3\n  ret\n");
    const Machine m(p, builtins());
    const auto r = run(m, m.initial());
    REQUIRE(r.status == Status::Final);
    CHECK(r.state.rho[3] == 5);
    CHECK(r.state.rho[4] == 0);
    CHECK(r.state.rho[0] == 5);
}

TEST_CASE("goto self runs out of fuel") {
    const auto p = tiny("spin:\n  goto spin\n");
    const Machine m(p, builtins());
    const auto r = run(m, m.initial(), 100);
    CHECK(r.status == Status::OutOfFuel);
    CHECK(r.steps == 100);
}

TEST_CASE("a false first assert halts at bottom after one step") {
    auto p = tiny("  r0 = 0\n  ret\n");
    const auto pub = p.layout.public_base;
    first_node(p).cmd = Assert{AddrInRegion{Expr::constant(pub), Taint::H}};
    const Machine m(p, builtins());
    const auto r = run(m, m.initial());
    CHECK(r.status == Status::Bottom);
    CHECK(r.steps == 1);
}

TEST_CASE("loads: in region, and in neither region") {
    auto p = tiny("  r0 = 0\n  ret\n");
    const auto a = p.layout.public_base + 3;
    first_node(p).cmd = Ldr{Reg{2}, Expr::constant(a)};
    {
        const Machine m(p, builtins());
        auto s = m.initial();
        write_cell(s.mu_l, a, 7);
        const auto pc = s.pc;
        REQUIRE(m.step(s) == StepResult::Continue);
        CHECK(s.rho[2] == 7);
        CHECK(s.pc == pc + 1);
    }
    first_node(p).cmd = Ldr{Reg{2}, Expr::constant(p.layout.public_base - 1)};
    const Machine m(p, builtins());
    auto s = m.initial();
    CHECK(m.step(s) == StepResult::Lightning);
}

TEST_CASE("stores go to the region containing the address") {
    auto p = tiny("  r0 = 0\n  ret\n");
    const auto h = p.layout.private_base + 1;
    first_node(p).cmd = Str{Reg{3}, Expr::constant(h)};
    const Machine m(p, builtins());
    auto s = m.initial();
    s.rho[3] = 42;
    REQUIRE(m.step(s) == StepResult::Continue);
    CHECK(read_cell(s.mu_h, h) == 42);
    CHECK(s.mu_l.empty());
}

TEST_CASE("trusted calls") {
    SUBCASE("unregistered callee is lightning") {
        const auto p = test::compile_text("trusted fn t_mystery(public r1) -> public\n"
                                          "fn main() -> public {\n  tcall t_mystery(1)\n  r0 = 0\n  ret\n}\n");
        const Machine m(p, builtins());
        CHECK(run(m, m.initial()).status == Status::Lightning);
    }
    SUBCASE("read_secret fills private cells from the seed") {
        const auto p = test::compile_text("trusted fn t_read_secret(public r1, public r2) -> public\n"
                                          "global s region=private size=3\n"
                                          "fn main() -> public {\n  tcall t_read_secret(@s, 3)\n  r0 = 0\n  ret\n}\n");
        const Machine m(p, builtins());
        const auto base = p.globals.front().address;
        auto s0 = m.initial();
        set_trusted_seed(s0, p.layout, 1);
        auto s1 = m.initial();
        set_trusted_seed(s1, p.layout, 2);
        const auto r0 = run(m, s0);
        const auto r1 = run(m, s1);
        REQUIRE(r0.status == Status::Final);
        CHECK(r0.state.mu_l.empty());
        CHECK(r0.state.mu_h.count(base) + r0.state.mu_h.count(base + 2) >= 1);
        CHECK(r0.state.mu_h != r1.state.mu_h);
        CHECK(run(m, s0).state == r0.state);
    }
    SUBCASE("leaky copies private values to public cells") {
        const auto p = test::compile_text(test::fixture("leaky.cir"));
        const auto reg = TrustedRegistry::builtins_with_leaky();
        const Machine m(p, reg);
        auto s = m.initial();
        set_trusted_seed(s, p.layout, 3);
        const auto r = run(m, s);
        REQUIRE(r.status == Status::Final);
        CHECK_FALSE(r.state.mu_l.empty());
        const Machine plain(p, builtins());
        CHECK(run(plain, m.initial()).status == Status::Lightning);
    }
}

TEST_CASE("indirect calls and returns") {
    const auto p = test::compile_text(test::fixture("ok.cir"));
    const Machine m(p, builtins());
    const auto r = run(m, m.initial());
    REQUIRE(r.status == Status::Final);
    const auto obs = observable(p, r.state);
    CHECK(std::find(obs.begin(), obs.end(), "total=6") != obs.end());
    CHECK(std::find(obs.begin(), obs.end(), "flag=" + std::to_string(0x5EC0DE)) != obs.end());

    SUBCASE("returning to a non-node is lightning") {
        const auto& count = p.functions.at("count");
        auto s = m.initial();
        s.pc = count.body.back().pc; // the ret itself
        s.sigma_l.push_back(0xDEAD);
        CHECK(m.step(s) == StepResult::Lightning);
    }
    SUBCASE("magic checks") {
        auto s = m.initial();
        const auto entry = p.functions.at("count").entry_pc;
        CHECK(m.eval_assert(s, MagicCallMatch{Expr::constant(entry), p.functions.at("count").magic.call_taints()}));
        CHECK_FALSE(m.eval_assert(s, MagicCallMatch{Expr::constant(entry + 1), {}}));
        CHECK(m.eval_assert(s, MagicRetMatch{Taint::H})); // empty σ_L
        s.sigma_l.push_back(0xDEAD);
        CHECK_FALSE(m.eval_assert(s, MagicRetMatch{Taint::L}));
    }
}

TEST_CASE("unguarded load reaches lightning once its check is stripped") {
    const auto p = test::compile_text(test::fixture("unguarded_load.cir"));
    const Machine guarded(p, builtins());
    auto s = guarded.initial();
    s.rho[1] = 3; // outside both regions
    CHECK(run(guarded, s).status == Status::Bottom);
    const auto stripped = harness::strip_region_checks(p);
    const Machine m(stripped, builtins());
    CHECK(run(m, s).status == Status::Lightning);
}

TEST_CASE("observable output lists public globals and L registers") {
    const auto p = test::compile_text("global out region=public size=2\nglobal sec region=private\n"
                                      "fn main() -> public {\n  r1 = 9\n  store [@out + 1], r1\n  r0 = 4\n  ret\n}\n");
    const Machine m(p, builtins());
    const auto r = run(m, m.initial());
    REQUIRE(r.status == Status::Final);
    const auto obs = observable(p, r.state);
    CHECK(std::find(obs.begin(), obs.end(), "out[1]=9") != obs.end());
    CHECK(std::none_of(obs.begin(), obs.end(), [](const std::string& l) { return l.rfind("sec", 0) == 0; }));
}
