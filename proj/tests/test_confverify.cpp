#include <doctest.h>

#include "confir/confverify/verify.hpp"
#include "confir/harness/harness.hpp"
#include "support.hpp"

using namespace confir;
using namespace confir::ir;
using verify::RuleId;

namespace {

bool fires(const verify::Verdict& v, RuleId r) {
    return std::any_of(v.diagnostics.begin(), v.diagnostics.end(), [&](const verify::Diagnostic& d) {
        return d.rule == r && d.severity == verify::Severity::Reject;
    });
}

Node& node_where(Program& p, const std::string& fn, const std::function<bool(const Node&)>& pred) {
    for (auto& n : p.functions.at(fn).body) {
        if (pred(n)) {
            return n;
        }
    }
    throw std::runtime_error("no such node in " + fn);
}

template <typename T>
bool is(const Node& n) {
    return std::holds_alternative<T>(n.cmd);
}

} // namespace

TEST_CASE("compiled fixtures are accepted") {
    for (const auto* name : {"add_incr.cir", "ok.cir"}) {
        CAPTURE(name);
        const auto v = verify::verify(test::compile_text(test::fixture(name)));
        CHECK(v.accepted);
        CHECK(v.diagnostics.empty());
    }
}

TEST_CASE("storing a private register into the public region is a Str error") {
    auto p = test::compile_text(test::fixture("add_incr.cir"));
    // incr stores r0 (private) through r10; make the region check public.
    auto& a = node_where(p, "incr", [](const Node& n) {
        const auto* x = std::get_if<Assert>(&n.cmd);
        return x && std::holds_alternative<AddrInRegion>(x->pred);
    });
    std::get<AddrInRegion>(std::get<Assert>(a.cmd).pred).region = Taint::L;
    const auto v = verify::verify(p);
    CHECK_FALSE(v.accepted);
    CHECK(fires(v, RuleId::Str));
}

TEST_CASE("ret without a return check is a Ret error") {
    auto p = test::compile_text(test::fixture("add_incr.cir"));
    auto& body = p.functions.at("add").body;
    for (std::size_t i = 1; i < body.size(); ++i) {
        if (is<Ret>(body[i])) {
            body[i - 1].cmd = Mov{Reg{9}, Expr::constant(0)};
        }
    }
    const auto v = verify::verify(p);
    CHECK_FALSE(v.accepted);
    CHECK(fires(v, RuleId::Ret));
}

TEST_CASE("structural side conditions") {
    const auto base = test::compile_text(test::fixture("ok.cir"));

    SUBCASE("computed jump") {
        auto p = base;
        node_where(p, "sum_secret", is<Goto>).cmd = Goto{Expr::reg(Reg{3})};
        CHECK(fires(verify::verify(p), RuleId::NonConstantJump));
    }
    SUBCASE("jump into another function") {
        auto p = base;
        const auto target = p.functions.at("count").body.back().pc;
        node_where(p, "sum_secret", is<Goto>).cmd = Goto{Expr::constant(target)};
        CHECK(fires(verify::verify(p), RuleId::JumpEscapesFunction));
    }
    SUBCASE("falling off the end") {
        auto p = base;
        p.functions.at("count").body.back().cmd = Mov{Reg{1}, Expr::constant(0)};
        CHECK(fires(verify::verify(p), RuleId::FallOffFunction));
    }
    SUBCASE("spurious return-site magic") {
        auto p = base;
        p.functions.at("count").body.front().ret_magic = MagicSeq::ret(p.m_ret_prefix, Taint::L);
        CHECK(fires(verify::verify(p), RuleId::SpuriousRetMagic));
    }
    SUBCASE("missing return-site magic") {
        auto p = base;
        auto& n = node_where(p, "main", [](const Node& x) { return x.ret_magic.has_value(); });
        n.ret_magic.reset();
        CHECK(fires(verify::verify(p), RuleId::MissingRetMagic));
    }
    SUBCASE("prefix duplicated in data") {
        auto p = base;
        node_where(p, "count", is<Mov>).cmd =
            Mov{Reg{0}, Expr::constant((p.m_call_prefix << 5) | 3)};
        CHECK(fires(verify::verify(p), RuleId::MagicNotUnique));
    }
    SUBCASE("call to an unknown function") {
        auto p = base;
        std::get<CallU>(node_where(p, "main", is<CallU>).cmd).callee = "ghost";
        const auto v = verify::verify(p);
        CHECK_FALSE(v.accepted);
    }
    SUBCASE("edge list out of sync") {
        auto p = base;
        p.functions.at("sum_secret").edges.pop_back();
        CHECK(fires(verify::verify(p), RuleId::EdgeMismatch));
    }
}

TEST_CASE("recorded Γ is recomputed, not trusted") {
    auto p = test::compile_text(test::fixture("ok.cir"));
    auto& n = node_where(p, "sum_secret", [](const Node& x) { return x.gamma_in[Reg{0}] == Taint::H; });
    n.gamma_in.set(Reg{0}, Taint::L);
    CHECK_FALSE(verify::verify(p).accepted);
}

TEST_CASE("implicit flows: verifier option downgrades If to a warning") {
    const std::string text = "global s region=private\n"
                             "fn main() -> public {\n"
                             "  r1 = load [@s]\n"
                             "  if r1 goto a else b\n"
                             "a:\n"
                             "  r0 = 1\n"
                             "  ret\n"
                             "b:\n"
                             "  r0 = 0\n"
                             "  ret\n"
                             "}\n";
    instrument::CompileOptions opts;
    opts.infer.strict = false;
    auto r = instrument::compile(parse_source(text), opts);
    REQUIRE(std::holds_alternative<instrument::Compiled>(r));
    const auto& p = std::get<instrument::Compiled>(r).program;
    const auto strict = verify::verify(p);
    CHECK_FALSE(strict.accepted);
    CHECK(fires(strict, RuleId::If));
    verify::VerifyOptions lenient;
    lenient.allow_implicit = true;
    const auto v = verify::verify(p, lenient);
    CHECK(v.accepted);
    CHECK_FALSE(v.diagnostics.empty());
}

TEST_CASE("mutation catalog is rejected on generated programs") {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        const auto p = test::compile_text(harness::gen_program_text(seed), seed);
        REQUIRE(verify::verify(p).accepted);
        for (const auto k : harness::kAllMutations) {
            CAPTURE(seed);
            CAPTURE(harness::to_string(k));
            const auto m = harness::mutate(p, k, seed * 31 + 7);
            const auto v = verify::verify(m.program);
            CHECK_FALSE(v.accepted);
            if (!m.targeted.empty()) {
                CHECK(std::any_of(m.targeted.begin(), m.targeted.end(), [&](RuleId r) { return fires(v, r); }));
            }
        }
    }
}

TEST_CASE("diagnostics are sorted by pc and rendered") {
    auto p = test::compile_text(test::fixture("ok.cir"));
    p.functions.at("count").body.back().cmd = Mov{Reg{1}, Expr::constant(0)};
    node_where(p, "sum_secret", is<Goto>).cmd = Goto{Expr::reg(Reg{3})};
    const auto v = verify::verify(p);
    REQUIRE(v.diagnostics.size() >= 2);
    CHECK(std::is_sorted(v.diagnostics.begin(), v.diagnostics.end(),
                         [](const auto& a, const auto& b) { return a.pc < b.pc; }));
    CHECK(verify::to_string(v.diagnostics.front()).rfind("REJECT pc=", 0) == 0);
}
