#include <doctest.h>

#include <cstring>

#include "confir/harness/harness.hpp"
#include "confir/ir/source.hpp"
#include "support.hpp"

using namespace confir;
using namespace confir::ir;

TEST_CASE("operators are total") {
    CHECK(apply(BinaryOp::Add, 2, 3) == 5);
    CHECK(apply(BinaryOp::Div, 7, 0) == 0);
    CHECK(apply(BinaryOp::Mod, 7, 0) == 0);
    CHECK(apply(BinaryOp::Sub, 0, 1) == ~std::uint64_t{0});
    CHECK(apply(BinaryOp::Shl, 1, 65) == 2);
    CHECK(apply(BinaryOp::Lt, static_cast<std::uint64_t>(-1), 0) == 1);
    CHECK(apply(BinaryOp::Gt, static_cast<std::uint64_t>(-1), 0) == 0);
    CHECK(apply(UnaryOp::LogicalNot, 5) == 0);
    CHECK(apply(UnaryOp::LogicalNot, 0) == 1);
    CHECK(apply(UnaryOp::Neg, 1) == ~std::uint64_t{0});
}

TEST_CASE("taint lattice") {
    CHECK(leq(Taint::L, Taint::H));
    CHECK_FALSE(leq(Taint::H, Taint::L));
    CHECK(join(Taint::L, Taint::H) == Taint::H);
    CHECK(join(Taint::L, Taint::L) == Taint::L);

    const auto g = TaintEnv::all(Taint::L).with(Reg{3}, Taint::H);
    CHECK(g[Reg{3}] == Taint::H);
    CHECK(g.leq(TaintEnv::all(Taint::H)));
    CHECK_FALSE(TaintEnv::all(Taint::H).leq(g));
    CHECK(g.join_over(Reg{3}.bit() | Reg{4}.bit()) == Taint::H);
    CHECK(g.join_over(Reg{4}.bit()) == Taint::L);
}

TEST_CASE("TaintVec5 renders arg1..arg4 then ret, most significant first") {
    TaintVec5 v;
    v.args = {Taint::L, Taint::H, Taint::H, Taint::H};
    v.ret = Taint::H;
    CHECK(v.bits() == 0b01111);
    CHECK(v.str() == "01111");
    for (std::uint8_t b = 0; b < 32; ++b) {
        CHECK(TaintVec5::from_bits(b).bits() == b);
    }
}

TEST_CASE("magic sequence encoding") {
    const auto m = MagicSeq::call(0x123456789, TaintVec5::from_bits(0b11111));
    CHECK(m.encoding() == ((std::uint64_t{0x123456789} << 5) | 0x1F));
    CHECK(MagicSeq::decode(MagicKind::CallSite, m.encoding()) == m);
    const auto r = MagicSeq::ret(7, Taint::H);
    CHECK(r.suffix == 1);
    CHECK(r.well_formed());
    CHECK_FALSE(MagicSeq{MagicKind::RetSite, 7, 3}.well_formed());
    CHECK(MagicSeq::call(~std::uint64_t{0}, {}).prefix == kPrefixMask);
}

TEST_CASE("parser reads the worked example") {
    const auto sp = parse_source(test::fixture("add_incr.cir"));
    CHECK(sp.entry == "main");
    REQUIRE(sp.functions.size() == 3);
    const auto* incr = sp.find("incr");
    REQUIRE(incr);
    CHECK(incr->params == std::vector<Taint>{Taint::L, Taint::H});
    CHECK(incr->ret == Taint::H);
    CHECK(incr->signature().str() == "01111");
    CHECK(sp.find("add")->signature().str() == "11111");
    REQUIRE(sp.find_global("cell"));
    CHECK(sp.find_global("cell")->region == Taint::H);
}

TEST_CASE("parser errors carry positions") {
    try {
        parse_source("fn main() -> public {\n  r0 = \n}\n");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.line() >= 2);
    }
    try {
        parse_source("fn main() -> public {\n  call nowhere()\n  ret\n}\n");
        FAIL("expected UnresolvedName");
    } catch (const UnresolvedName& e) {
        CHECK(e.name() == "nowhere");
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_source("fn main() -> public {\n  goto nolabel\n}\n"), UnresolvedName);
    CHECK_THROWS_AS(parse_source("trusted fn t(public r1) -> public\n"), SyntaxError);
    CHECK_THROWS_AS(parse_source("fn f(public r1, public r2, public r3, public r4, public r5) -> public { ret }\n"),
                    SyntaxError);
}

TEST_CASE("to_text is a parse fixpoint") {
    for (const auto* name : {"add_incr.cir", "ok.cir", "webserver_leak.cir", "leaky.cir", "unguarded_load.cir"}) {
        CAPTURE(name);
        const auto once = to_text(parse_source(test::fixture(name)));
        CHECK(to_text(parse_source(once)) == once);
    }
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto text = harness::gen_program_text(seed);
        const auto once = to_text(parse_source(text));
        CHECK(to_text(parse_source(once)) == once);
    }
}

TEST_CASE("source successors") {
    const auto sp = parse_source(test::fixture("ok.cir"));
    const auto* f = sp.find("sum_secret");
    REQUIRE(f);
    const auto loop = f->labels.at("loop");
    const auto body = f->labels.at("body");
    const auto done = f->labels.at("done");
    const auto succ = source_successors(*f, loop);
    CHECK(std::find(succ.begin(), succ.end(), body) != succ.end());
    CHECK(std::find(succ.begin(), succ.end(), done) != succ.end());
    CHECK(source_successors(*f, done).empty()); // ret
}

TEST_CASE("command classification") {
    CHECK(falls_through(Command{Mov{Reg{1}, Expr::constant(0)}}));
    CHECK_FALSE(falls_through(Command{Goto{Expr::constant(3)}}));
    CHECK_FALSE(falls_through(Command{Ret{}}));
    CHECK(is_call(Command{CallU{"f", {}}}));
    CHECK(is_call(Command{ICall{Expr::reg(Reg{5}), {}}}));
    CHECK(written_regs(Command{Ldr{Reg{4}, Expr::constant(0)}}) == Reg{4}.bit());
    CHECK(Expr::binary(BinaryOp::Add, Expr::reg(Reg{2}), Expr::reg(Reg{7})).reg_mask() ==
          (Reg{2}.bit() | Reg{7}.bit()));
    CHECK_FALSE(Expr::global_addr("g").is_lowered());
}
