#include <doctest.h>

#include <random>
#include <set>

#include "confir/qualinfer/qualinfer.hpp"
#include "support.hpp"

using namespace confir;
using namespace confir::ir;
using namespace confir::qualinfer;

namespace {

Taint value_of(const Term& t, const Assignment& a) { return t.is_var ? a[t.var] : t.label; }

bool satisfies(const std::vector<Constraint>& cs, const Assignment& a) {
    for (const auto& c : cs) {
        const auto l = value_of(c.lhs, a);
        const auto r = value_of(c.rhs, a);
        if (c.kind == Constraint::Kind::Le ? !leq(l, r) : l != r) {
            return false;
        }
    }
    return true;
}

/// Least solution by enumeration: the pointwise meet of all solutions, which
/// is itself a solution because the constraint language is closed under meet.
std::optional<Assignment> brute_least(const std::vector<Constraint>& cs, std::size_t n) {
    std::optional<Assignment> best;
    for (std::uint32_t bits = 0; bits < (1u << n); ++bits) {
        Assignment a(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = (bits >> i) & 1u ? Taint::H : Taint::L;
        }
        if (!satisfies(cs, a)) {
            continue;
        }
        if (!best) {
            best = a;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                if (a[i] == Taint::L) {
                    (*best)[i] = Taint::L;
                }
            }
        }
    }
    return best;
}

Term random_term(std::mt19937_64& rng, std::size_t n) {
    if (rng() % 5 == 0) {
        return Term::of(rng() % 2 ? Taint::H : Taint::L);
    }
    return Term::of(static_cast<VarId>(rng() % n));
}

} // namespace

TEST_CASE("solver returns the least solution (enumeration oracle)") {
    std::mt19937_64 rng(2024);
    int unsat = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const std::size_t n = 1 + rng() % 8;
        std::vector<Constraint> cs;
        const auto m = rng() % 12;
        for (std::size_t k = 0; k < m; ++k) {
            const auto a = random_term(rng, n);
            const auto b = random_term(rng, n);
            cs.push_back(rng() % 4 == 0 ? Constraint::eq(a, b) : Constraint::le(a, b));
        }
        const auto expected = brute_least(cs, n);
        const auto got = solve_constraints(cs, n);
        if (expected) {
            REQUIRE(std::holds_alternative<Assignment>(got));
            CHECK(std::get<Assignment>(got) == *expected);
        } else {
            ++unsat;
            REQUIRE(std::holds_alternative<TypeError>(got));
            const auto& w = std::get<TypeError>(got).witness;
            REQUIRE_FALSE(w.empty());
            // The chain is a subset of the input.
            for (const auto& c : w) {
                CHECK(std::any_of(cs.begin(), cs.end(), [&](const Constraint& d) {
                    return d.kind == c.kind && d.lhs == c.lhs && d.rhs == c.rhs;
                }));
            }
        }
    }
    CHECK(unsat > 0);
}

TEST_CASE("witness chain links an H source to an L sink") {
    // v0 <= v1 <= v2, H <= v0, v2 <= L, plus an unrelated edge.
    const std::vector<Constraint> cs = {
        Constraint::le(Term::of(Taint::H), Term::of(VarId{0}), "src"),
        Constraint::le(Term::of(VarId{0}), Term::of(VarId{1})),
        Constraint::le(Term::of(VarId{3}), Term::of(VarId{1})),
        Constraint::le(Term::of(VarId{1}), Term::of(VarId{2})),
        Constraint::le(Term::of(VarId{2}), Term::of(Taint::L), "sink"),
    };
    const auto r = solve_constraints(cs, 4);
    REQUIRE(std::holds_alternative<TypeError>(r));
    const auto& w = std::get<TypeError>(r).witness;
    REQUIRE(w.size() == 4);
    CHECK(w.front().reason == "src");
    CHECK(w.back().reason == "sink");
}

TEST_CASE("worked example infers the declared signatures") {
    const auto sp = parse_source(test::fixture("add_incr.cir"));
    const auto r = infer(sp);
    REQUIRE(std::holds_alternative<Inference>(r));
    const auto& inf = std::get<Inference>(r);
    // `store [r10], r0` in incr writes a private value, so its region is private.
    CHECK(inf.access_region("incr", 2) == Taint::H);
    CHECK(inf.access_region("incr", 3) == Taint::H);
}

TEST_CASE("web server leak fails with an H to L witness") {
    const auto sp = parse_source(test::fixture("webserver_leak.cir"));
    const auto r = infer(sp);
    REQUIRE(std::holds_alternative<TypeError>(r));
    const auto& err = std::get<TypeError>(r);
    CHECK(err.witness.size() >= 2);
    const auto msg = format_type_error(err, generate_constraints(sp));
    CHECK(msg.find("passwd") != std::string::npos);
    CHECK(msg.find("log") != std::string::npos);
}

TEST_CASE("branches on private data: strict rejects, lenient warns") {
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
    const auto sp = parse_source(text);
    CHECK(std::holds_alternative<TypeError>(infer(sp)));
    Options lenient;
    lenient.strict = false;
    const auto r = infer(sp, lenient);
    REQUIRE(std::holds_alternative<Inference>(r));
    CHECK_FALSE(std::get<Inference>(r).warnings.empty());
}

TEST_CASE("entry environment") {
    TaintVec5 sig;
    sig.args = {Taint::L, Taint::H, Taint::L, Taint::H};
    const auto g = entry_env(sig, {});
    CHECK(g[Reg{1}] == Taint::L);
    CHECK(g[Reg{2}] == Taint::H);
    CHECK(g[Reg{3}] == Taint::L);
    CHECK(g[Reg{4}] == Taint::H);
    CHECK(g[Reg{0}] == Taint::H);
    CHECK(g[Reg{9}] == Taint::H);
    for (std::uint8_t r = 10; r < 16; ++r) {
        CHECK(g[Reg{r}] == Taint::L);
    }
}

namespace {

std::vector<Node> random_body(std::mt19937_64& rng, std::size_t n) {
    std::vector<Node> body(n);
    const auto reg = [&] { return Reg{static_cast<std::uint8_t>(rng() % 6)}; };
    for (std::size_t i = 0; i < n; ++i) {
        body[i].pc = 100 + i;
        const auto target = [&] { return Expr::constant(100 + rng() % n); };
        switch (i + 1 == n ? 5 : rng() % 7) {
        case 0:
        case 1:
            body[i].cmd = Mov{reg(), Expr::binary(BinaryOp::Add, Expr::reg(reg()), Expr::reg(reg()))};
            break;
        case 2: body[i].cmd = Mov{reg(), Expr::constant(rng() % 9)}; break;
        case 3: body[i].cmd = Ldr{reg(), Expr::reg(reg())}; break;
        case 4: body[i].cmd = IfThenElse{Expr::reg(reg()), target(), target()}; break;
        case 5: body[i].cmd = rng() % 2 ? Command{Ret{}} : Command{Goto{target()}}; break;
        default: body[i].cmd = CallU{"f", {}}; break;
        }
    }
    return body;
}

} // namespace

TEST_CASE("dataflow fixpoint equals the join over all paths") {
    std::mt19937_64 rng(77);
    TaintOracle oracle;
    oracle.load_region = [](const Node& n) { return n.pc % 2 ? Taint::H : Taint::L; };
    oracle.call_ret = [](const Node& n) { return n.pc % 3 ? Taint::L : Taint::H; };
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 1 + rng() % 10;
        auto body = random_body(rng, n);
        const auto entry = TaintEnv::from_mask(static_cast<std::uint16_t>(rng()));
        compute_node_taints(body, entry, oracle);

        // Explore (node, Γ) states; every node may also start from all-L.
        std::set<std::pair<std::size_t, std::uint16_t>> seen;
        std::vector<std::pair<std::size_t, std::uint16_t>> work = {{0, entry.mask()}};
        for (std::size_t i = 0; i < n; ++i) {
            work.emplace_back(i, 0);
        }
        std::vector<std::uint16_t> expect(n, 0);
        while (!work.empty()) {
            const auto st = work.back();
            work.pop_back();
            if (!seen.insert(st).second) {
                continue;
            }
            expect[st.first] |= st.second;
            const auto out = transfer(body[st.first], TaintEnv::from_mask(st.second), oracle);
            for (const auto pc : command_successors(body[st.first])) {
                if (pc >= 100 && pc < 100 + n) {
                    work.emplace_back(pc - 100, out.mask());
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            CAPTURE(trial);
            CAPTURE(i);
            CHECK(body[i].gamma_in.mask() == expect[i]);
            CHECK(body[i].gamma_out == transfer(body[i], body[i].gamma_in, oracle));
        }
    }
}

TEST_CASE("transfer rules") {
    TaintOracle o;
    o.load_region = [](const Node&) { return Taint::H; };
    o.call_ret = [](const Node&) { return Taint::L; };
    const auto in = TaintEnv::all(Taint::L).with(Reg{2}, Taint::H).with(Reg{11}, Taint::H);

    Node mov{0, Mov{Reg{1}, Expr::binary(BinaryOp::Add, Expr::reg(Reg{2}), Expr::constant(1))}, {}, {}, {}};
    CHECK(transfer(mov, in, o)[Reg{1}] == Taint::H);
    Node konst{0, Mov{Reg{2}, Expr::constant(1)}, {}, {}, {}};
    CHECK(transfer(konst, in, o)[Reg{2}] == Taint::L);
    Node ldr{0, Ldr{Reg{3}, Expr::constant(0)}, {}, {}, {}};
    CHECK(transfer(ldr, in, o)[Reg{3}] == Taint::H);

    Node call{0, CallU{"f", {}}, {}, {}, {}};
    const auto after = transfer(call, in, o);
    CHECK(after[Reg{0}] == Taint::L);
    CHECK(after[Reg{5}] == Taint::H);  // caller-save clobbered
    CHECK(after[Reg{11}] == Taint::L); // callee-save restored to L
}
