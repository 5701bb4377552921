// One-site mutations of verified programs.
//
// Sites are enumerated in (function name, pc) order and one is picked by
// `site_seed`. Every mutation keeps the pc layout intact; removed asserts
// become jumps to the next node.

#include <functional>

#include "confir/harness/harness.hpp"

namespace confir::harness {

using namespace confir::ir;
using verify::RuleId;

std::string_view to_string(MutationKind k) {
    switch (k) {
    case MutationKind::DropAssert: return "DropAssert";
    case MutationKind::FlipMagicTaintBit: return "FlipMagicTaintBit";
    case MutationKind::RetargetStoreRegion: return "RetargetStoreRegion";
    case MutationKind::WeakenGammaRecord: return "WeakenGammaRecord";
    case MutationKind::DuplicateMagicInData: return "DuplicateMagicInData";
    case MutationKind::CrossFunctionGoto: return "CrossFunctionGoto";
    case MutationKind::ICallWithoutCheck: return "ICallWithoutCheck";
    }
    return "?";
}

std::optional<MutationKind> parse_mutation_kind(std::string_view s) {
    for (const auto k : kAllMutations) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

namespace {

struct Site {
    std::string function;
    std::size_t node = 0; // index into the body
    int detail = 0;       // bit, register or target choice
};

Node& node_at(Program& p, const Site& s) { return p.functions.at(s.function).body[s.node]; }

std::string describe(const Program& p, const Site& s) {
    const auto& n = p.functions.at(s.function).body[s.node];
    return s.function + "@" + std::to_string(n.pc) + ": " + to_string(n.cmd);
}

/// Every node of every U function, in deterministic order.
void for_each_node(const Program& p, const std::function<void(const std::string&, std::size_t, const Node&)>& f) {
    for (const auto& [name, fn] : p.functions) {
        if (fn.trust != Trust::U) {
            continue;
        }
        for (std::size_t i = 0; i < fn.body.size(); ++i) {
            f(name, i, fn.body[i]);
        }
    }
}

void drop(Node& n) { n.cmd = Goto{Expr::constant(n.pc + 1)}; }

std::optional<RuleId> guarded_rule(const Command& c) {
    if (std::holds_alternative<Ldr>(c)) {
        return RuleId::Ldr;
    }
    if (std::holds_alternative<Str>(c)) {
        return RuleId::Str;
    }
    if (std::holds_alternative<Ret>(c)) {
        return RuleId::Ret;
    }
    if (std::holds_alternative<ICall>(c)) {
        return RuleId::ICall;
    }
    return std::nullopt;
}

/// Index of the region assert guarding the access at `i`, scanning back
/// through straight-line code.
std::optional<std::size_t> guarding_assert(const FuncInfo& f, std::size_t i, const Expr& addr) {
    for (std::size_t k = i; k-- > 0;) {
        const auto& n = f.body[k];
        if (n.pc + 1 != f.body[k + 1].pc || !falls_through(n.cmd) || is_call(n.cmd)) {
            return std::nullopt;
        }
        if (const auto* a = std::get_if<Assert>(&n.cmd)) {
            if (const auto* r = std::get_if<AddrInRegion>(&a->pred); r && r->addr == addr) {
                return k;
            }
        }
        if (written_regs(n.cmd) & addr.reg_mask()) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

Mutant finish(Program q, const Site& s, std::string what, std::vector<RuleId> targeted) {
    Mutant m;
    m.pc = q.functions.at(s.function).body[s.node].pc;
    m.site = std::move(what);
    m.targeted = std::move(targeted);
    m.program = std::move(q);
    return m;
}

} // namespace

Mutant mutate(const Program& p, MutationKind kind, std::uint64_t site_seed) {
    std::vector<Site> sites;
    const auto pick = [&]() -> const Site& {
        if (sites.empty()) {
            throw NoApplicableSite(std::string(to_string(kind)) + ": no applicable site");
        }
        return sites[site_seed % sites.size()];
    };
    Program q = p;

    switch (kind) {
    case MutationKind::DropAssert: {
        for_each_node(p, [&](const std::string& fn, std::size_t i, const Node& n) {
            const auto& body = p.functions.at(fn).body;
            if (std::holds_alternative<Assert>(n.cmd) && i + 1 < body.size() && guarded_rule(body[i + 1].cmd)) {
                sites.push_back({fn, i, 0});
            }
        });
        const auto& s = pick();
        const auto what = "drop " + describe(p, s);
        const auto rule = *guarded_rule(p.functions.at(s.function).body[s.node + 1].cmd);
        drop(node_at(q, s));
        return finish(std::move(q), s, what, {rule});
    }

    case MutationKind::FlipMagicTaintBit: {
        // Entry magic of U functions (five bits each) and return-site
        // magic (the taint bit). Trusted signatures are declarations, not
        // checked facts, so they are not sites.
        for (const auto& [name, fn] : p.functions) {
            if (fn.trust != Trust::U) {
                continue;
            }
            for (int b = 0; b < 5; ++b) {
                sites.push_back({name, 0, b});
            }
            for (std::size_t i = 0; i < fn.body.size(); ++i) {
                if (fn.body[i].ret_magic) {
                    sites.push_back({name, i, 5});
                }
            }
        }
        const auto& s = pick();
        const std::vector<RuleId> targets{RuleId::EntryMagic, RuleId::Call, RuleId::ICall, RuleId::Ret};
        auto& f = q.functions.at(s.function);
        if (s.detail < 5) {
            const auto before = f.magic;
            const auto flipped = TaintVec5::from_bits(static_cast<std::uint8_t>(before.suffix ^ (1u << s.detail)));
            f.magic = MagicSeq::call(before.prefix, flipped);
            q.func_table.at(s.function).magic = f.magic;
            return finish(std::move(q), s, s.function + " entry " + before.str() + " -> " + f.magic.str(), targets);
        }
        auto& n = f.body[s.node];
        const auto before = *n.ret_magic;
        n.ret_magic = MagicSeq::ret(before.prefix, before.ret_taint() == Taint::L ? Taint::H : Taint::L);
        return finish(std::move(q), s,
                      s.function + "@" + std::to_string(n.pc) + " return site " + before.str() + " -> " +
                          n.ret_magic->str(),
                      targets);
    }

    case MutationKind::RetargetStoreRegion: {
        // Private value stored under a private region check: retarget the
        // check to the public region.
        for_each_node(p, [&](const std::string& fn, std::size_t i, const Node& n) {
            const auto* st = std::get_if<Str>(&n.cmd);
            if (!st || n.gamma_in[st->src] != Taint::H) {
                return;
            }
            const auto& f = p.functions.at(fn);
            if (const auto k = guarding_assert(f, i, st->addr)) {
                const auto& a = std::get<AddrInRegion>(std::get<Assert>(f.body[*k].cmd).pred);
                if (a.region == Taint::H) {
                    sites.push_back({fn, i, static_cast<int>(*k)});
                }
            }
        });
        const auto& s = pick();
        auto& check = q.functions.at(s.function).body[static_cast<std::size_t>(s.detail)];
        std::get<AddrInRegion>(std::get<Assert>(check.cmd).pred).region = Taint::L;
        return finish(std::move(q), s, "retarget check at " + std::to_string(check.pc) + " for " + describe(p, s),
                      {RuleId::Str});
    }

    case MutationKind::WeakenGammaRecord: {
        for_each_node(p, [&](const std::string& fn, std::size_t i, const Node& n) {
            for (std::uint8_t r = 0; r < kNumRegs; ++r) {
                if (n.gamma_in[Reg{r}] == Taint::H) {
                    sites.push_back({fn, i, r});
                }
            }
        });
        const auto& s = pick();
        auto& n = node_at(q, s);
        const Reg r{static_cast<std::uint8_t>(s.detail)};
        n.gamma_in.set(r, Taint::L);
        return finish(std::move(q), s, "record " + to_string(r) + "=L before " + describe(p, s), {});
    }

    case MutationKind::DuplicateMagicInData: {
        for_each_node(p, [&](const std::string& fn, std::size_t i, const Node& n) {
            if (const auto* m = std::get_if<Mov>(&n.cmd); m && m->src.is_const()) {
                sites.push_back({fn, i, 0});
            }
        });
        const auto& s = pick();
        auto& m = std::get<Mov>(node_at(q, s).cmd);
        const auto forged = MagicSeq::call(p.m_call_prefix, TaintVec5::from_bits(static_cast<std::uint8_t>(site_seed & 31)));
        m.src = Expr::constant(forged.encoding());
        return finish(std::move(q), s, "embed " + forged.str() + " in " + describe(p, s), {});
    }

    case MutationKind::CrossFunctionGoto: {
        std::vector<std::uint64_t> entries;
        for (const auto& [name, fn] : p.functions) {
            if (fn.trust == Trust::U) {
                entries.push_back(fn.entry_pc);
            }
        }
        if (entries.size() >= 2) {
            for_each_node(p, [&](const std::string& fn, std::size_t i, const Node& n) {
                if (std::holds_alternative<Goto>(n.cmd)) {
                    sites.push_back({fn, i, 0});
                }
            });
        }
        const auto& s = pick();
        const auto own = p.functions.at(s.function).entry_pc;
        std::erase(entries, own);
        const auto target = entries[(site_seed >> 8) % entries.size()];
        std::get<Goto>(node_at(q, s).cmd).target = Expr::constant(target);
        return finish(std::move(q), s, "jump to " + std::to_string(target) + " from " + describe(p, s), {});
    }

    case MutationKind::ICallWithoutCheck: {
        for_each_node(p, [&](const std::string& fn, std::size_t i, const Node& n) {
            if (!std::holds_alternative<ICall>(n.cmd) || i == 0) {
                return;
            }
            const auto& prev = p.functions.at(fn).body[i - 1];
            if (const auto* a = std::get_if<Assert>(&prev.cmd);
                a && std::holds_alternative<MagicCallMatch>(a->pred) && prev.pc + 1 == n.pc) {
                sites.push_back({fn, i - 1, 0});
            }
        });
        const auto& s = pick();
        const auto what = "drop " + describe(p, s);
        drop(node_at(q, s));
        return finish(std::move(q), s, what, {RuleId::ICall});
    }
    }
    throw NoApplicableSite("unknown mutation kind");
}

} // namespace confir::harness
