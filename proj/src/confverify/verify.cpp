#include <algorithm>
#include <string>

#include "confir/ir/overloaded.hpp"
#include "confir/ir/serialize.hpp"
#include "context.hpp"

namespace confir::verify {

using namespace confir::ir;
using detail::FunctionView;

namespace {

Diagnostic reject(std::uint64_t pc, RuleId r, std::string msg) { return {pc, r, Severity::Reject, std::move(msg)}; }

/// Γ the verifier derives on its own, starting from the M_call bits.
std::vector<TaintEnv> recompute(const Program& p, const FunctionView& fv) {
    const auto& f = fv.func();
    const std::size_t n = f.body.size();
    std::vector<TaintEnv> in(n, TaintEnv::all(Taint::L));
    if (n == 0) {
        return in;
    }
    const auto bits = f.magic.call_taints();
    auto entry = TaintEnv::all(Taint::H);
    entry.lower(p.convention.callee_save_mask);
    for (std::size_t a = 0; a < kNumArgRegs; ++a) {
        entry.set(arg_reg(a), bits.args[a]);
    }
    const auto entry_idx = fv.index(f.entry_pc);
    if (entry_idx != FunctionView::npos) {
        in[entry_idx] = entry;
    }

    const auto step = [&](std::size_t i) {
        const auto& node = f.body[i];
        const auto& g = in[i];
        return std::visit(overloaded{
                              [&](const Mov& m) { return g.with(m.dst, detail::taint_of(g, m.src)); },
                              [&](const Ldr& l) {
                                  return g.with(l.dst, detail::asserted_region(fv, i, l.addr).value_or(Taint::H));
                              },
                              [&](const CallU&) {
                                  return detail::after_call(p, detail::call_ret_taint(p, fv, i).value_or(Taint::H));
                              },
                              [&](const CallT&) {
                                  return detail::after_call(p, detail::call_ret_taint(p, fv, i).value_or(Taint::H));
                              },
                              [&](const ICall&) {
                                  return detail::after_call(p, detail::call_ret_taint(p, fv, i).value_or(Taint::H));
                              },
                              [&](const auto&) { return g; },
                          },
                          node.cmd);
    };

    std::vector<std::size_t> work;
    std::vector<bool> queued(n, true);
    for (std::size_t i = n; i-- > 0;) {
        work.push_back(i);
    }
    while (!work.empty()) {
        const auto i = work.back();
        work.pop_back();
        queued[i] = false;
        const auto out = step(i);
        for (const auto s : fv.succs(i)) {
            const auto joined = in[s].join(out);
            if (joined != in[s]) {
                in[s] = joined;
                if (!queued[s]) {
                    queued[s] = true;
                    work.push_back(s);
                }
            }
        }
    }
    return in;
}

void flow_function(const Program& p, const FunctionView& fv, std::vector<Diagnostic>& out) {
    const auto& f = fv.func();
    for (std::size_t i = 0; i < f.body.size(); ++i) {
        for (const auto s : fv.succs(i)) {
            if (!f.body[i].gamma_out.leq(f.body[s].gamma_in)) {
                out.push_back(reject(f.body[s].pc, RuleId::Flow,
                                     "post-state " + to_string(f.body[i].gamma_out) + " of pc " +
                                         std::to_string(f.body[i].pc) + " is not below pre-state " +
                                         to_string(f.body[s].gamma_in)));
            }
        }
    }
    if (const auto* e = fv.node(f.entry_pc)) {
        const auto bits = f.magic.call_taints();
        for (std::size_t a = 0; a < kNumArgRegs; ++a) {
            if (e->gamma_in[arg_reg(a)] != bits.args[a]) {
                out.push_back(reject(e->pc, RuleId::EntryMagic,
                                     "entry magic #" + bits.str() + "# disagrees with the entry taint of " +
                                         to_string(arg_reg(a))));
            }
        }
    }
    const auto derived = recompute(p, fv);
    for (std::size_t i = 0; i < f.body.size(); ++i) {
        if (!derived[i].leq(f.body[i].gamma_in)) {
            out.push_back(reject(f.body[i].pc, RuleId::Flow,
                                 "recorded pre-state " + to_string(f.body[i].gamma_in) +
                                     " is below the recomputed " + to_string(derived[i])));
        }
    }
}

void unknown_functions(const Program& p, const Expr& e, std::uint64_t pc, std::vector<Diagnostic>& out) {
    switch (e.kind()) {
    case Expr::Kind::FuncAddr:
        if (!p.functions.contains(e.name())) {
            out.push_back(reject(pc, RuleId::CallTarget, "address of unknown function " + e.name()));
        }
        break;
    case Expr::Kind::GlobalAddr:
    case Expr::Kind::Label: out.push_back(reject(pc, RuleId::BadMagic, "unlowered symbol " + e.name())); break;
    case Expr::Kind::Unary: unknown_functions(p, e.operand(), pc, out); break;
    case Expr::Kind::Binary:
        unknown_functions(p, e.lhs(), pc, out);
        unknown_functions(p, e.rhs(), pc, out);
        break;
    default: break;
    }
}

void exprs_of(const Command& c, std::vector<const Expr*>& out) {
    std::visit(overloaded{
                   [&](const Mov& m) { out.push_back(&m.src); },
                   [&](const Ldr& l) { out.push_back(&l.addr); },
                   [&](const Str& s) { out.push_back(&s.addr); },
                   [&](const Goto& g) { out.push_back(&g.target); },
                   [&](const IfThenElse& i) {
                       out.push_back(&i.cond);
                       out.push_back(&i.then_pc);
                       out.push_back(&i.else_pc);
                   },
                   [&](const Ret&) {},
                   [&](const CallU& k) {
                       for (const auto& a : k.args) {
                           out.push_back(&a);
                       }
                   },
                   [&](const CallT& k) {
                       for (const auto& a : k.args) {
                           out.push_back(&a);
                       }
                   },
                   [&](const ICall& k) {
                       out.push_back(&k.target);
                       for (const auto& a : k.args) {
                           out.push_back(&a);
                       }
                   },
                   [&](const Assert& a) {
                       std::visit(overloaded{
                                      [&](const AddrInRegion& r) { out.push_back(&r.addr); },
                                      [&](const MagicCallMatch& m) { out.push_back(&m.target); },
                                      [](const MagicRetMatch&) {},
                                  },
                                  a.pred);
                   },
               },
               c);
}

void structural_function(const Program& p, const FunctionView& fv, std::vector<Diagnostic>& out) {
    const auto& f = fv.func();
    std::vector<Edge> derived;
    for (std::size_t i = 0; i < f.body.size(); ++i) {
        const auto& n = f.body[i];
        for (const auto s : command_successors(n)) {
            derived.emplace_back(n.pc, s);
        }

        const auto jump = [&](const Expr& t) {
            if (!t.is_const()) {
                out.push_back(reject(n.pc, RuleId::NonConstantJump, "jump target " + to_string(t) + " is computed"));
            } else if (!fv.node(t.value())) {
                out.push_back(reject(n.pc, RuleId::JumpEscapesFunction,
                                     "jump target " + std::to_string(t.value()) + " is outside " + f.name));
            }
        };
        const auto direct = [&](const std::string& callee, Trust want) {
            const auto it = p.functions.find(callee);
            if (it == p.functions.end()) {
                out.push_back(reject(n.pc, RuleId::CallTarget, "call to unknown function " + callee));
            } else if (it->second.trust != want) {
                out.push_back(reject(n.pc, RuleId::CallTarget,
                                     want == Trust::U ? "call targets trusted " + callee
                                                      : "tcall targets untrusted " + callee));
            }
        };
        std::visit(overloaded{
                       [&](const Goto& g) { jump(g.target); },
                       [&](const IfThenElse& c) {
                           jump(c.then_pc);
                           jump(c.else_pc);
                       },
                       [&](const CallU& c) { direct(c.callee, Trust::U); },
                       [&](const CallT& c) { direct(c.callee, Trust::T); },
                       [&](const ICall& c) {
                           const FuncInfo* target = nullptr;
                           if (c.target.kind() == Expr::Kind::FuncAddr) {
                               const auto it = p.functions.find(c.target.name());
                               target = it == p.functions.end() ? nullptr : &it->second;
                           } else if (c.target.is_const()) {
                               for (const auto& [name, g] : p.functions) {
                                   if (g.entry_pc == c.target.value()) {
                                       target = &g;
                                   }
                               }
                           }
                           if (target && target->trust == Trust::T) {
                               out.push_back(reject(n.pc, RuleId::ICallToTrusted,
                                                    "indirect call to trusted " + target->name));
                           }
                       },
                       [](const auto&) {},
                   },
                   n.cmd);

        std::vector<const Expr*> es;
        exprs_of(n.cmd, es);
        for (const auto* e : es) {
            unknown_functions(p, *e, n.pc, out);
        }

        if (falls_through(n.cmd) && !fv.node(n.pc + 1)) {
            out.push_back(reject(n.pc, RuleId::FallOffFunction, "control falls off the end of " + f.name));
        }
        const bool needs_site = std::holds_alternative<CallU>(n.cmd) || std::holds_alternative<ICall>(n.cmd);
        if (needs_site) {
            const auto* site = fv.node(n.pc + 1);
            if (site && !site->ret_magic) {
                out.push_back(reject(site->pc, RuleId::MissingRetMagic, "return site lacks M_ret"));
            }
        }
        if (n.ret_magic) {
            const auto* before = fv.node(n.pc - 1);
            if (!before ||
                !(std::holds_alternative<CallU>(before->cmd) || std::holds_alternative<ICall>(before->cmd))) {
                out.push_back(reject(n.pc, RuleId::SpuriousRetMagic, "M_ret on a node that is not a return site"));
            }
            if (n.ret_magic->kind != MagicKind::RetSite || !n.ret_magic->well_formed() ||
                n.ret_magic->prefix != p.m_ret_prefix) {
                out.push_back(reject(n.pc, RuleId::BadMagic, "malformed M_ret " + n.ret_magic->str()));
            }
        }
    }
    std::sort(derived.begin(), derived.end());
    derived.erase(std::unique(derived.begin(), derived.end()), derived.end());
    if (derived != f.edges) {
        std::vector<Edge> diff;
        std::set_symmetric_difference(derived.begin(), derived.end(), f.edges.begin(), f.edges.end(),
                                      std::back_inserter(diff));
        for (const auto& [a, b] : diff) {
            out.push_back(reject(a, RuleId::EdgeMismatch,
                                 "recorded edges disagree with the code at " + std::to_string(a) + "->" +
                                     std::to_string(b)));
        }
    }
}

void sort_diagnostics(std::vector<Diagnostic>& ds) {
    std::stable_sort(ds.begin(), ds.end(), [](const Diagnostic& a, const Diagnostic& b) { return a.pc < b.pc; });
}

} // namespace

std::vector<Diagnostic> check_flow(const Program& p) {
    std::vector<Diagnostic> out;
    for (const auto& [name, f] : p.functions) {
        if (f.trust == Trust::U) {
            flow_function(p, FunctionView(f), out);
        }
    }
    sort_diagnostics(out);
    return out;
}

std::vector<Diagnostic> check_structural(const Program& p) {
    std::vector<Diagnostic> out;
    if (p.m_call_prefix > kPrefixMask || p.m_ret_prefix > kPrefixMask || p.m_call_prefix == p.m_ret_prefix) {
        out.push_back(reject(0, RuleId::BadMagic, "M_call and M_ret prefixes must be distinct 59-bit values"));
    }
    for (const auto& [name, f] : p.functions) {
        if (f.magic.kind != MagicKind::CallSite || !f.magic.well_formed() || f.magic.prefix != p.m_call_prefix) {
            out.push_back(reject(f.entry_pc, RuleId::BadMagic, "malformed M_call " + f.magic.str() + " on " + name));
        }
        if (f.trust == Trust::U) {
            structural_function(p, FunctionView(f), out);
        }
    }

    const auto s = serialize_with_offsets(p);
    std::vector<std::size_t> designated = s.call_magic_offsets;
    designated.insert(designated.end(), s.ret_magic_offsets.begin(), s.ret_magic_offsets.end());
    std::sort(designated.begin(), designated.end());
    for (const auto prefix : {p.m_call_prefix, p.m_ret_prefix}) {
        for (const auto off : find_prefix_windows(s.bytes, prefix, designated)) {
            out.push_back(reject(0, RuleId::MagicNotUnique,
                                 std::string(prefix == p.m_call_prefix ? "M_call" : "M_ret") +
                                     " prefix also occurs at byte offset " + std::to_string(off)));
        }
    }
    sort_diagnostics(out);
    return out;
}

Verdict verify(const Program& p, const VerifyOptions& opts) {
    Verdict v;
    v.diagnostics = check_structural(p);
    auto flow = check_flow(p);
    v.diagnostics.insert(v.diagnostics.end(), flow.begin(), flow.end());
    for (const auto& [name, f] : p.functions) {
        if (f.trust != Trust::U) {
            continue;
        }
        const FunctionView fv(f);
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            auto ds = detail::check_node_in(p, fv, i, opts);
            v.diagnostics.insert(v.diagnostics.end(), ds.begin(), ds.end());
        }
    }
    sort_diagnostics(v.diagnostics);
    v.accepted = std::none_of(v.diagnostics.begin(), v.diagnostics.end(),
                              [](const Diagnostic& d) { return d.severity == Severity::Reject; });
    return v;
}

} // namespace confir::verify
