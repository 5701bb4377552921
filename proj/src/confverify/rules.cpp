// Per-node type rules.

#include <algorithm>
#include <string>

#include "confir/ir/overloaded.hpp"
#include "context.hpp"

namespace confir::verify {

using namespace confir::ir;

std::string_view rule_name(RuleId r) {
    switch (r) {
    case RuleId::Ldr: return "Ldr";
    case RuleId::Str: return "Str";
    case RuleId::Mov: return "Mov";
    case RuleId::Call: return "Call";
    case RuleId::ICall: return "ICall";
    case RuleId::Ret: return "Ret";
    case RuleId::Goto: return "Goto";
    case RuleId::If: return "If";
    case RuleId::Assert: return "Assert";
    case RuleId::Flow: return "Flow";
    case RuleId::NonConstantJump: return "NonConstantJump";
    case RuleId::JumpEscapesFunction: return "JumpEscapesFunction";
    case RuleId::EdgeMismatch: return "EdgeMismatch";
    case RuleId::FallOffFunction: return "FallOffFunction";
    case RuleId::CallTarget: return "CallTarget";
    case RuleId::ICallToTrusted: return "ICallToTrusted";
    case RuleId::MissingRetMagic: return "MissingRetMagic";
    case RuleId::SpuriousRetMagic: return "SpuriousRetMagic";
    case RuleId::BadMagic: return "BadMagic";
    case RuleId::MagicNotUnique: return "MagicNotUnique";
    case RuleId::EntryMagic: return "EntryMagic";
    }
    return "?";
}

std::string to_string(const Diagnostic& d) {
    return std::string(d.severity == Severity::Reject ? "REJECT" : "WARN") + " pc=" + std::to_string(d.pc) +
           " rule=" + std::string(rule_name(d.rule)) + " " + d.message;
}

namespace detail {

FunctionView::FunctionView(const FuncInfo& f) : f_(f) {
    const std::size_t n = f.body.size();
    preds_.resize(n);
    succs_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        index_.emplace(f.body[i].pc, i);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto s : command_successors(f.body[i])) {
            if (const auto j = index(s); j != npos) {
                succs_[i].push_back(j);
                preds_[j].push_back(i);
            }
        }
    }
}

const Node* FunctionView::node(std::uint64_t pc) const {
    const auto i = index(pc);
    return i == npos ? nullptr : &f_.body[i];
}

std::size_t FunctionView::index(std::uint64_t pc) const {
    const auto it = index_.find(pc);
    return it == index_.end() ? npos : it->second;
}

TaintEnv after_call(const Program& p, Taint ret) {
    auto g = TaintEnv::from_mask(p.convention.caller_save_mask());
    g.set(kRetReg, ret);
    return g;
}

std::optional<Taint> asserted_region(const FunctionView& fv, std::size_t i, const Expr& addr) {
    const auto* pred = fv.find_assert(i, addr.reg_mask(), [&](const AssertPred& p) {
        const auto* a = std::get_if<AddrInRegion>(&p);
        return a && a->addr == addr;
    });
    if (!pred) {
        return std::nullopt;
    }
    return std::get<AddrInRegion>(*pred).region;
}

std::optional<Taint> call_ret_taint(const Program& p, const FunctionView& fv, std::size_t i) {
    const auto& n = fv.func().body[i];
    if (const auto* t = std::get_if<CallT>(&n.cmd)) {
        const auto it = p.functions.find(t->callee);
        if (it == p.functions.end()) {
            return std::nullopt;
        }
        return it->second.magic.call_taints().ret;
    }
    const auto* site = fv.node(n.pc + 1);
    if (!site || !site->ret_magic) {
        return std::nullopt;
    }
    return site->ret_magic->ret_taint();
}

namespace {

class NodeChecker {
  public:
    NodeChecker(const Program& p, const FunctionView& fv, std::size_t i, const VerifyOptions& opts)
        : p_(p), fv_(fv), i_(i), v_(fv.func().body[i]), g_(v_.gamma_in), opts_(opts) {}

    std::vector<Diagnostic> run() {
        std::visit(overloaded{
                       [&](const Mov& m) { expect_out(RuleId::Mov, g_.with(m.dst, taint_of(g_, m.src))); },
                       [&](const Ldr& l) { ldr(l); },
                       [&](const Str& s) { str(s); },
                       [&](const Goto& g) {
                           if (taint_of(g_, g.target) != Taint::L) {
                               reject(RuleId::Goto, "jump target depends on private data");
                           }
                           expect_out(RuleId::Goto, g_);
                       },
                       [&](const IfThenElse& c) { branch(c); },
                       [&](const Ret&) { ret(); },
                       [&](const CallU& c) { direct_call(c.callee, c.args, Trust::U); },
                       [&](const CallT& c) { direct_call(c.callee, c.args, Trust::T); },
                       [&](const ICall& c) { icall(c); },
                       [&](const Assert&) { expect_out(RuleId::Assert, g_); },
                   },
                   v_.cmd);
        return std::move(out_);
    }

  private:
    void reject(RuleId r, std::string msg) { out_.push_back({v_.pc, r, Severity::Reject, std::move(msg)}); }

    void expect_out(RuleId r, const TaintEnv& want) {
        if (v_.gamma_out != want) {
            reject(r, "recorded post-state " + to_string(v_.gamma_out) + " differs from " + to_string(want));
        }
    }

    void ldr(const Ldr& l) {
        const auto region = asserted_region(fv_, i_, l.addr);
        if (!region) {
            reject(RuleId::Ldr, "no region check for [" + to_string(l.addr) + "] in the same basic block");
            expect_out(RuleId::Ldr, g_.with(l.dst, Taint::H));
            return;
        }
        if (!leq(taint_of(g_, l.addr), *region)) {
            reject(RuleId::Ldr, "private address used for a public load");
        }
        expect_out(RuleId::Ldr, g_.with(l.dst, *region));
    }

    void str(const Str& s) {
        const auto region = asserted_region(fv_, i_, s.addr);
        if (!region) {
            reject(RuleId::Str, "no region check for [" + to_string(s.addr) + "] in the same basic block");
        } else {
            if (!leq(g_[s.src], *region)) {
                reject(RuleId::Str, "private " + to_string(s.src) + " stored to the public region");
            }
            if (!leq(taint_of(g_, s.addr), *region)) {
                reject(RuleId::Str, "private address used for a public store");
            }
        }
        expect_out(RuleId::Str, g_);
    }

    void branch(const IfThenElse& c) {
        if (taint_of(g_, c.cond) != Taint::L) {
            out_.push_back({v_.pc, RuleId::If, opts_.allow_implicit ? Severity::Warning : Severity::Reject,
                            "branch condition depends on private data"});
        }
        if (taint_of(g_, c.then_pc) != Taint::L || taint_of(g_, c.else_pc) != Taint::L) {
            reject(RuleId::If, "branch target depends on private data");
        }
        expect_out(RuleId::If, g_);
    }

    void callee_save_low(RuleId r, const char* where) {
        if (const auto hi = static_cast<std::uint16_t>(g_.mask() & p_.convention.callee_save_mask)) {
            for (std::uint8_t k = 0; k < kNumRegs; ++k) {
                if (hi & (1u << k)) {
                    reject(r, "callee-save " + to_string(Reg{k}) + " is private " + where);
                }
            }
        }
    }

    void ret() {
        callee_save_low(RuleId::Ret, "at ret");
        const auto* pred = fv_.find_assert(i_, 0, [](const AssertPred& p) {
            return std::holds_alternative<MagicRetMatch>(p);
        });
        const Taint declared = fv_.func().magic.call_taints().ret;
        if (!pred) {
            reject(RuleId::Ret, "ret is not preceded by a return-site magic check");
        } else {
            const Taint checked = std::get<MagicRetMatch>(*pred).ret;
            if (checked != declared) {
                reject(RuleId::Ret, std::string("return check expects ") + to_char(checked) +
                                        " but the function's magic declares " + to_char(declared));
            }
            if (!leq(g_[kRetReg], checked)) {
                reject(RuleId::Ret, "private r0 returned through a public return check");
            }
        }
        if (!leq(g_[kRetReg], declared)) {
            reject(RuleId::Ret, "private r0 returned from a function declaring a public result");
        }
        expect_out(RuleId::Ret, g_);
    }

    /// Argument taints (or the untouched register's taint) against `bits`.
    void check_args(RuleId r, const std::vector<Expr>& args, const TaintVec5& bits, const std::string& what) {
        for (std::size_t a = 0; a < kNumArgRegs; ++a) {
            const Taint t = a < args.size() ? taint_of(g_, args[a]) : g_[arg_reg(a)];
            if (!leq(t, bits.args[a])) {
                reject(r, "argument " + std::to_string(a + 1) + " is private but " + what + " expects public");
            }
        }
    }

    void ret_site(RuleId r, Taint want) {
        const auto* site = fv_.node(v_.pc + 1);
        if (site && site->ret_magic && site->ret_magic->ret_taint() != want) {
            reject(r, std::string("return site magic carries ") + to_char(site->ret_magic->ret_taint()) +
                          " but the callee returns " + to_char(want));
        }
    }

    void direct_call(const std::string& callee, const std::vector<Expr>& args, Trust kind) {
        callee_save_low(RuleId::Call, "at call");
        const auto it = p_.functions.find(callee);
        if (it == p_.functions.end() || it->second.trust != kind) {
            // Reported by the structural pass.
            expect_out(RuleId::Call, after_call(p_, Taint::H));
            return;
        }
        const TaintVec5 bits = it->second.magic.call_taints();
        check_args(RuleId::Call, args, bits, callee);
        if (kind == Trust::U) {
            ret_site(RuleId::Call, bits.ret);
        }
        const auto r = call_ret_taint(p_, fv_, i_);
        expect_out(RuleId::Call, after_call(p_, r.value_or(Taint::H)));
    }

    void icall(const ICall& c) {
        if (taint_of(g_, c.target) != Taint::L) {
            reject(RuleId::ICall, "indirect call target depends on private data");
        }
        callee_save_low(RuleId::ICall, "at icall");
        const auto* pred = fv_.find_assert(i_, c.target.reg_mask(), [&](const AssertPred& p) {
            const auto* m = std::get_if<MagicCallMatch>(&p);
            return m && m->target == c.target;
        });
        if (!pred) {
            reject(RuleId::ICall, "icall is not preceded by a magic check on " + to_string(c.target));
        } else {
            const auto& want = std::get<MagicCallMatch>(*pred).want;
            check_args(RuleId::ICall, c.args, want, "the checked signature #" + want.str() + "#");
            ret_site(RuleId::ICall, want.ret);
        }
        const auto r = call_ret_taint(p_, fv_, i_);
        expect_out(RuleId::ICall, after_call(p_, r.value_or(Taint::H)));
    }

    const Program& p_;
    const FunctionView& fv_;
    std::size_t i_;
    const Node& v_;
    TaintEnv g_;
    const VerifyOptions& opts_;
    std::vector<Diagnostic> out_;
};

} // namespace

std::vector<Diagnostic> check_node_in(const Program& p, const FunctionView& fv, std::size_t i,
                                      const VerifyOptions& opts) {
    return NodeChecker(p, fv, i, opts).run();
}

} // namespace detail

std::vector<Diagnostic> check_node(const Program& p, const FuncInfo& f, const Node& v, const VerifyOptions& opts) {
    const detail::FunctionView fv(f);
    const auto i = fv.index(v.pc);
    if (i == detail::FunctionView::npos) {
        return {{v.pc, RuleId::EdgeMismatch, Severity::Reject, "node is not part of " + f.name}};
    }
    return detail::check_node_in(p, fv, i, opts);
}

} // namespace confir::verify
