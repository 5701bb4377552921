// Constraint generation over reaching definitions: one variable per
// (function, register, def-site) plus one region variable per memory access.

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "confir/ir/overloaded.hpp"
#include "confir/qualinfer/qualinfer.hpp"

namespace confir::qualinfer {

using namespace confir::ir;

namespace {

using DefSet = std::vector<VarId>; // sorted, unique
using RegDefs = std::array<DefSet, kNumRegs>;

std::string line_of(int line) { return "line " + std::to_string(line); }

void merge_into(DefSet& dst, const DefSet& src) {
    DefSet out;
    out.reserve(dst.size() + src.size());
    std::set_union(dst.begin(), dst.end(), src.begin(), src.end(), std::back_inserter(out));
    dst = std::move(out);
}

class FunctionGen {
  public:
    FunctionGen(const SourceProgram& sp, const SourceFunction& f, const Options& opts, ConstraintSystem& sys)
        : sp_(sp), f_(f), opts_(opts), sys_(sys) {}

    void run() {
        const std::size_t n = f_.body.size();
        entry_defs();
        stmt_defs_.assign(n, {});
        for (std::size_t i = 0; i < n; ++i) {
            create_defs(i);
        }
        reaching();
        auto& regions = sys_.access_region[f_.name];
        regions.assign(n, std::nullopt);
        for (std::size_t i = 0; i < n; ++i) {
            emit(i, regions[i]);
        }
    }

  private:
    VarId fresh(std::string what) {
        sys_.vars.push_back({f_.name, std::move(what)});
        return static_cast<VarId>(sys_.vars.size() - 1);
    }

    void add(Constraint c) { sys_.constraints.push_back(std::move(c)); }

    void entry_defs() {
        const auto& conv = opts_.convention;
        for (std::uint8_t r = 0; r < kNumRegs; ++r) {
            const Reg reg{r};
            const VarId v = fresh(to_string(reg) + " at entry of " + f_.name);
            entry_[r] = v;
            if (r >= 1 && r <= f_.params.size()) {
                add(Constraint::eq(Term::of(v), Term::of(f_.params[r - 1]),
                                   "parameter " + to_string(reg) + " of " + f_.name + " is " +
                                       std::string(qualifier_name(f_.params[r - 1])),
                                   f_.line));
            } else if (conv.is_callee_save(reg)) {
                add(Constraint::eq(Term::of(v), Term::of(Taint::L),
                                   "callee-save " + to_string(reg) + " is cleared before entering " + f_.name,
                                   f_.line));
            } else {
                add(Constraint::eq(Term::of(v), Term::of(Taint::H),
                                   "dead register " + to_string(reg) + " at entry of " + f_.name + " is private",
                                   f_.line));
            }
        }
    }

    void create_defs(std::size_t i) {
        const auto& s = f_.body[i];
        auto& defs = stmt_defs_[i];
        const auto def = [&](Reg r) {
            defs.emplace_back(r.index, fresh(to_string(r) + " defined at " + line_of(s.line)));
        };
        std::visit(overloaded{
                       [&](const Mov& m) { def(m.dst); },
                       [&](const Ldr& l) { def(l.dst); },
                       [&](const CallU&) { call_defs(i, def); },
                       [&](const CallT&) { call_defs(i, def); },
                       [&](const ICall&) { call_defs(i, def); },
                       [](const auto&) {},
                   },
                   s.cmd);
    }

    template <typename Def> void call_defs(std::size_t, Def&& def) {
        for (std::uint8_t r = 0; r < kNumRegs; ++r) {
            if (opts_.convention.is_caller_save(Reg{r})) {
                def(Reg{r});
            }
        }
    }

    void reaching() {
        const std::size_t n = f_.body.size();
        in_.assign(n, RegDefs{});
        std::vector<std::vector<std::size_t>> succ(n);
        for (std::size_t i = 0; i < n; ++i) {
            succ[i] = source_successors(f_, i);
        }
        std::vector<bool> queued(n, false);
        std::vector<std::size_t> work;
        if (n > 0) {
            for (std::uint8_t r = 0; r < kNumRegs; ++r) {
                in_[0][r] = {entry_[r]};
            }
            work.push_back(0);
            queued[0] = true;
        }
        while (!work.empty()) {
            const std::size_t i = work.back();
            work.pop_back();
            queued[i] = false;
            RegDefs out = in_[i];
            for (const auto& [r, v] : stmt_defs_[i]) {
                out[r] = {v};
            }
            for (const auto s : succ[i]) {
                bool changed = false;
                for (std::size_t r = 0; r < kNumRegs; ++r) {
                    const auto before = in_[s][r].size();
                    merge_into(in_[s][r], out[r]);
                    changed |= in_[s][r].size() != before;
                }
                if (changed && !queued[s]) {
                    queued[s] = true;
                    work.push_back(s);
                }
            }
        }
    }

    DefSet uses(std::size_t i, const Expr& e) const {
        DefSet out;
        const auto mask = e.reg_mask();
        for (std::size_t r = 0; r < kNumRegs; ++r) {
            if (mask & (1u << r)) {
                merge_into(out, in_[i][r]);
            }
        }
        return out;
    }

    VarId def_of(std::size_t i, Reg r) const {
        for (const auto& [reg, v] : stmt_defs_[i]) {
            if (reg == r.index) {
                return v;
            }
        }
        return 0; // unreachable for well-formed calls
    }

    void flow(const DefSet& from, Term to, const std::string& why, int line) {
        for (const VarId d : from) {
            add(Constraint::le(Term::of(d), to, why, line));
        }
    }

    static void collect_globals(const Expr& e, std::vector<std::string>& out) {
        switch (e.kind()) {
        case Expr::Kind::GlobalAddr: out.push_back(e.name()); break;
        case Expr::Kind::Unary: collect_globals(e.operand(), out); break;
        case Expr::Kind::Binary:
            collect_globals(e.lhs(), out);
            collect_globals(e.rhs(), out);
            break;
        default: break;
        }
    }

    VarId region_var(std::size_t i, const Expr& addr, const char* what) {
        const auto& s = f_.body[i];
        std::string key = to_string(addr);
        const auto mask = addr.reg_mask();
        for (std::size_t r = 0; r < kNumRegs; ++r) {
            if (mask & (1u << r)) {
                key += "|" + std::to_string(r) + ":";
                for (const auto d : in_[i][r]) {
                    key += std::to_string(d) + ",";
                }
            }
        }
        auto [it, inserted] = shared_regions_.try_emplace(key, 0);
        if (inserted) {
            it->second = fresh(std::string("region of ") + what + " at " + line_of(s.line));
        }
        const VarId v = it->second;
        std::vector<std::string> globals;
        collect_globals(addr, globals);
        for (const auto& g : globals) {
            const auto* sym = sp_.find_global(g);
            add(Constraint::eq(Term::of(v), Term::of(sym->region),
                               "global " + g + " is " + std::string(qualifier_name(sym->region)), s.line));
        }
        if (s.region) {
            add(Constraint::eq(Term::of(v), Term::of(*s.region),
                               "explicit " + std::string(qualifier_name(*s.region)) + " " + what + " at " +
                                   line_of(s.line),
                               s.line));
        }
        flow(uses(i, addr), Term::of(v), std::string("address of ") + what + " at " + line_of(s.line), s.line);
        return v;
    }

    void call_common(std::size_t i, const std::string& label, const std::vector<Expr>& args,
                     const std::vector<Taint>* params, Term ret) {
        const auto& s = f_.body[i];
        for (std::size_t a = 0; a < args.size(); ++a) {
            const Taint want = (params && a < params->size()) ? (*params)[a] : Taint::H;
            if (want == Taint::L) {
                flow(uses(i, args[a]), Term::of(Taint::L), "argument " + std::to_string(a + 1) + " of " + label,
                     s.line);
            }
        }
        add(Constraint::eq(Term::of(def_of(i, kRetReg)), ret, "return value of " + label, s.line));
        for (const auto& [r, v] : stmt_defs_[i]) {
            if (r != kRetReg.index) {
                add(Constraint::eq(Term::of(v), Term::of(Taint::H),
                                   to_string(Reg{r}) + " clobbered by " + label, s.line));
            }
        }
    }

    void emit(std::size_t i, std::optional<VarId>& region) {
        const auto& s = f_.body[i];
        const std::string at = line_of(s.line);
        std::visit(overloaded{
                       [&](const Mov& m) {
                           flow(uses(i, m.src), Term::of(def_of(i, m.dst)),
                                to_string(m.dst) + " = " + to_string(m.src) + " at " + at, s.line);
                       },
                       [&](const Ldr& l) {
                           const VarId v = region_var(i, l.addr, "load");
                           region = v;
                           add(Constraint::le(Term::of(v), Term::of(def_of(i, l.dst)),
                                              "load into " + to_string(l.dst) + " at " + at, s.line));
                       },
                       [&](const Str& st) {
                           const VarId v = region_var(i, st.addr, "store");
                           region = v;
                           flow(in_[i][st.src.index], Term::of(v),
                                "value " + to_string(st.src) + " stored at " + at, s.line);
                       },
                       [&](const Goto& g) {
                           flow(uses(i, g.target), Term::of(Taint::L), "jump target at " + at, s.line);
                       },
                       [&](const IfThenElse& c) {
                           auto deps = uses(i, c.cond);
                           merge_into(deps, uses(i, c.then_pc));
                           merge_into(deps, uses(i, c.else_pc));
                           if (opts_.strict) {
                               flow(deps, Term::of(Taint::L), "branch condition at " + at, s.line);
                           } else {
                               sys_.implicit_flows.push_back({f_.name, i, s.line, std::move(deps)});
                           }
                       },
                       [&](const Ret&) {
                           flow(in_[i][kRetReg.index], Term::of(f_.ret), "return value of " + f_.name + " at " + at,
                                s.line);
                       },
                       [&](const CallU& c) {
                           const auto* callee = sp_.find(c.callee);
                           call_common(i, "call " + c.callee + " at " + at, c.args, &callee->params,
                                       Term::of(callee->ret));
                       },
                       [&](const CallT& c) {
                           const auto* callee = sp_.find(c.callee);
                           call_common(i, "tcall " + c.callee + " at " + at, c.args, &callee->params,
                                       Term::of(callee->ret));
                       },
                       [&](const ICall& c) {
                           flow(uses(i, c.target), Term::of(Taint::L), "icall target at " + at, s.line);
                           call_common(i, "icall at " + at, c.args, nullptr, Term::of(s.icall_ret));
                       },
                       [](const Assert&) {},
                   },
                   s.cmd);
    }

    const SourceProgram& sp_;
    const SourceFunction& f_;
    const Options& opts_;
    ConstraintSystem& sys_;
    std::array<VarId, kNumRegs> entry_{};
    std::vector<std::vector<std::pair<std::uint8_t, VarId>>> stmt_defs_;
    std::vector<RegDefs> in_;
    std::map<std::string, VarId> shared_regions_;
};

} // namespace

std::string ConstraintSystem::describe(const Term& t) const {
    if (!t.is_var) {
        return std::string(1, to_char(t.label));
    }
    if (t.var < vars.size()) {
        return "[" + vars[t.var].what + "]";
    }
    return "v" + std::to_string(t.var);
}

std::string ConstraintSystem::describe(const Constraint& c) const {
    std::string s = describe(c.lhs) + (c.kind == Constraint::Kind::Le ? " <= " : " == ") + describe(c.rhs);
    if (!c.reason.empty()) {
        s += "  (" + c.reason + ")";
    }
    return s;
}

ConstraintSystem generate_constraints(const SourceProgram& sp, const Options& opts) {
    ConstraintSystem sys;
    for (const auto& f : sp.functions) {
        if (f.trust == Trust::U) {
            FunctionGen(sp, f, opts, sys).run();
        }
    }
    return sys;
}

} // namespace confir::qualinfer
