#include "confir/machine/machine.hpp"

#include <algorithm>
#include <cstdio>

#include "confir/ir/overloaded.hpp"

namespace confir::machine {

using namespace confir::ir;

void write_cell(Memory& m, std::uint64_t addr, std::uint64_t value) {
    if (value == 0) {
        m.erase(addr);
    } else {
        m[addr] = value;
    }
}

std::uint64_t read_cell(const Memory& m, std::uint64_t addr) {
    const auto it = m.find(addr);
    return it == m.end() ? 0 : it->second;
}

std::string_view to_string(Status s) {
    switch (s) {
    case Status::Final: return "Final";
    case Status::Bottom: return "Bottom";
    case Status::Lightning: return "Lightning";
    case Status::OutOfFuel: return "OutOfFuel";
    }
    return "?";
}

std::uint64_t eval_expr(const std::array<std::uint64_t, kNumRegs>& rho,
                        const std::map<std::string, FuncEntry>& func_table, const Expr& e) {
    switch (e.kind()) {
    case Expr::Kind::Const: return e.value();
    case Expr::Kind::Reg: return rho[e.reg().index];
    case Expr::Kind::Unary: return apply(e.unary_op(), eval_expr(rho, func_table, e.operand()));
    case Expr::Kind::Binary:
        return apply(e.binary_op(), eval_expr(rho, func_table, e.lhs()), eval_expr(rho, func_table, e.rhs()));
    case Expr::Kind::FuncAddr: {
        const auto it = func_table.find(e.name());
        return it == func_table.end() ? 0 : it->second.entry_pc;
    }
    case Expr::Kind::GlobalAddr:
    case Expr::Kind::Label: return 0;
    }
    return 0;
}

Machine::Machine(const Program& p, const TrustedRegistry& trusted) : p_(p), idx_(p), trusted_(trusted) {}

Configuration Machine::initial() const {
    Configuration s;
    const auto it = p_.functions.find(p_.entry);
    s.pc = it == p_.functions.end() ? 0 : it->second.entry_pc;
    return s;
}

bool Machine::eval_assert(const Configuration& s, const AssertPred& pred) const {
    return std::visit(overloaded{
                          [&](const AddrInRegion& a) {
                              return p_.layout.in_region(eval_expr(s.rho, p_.func_table, a.addr), a.region);
                          },
                          [&](const MagicCallMatch& m) {
                              const auto* f = idx_.u_entry(eval_expr(s.rho, p_.func_table, m.target));
                              if (!f) {
                                  return false;
                              }
                              const auto have = f->magic.call_taints();
                              for (std::size_t i = 0; i < kNumArgRegs; ++i) {
                                  if (!leq(m.want.args[i], have.args[i])) {
                                      return false;
                                  }
                              }
                              return have.ret == m.want.ret;
                          },
                          [&](const MagicRetMatch& m) {
                              if (s.sigma_l.empty()) {
                                  return true; // the entry function returns to the host
                              }
                              const auto* site = idx_.find(s.sigma_l.back());
                              return site && site->node->ret_magic && leq(m.ret, site->node->ret_magic->ret_taint());
                          },
                      },
                      pred);
}

StepResult Machine::step(Configuration& s) const {
    const auto* entry = idx_.find(s.pc);
    if (!entry) {
        return StepResult::Lightning;
    }
    const Node& n = *entry->node;
    const auto eval = [&](const Expr& e) { return eval_expr(s.rho, p_.func_table, e); };
    const auto load_args = [&](const std::vector<Expr>& args) {
        std::array<std::uint64_t, kNumArgRegs> v{};
        for (std::size_t i = 0; i < args.size() && i < kNumArgRegs; ++i) {
            v[i] = eval(args[i]);
        }
        for (std::size_t i = 0; i < args.size() && i < kNumArgRegs; ++i) {
            s.rho[arg_reg(i).index] = v[i];
        }
    };
    const auto enter = [&](std::uint64_t target) {
        s.sigma_l.push_back(s.pc + 1);
        s.sigma_h.push_back(0);
        s.pc = target;
    };

    return std::visit(
        overloaded{
            [&](const Mov& m) {
                s.rho[m.dst.index] = eval(m.src);
                ++s.pc;
                return StepResult::Continue;
            },
            [&](const Ldr& l) {
                const auto a = eval(l.addr);
                if (p_.layout.in_region(a, Taint::L)) {
                    s.rho[l.dst.index] = read_cell(s.mu_l, a);
                } else if (p_.layout.in_region(a, Taint::H)) {
                    s.rho[l.dst.index] = read_cell(s.mu_h, a);
                } else {
                    return StepResult::Lightning;
                }
                ++s.pc;
                return StepResult::Continue;
            },
            [&](const Str& st) {
                const auto a = eval(st.addr);
                if (p_.layout.in_region(a, Taint::L)) {
                    write_cell(s.mu_l, a, s.rho[st.src.index]);
                } else if (p_.layout.in_region(a, Taint::H)) {
                    write_cell(s.mu_h, a, s.rho[st.src.index]);
                } else {
                    return StepResult::Lightning;
                }
                ++s.pc;
                return StepResult::Continue;
            },
            [&](const Goto& g) {
                s.pc = eval(g.target);
                return StepResult::Continue;
            },
            [&](const IfThenElse& c) {
                s.pc = eval(c.cond) != 0 ? eval(c.then_pc) : eval(c.else_pc);
                return StepResult::Continue;
            },
            [&](const Ret&) {
                if (s.sigma_l.empty()) {
                    return StepResult::Final;
                }
                const auto a = s.sigma_l.back();
                s.sigma_l.pop_back();
                if (!s.sigma_h.empty()) {
                    s.sigma_h.pop_back();
                }
                if (!idx_.find(a)) {
                    return StepResult::Lightning;
                }
                s.pc = a;
                return StepResult::Continue;
            },
            [&](const CallU& c) {
                const auto it = p_.functions.find(c.callee);
                if (it == p_.functions.end() || it->second.trust != Trust::U) {
                    return StepResult::Lightning;
                }
                load_args(c.args);
                enter(it->second.entry_pc);
                return StepResult::Continue;
            },
            [&](const CallT& c) {
                const auto* impl = trusted_.find(c.callee);
                const auto it = p_.functions.find(c.callee);
                if (!impl || it == p_.functions.end() || it->second.trust != Trust::T) {
                    return StepResult::Lightning;
                }
                load_args(c.args);
                TrustedContext ctx{s, p_};
                (*impl)(ctx);
                s.pc = n.pc + 1;
                return StepResult::Continue;
            },
            [&](const ICall& c) {
                const auto target = eval(c.target);
                if (!idx_.u_entry(target)) {
                    return StepResult::Lightning;
                }
                load_args(c.args);
                enter(target);
                return StepResult::Continue;
            },
            [&](const Assert& a) {
                if (!eval_assert(s, a.pred)) {
                    return StepResult::Bottom;
                }
                ++s.pc;
                return StepResult::Continue;
            },
        },
        n.cmd);
}

RunResult run(const Machine& m, Configuration s0, std::uint64_t fuel) {
    RunResult r;
    r.state = std::move(s0);
    while (r.steps < fuel) {
        const auto res = m.step(r.state);
        ++r.steps;
        switch (res) {
        case StepResult::Continue: continue;
        case StepResult::Final: r.status = Status::Final; return r;
        case StepResult::Bottom: r.status = Status::Bottom; return r;
        case StepResult::Lightning: r.status = Status::Lightning; return r;
        }
    }
    r.status = Status::OutOfFuel;
    return r;
}

std::vector<std::string> observable(const Program& p, const Configuration& s) {
    std::vector<std::string> out;
    const auto line = [&](const std::string& name, std::uint64_t v) { out.push_back(name + "=" + std::to_string(v)); };
    Memory rest = s.mu_l;
    for (const auto& g : p.globals) {
        if (g.region != Taint::L) {
            continue;
        }
        for (std::uint64_t k = 0; k < g.size; ++k) {
            rest.erase(g.address + k);
            line(g.size == 1 ? g.name : g.name + "[" + std::to_string(k) + "]", read_cell(s.mu_l, g.address + k));
        }
    }
    for (const auto& [addr, v] : rest) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "mem[0x%llx]", static_cast<unsigned long long>(addr));
        line(buf, v);
    }
    const PcIndex idx(p);
    const auto* e = idx.find(s.pc);
    for (std::uint8_t r = 0; r < kNumRegs; ++r) {
        if (e && e->node->gamma_in[Reg{r}] == Taint::L) {
            line(to_string(Reg{r}), s.rho[r]);
        }
    }
    return out;
}

} // namespace confir::machine
