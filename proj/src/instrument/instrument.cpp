#include "confir/instrument/instrument.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "confir/ir/overloaded.hpp"

namespace confir::instrument {

using namespace confir::ir;

InstrumentError::InstrumentError(std::string function, int line, const std::string& reason)
    : std::runtime_error(function + ": line " + std::to_string(line) + ": " + reason), function_(std::move(function)),
      line_(line) {}

namespace {

constexpr std::uint64_t kFirstPc = 0x100;

using LabelMap = std::function<std::uint64_t(const std::string&)>;

struct GlobalTable {
    std::map<std::string, std::uint64_t> address;
    std::vector<GlobalSym> syms;
    std::uint64_t used[2] = {0, 0};

    std::uint64_t add(const MemoryLayout& l, const std::string& name, Taint region, std::uint64_t size) {
        auto& off = used[static_cast<int>(region)];
        if (size > l.region_size(region) || off > l.region_size(region) - size) {
            throw ConfigError("global " + name + " does not fit in the " + std::string(qualifier_name(region)) +
                              " region");
        }
        const std::uint64_t addr = l.region_base(region) + off;
        off += size;
        address[name] = addr;
        syms.push_back({name, region, addr, size});
        return addr;
    }
};

Expr lower(const Expr& e, const std::map<std::string, std::uint64_t>& globals, const LabelMap& label_pc) {
    switch (e.kind()) {
    case Expr::Kind::GlobalAddr: return Expr::constant(globals.at(e.name()));
    case Expr::Kind::Label: return Expr::constant(label_pc(e.name()));
    case Expr::Kind::Unary: return Expr::unary(e.unary_op(), lower(e.operand(), globals, label_pc));
    case Expr::Kind::Binary:
        return Expr::binary(e.binary_op(), lower(e.lhs(), globals, label_pc), lower(e.rhs(), globals, label_pc));
    default: return e;
    }
}

std::vector<Expr> lower_all(const std::vector<Expr>& es, const std::map<std::string, std::uint64_t>& globals,
                            const LabelMap& label_pc) {
    std::vector<Expr> out;
    out.reserve(es.size());
    for (const auto& e : es) {
        out.push_back(lower(e, globals, label_pc));
    }
    return out;
}

bool has_label(const Expr& e) {
    switch (e.kind()) {
    case Expr::Kind::Label: return true;
    case Expr::Kind::Unary: return has_label(e.operand());
    case Expr::Kind::Binary: return has_label(e.lhs()) || has_label(e.rhs());
    default: return false;
    }
}

bool command_has_label_value(const Command& c) {
    return std::visit(overloaded{
                          [](const Mov& m) { return has_label(m.src); },
                          [](const Ldr& l) { return has_label(l.addr); },
                          [](const Str& s) { return has_label(s.addr); },
                          [](const IfThenElse& i) { return has_label(i.cond); },
                          [](const CallU& k) { return std::ranges::any_of(k.args, has_label); },
                          [](const CallT& k) { return std::ranges::any_of(k.args, has_label); },
                          [](const ICall& k) { return has_label(k.target) || std::ranges::any_of(k.args, has_label); },
                          [](const auto&) { return false; },
                      },
                      c);
}

std::uint16_t args_mask(const std::vector<Expr>& args) {
    std::uint16_t m = 0;
    for (const auto& a : args) {
        m = static_cast<std::uint16_t>(m | a.reg_mask());
    }
    return m;
}

class Lowering {
  public:
    Lowering(const SourceProgram& sp, const qualinfer::Inference& inf, const MemoryLayout& layout,
             const RegisterConvention& conv)
        : sp_(sp), inf_(inf), layout_(layout), conv_(conv) {}

    Program run(std::uint64_t seed) {
        for (const auto& f : sp_.functions) {
            if (f.trust == Trust::U) {
                check_input(f);
            }
        }
        for (const auto& g : sp_.globals) {
            globals_.add(layout_, g.name, g.region, g.size);
        }
        std::map<std::string, std::vector<Node>> pre;
        for (const auto& f : sp_.functions) {
            if (f.trust == Trust::U) {
                pre[f.name] = source_taints(f);
            }
        }
        // Spill slots: per-function statics, so recursive activations share
        // them (restored values may then be stale, never mis-tainted).
        for (const auto& f : sp_.functions) {
            if (f.trust != Trust::U) {
                continue;
            }
            std::uint16_t spill = 0;
            for (std::size_t i = 0; i < f.body.size(); ++i) {
                if (is_call(f.body[i].cmd)) {
                    spill |= pre[f.name][i].gamma_in.mask() & conv_.callee_save_mask;
                }
            }
            for (std::uint8_t r = 0; r < kNumRegs; ++r) {
                if (spill & (1u << r)) {
                    spill_addr_[{f.name, r}] =
                        globals_.add(layout_, "__spill." + f.name + ".r" + std::to_string(r), Taint::H, 1);
                }
            }
        }

        Program p;
        p.convention = conv_;
        p.layout = layout_;
        p.entry = sp_.entry;
        std::uint64_t pc = kFirstPc;
        for (const auto& f : sp_.functions) {
            FuncInfo fi;
            fi.name = f.name;
            fi.trust = f.trust;
            fi.entry_pc = pc;
            fi.magic = MagicSeq::call(0, f.signature());
            if (f.trust == Trust::T) {
                ++pc;
            } else {
                fi.body = emit_function(f, pre[f.name], pc);
                pc = fi.body.back().pc + 1;
            }
            p.func_table[f.name] = FuncEntry{fi.entry_pc, fi.magic};
            p.functions[f.name] = std::move(fi);
        }
        for (auto& [name, fi] : p.functions) {
            if (fi.trust == Trust::U) {
                finish_function(p, fi);
            }
        }
        p.globals = globals_.syms;
        std::sort(p.globals.begin(), p.globals.end(),
                  [](const GlobalSym& a, const GlobalSym& b) { return a.address < b.address; });
        p.validate();
        apply_prefixes(p, assign_magic_prefixes(p, seed));
        return p;
    }

  private:
    [[noreturn]] void fail(const SourceFunction& f, std::size_t i, const std::string& why) const {
        throw InstrumentError(f.name, i < f.body.size() ? f.body[i].line : f.line, why);
    }

    void check_input(const SourceFunction& f) const {
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            const auto& cmd = f.body[i].cmd;
            if (std::holds_alternative<Assert>(cmd)) {
                fail(f, i, "input already contains asserts; refusing to instrument twice");
            }
            if (command_has_label_value(cmd)) {
                fail(f, i, "labels may only appear as jump targets");
            }
            if (falls_through(cmd) && i + 1 == f.body.size()) {
                fail(f, i, "control falls off the end of " + f.name);
            }
            const auto check_target = [&](const Expr& t) {
                if (!resolve_target(f, t)) {
                    fail(f, i, "jump target " + to_string(t) + " is not a label or statement index");
                }
            };
            if (const auto* g = std::get_if<Goto>(&cmd)) {
                check_target(g->target);
            } else if (const auto* c = std::get_if<IfThenElse>(&cmd)) {
                check_target(c->then_pc);
                check_target(c->else_pc);
            }
        }
    }

    LabelMap stmt_labels(const SourceFunction& f) const {
        return [&f](const std::string& l) -> std::uint64_t { return f.labels.at(l); };
    }

    Taint callee_ret(const std::string& name) const { return sp_.find(name)->ret; }

    /// Γ over the source statements, used to decide what to clear and spill.
    std::vector<Node> source_taints(const SourceFunction& f) const {
        std::vector<Node> nodes;
        const auto labels = stmt_labels(f);
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            Node n;
            n.pc = i;
            n.cmd = std::visit(overloaded{
                                   [&](const Goto& g) -> Command {
                                       return Goto{Expr::constant(*resolve_target(f, g.target))};
                                   },
                                   [&](const IfThenElse& c) -> Command {
                                       return IfThenElse{lower(c.cond, globals_.address, labels),
                                                         Expr::constant(*resolve_target(f, c.then_pc)),
                                                         Expr::constant(*resolve_target(f, c.else_pc))};
                                   },
                                   [](const auto& other) -> Command { return other; },
                               },
                               f.body[i].cmd);
            nodes.push_back(std::move(n));
        }
        qualinfer::TaintOracle oracle;
        oracle.convention = conv_;
        oracle.preserved_across_calls = conv_.callee_save_mask;
        oracle.load_region = [&](const Node& n) { return inf_.access_region(f.name, n.pc); };
        oracle.call_ret = [&](const Node& n) {
            if (const auto* c = std::get_if<CallU>(&n.cmd)) {
                return callee_ret(c->callee);
            }
            if (const auto* c = std::get_if<CallT>(&n.cmd)) {
                return callee_ret(c->callee);
            }
            return f.body[n.pc].icall_ret;
        };
        qualinfer::compute_node_taints(nodes, qualinfer::entry_env(f.signature(), conv_), oracle);
        return nodes;
    }

    struct Emitter {
        std::vector<Node> nodes;
        std::uint64_t pc;
        std::optional<MagicSeq> pending_ret;

        std::size_t emit(Command c) {
            Node n;
            n.pc = pc++;
            n.cmd = std::move(c);
            n.ret_magic = std::exchange(pending_ret, std::nullopt);
            nodes.push_back(std::move(n));
            return nodes.size() - 1;
        }
    };

    std::vector<Node> emit_function(const SourceFunction& f, const std::vector<Node>& pre, std::uint64_t first_pc) {
        Emitter em{{}, first_pc, std::nullopt};
        // Keep the entry node free of incoming jumps so its Γ is exactly the
        // signature's.
        bool entry_targeted = false;
        for (const auto& n : pre) {
            const auto succ = command_successors(n);
            entry_targeted |= std::find(succ.begin(), succ.end(), 0) != succ.end();
        }
        if (entry_targeted) {
            em.emit(Goto{Expr::constant(em.pc + 1)});
        }

        std::vector<std::uint64_t> stmt_pc(f.body.size());
        struct Patch {
            std::size_t node;
            std::size_t stmt;
            int which; // 0 goto, 1 then, 2 else
        };
        std::vector<Patch> patches;
        const auto labels = stmt_labels(f);
        const auto& G = globals_.address;

        // Region checks already in force within the current basic block. A
        // repeated access to the same address reuses the earlier check.
        std::vector<bool> block_start(f.body.size(), false);
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            const auto& cmd = f.body[i].cmd;
            if (std::holds_alternative<Goto>(cmd) || std::holds_alternative<IfThenElse>(cmd)) {
                for (const auto s : source_successors(f, i)) {
                    block_start[s] = true;
                }
            }
        }
        std::vector<AddrInRegion> checked;
        const auto forget = [&](std::uint16_t written) {
            std::erase_if(checked, [&](const AddrInRegion& a) { return (a.addr.reg_mask() & written) != 0; });
        };
        const auto guard = [&](const Expr& a, Taint region) {
            for (const auto& c : checked) {
                if (c.region == region && c.addr == a) {
                    return;
                }
            }
            em.emit(Assert{AddrInRegion{a, region}});
            checked.push_back({a, region});
        };

        for (std::size_t i = 0; i < f.body.size(); ++i) {
            stmt_pc[i] = em.pc;
            const TaintEnv gamma = pre[i].gamma_in;
            const auto& cmd = f.body[i].cmd;
            if (block_start[i] || !falls_through(cmd) || is_call(cmd)) {
                checked.clear();
            }
            std::visit(overloaded{
                           [&](const Mov& m) {
                               em.emit(Mov{m.dst, lower(m.src, G, labels)});
                               forget(m.dst.bit());
                           },
                           [&](const Ldr& l) {
                               const Taint region = inf_.access_region(f.name, i);
                               auto a = lower(l.addr, G, labels);
                               guard(a, region);
                               load_region_[em.pc] = region;
                               em.emit(Ldr{l.dst, std::move(a)});
                               forget(l.dst.bit());
                           },
                           [&](const Str& s) {
                               const Taint region = inf_.access_region(f.name, i);
                               guard(lower(s.addr, G, labels), region);
                               em.emit(Str{s.src, lower(s.addr, G, labels)});
                           },
                           [&](const Goto&) {
                               patches.push_back({em.emit(Goto{Expr()}), i, 0});
                           },
                           [&](const IfThenElse& c) {
                               const auto k = em.emit(IfThenElse{lower(c.cond, G, labels), Expr(), Expr()});
                               patches.push_back({k, i, 1});
                               patches.push_back({k, i, 2});
                           },
                           [&](const Ret&) {
                               for (std::uint8_t r = 0; r < kNumRegs; ++r) {
                                   if (conv_.is_callee_save(Reg{r}) && gamma[Reg{r}] == Taint::H) {
                                       em.emit(Mov{Reg{r}, Expr::constant(0)});
                                   }
                               }
                               em.emit(Assert{MagicRetMatch{f.ret}});
                               em.emit(Ret{});
                           },
                           [&](const CallU& c) { emit_call(f, i, gamma, em, c.callee, c.args, nullptr); },
                           [&](const CallT& c) { emit_call(f, i, gamma, em, c.callee, c.args, nullptr); },
                           [&](const ICall& c) { emit_call(f, i, gamma, em, {}, c.args, &c.target); },
                           [&](const Assert&) {},
                       },
                       cmd);
            if (!falls_through(cmd) || is_call(cmd)) {
                checked.clear();
            }
        }
        if (em.pending_ret) {
            fail(f, f.body.size() - 1, "call has no return site");
        }
        for (const auto& [k, i, which] : patches) {
            const auto pc_of = [&](const Expr& t) { return Expr::constant(stmt_pc[*resolve_target(f, t)]); };
            auto& cmd = em.nodes[k].cmd;
            const auto& src = f.body[i].cmd;
            if (which == 0) {
                std::get<Goto>(cmd).target = pc_of(std::get<Goto>(src).target);
            } else if (which == 1) {
                std::get<IfThenElse>(cmd).then_pc = pc_of(std::get<IfThenElse>(src).then_pc);
            } else {
                std::get<IfThenElse>(cmd).else_pc = pc_of(std::get<IfThenElse>(src).else_pc);
            }
        }
        return std::move(em.nodes);
    }

    void emit_call(const SourceFunction& f, std::size_t i, const TaintEnv& gamma, Emitter& em,
                   const std::string& callee, const std::vector<Expr>& src_args, const Expr* icall_target) {
        const auto labels = stmt_labels(f);
        const auto& G = globals_.address;
        auto args = lower_all(src_args, G, labels);
        const std::uint16_t used = args_mask(args);
        const std::uint16_t high_callee = gamma.mask() & conv_.callee_save_mask;
        if (used & high_callee) {
            fail(f, i, "call argument reads a private callee-save register, which is cleared before the call");
        }
        std::optional<Expr> target;
        if (icall_target) {
            target = lower(*icall_target, G, labels);
            if (target->reg_mask() & high_callee) {
                fail(f, i, "icall target reads a private callee-save register");
            }
        }

        TaintEnv cleared = gamma;
        std::vector<std::uint8_t> spilled;
        for (std::uint8_t r = 0; r < kNumRegs; ++r) {
            if (high_callee & (1u << r)) {
                const auto slot = Expr::constant(spill_addr_.at({f.name, r}));
                em.emit(Assert{AddrInRegion{slot, Taint::H}});
                em.emit(Str{Reg{r}, slot});
                em.emit(Mov{Reg{r}, Expr::constant(0)});
                cleared.set(Reg{r}, Taint::L);
                spilled.push_back(r);
            }
        }
        for (std::uint8_t r = 0; r < kNumRegs; ++r) {
            const Reg reg{r};
            if (conv_.is_caller_save(reg) && gamma[reg] == Taint::H && !(used & reg.bit())) {
                em.emit(Mov{reg, Expr::constant(0)});
                cleared.set(reg, Taint::L);
            }
        }

        // Taints the callee sees in r1..r4: argument expressions, or the
        // register's own taint where no argument is passed.
        TaintVec5 actual;
        for (std::size_t a = 0; a < kNumArgRegs; ++a) {
            actual.args[a] = a < args.size() ? cleared.join_over(args[a].reg_mask()) : cleared[arg_reg(a)];
        }

        const auto& cmd = f.body[i].cmd;
        if (icall_target) {
            actual.ret = f.body[i].icall_ret;
            em.emit(Assert{MagicCallMatch{*target, actual}});
            em.emit(ICall{*target, std::move(args)});
            em.pending_ret = MagicSeq::ret(0, actual.ret);
        } else {
            const auto* cf = sp_.find(callee);
            const TaintVec5 sig = cf->signature();
            for (std::size_t a = 0; a < kNumArgRegs; ++a) {
                if (!leq(actual.args[a], sig.args[a])) {
                    fail(f, i,
                         "argument " + std::to_string(a + 1) + " of " + callee + " is private but the callee expects " +
                             "public (entry magic #" + sig.str() + "#)");
                }
            }
            if (std::holds_alternative<CallU>(cmd)) {
                em.emit(CallU{callee, std::move(args)});
                em.pending_ret = MagicSeq::ret(0, sig.ret);
            } else {
                em.emit(CallT{callee, std::move(args)});
            }
        }

        for (const auto r : spilled) {
            const auto slot = Expr::constant(spill_addr_.at({f.name, r}));
            em.emit(Assert{AddrInRegion{slot, Taint::H}});
            load_region_[em.pc] = Taint::H;
            em.emit(Ldr{Reg{r}, slot});
        }
    }

    void finish_function(const Program& p, FuncInfo& fi) {
        for (const auto& n : fi.body) {
            for (const auto s : command_successors(n)) {
                fi.edges.emplace_back(n.pc, s);
            }
        }
        std::sort(fi.edges.begin(), fi.edges.end());
        fi.edges.erase(std::unique(fi.edges.begin(), fi.edges.end()), fi.edges.end());

        qualinfer::TaintOracle oracle;
        oracle.convention = conv_;
        oracle.load_region = [&](const Node& n) { return load_region_.at(n.pc); };
        oracle.call_ret = [&](const Node& n) {
            if (const auto* c = std::get_if<CallU>(&n.cmd)) {
                return p.functions.at(c->callee).magic.call_taints().ret;
            }
            if (const auto* c = std::get_if<CallT>(&n.cmd)) {
                return p.functions.at(c->callee).magic.call_taints().ret;
            }
            const auto it = std::ranges::lower_bound(fi.body, n.pc + 1, {}, &Node::pc);
            return it->ret_magic->ret_taint();
        };
        qualinfer::compute_node_taints(fi.body, qualinfer::entry_env(fi.magic.call_taints(), conv_), oracle);
    }

    const SourceProgram& sp_;
    const qualinfer::Inference& inf_;
    MemoryLayout layout_;
    RegisterConvention conv_;
    GlobalTable globals_;
    std::map<std::pair<std::string, std::uint8_t>, std::uint64_t> spill_addr_;
    std::map<std::uint64_t, Taint> load_region_;
};

} // namespace

Program instrument_program(const SourceProgram& sp, const qualinfer::Inference& inf, const MemoryLayout& layout,
                           std::uint64_t seed, const RegisterConvention& conv) {
    return Lowering(sp, inf, layout, conv).run(seed);
}

std::variant<Compiled, Rejected> compile(const SourceProgram& sp, const CompileOptions& opts) {
    auto result = qualinfer::infer(sp, opts.infer);
    if (auto* err = std::get_if<qualinfer::TypeError>(&result)) {
        // Regenerate the system to render variable names in the witness.
        const auto sys = qualinfer::generate_constraints(sp, opts.infer);
        auto msg = qualinfer::format_type_error(*err, sys);
        return Rejected{std::move(*err), std::move(msg)};
    }
    auto& inf = std::get<qualinfer::Inference>(result);
    Compiled c{instrument_program(sp, inf, opts.layout, opts.seed, opts.infer.convention), inf.warnings};
    return c;
}

} // namespace confir::instrument
