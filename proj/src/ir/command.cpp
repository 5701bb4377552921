#include "confir/ir/command.hpp"

#include "confir/ir/overloaded.hpp"

#include <string>
#include <type_traits>

namespace confir::ir {

namespace {

std::string args_to_string(const std::vector<Expr>& args) {
    std::string s = "(";
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) {
            s += ", ";
        }
        s += to_string(args[i]);
    }
    return s + ")";
}

} // namespace

bool falls_through(const Command& c) {
    return !std::holds_alternative<Goto>(c) && !std::holds_alternative<IfThenElse>(c) && !std::holds_alternative<Ret>(c);
}

bool is_call(const Command& c) {
    return std::holds_alternative<CallU>(c) || std::holds_alternative<CallT>(c) || std::holds_alternative<ICall>(c);
}

std::uint16_t written_regs(const Command& c) {
    if (const auto* m = std::get_if<Mov>(&c)) {
        return m->dst.bit();
    }
    if (const auto* l = std::get_if<Ldr>(&c)) {
        return l->dst.bit();
    }
    if (is_call(c)) {
        return 0xFFFF;
    }
    return 0;
}

std::string to_string(const AssertPred& p) {
    return std::visit(overloaded{
                          [](const AddrInRegion& a) {
                              return "assert " + to_string(a.addr) + " in " + std::string(qualifier_name(a.region));
                          },
                          [](const MagicCallMatch& m) {
                              return "assert magic_call " + to_string(m.target) + " #" + m.want.str() + "#";
                          },
                          [](const MagicRetMatch& m) {
                              return std::string("assert magic_ret ") + std::string(qualifier_name(m.ret));
                          },
                      },
                      p);
}

std::string to_string(const Command& c) {
    return std::visit(overloaded{
                          [](const Mov& m) { return to_string(m.dst) + " = " + to_string(m.src); },
                          [](const Ldr& l) { return to_string(l.dst) + " = load [" + to_string(l.addr) + "]"; },
                          [](const Str& s) { return "store [" + to_string(s.addr) + "], " + to_string(s.src); },
                          [](const Goto& g) { return "goto " + to_string(g.target); },
                          [](const IfThenElse& i) {
                              return "if " + to_string(i.cond) + " goto " + to_string(i.then_pc) + " else " +
                                     to_string(i.else_pc);
                          },
                          [](const Ret&) { return std::string("ret"); },
                          [](const CallU& k) { return "call " + k.callee + args_to_string(k.args); },
                          [](const CallT& k) { return "tcall " + k.callee + args_to_string(k.args); },
                          [](const ICall& k) { return "icall " + to_string(k.target) + args_to_string(k.args); },
                          [](const Assert& a) { return to_string(a.pred); },
                      },
                      c);
}

} // namespace confir::ir
