#include "confir/ir/program.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <string>
#include <unordered_set>

namespace confir::ir {

std::string MagicSeq::str() const {
    if (kind == MagicKind::CallSite) {
        return "#M_call#" + call_taints().str() + "#";
    }
    std::string bits(5, '0');
    for (int i = 0; i < 5; ++i) {
        if ((suffix >> (4 - i)) & 1u) {
            bits[static_cast<std::size_t>(i)] = '1';
        }
    }
    return "#M_ret#" + bits + "#";
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw InvariantViolation(msg); }

void check_call_arity(const FuncInfo& f, const Node& n) {
    std::size_t arity = 0;
    if (const auto* c = std::get_if<CallU>(&n.cmd)) {
        arity = c->args.size();
    } else if (const auto* t = std::get_if<CallT>(&n.cmd)) {
        arity = t->args.size();
    } else if (const auto* i = std::get_if<ICall>(&n.cmd)) {
        arity = i->args.size();
    }
    if (arity > kMaxCallArgs) {
        fail("function " + f.name + ": call at pc " + std::to_string(n.pc) + " passes more than 4 arguments");
    }
}

} // namespace

void Program::validate() const {
    std::unordered_set<std::uint64_t> pcs;
    for (const auto& [name, f] : functions) {
        if (name != f.name) {
            fail("function key '" + name + "' does not match its name '" + f.name + "'");
        }
        if (f.magic.kind != MagicKind::CallSite) {
            fail("function " + name + ": entry magic is not call-form");
        }
        if (f.trust == Trust::T) {
            if (!f.body.empty() || !f.edges.empty()) {
                fail("trusted function " + name + " carries a body");
            }
            if (!pcs.insert(f.entry_pc).second) {
                fail("duplicate pc " + std::to_string(f.entry_pc));
            }
            continue;
        }
        if (f.body.empty()) {
            fail("untrusted function " + name + " has no body");
        }
        if (f.entry_pc != f.body.front().pc) {
            fail("function " + name + ": entry pc is not its first node");
        }
        std::uint64_t prev = 0;
        bool first = true;
        for (const auto& n : f.body) {
            if (!first && n.pc <= prev) {
                fail("function " + name + ": nodes not sorted by pc at " + std::to_string(n.pc));
            }
            first = false;
            prev = n.pc;
            if (!pcs.insert(n.pc).second) {
                fail("duplicate pc " + std::to_string(n.pc));
            }
            if (n.ret_magic && n.ret_magic->kind != MagicKind::RetSite) {
                fail("node " + std::to_string(n.pc) + ": return-site magic is not ret-form");
            }
            check_call_arity(f, n);
        }
        if (!std::is_sorted(f.edges.begin(), f.edges.end()) ||
            std::adjacent_find(f.edges.begin(), f.edges.end()) != f.edges.end()) {
            fail("function " + name + ": edges not sorted and unique");
        }
        const auto owns = [&](std::uint64_t pc) { return std::ranges::binary_search(f.body, pc, {}, &Node::pc); };
        for (const auto& [from, to] : f.edges) {
            if (!owns(from) || !owns(to)) {
                fail("function " + name + ": edge " + std::to_string(from) + "->" + std::to_string(to) +
                     " leaves the function");
            }
        }
    }
    if (func_table.size() != functions.size()) {
        fail("function table size disagrees with functions");
    }
    for (const auto& [name, f] : functions) {
        const auto it = func_table.find(name);
        if (it == func_table.end()) {
            fail("function table lacks " + name);
        }
        if (it->second.entry_pc != f.entry_pc || it->second.magic != f.magic) {
            fail("function table entry for " + name + " disagrees with the function");
        }
    }
    const auto e = functions.find(entry);
    if (e == functions.end()) {
        fail("entry function '" + entry + "' not found");
    }
    if (e->second.trust != Trust::U) {
        fail("entry function '" + entry + "' is trusted");
    }
    std::set<std::string> names;
    for (const auto& g : globals) {
        if (!names.insert(g.name).second) {
            fail("duplicate global " + g.name);
        }
    }
}

PcIndex::PcIndex(const Program& p) {
    for (const auto& [name, f] : p.functions) {
        entries_.emplace(f.entry_pc, &f);
        for (const auto& n : f.body) {
            nodes_.emplace(n.pc, Entry{&f, &n});
        }
    }
}

const PcIndex::Entry* PcIndex::find(std::uint64_t pc) const {
    const auto it = nodes_.find(pc);
    return it == nodes_.end() ? nullptr : &it->second;
}

const FuncInfo* PcIndex::u_entry(std::uint64_t pc) const {
    const auto* f = any_entry(pc);
    return (f && f->trust == Trust::U) ? f : nullptr;
}

const FuncInfo* PcIndex::any_entry(std::uint64_t pc) const {
    const auto it = entries_.find(pc);
    return it == entries_.end() ? nullptr : it->second;
}

std::vector<std::uint64_t> command_successors(const Node& n) {
    std::vector<std::uint64_t> out;
    if (const auto* g = std::get_if<Goto>(&n.cmd)) {
        if (g->target.is_const()) {
            out.push_back(g->target.value());
        }
    } else if (const auto* i = std::get_if<IfThenElse>(&n.cmd)) {
        if (i->then_pc.is_const()) {
            out.push_back(i->then_pc.value());
        }
        if (i->else_pc.is_const()) {
            out.push_back(i->else_pc.value());
        }
    } else if (falls_through(n.cmd)) {
        out.push_back(n.pc + 1);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string listing(const Program& p) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "; M_call prefix 0x%015llx, M_ret prefix 0x%015llx, entry %s\n",
                  static_cast<unsigned long long>(p.m_call_prefix), static_cast<unsigned long long>(p.m_ret_prefix),
                  p.entry.c_str());
    out += buf;
    for (const auto& g : p.globals) {
        std::snprintf(buf, sizeof buf, "; global %s %s @0x%llx size %llu\n", g.name.c_str(),
                      std::string(qualifier_name(g.region)).c_str(), static_cast<unsigned long long>(g.address),
                      static_cast<unsigned long long>(g.size));
        out += buf;
    }
    std::vector<const FuncInfo*> order;
    for (const auto& [_, f] : p.functions) {
        order.push_back(&f);
    }
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->entry_pc < b->entry_pc; });
    for (const auto* f : order) {
        out += f->magic.str() + "\n";
        out += f->name + (f->trust == Trust::T ? ": ; trusted, entry " : ": ; entry ") + std::to_string(f->entry_pc) +
               "\n";
        for (const auto& n : f->body) {
            if (n.ret_magic) {
                out += "  " + n.ret_magic->str() + "\n";
            }
            std::snprintf(buf, sizeof buf, "  %6llu  %s  ", static_cast<unsigned long long>(n.pc),
                          to_string(n.gamma_in).c_str());
            out += buf + to_string(n.cmd) + "\n";
        }
    }
    return out;
}

} // namespace confir::ir
