#include <algorithm>
#include <vector>

#include "confir/ir/overloaded.hpp"
#include "confir/qualinfer/qualinfer.hpp"

namespace confir::qualinfer {

using namespace confir::ir;

TaintEnv entry_env(const TaintVec5& sig, const RegisterConvention& conv) {
    auto env = TaintEnv::all(Taint::H);
    env.lower(conv.callee_save_mask);
    for (std::size_t i = 0; i < kNumArgRegs; ++i) {
        env.set(arg_reg(i), sig.args[i]);
    }
    return env;
}

TaintEnv transfer(const Node& n, const TaintEnv& in, const TaintOracle& oracle) {
    const auto after_call = [&] {
        auto out = TaintEnv::from_mask(static_cast<std::uint16_t>(oracle.convention.caller_save_mask() |
                                                                  (in.mask() & oracle.preserved_across_calls)));
        out.lower(static_cast<std::uint16_t>(oracle.convention.callee_save_mask & ~oracle.preserved_across_calls));
        out.set(kRetReg, oracle.call_ret(n));
        return out;
    };
    return std::visit(overloaded{
                          [&](const Mov& m) { return in.with(m.dst, in.join_over(m.src.reg_mask())); },
                          [&](const Ldr& l) { return in.with(l.dst, oracle.load_region(n)); },
                          [&](const CallU&) { return after_call(); },
                          [&](const CallT&) { return after_call(); },
                          [&](const ICall&) { return after_call(); },
                          [&](const auto&) { return in; },
                      },
                      n.cmd);
}

void compute_node_taints(std::vector<Node>& body, const TaintEnv& entry, const TaintOracle& oracle) {
    const std::size_t n = body.size();
    if (n == 0) {
        return;
    }
    const auto index_of = [&](std::uint64_t pc) -> std::size_t {
        const auto it = std::ranges::lower_bound(body, pc, {}, &Node::pc);
        return (it != body.end() && it->pc == pc) ? static_cast<std::size_t>(it - body.begin()) : n;
    };
    std::vector<std::vector<std::size_t>> succ(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto pc : command_successors(body[i])) {
            if (const auto s = index_of(pc); s < n) {
                succ[i].push_back(s);
            }
        }
    }

    std::vector<TaintEnv> in(n, TaintEnv::all(Taint::L));
    in[0] = entry;
    // Every node starts on the worklist so unreachable code still feeds its
    // successors; the verifier recomputes the same fixpoint.
    std::vector<std::size_t> work(n);
    std::vector<bool> queued(n, true);
    for (std::size_t i = 0; i < n; ++i) {
        work[i] = n - 1 - i;
    }
    while (!work.empty()) {
        const auto i = work.back();
        work.pop_back();
        queued[i] = false;
        const auto out = transfer(body[i], in[i], oracle);
        for (const auto s : succ[i]) {
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
    for (std::size_t i = 0; i < n; ++i) {
        body[i].gamma_in = in[i];
        body[i].gamma_out = transfer(body[i], in[i], oracle);
    }
}

} // namespace confir::qualinfer
