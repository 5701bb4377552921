#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "confir/confverify/verify.hpp"

namespace confir::verify::detail {

/// Per-function lookup tables with edges derived from the commands.
class FunctionView {
  public:
    explicit FunctionView(const ir::FuncInfo& f);

    const ir::FuncInfo& func() const { return f_; }
    const ir::Node* node(std::uint64_t pc) const;
    std::size_t index(std::uint64_t pc) const; // npos when absent
    const std::vector<std::size_t>& preds(std::size_t i) const { return preds_[i]; }
    const std::vector<std::size_t>& succs(std::size_t i) const { return succs_[i]; }

    /// Nearest assert in the same basic block satisfying `match`, scanning
    /// backward from node i. Stops at joins, control transfers, calls, the
    /// function entry, or a write to any register in `regs`.
    template <typename Match>
    const ir::AssertPred* find_assert(std::size_t i, std::uint16_t regs, Match&& match) const {
        std::size_t cur = i;
        for (;;) {
            if (f_.body[cur].pc == f_.entry_pc || preds_[cur].size() != 1) {
                return nullptr;
            }
            const auto p = preds_[cur].front();
            const auto& cmd = f_.body[p].cmd;
            if (!ir::falls_through(cmd) || ir::is_call(cmd) || f_.body[p].pc + 1 != f_.body[cur].pc) {
                return nullptr;
            }
            if (const auto* a = std::get_if<ir::Assert>(&cmd); a && match(a->pred)) {
                return &a->pred;
            }
            if (ir::written_regs(cmd) & regs) {
                return nullptr;
            }
            cur = p;
        }
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  private:
    const ir::FuncInfo& f_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
    std::vector<std::vector<std::size_t>> preds_;
    std::vector<std::vector<std::size_t>> succs_;
};

/// Taint of an expression under Γ.
inline ir::Taint taint_of(const ir::TaintEnv& g, const ir::Expr& e) { return g.join_over(e.reg_mask()); }

/// Γ′ after a call returning `ret` into r0.
ir::TaintEnv after_call(const ir::Program& p, ir::Taint ret);

/// Region asserted for the load at node i, if the check is present.
std::optional<ir::Taint> asserted_region(const FunctionView& fv, std::size_t i, const ir::Expr& addr);

/// r0 taint after the call at node i, read from magic metadata.
std::optional<ir::Taint> call_ret_taint(const ir::Program& p, const FunctionView& fv, std::size_t i);

std::vector<Diagnostic> check_node_in(const ir::Program& p, const FunctionView& fv, std::size_t i,
                                      const VerifyOptions& opts);

} // namespace confir::verify::detail
