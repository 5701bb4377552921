#include <algorithm>
#include <deque>
#include <string>
#include <vector>

#include "confir/qualinfer/qualinfer.hpp"

namespace confir::qualinfer {

namespace {

// Graph nodes: variables 0..n-1, then the two constants.
struct Graph {
    std::size_t n;
    std::size_t high() const { return n; }
    std::size_t low() const { return n + 1; }
    std::size_t node(const Term& t) const {
        if (t.is_var) {
            return t.var;
        }
        return t.label == Taint::H ? high() : low();
    }
    // adjacency: (target, constraint index)
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj;
};

} // namespace

std::variant<Assignment, TypeError> solve_constraints(const std::vector<Constraint>& constraints,
                                                      std::size_t num_vars) {
    Graph g{num_vars, {}};
    g.adj.resize(num_vars + 2);
    for (std::size_t i = 0; i < constraints.size(); ++i) {
        const auto& c = constraints[i];
        if ((c.lhs.is_var && c.lhs.var >= num_vars) || (c.rhs.is_var && c.rhs.var >= num_vars)) {
            throw std::out_of_range("constraint mentions an unknown variable");
        }
        const auto a = g.node(c.lhs);
        const auto b = g.node(c.rhs);
        g.adj[a].emplace_back(b, i);
        if (c.kind == Constraint::Kind::Eq) {
            g.adj[b].emplace_back(a, i);
        }
    }

    // BFS from H: everything reached must be H in any solution, and the
    // least solution sets exactly those variables to H.
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> via(num_vars + 2, kNone);
    std::vector<std::size_t> parent(num_vars + 2, kNone);
    std::vector<bool> seen(num_vars + 2, false);
    std::deque<std::size_t> queue{g.high()};
    seen[g.high()] = true;
    while (!queue.empty()) {
        const auto u = queue.front();
        queue.pop_front();
        if (u == g.low()) {
            TypeError err;
            for (auto v = u; v != g.high(); v = parent[v]) {
                err.witness.push_back(constraints[via[v]]);
            }
            std::reverse(err.witness.begin(), err.witness.end());
            return err;
        }
        for (const auto& [v, ci] : g.adj[u]) {
            if (!seen[v]) {
                seen[v] = true;
                parent[v] = u;
                via[v] = ci;
                queue.push_back(v);
            }
        }
    }

    Assignment a(num_vars, Taint::L);
    for (std::size_t v = 0; v < num_vars; ++v) {
        if (seen[v]) {
            a[v] = Taint::H;
        }
    }
    return a;
}

std::string format_type_error(const TypeError& e, const ConstraintSystem& sys) {
    std::string s = "private data reaches a public sink:\n";
    for (const auto& c : e.witness) {
        s += "  " + sys.describe(c) + "\n";
    }
    return s;
}

Taint Inference::access_region(const std::string& function, std::size_t stmt) const {
    const auto it = system.access_region.find(function);
    if (it == system.access_region.end() || stmt >= it->second.size() || !it->second[stmt]) {
        throw std::out_of_range("no memory access at " + function + ":" + std::to_string(stmt));
    }
    return solution[*it->second[stmt]];
}

std::variant<Inference, TypeError> infer(const ir::SourceProgram& sp, const Options& opts) {
    Inference inf;
    inf.system = generate_constraints(sp, opts);
    auto solved = solve_constraints(inf.system.constraints, inf.system.vars.size());
    if (auto* err = std::get_if<TypeError>(&solved)) {
        return std::move(*err);
    }
    inf.solution = std::move(std::get<Assignment>(solved));
    for (const auto& b : inf.system.implicit_flows) {
        const bool high = std::any_of(b.deps.begin(), b.deps.end(),
                                      [&](VarId v) { return inf.solution[v] == Taint::H; });
        if (high) {
            inf.warnings.push_back(b.function + ": line " + std::to_string(b.line) + ": branch on private data");
        }
    }
    return inf;
}

} // namespace confir::qualinfer
