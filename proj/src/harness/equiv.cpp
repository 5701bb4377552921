#include <random>

#include "confir/harness/harness.hpp"

namespace confir::harness {

using namespace confir::ir;
using machine::Configuration;
using machine::Status;

std::string_view to_string(NiOutcome o) {
    switch (o) {
    case NiOutcome::Equivalent: return "Equivalent";
    case NiOutcome::OneBottom: return "OneBottom";
    case NiOutcome::BothNonTerm: return "BothNonTerm";
    case NiOutcome::Violation: return "VIOLATION";
    }
    return "?";
}

bool low_equiv(const Program& p, const Configuration& s0, const Configuration& s1) {
    if (s0.pc != s1.pc || s0.sigma_l != s1.sigma_l || s0.mu_l != s1.mu_l) {
        return false;
    }
    const PcIndex idx(p);
    const auto* e = idx.find(s0.pc);
    for (std::uint8_t r = 0; r < kNumRegs; ++r) {
        const bool low = !e || e->node->gamma_in[Reg{r}] == Taint::L;
        if (low && s0.rho[r] != s1.rho[r]) {
            return false;
        }
    }
    return true;
}

namespace {

const Node* entry_node(const Program& p) {
    const auto it = p.functions.find(p.entry);
    if (it == p.functions.end() || it->second.body.empty()) {
        return nullptr;
    }
    return &it->second.body.front();
}

void fill_region(Configuration& s, const Program& p, Taint region, std::mt19937_64& rng) {
    for (const auto& g : p.globals) {
        if (g.region != region) {
            continue;
        }
        for (std::uint64_t k = 0; k < g.size; ++k) {
            machine::write_cell(region == Taint::H ? s.mu_h : s.mu_l, g.address + k, rng());
        }
    }
}

NiOutcome classify(Status a, Status b) {
    if (a == Status::Lightning || b == Status::Lightning) {
        return NiOutcome::Violation;
    }
    if (a == Status::Bottom || b == Status::Bottom) {
        return NiOutcome::OneBottom;
    }
    if (a == Status::OutOfFuel && b == Status::OutOfFuel) {
        return NiOutcome::BothNonTerm;
    }
    // Both Final is decided by low_equiv; Final against OutOfFuel means the
    // public control flow diverged.
    return a == Status::Final && b == Status::Final ? NiOutcome::Equivalent : NiOutcome::Violation;
}

NiVerdict run_pair(const machine::Machine& m, std::uint64_t pair_seed, std::uint64_t fuel) {
    const auto& p = m.program();
    const auto s0 = random_initial(p, derive_seed(pair_seed, 0));
    const auto s1 = vary_high(p, s0, derive_seed(pair_seed, 1));
    const auto r0 = machine::run(m, s0, fuel);
    const auto r1 = machine::run(m, s1, fuel);
    NiVerdict v;
    v.pair_seed = pair_seed;
    v.status0 = r0.status;
    v.status1 = r1.status;
    v.steps0 = r0.steps;
    v.steps1 = r1.steps;
    v.outcome = classify(r0.status, r1.status);
    if (v.outcome == NiOutcome::Equivalent && !low_equiv(p, r0.state, r1.state)) {
        v.outcome = NiOutcome::Violation;
    }
    if (v.outcome == NiOutcome::Violation) {
        v.witness0 = r0.state;
        v.witness1 = r1.state;
    }
    return v;
}

} // namespace

Configuration random_initial(const Program& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Configuration s;
    if (const auto* n = entry_node(p)) {
        s.pc = n->pc;
    }
    for (auto& r : s.rho) {
        r = rng();
    }
    fill_region(s, p, Taint::L, rng);
    fill_region(s, p, Taint::H, rng);
    machine::set_trusted_seed(s, p.layout, rng());
    return s;
}

Configuration vary_high(const Program& p, const Configuration& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Configuration t = s;
    t.mu_h.clear();
    fill_region(t, p, Taint::H, rng);
    const auto* n = entry_node(p);
    for (std::uint8_t r = 0; r < kNumRegs; ++r) {
        const auto v = rng();
        if (!n || n->gamma_in[Reg{r}] == Taint::H) {
            t.rho[r] = v;
        }
    }
    machine::set_trusted_seed(t, p.layout, rng());
    return t;
}

NiVerdict ni_pair(const Program& p, const machine::TrustedRegistry& trusted, std::uint64_t pair_seed,
                  std::uint64_t fuel) {
    const machine::Machine m(p, trusted);
    return run_pair(m, pair_seed, fuel);
}

std::vector<NiVerdict> ni_check(const Program& p, const machine::TrustedRegistry& trusted, int n_pairs,
                                std::uint64_t fuel, std::uint64_t seed) {
    const machine::Machine m(p, trusted);
    std::vector<NiVerdict> out;
    for (int i = 0; i < n_pairs; ++i) {
        auto v = run_pair(m, derive_seed(seed, static_cast<std::uint64_t>(i)), fuel);
        v.pair_id = static_cast<std::uint64_t>(i);
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<LightningRun> lightning_runs(const Program& p, const machine::TrustedRegistry& trusted, int n_runs,
                                         std::uint64_t fuel, std::uint64_t seed) {
    const machine::Machine m(p, trusted);
    std::vector<LightningRun> out;
    for (int i = 0; i < n_runs; ++i) {
        const auto run_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        const auto r = machine::run(m, random_initial(p, run_seed), fuel);
        out.push_back({run_seed, r.status, r.steps});
    }
    return out;
}

int lightning_check(const Program& p, const machine::TrustedRegistry& trusted, int n_runs, std::uint64_t fuel,
                    std::uint64_t seed) {
    int n = 0;
    for (const auto& r : lightning_runs(p, trusted, n_runs, fuel, seed)) {
        n += r.status == Status::Lightning;
    }
    return n;
}

Program strip_region_checks(const Program& p) {
    Program q = p;
    for (auto& [name, f] : q.functions) {
        for (auto& n : f.body) {
            if (const auto* a = std::get_if<Assert>(&n.cmd); a && std::holds_alternative<AddrInRegion>(a->pred)) {
                n.cmd = Goto{Expr::constant(n.pc + 1)};
            }
        }
    }
    return q;
}

} // namespace confir::harness
