// Host implementations of trusted functions.
//
// Each builtin reads its arguments from r1..r3 and writes 0 to r0. They
// satisfy the no-leak assumption only when their parameters are declared L:
// the addresses and counts they act on are then public.

#include "confir/machine/machine.hpp"

namespace confir::machine {

using namespace confir::ir;

namespace {

constexpr std::uint64_t kMaxCells = 64;
constexpr std::uint64_t kDeclassifiedValue = 0x5EC0DE;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

bool range_in(const MemoryLayout& l, std::uint64_t base, std::uint64_t n, Taint region) {
    return n <= kMaxCells && l.in_region(base, region) && (n == 0 || l.in_region(base + n - 1, region));
}

/// t_read_secret(dst, n): n seeded values into private cells at dst.
void read_secret(TrustedContext& c) {
    auto& s = c.state;
    const auto& l = c.program.layout;
    const auto dst = s.rho[1];
    const auto n = s.rho[2];
    if (range_in(l, dst, n, Taint::H)) {
        const auto seed = read_cell(s.tau, trusted_seed_addr(l));
        const auto counter = read_cell(s.tau, trusted_counter_addr(l));
        for (std::uint64_t k = 0; k < n; ++k) {
            write_cell(s.mu_h, dst + k, splitmix64(seed ^ splitmix64(counter * kMaxCells + k)));
        }
        write_cell(s.tau, trusted_counter_addr(l), counter + 1);
    }
    s.rho[0] = 0;
}

/// t_copy_pub(dst, src, n): public-to-public copy.
void copy_pub(TrustedContext& c) {
    auto& s = c.state;
    const auto& l = c.program.layout;
    const auto dst = s.rho[1];
    const auto src = s.rho[2];
    const auto n = s.rho[3];
    if (range_in(l, dst, n, Taint::L) && range_in(l, src, n, Taint::L)) {
        std::vector<std::uint64_t> tmp(n);
        for (std::uint64_t k = 0; k < n; ++k) {
            tmp[k] = read_cell(s.mu_l, src + k);
        }
        for (std::uint64_t k = 0; k < n; ++k) {
            write_cell(s.mu_l, dst + k, tmp[k]);
        }
    }
    s.rho[0] = 0;
}

/// t_declassify_const(dst): a fixed value into a public cell.
void declassify_const(TrustedContext& c) {
    auto& s = c.state;
    if (c.program.layout.in_region(s.rho[1], Taint::L)) {
        write_cell(s.mu_l, s.rho[1], kDeclassifiedValue);
    }
    s.rho[0] = 0;
}

/// t_leaky(dst, src, n): private-to-public copy. Breaks the no-leak assumption.
void leaky(TrustedContext& c) {
    auto& s = c.state;
    const auto& l = c.program.layout;
    const auto dst = s.rho[1];
    const auto src = s.rho[2];
    const auto n = s.rho[3];
    if (range_in(l, dst, n, Taint::L) && range_in(l, src, n, Taint::H)) {
        for (std::uint64_t k = 0; k < n; ++k) {
            write_cell(s.mu_l, dst + k, read_cell(s.mu_h, src + k));
        }
    }
    s.rho[0] = 0;
}

} // namespace

std::uint64_t trusted_seed_addr(const MemoryLayout& l) { return l.trusted_base; }
std::uint64_t trusted_counter_addr(const MemoryLayout& l) { return l.trusted_base + 1; }

void set_trusted_seed(Configuration& s, const MemoryLayout& l, std::uint64_t seed) {
    write_cell(s.tau, trusted_seed_addr(l), seed);
}

void TrustedRegistry::register_trusted(std::string name, TrustedImpl impl) {
    impls_[std::move(name)] = std::move(impl);
}

const TrustedImpl* TrustedRegistry::find(const std::string& name) const {
    const auto it = impls_.find(name);
    return it == impls_.end() ? nullptr : &it->second;
}

TrustedRegistry TrustedRegistry::builtins() {
    TrustedRegistry r;
    r.register_trusted("t_read_secret", read_secret);
    r.register_trusted("t_copy_pub", copy_pub);
    r.register_trusted("t_declassify_const", declassify_const);
    return r;
}

TrustedRegistry TrustedRegistry::builtins_with_leaky() {
    auto r = builtins();
    r.register_trusted("t_leaky", leaky);
    return r;
}

} // namespace confir::machine
