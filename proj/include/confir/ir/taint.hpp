#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace confir::ir {

/// Two-point secrecy lattice: L (public) below H (private).
enum class Taint : std::uint8_t { L = 0, H = 1 };

constexpr bool leq(Taint a, Taint b) { return a == Taint::L || b == Taint::H; }
constexpr Taint join(Taint a, Taint b) { return (a == Taint::H || b == Taint::H) ? Taint::H : Taint::L; }
constexpr char to_char(Taint t) { return t == Taint::H ? 'H' : 'L'; }
constexpr std::string_view qualifier_name(Taint t) { return t == Taint::H ? "private" : "public"; }

inline constexpr std::size_t kNumRegs = 16;
inline constexpr std::size_t kNumArgRegs = 4;

struct Reg {
    std::uint8_t index = 0;

    constexpr Reg() = default;
    constexpr explicit Reg(std::uint8_t i) : index(i) {}
    constexpr auto operator<=>(const Reg&) const = default;
    constexpr std::uint16_t bit() const { return static_cast<std::uint16_t>(1u << index); }
};

inline constexpr Reg kRetReg{0};
constexpr Reg arg_reg(std::size_t i) { return Reg{static_cast<std::uint8_t>(1 + i)}; }

std::string to_string(Reg r);

/// Callee/caller-save partition. Identical for all functions of a program.
/// Default: r10..r15 callee-save; r0..r9 caller-save.
struct RegisterConvention {
    std::uint16_t callee_save_mask = 0xFC00;

    constexpr bool is_callee_save(Reg r) const { return (callee_save_mask & r.bit()) != 0; }
    constexpr bool is_caller_save(Reg r) const { return !is_callee_save(r); }
    constexpr std::uint16_t caller_save_mask() const { return static_cast<std::uint16_t>(~callee_save_mask); }
    bool operator==(const RegisterConvention&) const = default;
};

/// Γ: total map from registers to taints, packed one bit per register (1 = H).
class TaintEnv {
  public:
    constexpr TaintEnv() = default;
    static constexpr TaintEnv from_mask(std::uint16_t high) {
        TaintEnv e;
        e.high_ = high;
        return e;
    }
    static constexpr TaintEnv all(Taint t) { return from_mask(t == Taint::H ? 0xFFFF : 0); }

    constexpr Taint operator[](Reg r) const { return (high_ & r.bit()) ? Taint::H : Taint::L; }
    constexpr void set(Reg r, Taint t) {
        if (t == Taint::H) {
            high_ = static_cast<std::uint16_t>(high_ | r.bit());
        } else {
            high_ = static_cast<std::uint16_t>(high_ & ~r.bit());
        }
    }
    constexpr TaintEnv with(Reg r, Taint t) const {
        TaintEnv e = *this;
        e.set(r, t);
        return e;
    }
    constexpr void raise(std::uint16_t mask) { high_ = static_cast<std::uint16_t>(high_ | mask); }
    constexpr void lower(std::uint16_t mask) { high_ = static_cast<std::uint16_t>(high_ & ~mask); }

    /// Pointwise order.
    constexpr bool leq(const TaintEnv& o) const { return (high_ & ~o.high_) == 0; }
    constexpr TaintEnv join(const TaintEnv& o) const { return from_mask(high_ | o.high_); }
    constexpr std::uint16_t mask() const { return high_; }
    constexpr bool operator==(const TaintEnv&) const = default;

    /// Taint of the join over the registers in `regs`.
    constexpr Taint join_over(std::uint16_t regs) const { return (high_ & regs) ? Taint::H : Taint::L; }

  private:
    std::uint16_t high_ = 0;
};

std::string to_string(const TaintEnv& env);

/// Expected taints at a call-form magic sequence: args r1..r4 plus return r0.
struct TaintVec5 {
    std::array<Taint, kNumArgRegs> args{Taint::H, Taint::H, Taint::H, Taint::H};
    Taint ret = Taint::H;

    /// Five bits, rendered most-significant first as arg1 arg2 arg3 arg4 ret.
    constexpr std::uint8_t bits() const {
        std::uint8_t b = 0;
        for (Taint t : args) {
            b = static_cast<std::uint8_t>((b << 1) | static_cast<std::uint8_t>(t));
        }
        return static_cast<std::uint8_t>((b << 1) | static_cast<std::uint8_t>(ret));
    }
    static constexpr TaintVec5 from_bits(std::uint8_t b) {
        TaintVec5 v;
        v.ret = static_cast<Taint>(b & 1u);
        for (std::size_t i = 0; i < kNumArgRegs; ++i) {
            v.args[i] = static_cast<Taint>((b >> (4 - i)) & 1u);
        }
        return v;
    }
    std::string str() const;
    bool operator==(const TaintVec5&) const = default;
};

} // namespace confir::ir
