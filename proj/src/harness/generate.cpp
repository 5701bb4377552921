// Random program generator.
//
// Emits source text while tracking a conservative register taint
// environment, mirroring what inference will derive: the result of a load is
// the region's taint, calls make r0 the callee's result and the other
// caller-save registers private, and joins take the pointwise maximum. Only
// public registers feed branch conditions, public addresses, public stores
// and public parameters.

#include <algorithm>
#include <random>
#include <sstream>

#include "confir/harness/harness.hpp"

namespace confir::harness {

using namespace confir::ir;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(splitmix64(base) ^ (index * 0xD1B54A32D192ED03ULL));
}

namespace {

constexpr int kArraySize = 4; // power of two so `& 3` keeps indices in range
constexpr std::uint8_t kMainCounter = 15;
constexpr std::uint8_t kMainSpare = 14;

struct Signature {
    std::string name;
    std::vector<Taint> params;
    Taint ret = Taint::L;
};

class Generator {
  public:
    Generator(std::uint64_t seed, const GenParams& prm) : rng_(seed), prm_(prm) {
        prm_.helpers = std::clamp(prm_.helpers, 0, kMaxHelpers);
        prm_.budget = std::clamp(prm_.budget, 0, kMaxBudget);
    }

    std::string run() {
        if (prm_.helpers == 0) {
            return "fn main() -> private {\n  ret\n}\n";
        }
        out_ << "trusted fn t_read_secret(public r1, public r2) -> public\n"
             << "trusted fn t_copy_pub(public r1, public r2, public r3) -> public\n"
             << "trusted fn t_declassify_const(public r1) -> public\n\n"
             << "global pub region=public size=" << kArraySize << "\n"
             << "global pub2 region=public size=" << kArraySize << "\n"
             << "global fptr region=public\n"
             << "global sec region=private size=" << kArraySize << "\n"
             << "global sec2 region=private size=" << kArraySize << "\n\n";

        for (int i = 0; i < prm_.helpers; ++i) {
            Signature s;
            s.name = "h" + std::to_string(i);
            const int n = pick(5);
            for (int k = 0; k < n; ++k) {
                s.params.push_back(coin(2) ? Taint::H : Taint::L);
            }
            s.ret = coin(2) ? Taint::H : Taint::L;
            sigs_.push_back(std::move(s));
        }
        for (int i = 0; i < prm_.helpers; ++i) {
            helper(i);
        }
        main_fn();
        out_ << "entry main\n";
        return out_.str();
    }

  private:
    // --- randomness -------------------------------------------------------
    std::uint64_t draw() { return rng_(); }
    int pick(int n) { return n <= 1 ? 0 : static_cast<int>(draw() % static_cast<std::uint64_t>(n)); }
    bool coin(int one_in) { return pick(one_in) == 0; }

    // --- emission ---------------------------------------------------------
    std::string fresh_label() { return "L" + std::to_string(labels_++); }

    void label(const std::string& l) { body_ << l << ":\n"; }

    void stmt(const std::string& s) {
        body_ << "  " << s << "\n";
        ++count_;
    }

    static std::string r(std::uint8_t k) { return "r" + std::to_string(k); }

    /// Registers this function may overwrite with data.
    std::vector<std::uint8_t> data_regs() const {
        std::vector<std::uint8_t> v;
        for (std::uint8_t k = 0; k < 10; ++k) {
            v.push_back(k);
        }
        if (in_main_) {
            v.push_back(kMainSpare);
        }
        return v;
    }

    std::vector<std::uint8_t> regs_with(Taint at_most, bool caller_save_only) const {
        std::vector<std::uint8_t> v;
        for (std::uint8_t k = 0; k < kNumRegs; ++k) {
            if (caller_save_only && k >= 10) {
                continue;
            }
            if (leq(env_[Reg{k}], at_most)) {
                v.push_back(k);
            }
        }
        return v;
    }

    /// Operand: a register of taint at most `cap` or a constant.
    std::pair<std::string, Taint> operand(Taint cap, bool caller_save_only) {
        const auto regs = regs_with(cap, caller_save_only);
        if (regs.empty() || coin(4)) {
            return {std::to_string(pick(16)), Taint::L};
        }
        const auto k = regs[pick(static_cast<int>(regs.size()))];
        return {r(k), env_[Reg{k}]};
    }

    std::pair<std::string, Taint> expr(Taint cap, bool caller_save_only = false) {
        static const char* const kOps[] = {"+", "-", "*", "^", "&", "|", "<<", ">>", "/", "%"};
        auto a = operand(cap, caller_save_only);
        if (coin(3)) {
            return a;
        }
        auto b = operand(cap, caller_save_only);
        const char* op = kOps[pick(10)];
        if (std::string_view(op) == "<<" || std::string_view(op) == ">>") {
            b = {std::to_string(pick(8)), Taint::L};
        }
        return {a.first + " " + op + " " + b.first, join(a.second, b.second)};
    }

    /// `@g + index` with an index whose taint is at most `cap`.
    std::pair<std::string, Taint> address(const char* global, Taint cap) {
        if (coin(3)) {
            return {std::string("@") + global + " + " + std::to_string(pick(kArraySize)), Taint::L};
        }
        const auto [e, t] = operand(cap, false);
        return {std::string("@") + global + " + (" + e + " & " + std::to_string(kArraySize - 1) + ")", t};
    }

    std::uint8_t data_dst() {
        const auto v = data_regs();
        return v[pick(static_cast<int>(v.size()))];
    }

    /// A caller-save register holding a public value, materialising one if
    /// none exists.
    std::uint8_t public_reg() {
        const auto regs = regs_with(Taint::L, true);
        if (!regs.empty()) {
            return regs[pick(static_cast<int>(regs.size()))];
        }
        const std::uint8_t k = static_cast<std::uint8_t>(pick(10));
        stmt(r(k) + " = " + std::to_string(pick(100)));
        env_.set(Reg{k}, Taint::L);
        return k;
    }

    void after_call(Taint ret) {
        for (std::uint8_t k = 1; k < 10; ++k) {
            env_.set(Reg{k}, Taint::H);
        }
        env_.set(kRetReg, ret);
    }

    // --- statements -------------------------------------------------------
    void mov() {
        const auto dst = data_dst();
        const auto [e, t] = expr(Taint::H);
        stmt(r(dst) + " = " + e);
        env_.set(Reg{dst}, t);
    }

    void load(bool secret) {
        const auto dst = data_dst();
        const char* g = secret ? (coin(2) ? "sec" : "sec2") : (coin(2) ? "pub" : "pub2");
        const auto a = address(g, secret ? Taint::H : Taint::L).first;
        stmt(r(dst) + " = load [" + a + "]");
        env_.set(Reg{dst}, secret ? Taint::H : Taint::L);
    }

    void store(bool secret) {
        const char* g = secret ? (coin(2) ? "sec" : "sec2") : (coin(2) ? "pub" : "pub2");
        const std::uint8_t src = secret ? static_cast<std::uint8_t>(pick(10)) : public_reg();
        const auto a = address(g, secret ? Taint::H : Taint::L).first;
        stmt("store [" + a + "], " + r(src));
    }

    /// Call arguments satisfying `params`, built from caller-save registers
    /// and constants only.
    std::string args_for(const std::vector<Taint>& params) {
        std::string s;
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (k) {
                s += ", ";
            }
            s += expr(params[k], true).first;
        }
        return s;
    }

    bool can_call() const { return fn_index_ + 1 < static_cast<int>(sigs_.size()) || in_main_; }

    const Signature& callee() {
        const int lo = in_main_ ? 0 : fn_index_ + 1;
        return sigs_[lo + pick(static_cast<int>(sigs_.size()) - lo)];
    }

    void direct_call() {
        const auto& s = callee();
        stmt("call " + s.name + "(" + args_for(s.params) + ")");
        after_call(s.ret);
    }

    void indirect_call() {
        const auto& s = callee();
        const std::uint8_t t = static_cast<std::uint8_t>(5 + pick(5));
        stmt(r(t) + " = &" + s.name);
        env_.set(Reg{t}, Taint::L);
        if (coin(3)) {
            // Route the pointer through public memory.
            stmt("store [@fptr], " + r(t));
            stmt(r(t) + " = load [@fptr]");
        }
        stmt("icall " + r(t) + "(" + args_for(s.params) + ") -> " + std::string(qualifier_name(s.ret)));
        after_call(s.ret);
    }

    void trusted_call() {
        switch (pick(3)) {
        case 0:
            stmt("tcall t_read_secret(@" + std::string(coin(2) ? "sec" : "sec2") + ", " +
                 std::to_string(1 + pick(kArraySize)) + ")");
            break;
        case 1: stmt("tcall t_copy_pub(@pub2, @pub, " + std::to_string(1 + pick(kArraySize)) + ")"); break;
        default:
            stmt("tcall t_declassify_const(@pub + " + std::to_string(pick(kArraySize)) + ")");
            break;
        }
        after_call(Taint::L);
    }

    void diamond(int depth) {
        const auto c = expr(Taint::L).first;
        const auto lt = fresh_label(), lf = fresh_label(), lj = fresh_label();
        stmt("if " + c + " < " + std::to_string(pick(32)) + " goto " + lt + " else " + lf);
        const TaintEnv before = env_;
        label(lt);
        block(1 + pick(3), depth + 1);
        stmt("goto " + lj);
        const TaintEnv then_env = env_;
        env_ = before;
        label(lf);
        block(1 + pick(3), depth + 1);
        env_ = env_.join(then_env);
        label(lj);
    }

    void loop(std::uint8_t counter, int depth, int body_len) {
        const auto lh = fresh_label(), lb = fresh_label(), lx = fresh_label();
        stmt(r(counter) + " = 0");
        env_.set(Reg{counter}, Taint::L);
        stmt_raw_label(lh, "if " + r(counter) + " >= " + std::to_string(1 + pick(3)) + " goto " + lx + " else " + lb);
        // Regenerate the body from the same random state until the header
        // environment is a fixpoint.
        const auto rng_snapshot = rng_;
        const auto text_snapshot = body_.str();
        const auto count_snapshot = count_;
        const auto labels_snapshot = labels_;
        TaintEnv head = env_;
        for (;;) {
            rng_ = rng_snapshot;
            body_.str(text_snapshot);
            body_.seekp(0, std::ios::end);
            count_ = count_snapshot;
            labels_ = labels_snapshot;
            env_ = head;
            in_loop_ = true;
            label(lb);
            block(body_len, depth + 1);
            in_loop_ = false;
            stmt(r(counter) + " = " + r(counter) + " + 1");
            stmt("goto " + lh);
            if (env_.leq(head)) {
                break;
            }
            head = head.join(env_);
        }
        env_ = head;
        label(lx);
    }

    void stmt_raw_label(const std::string& l, const std::string& s) {
        label(l);
        stmt(s);
    }

    void random_stmt(int depth) {
        const bool calls_ok = can_call() && !in_loop_;
        for (;;) {
            switch (pick(11)) {
            case 0:
            case 1:
            case 2: mov(); return;
            case 3: load(false); return;
            case 4: load(true); return;
            case 5: store(false); return;
            case 6: store(true); return;
            case 7:
                if (depth < 2) {
                    diamond(depth);
                    return;
                }
                break;
            case 8:
                if (calls_ok) {
                    coin(2) ? direct_call() : indirect_call();
                    return;
                }
                break;
            case 9: trusted_call(); return;
            case 10:
                if (depth == 0 && loops_ < 2) {
                    ++loops_;
                    loop(counter_, depth, 1 + pick(3));
                    return;
                }
                break;
            }
        }
    }

    void block(int n, int depth) {
        for (int k = 0; k < n; ++k) {
            random_stmt(depth);
        }
    }

    void finish(Taint ret) {
        const auto [e, t] = expr(ret);
        stmt("r0 = " + e);
        env_.set(kRetReg, t);
        stmt("ret");
    }

    void begin(const std::vector<Taint>& params) {
        body_.str("");
        body_.clear();
        count_ = 0;
        loops_ = 0;
        env_ = TaintEnv::from_mask(RegisterConvention{}.caller_save_mask());
        for (std::size_t k = 0; k < params.size(); ++k) {
            env_.set(arg_reg(k), params[k]);
        }
    }

    std::string header(const std::string& name, const std::vector<Taint>& params, Taint ret) const {
        std::string h = "fn " + name + "(";
        for (std::size_t k = 0; k < params.size(); ++k) {
            h += (k ? ", " : "") + std::string(qualifier_name(params[k])) + " r" + std::to_string(k + 1);
        }
        return h + ") -> " + std::string(qualifier_name(ret)) + " {\n";
    }

    void helper(int i) {
        const auto& s = sigs_[i];
        fn_index_ = i;
        in_main_ = false;
        counter_ = static_cast<std::uint8_t>(10 + i % 4);
        begin(s.params);
        block(prm_.budget / 2 + pick(prm_.budget / 2 + 1), 0);
        finish(s.ret);
        out_ << header(s.name, s.params, s.ret) << body_.str() << "}\n\n";
    }

    void main_fn() {
        fn_index_ = -1;
        in_main_ = true;
        counter_ = kMainCounter;
        begin({});
        // Constructs every program carries.
        stmt("tcall t_read_secret(@sec, " + std::to_string(kArraySize) + ")");
        after_call(Taint::L);
        block(pick(prm_.budget / 3 + 1), 0);
        ++loops_;
        loop(counter_, 0, 1 + pick(3));
        block(pick(prm_.budget / 3 + 1), 0);
        indirect_call();
        direct_call();
        stmt("r2 = load [@sec + 1]");
        stmt("r3 = r2 ^ " + std::to_string(1 + pick(255)));
        stmt("store [@sec + 2], r3");
        env_.set(Reg{2}, Taint::H);
        env_.set(Reg{3}, Taint::H);
        const std::uint8_t k = public_reg();
        stmt("store [@pub + " + std::to_string(pick(kArraySize)) + "], " + r(k));
        block(pick(prm_.budget / 3 + 1), 0);
        finish(Taint::L);
        out_ << header("main", {}, Taint::L) << body_.str() << "}\n\n";
    }

    std::mt19937_64 rng_;
    GenParams prm_;
    std::ostringstream out_;
    std::ostringstream body_;
    std::vector<Signature> sigs_;
    TaintEnv env_;
    int labels_ = 0;
    int count_ = 0;
    int loops_ = 0;
    int fn_index_ = -1;
    bool in_main_ = false;
    bool in_loop_ = false;
    std::uint8_t counter_ = kMainCounter;
};

} // namespace

std::string gen_program_text(std::uint64_t seed, const GenParams& params) { return Generator(seed, params).run(); }

SourceProgram gen_program(std::uint64_t seed, const GenParams& params) {
    return parse_source(gen_program_text(seed, params));
}

} // namespace confir::harness
