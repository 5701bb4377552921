#include "confir/ir/serialize.hpp"

#include <algorithm>
#include <cstring>
#include <string>
#include <unordered_set>

#include "confir/ir/overloaded.hpp"

namespace confir::ir {

namespace {

constexpr std::uint8_t kHeader[4] = {'C', 'C', 'F', 'G'};
constexpr int kMaxExprDepth = 256;

enum class ExprTag : std::uint8_t { Const = 0, Reg = 1, Unary = 2, Binary = 3, FuncAddr = 4 };
enum class CmdTag : std::uint8_t { Mov = 0, Ldr, Str, Goto, If, Ret, CallU, CallT, ICall, Assert };
enum class PredTag : std::uint8_t { AddrInRegion = 0, MagicCallMatch = 1, MagicRetMatch = 2 };

class Writer {
  public:
    void u8(std::uint8_t v) { out_.bytes.push_back(v); }
    void u16(std::uint16_t v) { le(v, 2); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.bytes.insert(out_.bytes.end(), s.begin(), s.end());
    }
    void call_magic(const MagicSeq& m) {
        out_.call_magic_offsets.push_back(out_.bytes.size());
        u64(m.encoding());
    }
    void ret_magic(const MagicSeq& m) {
        out_.ret_magic_offsets.push_back(out_.bytes.size());
        u64(m.encoding());
    }

    void expr(const Expr& e) {
        switch (e.kind()) {
        case Expr::Kind::Const:
            u8(static_cast<std::uint8_t>(ExprTag::Const));
            u64(e.value());
            return;
        case Expr::Kind::Reg:
            u8(static_cast<std::uint8_t>(ExprTag::Reg));
            u8(e.reg().index);
            return;
        case Expr::Kind::Unary:
            u8(static_cast<std::uint8_t>(ExprTag::Unary));
            u8(static_cast<std::uint8_t>(e.unary_op()));
            expr(e.operand());
            return;
        case Expr::Kind::Binary:
            u8(static_cast<std::uint8_t>(ExprTag::Binary));
            u8(static_cast<std::uint8_t>(e.binary_op()));
            expr(e.lhs());
            expr(e.rhs());
            return;
        case Expr::Kind::FuncAddr:
            u8(static_cast<std::uint8_t>(ExprTag::FuncAddr));
            str(e.name());
            return;
        case Expr::Kind::GlobalAddr:
        case Expr::Kind::Label: throw InvariantViolation("cannot serialize unlowered expression " + to_string(e));
        }
    }

    void args(const std::vector<Expr>& a) {
        u8(static_cast<std::uint8_t>(a.size()));
        for (const auto& e : a) {
            expr(e);
        }
    }

    void command(const Command& c) {
        std::visit(overloaded{
                       [&](const Mov& m) {
                           u8(static_cast<std::uint8_t>(CmdTag::Mov));
                           u8(m.dst.index);
                           expr(m.src);
                       },
                       [&](const Ldr& l) {
                           u8(static_cast<std::uint8_t>(CmdTag::Ldr));
                           u8(l.dst.index);
                           expr(l.addr);
                       },
                       [&](const Str& s) {
                           u8(static_cast<std::uint8_t>(CmdTag::Str));
                           u8(s.src.index);
                           expr(s.addr);
                       },
                       [&](const Goto& g) {
                           u8(static_cast<std::uint8_t>(CmdTag::Goto));
                           expr(g.target);
                       },
                       [&](const IfThenElse& i) {
                           u8(static_cast<std::uint8_t>(CmdTag::If));
                           expr(i.cond);
                           expr(i.then_pc);
                           expr(i.else_pc);
                       },
                       [&](const Ret&) { u8(static_cast<std::uint8_t>(CmdTag::Ret)); },
                       [&](const CallU& k) {
                           u8(static_cast<std::uint8_t>(CmdTag::CallU));
                           str(k.callee);
                           args(k.args);
                       },
                       [&](const CallT& k) {
                           u8(static_cast<std::uint8_t>(CmdTag::CallT));
                           str(k.callee);
                           args(k.args);
                       },
                       [&](const ICall& k) {
                           u8(static_cast<std::uint8_t>(CmdTag::ICall));
                           expr(k.target);
                           args(k.args);
                       },
                       [&](const Assert& a) {
                           u8(static_cast<std::uint8_t>(CmdTag::Assert));
                           std::visit(overloaded{
                                          [&](const AddrInRegion& p) {
                                              u8(static_cast<std::uint8_t>(PredTag::AddrInRegion));
                                              expr(p.addr);
                                              u8(static_cast<std::uint8_t>(p.region));
                                          },
                                          [&](const MagicCallMatch& p) {
                                              u8(static_cast<std::uint8_t>(PredTag::MagicCallMatch));
                                              expr(p.target);
                                              u8(p.want.bits());
                                          },
                                          [&](const MagicRetMatch& p) {
                                              u8(static_cast<std::uint8_t>(PredTag::MagicRetMatch));
                                              u8(static_cast<std::uint8_t>(p.ret));
                                          },
                                      },
                                      a.pred);
                       },
                   },
                   c);
    }

    Serialized take() { return std::move(out_); }

  private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) {
            out_.bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }

    Serialized out_;
};

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool flag() {
        const auto v = u8();
        if (v > 1) {
            bad("flag byte out of range");
        }
        return v == 1;
    }
    Taint taint() { return flag() ? Taint::H : Taint::L; }
    Reg reg() {
        const auto v = u8();
        if (v >= kNumRegs) {
            bad("register index out of range");
        }
        return Reg{v};
    }
    /// Element count, bounded by the bytes left so hostile counts fail fast.
    std::uint32_t count(std::size_t min_elem_size) {
        const auto n = u32();
        if (static_cast<std::uint64_t>(n) * min_elem_size > b_.size() - pos_) {
            bad("element count exceeds container size");
        }
        return n;
    }

    Expr expr(int depth = 0) {
        if (depth > kMaxExprDepth) {
            bad("expression nesting too deep");
        }
        const auto tag = u8();
        switch (static_cast<ExprTag>(tag)) {
        case ExprTag::Const: return Expr::constant(u64());
        case ExprTag::Reg: return Expr::reg(reg());
        case ExprTag::Unary: {
            const auto op = u8();
            if (op > static_cast<std::uint8_t>(UnaryOp::LogicalNot)) {
                bad("unknown unary operator");
            }
            return Expr::unary(static_cast<UnaryOp>(op), expr(depth + 1));
        }
        case ExprTag::Binary: {
            const auto op = u8();
            if (op > static_cast<std::uint8_t>(BinaryOp::Ge)) {
                bad("unknown binary operator");
            }
            auto a = expr(depth + 1);
            auto b = expr(depth + 1);
            return Expr::binary(static_cast<BinaryOp>(op), std::move(a), std::move(b));
        }
        case ExprTag::FuncAddr: return Expr::func_addr(str());
        }
        bad("unknown expression tag");
    }

    std::vector<Expr> args() {
        const auto n = u8();
        if (n > kMaxCallArgs) {
            bad("too many call arguments");
        }
        std::vector<Expr> a;
        for (std::uint8_t i = 0; i < n; ++i) {
            a.push_back(expr());
        }
        return a;
    }

    Command command() {
        const auto tag = u8();
        switch (static_cast<CmdTag>(tag)) {
        case CmdTag::Mov: {
            const auto r = reg();
            return Mov{r, expr()};
        }
        case CmdTag::Ldr: {
            const auto r = reg();
            return Ldr{r, expr()};
        }
        case CmdTag::Str: {
            const auto r = reg();
            return Str{r, expr()};
        }
        case CmdTag::Goto: return Goto{expr()};
        case CmdTag::If: {
            auto c = expr();
            auto t = expr();
            auto e = expr();
            return IfThenElse{std::move(c), std::move(t), std::move(e)};
        }
        case CmdTag::Ret: return Ret{};
        case CmdTag::CallU: {
            auto f = str();
            return CallU{std::move(f), args()};
        }
        case CmdTag::CallT: {
            auto f = str();
            return CallT{std::move(f), args()};
        }
        case CmdTag::ICall: {
            auto t = expr();
            return ICall{std::move(t), args()};
        }
        case CmdTag::Assert: {
            const auto ptag = u8();
            switch (static_cast<PredTag>(ptag)) {
            case PredTag::AddrInRegion: {
                auto e = expr();
                return Assert{AddrInRegion{std::move(e), taint()}};
            }
            case PredTag::MagicCallMatch: {
                auto e = expr();
                const auto bits = u8();
                if (bits >= 32) {
                    bad("taint vector out of range");
                }
                return Assert{MagicCallMatch{std::move(e), TaintVec5::from_bits(bits)}};
            }
            case PredTag::MagicRetMatch: return Assert{MagicRetMatch{taint()}};
            }
            bad("unknown assert predicate");
        }
        }
        bad("unknown command tag");
    }

    void finish() const {
        if (pos_ != b_.size()) {
            bad("trailing bytes after container");
        }
    }

    [[noreturn]] void bad(const std::string& what) const {
        throw MalformedContainer(what + " at offset " + std::to_string(pos_));
    }

  private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) {
            bad("truncated container");
        }
    }
    std::uint64_t le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

} // namespace

Serialized serialize_with_offsets(const Program& p) {
    Writer w;
    for (auto c : kHeader) {
        w.u8(c);
    }
    w.u8(kContainerVersion);
    w.u64(p.m_call_prefix);
    w.u64(p.m_ret_prefix);

    const auto& l = p.layout;
    w.u8(static_cast<std::uint8_t>(l.scheme));
    for (auto v : {l.public_base, l.public_size, l.private_base, l.private_size, l.stack_offset, l.guard_low,
                   l.guard_between, l.trusted_base, l.trusted_size}) {
        w.u64(v);
    }
    w.u16(p.convention.callee_save_mask);
    w.str(p.entry);

    w.u32(static_cast<std::uint32_t>(p.globals.size()));
    for (const auto& g : p.globals) {
        w.str(g.name);
        w.u8(static_cast<std::uint8_t>(g.region));
        w.u64(g.address);
        w.u64(g.size);
    }

    w.u32(static_cast<std::uint32_t>(p.functions.size()));
    for (const auto& [name, f] : p.functions) {
        w.str(name);
        w.u8(static_cast<std::uint8_t>(f.trust));
        w.u64(f.entry_pc);
        w.call_magic(f.magic);
        w.u32(static_cast<std::uint32_t>(f.body.size()));
        for (const auto& n : f.body) {
            w.u64(n.pc);
            w.u8(n.ret_magic ? 1 : 0);
            if (n.ret_magic) {
                w.ret_magic(*n.ret_magic);
            }
            w.command(n.cmd);
            w.u16(n.gamma_in.mask());
            w.u16(n.gamma_out.mask());
        }
        w.u32(static_cast<std::uint32_t>(f.edges.size()));
        for (const auto& [from, to] : f.edges) {
            w.u64(from);
            w.u64(to);
        }
    }

    w.u32(static_cast<std::uint32_t>(p.func_table.size()));
    for (const auto& [name, e] : p.func_table) {
        w.str(name);
        w.u64(e.entry_pc);
        w.call_magic(e.magic);
    }
    return w.take();
}

std::vector<std::uint8_t> serialize_cfg(const Program& p) { return serialize_with_offsets(p).bytes; }

Program deserialize_cfg(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    for (auto c : kHeader) {
        if (r.u8() != c) {
            r.bad("bad container header");
        }
    }
    if (r.u8() != kContainerVersion) {
        r.bad("unsupported container version");
    }
    Program p;
    p.m_call_prefix = r.u64();
    p.m_ret_prefix = r.u64();
    if (p.m_call_prefix > kPrefixMask || p.m_ret_prefix > kPrefixMask) {
        r.bad("magic prefix wider than 59 bits");
    }

    auto& l = p.layout;
    const auto scheme = r.u8();
    if (scheme > static_cast<std::uint8_t>(Scheme::Segment)) {
        r.bad("unknown memory scheme");
    }
    l.scheme = static_cast<Scheme>(scheme);
    for (auto* v : {&l.public_base, &l.public_size, &l.private_base, &l.private_size, &l.stack_offset, &l.guard_low,
                    &l.guard_between, &l.trusted_base, &l.trusted_size}) {
        *v = r.u64();
    }
    p.convention.callee_save_mask = r.u16();
    p.entry = r.str();

    const auto nglobals = r.count(21);
    for (std::uint32_t i = 0; i < nglobals; ++i) {
        GlobalSym g;
        g.name = r.str();
        g.region = r.taint();
        g.address = r.u64();
        g.size = r.u64();
        p.globals.push_back(std::move(g));
    }

    const auto nfuncs = r.count(25);
    std::string prev;
    for (std::uint32_t i = 0; i < nfuncs; ++i) {
        FuncInfo f;
        f.name = r.str();
        if (i > 0 && !(prev < f.name)) {
            r.bad("functions not in canonical order");
        }
        prev = f.name;
        f.trust = r.flag() ? Trust::T : Trust::U;
        f.entry_pc = r.u64();
        f.magic = MagicSeq::decode(MagicKind::CallSite, r.u64());
        const auto nnodes = r.count(14);
        for (std::uint32_t k = 0; k < nnodes; ++k) {
            Node n;
            n.pc = r.u64();
            if (r.flag()) {
                n.ret_magic = MagicSeq::decode(MagicKind::RetSite, r.u64());
            }
            n.cmd = r.command();
            n.gamma_in = TaintEnv::from_mask(r.u16());
            n.gamma_out = TaintEnv::from_mask(r.u16());
            f.body.push_back(std::move(n));
        }
        const auto nedges = r.count(16);
        for (std::uint32_t k = 0; k < nedges; ++k) {
            const auto from = r.u64();
            const auto to = r.u64();
            f.edges.emplace_back(from, to);
        }
        p.functions.emplace(f.name, std::move(f));
    }

    const auto ntable = r.count(20);
    prev.clear();
    for (std::uint32_t i = 0; i < ntable; ++i) {
        auto name = r.str();
        if (i > 0 && !(prev < name)) {
            r.bad("function table not in canonical order");
        }
        prev = name;
        FuncEntry e;
        e.entry_pc = r.u64();
        e.magic = MagicSeq::decode(MagicKind::CallSite, r.u64());
        p.func_table.emplace(std::move(name), e);
    }
    r.finish();
    p.validate();
    return p;
}

std::vector<std::size_t> find_prefix_windows(std::span<const std::uint8_t> bytes, std::uint64_t prefix,
                                             std::span<const std::size_t> designated) {
    std::vector<std::size_t> hits;
    if (bytes.size() < 8) {
        return hits;
    }
    std::unordered_set<std::size_t> skip(designated.begin(), designated.end());
    for (std::size_t o = 0; o + 8 <= bytes.size(); ++o) {
        std::uint64_t v;
        std::memcpy(&v, bytes.data() + o, 8); // host is little-endian
        if ((v >> 5) == prefix && !skip.contains(o)) {
            hits.push_back(o);
        }
    }
    return hits;
}

} // namespace confir::ir
