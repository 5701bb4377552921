#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <string>
#include <vector>

#include "confir/ir/overloaded.hpp"
#include "confir/ir/source.hpp"

namespace confir::ir {

SyntaxError::SyntaxError(int line, int column, const std::string& msg)
    : std::runtime_error("line " + std::to_string(line) + ":" + std::to_string(column) + ": " + msg), line_(line),
      column_(column) {}

UnresolvedName::UnresolvedName(std::string name, int line)
    : std::runtime_error("line " + std::to_string(line) + ": unresolved name '" + name + "'"), name_(std::move(name)),
      line_(line) {}

TaintVec5 SourceFunction::signature() const {
    TaintVec5 v;
    for (std::size_t i = 0; i < params.size() && i < kNumArgRegs; ++i) {
        v.args[i] = params[i];
    }
    v.ret = ret;
    return v;
}

const SourceFunction* SourceProgram::find(std::string_view name) const {
    const auto it = std::find_if(functions.begin(), functions.end(), [&](const auto& f) { return f.name == name; });
    return it == functions.end() ? nullptr : &*it;
}

const SourceGlobal* SourceProgram::find_global(std::string_view name) const {
    const auto it = std::find_if(globals.begin(), globals.end(), [&](const auto& g) { return g.name == name; });
    return it == globals.end() ? nullptr : &*it;
}

std::optional<std::size_t> resolve_target(const SourceFunction& f, const Expr& target) {
    if (target.kind() == Expr::Kind::Label) {
        const auto it = f.labels.find(target.name());
        if (it != f.labels.end()) {
            return it->second;
        }
    } else if (target.is_const() && target.value() < f.body.size()) {
        return static_cast<std::size_t>(target.value());
    }
    return std::nullopt;
}

std::vector<std::size_t> source_successors(const SourceFunction& f, std::size_t i) {
    std::vector<std::size_t> out;
    const auto& cmd = f.body[i].cmd;
    auto add = [&](const Expr& e) {
        if (const auto t = resolve_target(f, e)) {
            out.push_back(*t);
        }
    };
    if (const auto* g = std::get_if<Goto>(&cmd)) {
        add(g->target);
    } else if (const auto* c = std::get_if<IfThenElse>(&cmd)) {
        add(c->then_pc);
        add(c->else_pc);
    } else if (falls_through(cmd) && i + 1 < f.body.size()) {
        out.push_back(i + 1);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

namespace {

enum class Tok { Ident, Number, Punct, Newline, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    std::uint64_t value = 0;
    int line = 1;
    int col = 1;
};

const std::set<std::string, std::less<>> kKeywords = {
    "fn", "trusted", "global", "entry", "load", "store", "goto", "if", "else", "call", "tcall", "icall", "ret",
    "public", "private"};

std::vector<Token> lex(std::string_view s) {
    static const char* const kPuncts[] = {"->", "==", "!=", "<=", ">=", "<<", ">>", "(", ")", "[", "]", "{", "}",
                                          ",", ";", ":", "=", "<", ">", "+", "-", "*", "/", "%", "&", "|",
                                          "^", "~", "!", "@"};
    std::vector<Token> out;
    int line = 1;
    int col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t n) {
        i += n;
        col += static_cast<int>(n);
    };
    while (i < s.size()) {
        const char c = s[i];
        if (c == '\n') {
            out.push_back({Tok::Newline, "\n", 0, line, col});
            ++i;
            ++line;
            col = 1;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r') {
            advance(1);
            continue;
        }
        if (c == '#' || (c == '/' && i + 1 < s.size() && s[i + 1] == '/')) {
            while (i < s.size() && s[i] != '\n') {
                ++i;
            }
            continue;
        }
        Token t;
        t.line = line;
        t.col = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
            std::size_t j = i;
            while (j < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_' || s[j] == '.')) {
                ++j;
            }
            t.kind = Tok::Ident;
            t.text = std::string(s.substr(i, j - i));
            advance(j - i);
            out.push_back(std::move(t));
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            int base = 10;
            if (c == '0' && i + 1 < s.size() && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
                base = 16;
                j += 2;
            }
            const std::size_t digits = j;
            while (j < s.size() && std::isxdigit(static_cast<unsigned char>(s[j]))) {
                ++j;
            }
            const auto res = std::from_chars(s.data() + digits, s.data() + j, t.value, base);
            if (res.ec != std::errc{} || res.ptr != s.data() + j || j == digits) {
                throw SyntaxError(line, col, "bad number '" + std::string(s.substr(i, j - i)) + "'");
            }
            t.kind = Tok::Number;
            t.text = std::string(s.substr(i, j - i));
            advance(j - i);
            out.push_back(std::move(t));
            continue;
        }
        bool matched = false;
        for (const char* p : kPuncts) {
            const std::string_view pv(p);
            if (s.substr(i, pv.size()) == pv) {
                t.kind = Tok::Punct;
                t.text = std::string(pv);
                advance(pv.size());
                out.push_back(std::move(t));
                matched = true;
                break;
            }
        }
        if (!matched) {
            throw SyntaxError(line, col, std::string("unexpected character '") + c + "'");
        }
    }
    out.push_back({Tok::End, "", 0, line, col});
    return out;
}

struct PendingName {
    enum class Kind { Func, UFunc, TFunc, Global, Label } kind;
    std::string name;
    int line;
    std::size_t func; // index into functions, for labels
};

class Parser {
  public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    SourceProgram program() {
        skip_newlines();
        if (at_end()) {
            error("empty program");
        }
        int entry_line = 0;
        while (!at_end()) {
            const auto& t = peek();
            if (is_word("global")) {
                global();
            } else if (is_word("trusted")) {
                next();
                function(Trust::T);
            } else if (is_word("fn")) {
                function(Trust::U);
            } else if (is_word("entry")) {
                next();
                if (!sp_.entry.empty()) {
                    error("duplicate entry declaration");
                }
                entry_line = t.line;
                sp_.entry = ident("function name");
            } else {
                error("expected 'fn', 'trusted fn', 'global' or 'entry'");
            }
            end_of_decl();
        }
        resolve(entry_line);
        return std::move(sp_);
    }

  private:
    // Token helpers.
    const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
    bool at_end() const { return peek().kind == Tok::End; }
    bool is_punct(std::string_view p, std::size_t k = 0) const {
        return peek(k).kind == Tok::Punct && peek(k).text == p;
    }
    bool is_word(std::string_view w) const { return peek().kind == Tok::Ident && peek().text == w; }
    [[noreturn]] void error(const std::string& msg) const {
        const auto& t = peek();
        const std::string near = t.kind == Tok::End ? "end of input" : t.kind == Tok::Newline ? "end of line"
                                                                                             : "'" + t.text + "'";
        throw SyntaxError(t.line, t.col, msg + " near " + near);
    }
    void expect(std::string_view p) {
        if (!is_punct(p)) {
            error("expected '" + std::string(p) + "'");
        }
        next();
    }
    void expect_word(std::string_view w) {
        if (!is_word(w)) {
            error("expected '" + std::string(w) + "'");
        }
        next();
    }
    std::string ident(const char* what) {
        if (peek().kind != Tok::Ident || kKeywords.contains(peek().text) || reg_index(peek().text) >= 0) {
            error(std::string("expected ") + what);
        }
        return next().text;
    }
    void skip_newlines() {
        while (peek().kind == Tok::Newline || is_punct(";")) {
            next();
        }
    }
    void end_of_decl() {
        if (!at_end() && peek().kind != Tok::Newline && !is_punct(";")) {
            error("expected end of line");
        }
        skip_newlines();
    }

    static int reg_index(std::string_view s) {
        if (s.size() < 2 || s[0] != 'r') {
            return -1;
        }
        int v = 0;
        const auto res = std::from_chars(s.data() + 1, s.data() + s.size(), v);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || (s.size() > 2 && s[1] == '0')) {
            return -1;
        }
        return v;
    }
    Reg reg() {
        const int idx = peek().kind == Tok::Ident ? reg_index(peek().text) : -1;
        if (idx < 0) {
            error("expected register");
        }
        if (idx >= static_cast<int>(kNumRegs)) {
            error("register out of range");
        }
        next();
        return Reg{static_cast<std::uint8_t>(idx)};
    }
    Taint qualifier() {
        if (is_word("public")) {
            next();
            return Taint::L;
        }
        if (is_word("private")) {
            next();
            return Taint::H;
        }
        error("expected 'public' or 'private'");
    }
    std::optional<Taint> opt_qualifier() {
        if (is_word("public") || is_word("private")) {
            return qualifier();
        }
        return std::nullopt;
    }

    void global() {
        const int line = peek().line;
        next();
        SourceGlobal g;
        g.line = line;
        g.name = ident("global name");
        if (sp_.find_global(g.name)) {
            error("duplicate global '" + g.name + "'");
        }
        bool have_region = false;
        while (peek().kind == Tok::Ident && (peek().text == "region" || peek().text == "size")) {
            const auto key = next().text;
            expect("=");
            if (key == "region") {
                g.region = qualifier();
                have_region = true;
            } else {
                if (peek().kind != Tok::Number) {
                    error("expected size");
                }
                g.size = next().value;
                if (g.size == 0) {
                    error("global size must be positive");
                }
            }
        }
        if (!have_region) {
            error("global needs region=public|private");
        }
        sp_.globals.push_back(std::move(g));
    }

    void function(Trust trust) {
        const int line = peek().line;
        expect_word("fn");
        SourceFunction f;
        f.trust = trust;
        f.line = line;
        f.name = ident("function name");
        if (sp_.find(f.name)) {
            error("duplicate function '" + f.name + "'");
        }
        expect("(");
        while (!is_punct(")")) {
            if (!f.params.empty()) {
                expect(",");
            }
            const Taint q = qualifier();
            const Reg r = reg();
            if (r.index != f.params.size() + 1) {
                error("parameter " + std::to_string(f.params.size() + 1) + " must be r" +
                      std::to_string(f.params.size() + 1));
            }
            if (f.params.size() == kNumArgRegs) {
                error("at most 4 parameters");
            }
            f.params.push_back(q);
        }
        expect(")");
        expect("->");
        f.ret = qualifier();
        fidx_ = sp_.functions.size();
        if (trust == Trust::U) {
            while (peek().kind == Tok::Newline) {
                next();
            }
            expect("{");
            body(f);
            expect("}");
        }
        sp_.functions.push_back(std::move(f));
    }

    void body(SourceFunction& f) {
        skip_newlines();
        while (!is_punct("}")) {
            if (at_end()) {
                error("unterminated function body");
            }
            if (peek().kind == Tok::Ident && is_punct(":", 1) && !kKeywords.contains(peek().text)) {
                const auto& t = next();
                if (reg_index(t.text) >= 0) {
                    throw SyntaxError(t.line, t.col, "register used as label");
                }
                if (!f.labels.emplace(t.text, f.body.size()).second) {
                    throw SyntaxError(t.line, t.col, "duplicate label '" + t.text + "'");
                }
                next();
                skip_newlines();
                continue;
            }
            f.body.push_back(statement());
            if (!is_punct("}")) {
                if (peek().kind != Tok::Newline && !is_punct(";")) {
                    error("expected end of statement");
                }
                skip_newlines();
            }
        }
        for (const auto& [name, idx] : f.labels) {
            if (idx == f.body.size()) {
                throw SyntaxError(peek().line, peek().col, "label '" + name + "' does not precede a statement");
            }
        }
        if (f.body.empty()) {
            error("function '" + f.name + "' has an empty body");
        }
    }

    std::vector<Expr> call_args() {
        expect("(");
        std::vector<Expr> args;
        while (!is_punct(")")) {
            if (!args.empty()) {
                expect(",");
            }
            args.push_back(expr());
            if (args.size() > kMaxCallArgs) {
                error("at most 4 call arguments");
            }
        }
        expect(")");
        return args;
    }

    std::string callee(PendingName::Kind kind) {
        const int line = peek().line;
        auto name = ident("function name");
        pending_.push_back({kind, name, line, fidx_});
        return name;
    }

    SourceStmt statement() {
        SourceStmt s;
        s.line = peek().line;
        if (peek().kind == Tok::Ident && reg_index(peek().text) >= 0) {
            const Reg dst = reg();
            expect("=");
            if (is_word("load")) {
                next();
                s.region = opt_qualifier();
                expect("[");
                auto addr = expr();
                expect("]");
                s.cmd = Ldr{dst, std::move(addr)};
            } else {
                s.cmd = Mov{dst, expr()};
            }
        } else if (is_word("store")) {
            next();
            s.region = opt_qualifier();
            expect("[");
            auto addr = expr();
            expect("]");
            expect(",");
            s.cmd = Str{reg(), std::move(addr)};
        } else if (is_word("goto")) {
            next();
            s.cmd = Goto{expr()};
        } else if (is_word("if")) {
            next();
            auto c = expr();
            expect_word("goto");
            auto t = expr();
            expect_word("else");
            s.cmd = IfThenElse{std::move(c), std::move(t), expr()};
        } else if (is_word("ret")) {
            next();
            s.cmd = Ret{};
        } else if (is_word("call")) {
            next();
            auto f = callee(PendingName::Kind::UFunc);
            s.cmd = CallU{std::move(f), call_args()};
        } else if (is_word("tcall")) {
            next();
            auto f = callee(PendingName::Kind::TFunc);
            s.cmd = CallT{std::move(f), call_args()};
        } else if (is_word("icall")) {
            next();
            auto target = expr();
            auto args = call_args();
            if (is_punct("->")) {
                next();
                s.icall_ret = qualifier();
            }
            s.cmd = ICall{std::move(target), std::move(args)};
        } else if (is_word("assert")) {
            error("assert is not allowed in source programs");
        } else {
            error("expected a statement");
        }
        return s;
    }

    // Expressions: precedence climbing, loosest first.
    static int binary_prec(const Token& t, BinaryOp& op) {
        if (t.kind != Tok::Punct) {
            return -1;
        }
        static const std::pair<std::string_view, std::pair<BinaryOp, int>> kOps[] = {
            {"|", {BinaryOp::Or, 0}},   {"^", {BinaryOp::Xor, 1}},  {"&", {BinaryOp::And, 2}},
            {"==", {BinaryOp::Eq, 3}},  {"!=", {BinaryOp::Ne, 3}},  {"<", {BinaryOp::Lt, 4}},
            {"<=", {BinaryOp::Le, 4}},  {">", {BinaryOp::Gt, 4}},   {">=", {BinaryOp::Ge, 4}},
            {"<<", {BinaryOp::Shl, 5}}, {">>", {BinaryOp::Shr, 5}}, {"+", {BinaryOp::Add, 6}},
            {"-", {BinaryOp::Sub, 6}},  {"*", {BinaryOp::Mul, 7}},  {"/", {BinaryOp::Div, 7}},
            {"%", {BinaryOp::Mod, 7}},
        };
        for (const auto& [text, entry] : kOps) {
            if (t.text == text) {
                op = entry.first;
                return entry.second;
            }
        }
        return -1;
    }

    Expr expr(int min_prec = 0) {
        if (++depth_ > 200) {
            error("expression nesting too deep");
        }
        Expr lhs = unary();
        for (;;) {
            BinaryOp op{};
            const int prec = binary_prec(peek(), op);
            if (prec < min_prec) {
                break;
            }
            next();
            lhs = Expr::binary(op, std::move(lhs), expr(prec + 1));
        }
        --depth_;
        return lhs;
    }

    Expr unary() {
        if (is_punct("-") || is_punct("~") || is_punct("!")) {
            const auto text = next().text;
            if (++depth_ > 200) {
                error("expression nesting too deep");
            }
            auto operand = unary();
            --depth_;
            const UnaryOp op = text == "-" ? UnaryOp::Neg : text == "~" ? UnaryOp::Not : UnaryOp::LogicalNot;
            return Expr::unary(op, std::move(operand));
        }
        return primary();
    }

    Expr primary() {
        const auto& t = peek();
        if (t.kind == Tok::Number) {
            return Expr::constant(next().value);
        }
        if (is_punct("(")) {
            next();
            auto e = expr();
            expect(")");
            return e;
        }
        if (is_punct("&")) {
            next();
            const int line = peek().line;
            auto name = ident("function name");
            pending_.push_back({PendingName::Kind::Func, name, line, fidx_});
            return Expr::func_addr(std::move(name));
        }
        if (is_punct("@")) {
            next();
            const int line = peek().line;
            auto name = ident("global name");
            pending_.push_back({PendingName::Kind::Global, name, line, fidx_});
            return Expr::global_addr(std::move(name));
        }
        if (t.kind == Tok::Ident && reg_index(t.text) >= 0) {
            return Expr::reg(reg());
        }
        if (t.kind == Tok::Ident && !kKeywords.contains(t.text)) {
            pending_.push_back({PendingName::Kind::Label, t.text, t.line, fidx_});
            return Expr::label(next().text);
        }
        error("expected an expression");
    }

    void resolve(int entry_line) {
        for (const auto& n : pending_) {
            switch (n.kind) {
            case PendingName::Kind::Func:
                if (!sp_.find(n.name)) {
                    throw UnresolvedName(n.name, n.line);
                }
                break;
            case PendingName::Kind::UFunc:
            case PendingName::Kind::TFunc: {
                const auto* f = sp_.find(n.name);
                if (!f) {
                    throw UnresolvedName(n.name, n.line);
                }
                const Trust want = n.kind == PendingName::Kind::UFunc ? Trust::U : Trust::T;
                if (f->trust != want) {
                    throw SyntaxError(n.line, 1,
                                      want == Trust::U ? "'call " + n.name + "' targets a trusted function; use tcall"
                                                       : "'tcall " + n.name + "' targets an untrusted function");
                }
                break;
            }
            case PendingName::Kind::Global:
                if (!sp_.find_global(n.name)) {
                    throw UnresolvedName(n.name, n.line);
                }
                break;
            case PendingName::Kind::Label:
                if (!sp_.functions[n.func].labels.contains(n.name)) {
                    throw UnresolvedName(n.name, n.line);
                }
                break;
            }
        }
        if (sp_.entry.empty()) {
            if (const auto* m = sp_.find("main"); m && m->trust == Trust::U) {
                sp_.entry = "main";
            } else {
                const auto it = std::find_if(sp_.functions.begin(), sp_.functions.end(),
                                             [](const auto& f) { return f.trust == Trust::U; });
                if (it == sp_.functions.end()) {
                    throw SyntaxError(1, 1, "program has no untrusted function");
                }
                sp_.entry = it->name;
            }
        } else {
            const auto* e = sp_.find(sp_.entry);
            if (!e) {
                throw UnresolvedName(sp_.entry, entry_line);
            }
            if (e->trust != Trust::U) {
                throw SyntaxError(entry_line, 1, "entry function must be untrusted");
            }
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::size_t fidx_ = 0;
    int depth_ = 0;
    SourceProgram sp_;
    std::vector<PendingName> pending_;
};

std::string stmt_text(const SourceStmt& s) {
    const auto q = [&] { return s.region ? std::string(qualifier_name(*s.region)) + " " : std::string(); };
    return std::visit(overloaded{
                          [&](const Ldr& l) { return to_string(l.dst) + " = load " + q() + "[" + to_string(l.addr) + "]"; },
                          [&](const Str& st) {
                              return "store " + q() + "[" + to_string(st.addr) + "], " + to_string(st.src);
                          },
                          [&](const ICall& k) {
                              std::string out = "icall " + to_string(k.target) + "(";
                              for (std::size_t i = 0; i < k.args.size(); ++i) {
                                  out += (i ? ", " : "") + to_string(k.args[i]);
                              }
                              return out + ") -> " + std::string(qualifier_name(s.icall_ret));
                          },
                          [&](const auto& other) { return to_string(Command{other}); },
                      },
                      s.cmd);
}

} // namespace

SourceProgram parse_source(std::string_view text) { return Parser(lex(text)).program(); }

std::string to_text(const SourceProgram& sp) {
    std::string out;
    for (const auto& g : sp.globals) {
        out += "global " + g.name + " region=" + std::string(qualifier_name(g.region)) +
               " size=" + std::to_string(g.size) + "\n";
    }
    for (const auto& f : sp.functions) {
        out += f.trust == Trust::T ? "trusted fn " : "fn ";
        out += f.name + "(";
        for (std::size_t i = 0; i < f.params.size(); ++i) {
            out += (i ? ", " : "") + std::string(qualifier_name(f.params[i])) + " r" + std::to_string(i + 1);
        }
        out += ") -> " + std::string(qualifier_name(f.ret));
        if (f.trust == Trust::T) {
            out += "\n";
            continue;
        }
        out += " {\n";
        std::multimap<std::size_t, std::string> by_index;
        for (const auto& [name, idx] : f.labels) {
            by_index.emplace(idx, name);
        }
        for (std::size_t i = 0; i < f.body.size(); ++i) {
            const auto [lo, hi] = by_index.equal_range(i);
            for (auto it = lo; it != hi; ++it) {
                out += it->second + ":\n";
            }
            out += "  " + stmt_text(f.body[i]) + "\n";
        }
        out += "}\n";
    }
    out += "entry " + sp.entry + "\n";
    return out;
}

} // namespace confir::ir
