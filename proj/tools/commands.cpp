#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "confir/harness/harness.hpp"
#include "confir/ir/serialize.hpp"

namespace confir::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Write-then-rename so readers never observe a partial file.
void write_atomic(const std::string& path, std::string_view data) {
    const fs::path target(path);
    if (target.has_parent_path()) {
        fs::create_directories(target.parent_path());
    }
    const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw UsageError("cannot write " + tmp.string());
        }
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.flush();
        if (!out) {
            throw UsageError("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, target);
}

std::string human_size(std::uint64_t n) {
    const std::pair<std::uint64_t, const char*> units[] = {
        {instrument::GiB, "GiB"}, {instrument::MiB, "MiB"}, {instrument::KiB, "KiB"}};
    for (const auto& [u, name] : units) {
        if (n >= u && n % u == 0) {
            return std::to_string(n / u) + " " + name;
        }
    }
    return std::to_string(n) + " B";
}

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << "0x" << std::hex << v;
    return s.str();
}

ir::Scheme parse_scheme(const std::string& s) { return s == "segment" ? ir::Scheme::Segment : ir::Scheme::Mpx; }

ir::MemoryLayout make_layout(const Common& c, std::uint64_t pub, std::uint64_t priv, std::uint64_t off) {
    instrument::LayoutConfig cfg;
    if (pub) {
        cfg.public_size = pub;
    }
    if (priv) {
        cfg.private_size = priv;
    }
    if (off) {
        cfg.stack_offset = off;
    }
    try {
        return instrument::compute_layout(parse_scheme(c.scheme), cfg);
    } catch (const instrument::ConfigError& e) {
        throw UsageError(e.what());
    }
}

void echo_seed(const Common& c, std::uint64_t seed) {
    if (c.json) {
        std::cout << json{{"seed", seed}}.dump() << "\n";
    } else {
        std::cerr << "seed=" << seed << "\n";
    }
}

/// Compiles source text; prints diagnostics and returns nothing on failure.
std::optional<ir::Program> compile_source(const Common& c, const std::string& path, const ir::MemoryLayout& layout,
                                          std::uint64_t seed, std::vector<std::string>* warnings) {
    const auto fail = [&](const std::string& kind, const std::string& msg) -> std::optional<ir::Program> {
        if (c.json) {
            std::cout << json{{"error", kind}, {"file", path}, {"message", msg}}.dump() << "\n";
        }
        std::cerr << path << ": " << kind << ": " << msg << "\n";
        return std::nullopt;
    };
    try {
        const auto sp = ir::parse_source(read_text(path));
        instrument::CompileOptions opts;
        opts.infer.strict = !c.warn_implicit;
        opts.layout = layout;
        opts.seed = seed;
        auto r = instrument::compile(sp, opts);
        if (auto* rej = std::get_if<instrument::Rejected>(&r)) {
            return fail("type error", rej->message);
        }
        auto& done = std::get<instrument::Compiled>(r);
        if (warnings) {
            *warnings = done.warnings;
        }
        return std::move(done.program);
    } catch (const ir::SyntaxError& e) {
        return fail("syntax error", e.what());
    } catch (const ir::UnresolvedName& e) {
        return fail("syntax error", e.what());
    } catch (const instrument::InstrumentError& e) {
        return fail("instrument error", e.what());
    } catch (const instrument::ConfigError& e) {
        throw UsageError(e.what());
    } catch (const instrument::ExhaustedAttempts& e) {
        return fail("magic error", e.what());
    }
}

std::optional<ir::Program> load_container(const std::string& path) {
    const auto text = read_text(path);
    const std::span bytes(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
    try {
        return ir::deserialize_cfg(bytes);
    } catch (const ir::MalformedContainer& e) {
        std::cerr << path << ": malformed container: " << e.what() << "\n";
    } catch (const ir::InvariantViolation& e) {
        std::cerr << path << ": invalid program: " << e.what() << "\n";
    }
    return std::nullopt;
}

/// .cir inputs are compiled on the fly; anything else is a container.
std::optional<ir::Program> load_program(const Common& c, const std::string& path) {
    if (fs::path(path).extension() == ".cir") {
        return compile_source(c, path, make_layout(c, 0, 0, 0), c.seed.value_or(0), nullptr);
    }
    return load_container(path);
}

harness::Exec exec_of(const Common& c) { return {!c.serial, c.jobs}; }

void print_diagnostics(const Common& c, const verify::Verdict& v) {
    for (const auto& d : v.diagnostics) {
        if (c.json) {
            std::cout << json{{"pc", d.pc},
                              {"rule", verify::rule_name(d.rule)},
                              {"severity", d.severity == verify::Severity::Reject ? "reject" : "warning"},
                              {"message", d.message}}
                             .dump()
                      << "\n";
        } else {
            std::cerr << verify::to_string(d) << "\n";
        }
    }
}

void apply_entry_arg(const ir::Program& p, machine::Configuration& s, const std::string& arg) {
    const auto eq = arg.rfind('=');
    if (eq == std::string::npos || eq == 0) {
        throw UsageError("--entry-args expects k=v, got '" + arg + "'");
    }
    std::string key = arg.substr(0, eq);
    std::uint64_t value = 0;
    try {
        std::size_t used = 0;
        value = std::stoull(arg.substr(eq + 1), &used, 0);
        if (used != arg.size() - eq - 1) {
            throw UsageError("");
        }
    } catch (...) {
        throw UsageError("bad value in --entry-args '" + arg + "'");
    }
    if (key.size() >= 2 && key[0] == 'r' && key.find_first_not_of("0123456789", 1) == std::string::npos) {
        const auto r = std::stoul(key.substr(1));
        if (r >= ir::kNumRegs) {
            throw UsageError("no register " + key);
        }
        s.rho[r] = value;
        return;
    }
    std::uint64_t index = 0;
    if (const auto lb = key.find('['); lb != std::string::npos && key.back() == ']') {
        try {
            index = std::stoull(key.substr(lb + 1, key.size() - lb - 2));
        } catch (...) {
            throw UsageError("bad index in --entry-args '" + arg + "'");
        }
        key = key.substr(0, lb);
    }
    for (const auto& g : p.globals) {
        if (g.name == key) {
            if (index >= g.size) {
                throw UsageError("index out of range for global " + key);
            }
            machine::write_cell(g.region == ir::Taint::H ? s.mu_h : s.mu_l, g.address + index, value);
            return;
        }
    }
    throw UsageError("unknown register or global '" + key + "'");
}

} // namespace

int cmd_compile(const Common& c, const CompileArgs& a) {
    const auto layout = make_layout(c, a.public_size, a.private_size, a.stack_offset);
    const auto seed = c.seed.value_or(0);
    std::vector<std::string> warnings;
    const auto p = compile_source(c, a.input, layout, seed, &warnings);
    if (!p) {
        return kExitRejected;
    }
    for (const auto& w : warnings) {
        std::cerr << a.input << ": warning: " << w << "\n";
    }
    const auto out = a.output.empty() ? fs::path(a.input).replace_extension(".ccfg").string() : a.output;
    const auto bytes = ir::serialize_cfg(*p);
    write_atomic(out, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    echo_seed(c, seed);
    if (a.listing) {
        std::cout << ir::listing(*p);
    }
    if (c.json) {
        std::cout << json{{"output", out}, {"bytes", bytes.size()}, {"warnings", warnings}}.dump() << "\n";
    } else {
        std::cerr << "wrote " << out << " (" << bytes.size() << " bytes)\n";
    }
    return kExitOk;
}

int cmd_verify(const Common& c, const std::string& input) {
    const auto p = load_container(input);
    if (!p) {
        return kExitRejected;
    }
    verify::VerifyOptions opts;
    opts.allow_implicit = c.warn_implicit;
    const auto v = verify::verify(*p, opts);
    print_diagnostics(c, v);
    if (c.json) {
        std::cout << json{{"accepted", v.accepted}}.dump() << "\n";
    } else {
        std::cerr << input << ": " << (v.accepted ? "accepted" : "rejected") << "\n";
    }
    return v.accepted ? kExitOk : kExitRejected;
}

int cmd_run(const Common& c, const RunArgs& a) {
    const auto p = load_container(a.input);
    if (!p) {
        return kExitRejected;
    }
    const auto trusted = a.leaky ? machine::TrustedRegistry::builtins_with_leaky() : machine::TrustedRegistry::builtins();
    const machine::Machine m(*p, trusted);
    auto s = m.initial();
    machine::set_trusted_seed(s, p->layout, a.trusted_seed);
    for (const auto& arg : a.entry_args) {
        apply_entry_arg(*p, s, arg);
    }
    const auto r = machine::run(m, std::move(s), a.fuel);
    const auto obs = machine::observable(*p, r.state);
    if (c.json) {
        std::cout << json{{"status", machine::to_string(r.status)}, {"steps", r.steps}, {"observable", obs}}.dump()
                  << "\n";
    } else {
        for (const auto& line : obs) {
            std::cout << line << "\n";
        }
        std::cerr << "status=" << machine::to_string(r.status) << " steps=" << r.steps << "\n";
    }
    switch (r.status) {
    case machine::Status::Final: return kExitOk;
    case machine::Status::Bottom: return kExitBottom;
    case machine::Status::Lightning: return kExitLightning;
    case machine::Status::OutOfFuel: return kExitOutOfFuel;
    }
    return kExitInternal;
}

int cmd_ni_check(const Common& c, const NiArgs& a) {
    const auto seed = *c.seed;
    echo_seed(c, seed);
    const auto p = load_program(c, a.input);
    if (!p) {
        return kExitRejected;
    }
    verify::VerifyOptions vopts;
    vopts.allow_implicit = c.warn_implicit;
    const auto v = verify::verify(*p, vopts);
    if (!v.accepted) {
        print_diagnostics(c, v);
        std::cerr << a.input << ": rejected by the verifier; ni-check needs a verified program\n";
        return kExitRejected;
    }
    const auto trusted = a.leaky ? machine::TrustedRegistry::builtins_with_leaky() : machine::TrustedRegistry::builtins();
    harness::NiReport report;
    report.programs_tested = 1;
    report.pairs_per_program = static_cast<std::uint64_t>(a.pairs);
    report.verdicts = harness::ni_check(*p, trusted, a.pairs, a.fuel, seed);
    for (auto& verdict : report.verdicts) {
        verdict.program_seed = seed;
    }
    const auto text = harness::to_jsonl(report);
    if (!a.report.empty()) {
        write_atomic(a.report, text);
    }
    const auto violations = report.count(harness::NiOutcome::Violation);
    if (c.json) {
        std::cout << text;
    } else {
        for (const auto o : {harness::NiOutcome::Equivalent, harness::NiOutcome::OneBottom,
                             harness::NiOutcome::BothNonTerm, harness::NiOutcome::Violation}) {
            std::cout << harness::to_string(o) << "=" << report.count(o) << "\n";
        }
        for (const auto& verdict : report.verdicts) {
            if (verdict.outcome == harness::NiOutcome::Violation) {
                std::cout << "violation pair=" << verdict.pair_id << " pair_seed=" << verdict.pair_seed << "\n";
            }
        }
    }
    return violations == 0 ? kExitOk : kExitRejected;
}

int cmd_mutate_audit(const Common& c, const CorpusArgs& a) {
    const auto seed = *c.seed;
    echo_seed(c, seed);
    const auto corpus = harness::build_corpus(seed, static_cast<std::size_t>(a.programs), {a.helpers, a.budget},
                                              exec_of(c));
    const auto audit = harness::mutation_audit(corpus, exec_of(c));
    const auto text = harness::to_jsonl(audit);
    if (!a.report.empty()) {
        write_atomic(a.report, text);
    }
    bool all_rejected = true;
    if (c.json) {
        std::cout << text;
    } else {
        std::cout << std::left << std::setw(22) << "kind" << std::setw(12) << "applicable" << std::setw(10)
                  << "rejected" << "matched\n";
    }
    for (const auto k : harness::kAllMutations) {
        const auto s = audit.summary(k);
        all_rejected &= s.rejected == s.applicable;
        if (!c.json) {
            std::cout << std::left << std::setw(22) << harness::to_string(k) << std::setw(12)
                      << (std::to_string(s.applicable) + "/" + std::to_string(s.programs)) << std::setw(10)
                      << s.rejected << s.matched << "\n";
        }
    }
    return all_rejected ? kExitOk : kExitRejected;
}

int cmd_fuzz(const Common& c, const CorpusArgs& a) {
    const auto seed = *c.seed;
    echo_seed(c, seed);
    const auto exec = exec_of(c);
    const auto corpus =
        harness::build_corpus(seed, static_cast<std::size_t>(a.programs), {a.helpers, a.budget}, exec);
    const auto trusted = machine::TrustedRegistry::builtins();
    const auto ni = harness::ni_campaign(corpus, trusted, a.pairs, a.fuel, exec);
    const auto lr = harness::lightning_campaign(corpus, trusted, a.runs, a.fuel, exec);

    std::uint64_t inferred = 0, accepted = 0;
    for (const auto& item : corpus) {
        inferred += item.inferred;
        accepted += item.accepted;
    }
    const auto violations = ni.count(harness::NiOutcome::Violation);
    const auto lightning = lr.lightning();
    if (!a.report.empty()) {
        write_atomic((fs::path(a.report) / "corpus.jsonl").string(), harness::to_jsonl(corpus));
        write_atomic((fs::path(a.report) / "ni.jsonl").string(), harness::to_jsonl(ni));
        write_atomic((fs::path(a.report) / "lightning.jsonl").string(), harness::to_jsonl(lr));
    }
    const json summary = {{"programs", corpus.size()},
                          {"inferred", inferred},
                          {"accepted", accepted},
                          {"ni_pairs", ni.verdicts.size()},
                          {"violations", violations},
                          {"one_bottom", ni.count(harness::NiOutcome::OneBottom)},
                          {"both_nonterm", ni.count(harness::NiOutcome::BothNonTerm)},
                          {"lightning_runs", lr.runs.size()},
                          {"lightning", lightning}};
    if (c.json) {
        std::cout << summary.dump() << "\n";
    } else {
        for (const auto& [k, val] : summary.items()) {
            std::cout << k << "=" << val.dump() << "\n";
        }
    }
    return accepted == inferred && violations == 0 && lightning == 0 ? kExitOk : kExitRejected;
}

int cmd_layout(const Common& c, const LayoutArgs& a) {
    const auto l = make_layout(c, a.public_size, a.private_size, a.stack_offset);
    const std::uint64_t stride = l.private_base - l.public_base;
    const std::vector<std::pair<std::string, std::uint64_t>> sizes = {
        {"guard_low", l.guard_low},         {"usable", l.public_size},       {"guard_between", l.guard_between},
        {"stride", stride},                 {"stack_offset", l.stack_offset}, {"private_size", l.private_size},
        {"trusted_size", l.trusted_size},   {"guard_reach", instrument::guard_reach(l)},
    };
    const std::vector<std::pair<std::string, std::uint64_t>> bases = {
        {"public_base", l.public_base}, {"private_base", l.private_base}, {"trusted_base", l.trusted_base}};
    if (c.json) {
        json j = {{"scheme", c.scheme}};
        for (const auto& [k, v] : sizes) {
            j[k] = v;
        }
        for (const auto& [k, v] : bases) {
            j[k] = v;
        }
        std::cout << j.dump() << "\n";
        return kExitOk;
    }
    std::cout << "scheme=" << c.scheme << "\n";
    for (const auto& [k, v] : bases) {
        std::cout << k << "=" << hex(v) << "\n";
    }
    for (const auto& [k, v] : sizes) {
        std::cout << k << "=" << v << " (" << human_size(v) << ")\n";
    }
    return kExitOk;
}

} // namespace confir::cli
