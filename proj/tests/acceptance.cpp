// Acceptance run: one PASS/FAIL line per criterion. argv[1] is the confir
// executable, used where a criterion is stated in terms of the CLI.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <sys/wait.h>

#include "confir/harness/harness.hpp"
#include "confir/ir/source.hpp"

using namespace confir;
using namespace confir::harness;

namespace {

// Pinned parameters and time limits (seconds).
constexpr std::uint64_t kBaseSeed = 0xC0FFEE;
constexpr std::size_t kCorpusSize = 600;
constexpr std::uint64_t kMinInferred = 500;
constexpr std::uint64_t kMinMutationPrograms = 200;
constexpr double kMinMatchRate = 0.95;
constexpr std::uint64_t kMinNiPrograms = 200;
constexpr int kPairs = 20;
constexpr int kRuns = 10;
constexpr std::uint64_t kFuel = 10000;
constexpr double kLimitExample = 1, kLimitLayout = 1, kLimitCompile = 120, kLimitMutation = 300;
constexpr double kLimitNi = 600, kLimitLightning = 300, kLimitNegative = 10;

std::string read_fixture(const std::string& name) {
    std::ifstream in(std::string(CONFIR_FIXTURES) + "/" + name);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string shell(const std::string& cmd, int& status) {
    std::string out;
    FILE* f = ::popen(cmd.c_str(), "r");
    if (!f) {
        status = -1;
        return out;
    }
    char buf[512];
    while (std::fgets(buf, sizeof buf, f)) {
        out += buf;
    }
    status = ::pclose(f);
    return out;
}

struct Outcome {
    bool ok = false;
    std::string detail;
};

class Runner {
  public:
    bool all_passed = true;

    void check(int id, const std::string& title, double limit, const std::function<Outcome()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < limit;
        const bool pass = o.ok && in_time;
        all_passed &= pass;
        std::ostringstream line;
        line << (pass ? "PASS" : "FAIL") << " [" << id << "] " << title << ": " << o.detail;
        line.setf(std::ios::fixed);
        line.precision(2);
        line << " (" << secs << " s, limit " << limit << " s" << (in_time ? "" : ", over limit") << ")";
        std::cout << line.str() << std::endl;
    }
};

struct Campaign {
    std::vector<CorpusItem> corpus;
    AuditReport audit;
    NiReport ni;
    LightningReport lightning;
};

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <path-to-confir>\n";
        return 2;
    }
    const std::string confir = argv[1];
    const Exec parallel{true, 0};
    const auto trusted = machine::TrustedRegistry::builtins();
    Runner r;
    Campaign c;

    r.check(1, "worked example magic bits", kLimitExample, [&] {
        const auto sp = ir::parse_source(read_fixture("add_incr.cir"));
        auto res = instrument::compile(sp);
        if (!std::holds_alternative<instrument::Compiled>(res)) {
            return Outcome{false, "add_incr rejected"};
        }
        const auto& p = std::get<instrument::Compiled>(res).program;
        const auto add = p.functions.at("add").magic.call_taints().str();
        const auto incr = p.functions.at("incr").magic.call_taints().str();
        std::string ret = "none";
        const auto& body = p.functions.at("incr").body;
        for (std::size_t i = 0; i + 1 < body.size(); ++i) {
            const auto* call = std::get_if<ir::CallU>(&body[i].cmd);
            if (call && call->callee == "add" && body[i + 1].ret_magic) {
                ret = body[i + 1].ret_magic->str().substr(7, 5);
            }
        }
        const bool ok = add == "11111" && incr == "01111" && ret == "00001" && verify::verify(p).accepted;
        return Outcome{ok, "add=" + add + " incr=" + incr + " ret-after-add=" + ret};
    });

    r.check(2, "segment layout constants", kLimitLayout, [&] {
        int status = 0;
        const auto out = shell("'" + confir + "' layout --scheme segment --json", status);
        std::map<std::string, std::string> kv;
        std::istringstream in(out);
        std::string line;
        std::getline(in, line);
        // {"guard_between":...,...}: pull numbers by key.
        for (const auto* key : {"usable", "guard_between", "stride", "guard_low"}) {
            const auto pos = line.find(std::string("\"") + key + "\":");
            if (pos != std::string::npos) {
                const auto start = pos + std::string(key).size() + 3;
                kv[key] = line.substr(start, line.find_first_of(",}", start) - start);
            }
        }
        constexpr std::uint64_t GiB = instrument::GiB;
        const auto num = [&](const char* k) { return kv.count(k) ? std::stoull(kv[k]) : 0; };
        const bool ok = status == 0 && num("usable") == 4 * GiB && num("guard_between") == 36 * GiB &&
                        num("stride") == 40 * GiB && num("guard_low") >= 2 * GiB;
        return Outcome{ok, "usable=" + std::to_string(num("usable") / GiB) + "GiB guard=" +
                               std::to_string(num("guard_between") / GiB) + "GiB stride=" +
                               std::to_string(num("stride") / GiB) + "GiB low_guard=" +
                               std::to_string(num("guard_low") / GiB) + "GiB"};
    });

    r.check(3, "compile-then-verify completeness", kLimitCompile, [&] {
        c.corpus = build_corpus(kBaseSeed, kCorpusSize, {}, parallel);
        std::uint64_t inferred = 0, accepted = 0;
        for (const auto& item : c.corpus) {
            inferred += item.inferred;
            accepted += item.inferred && item.accepted;
        }
        return Outcome{inferred >= kMinInferred && accepted == inferred,
                       std::to_string(accepted) + "/" + std::to_string(inferred) + " inferred programs accepted"};
    });

    r.check(4, "mutation soundness", kLimitMutation, [&] {
        c.audit = mutation_audit(c.corpus, parallel);
        std::map<std::uint64_t, bool> any_site;
        for (const auto& row : c.audit.rows) {
            any_site[row.program_id] |= row.applicable;
        }
        const auto programs = static_cast<std::uint64_t>(
            std::count_if(any_site.begin(), any_site.end(), [](const auto& kv) { return kv.second; }));
        bool ok = programs >= kMinMutationPrograms;
        std::ostringstream d;
        d << programs << " programs;";
        for (const auto k : kAllMutations) {
            const auto s = c.audit.summary(k);
            ok &= s.rejected == s.applicable;
            d << " " << to_string(k) << " " << s.rejected << "/" << s.applicable;
            if (k == MutationKind::DropAssert || k == MutationKind::FlipMagicTaintBit ||
                k == MutationKind::RetargetStoreRegion) {
                const double rate = s.applicable ? static_cast<double>(s.matched) / static_cast<double>(s.applicable) : 0;
                ok &= s.applicable > 0 && rate >= kMinMatchRate;
                d << " (rule match " << static_cast<int>(rate * 1000) / 10.0 << "%)";
            }
        }
        return Outcome{ok, d.str()};
    });

    r.check(5, "noninterference fuzz", kLimitNi, [&] {
        c.ni = ni_campaign(c.corpus, trusted, kPairs, kFuel, parallel);
        const auto v = c.ni.count(NiOutcome::Violation);
        std::ostringstream d;
        d << c.ni.programs_tested << " programs x " << kPairs << " pairs: " << v << " violations, "
          << c.ni.count(NiOutcome::Equivalent) << " equivalent, " << c.ni.count(NiOutcome::OneBottom)
          << " one-bottom, " << c.ni.count(NiOutcome::BothNonTerm) << " both-nonterminating";
        return Outcome{c.ni.programs_tested >= kMinNiPrograms && v == 0, d.str()};
    });

    r.check(6, "no-lightning fuzz", kLimitLightning, [&] {
        c.lightning = lightning_campaign(c.corpus, trusted, kRuns, kFuel, parallel);
        const auto n = c.lightning.lightning();
        return Outcome{c.lightning.programs_tested >= kMinNiPrograms && n == 0,
                       std::to_string(c.lightning.programs_tested) + " programs x " + std::to_string(kRuns) +
                           " runs: " + std::to_string(n) + " lightning"};
    });

    r.check(7, "negative controls", 3 * kLimitNegative, [&] {
        std::string detail;
        bool ok = true;
        const auto timed = [&](const std::string& name, const std::function<bool()>& f) {
            const auto t0 = std::chrono::steady_clock::now();
            const bool hit = f();
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            ok &= hit && s < kLimitNegative;
            detail += name + (hit ? "=yes " : "=no ");
        };
        timed("(a)leak-witness", [&] {
            const auto sp = ir::parse_source(read_fixture("webserver_leak.cir"));
            const auto res = qualinfer::infer(sp);
            const auto* err = std::get_if<qualinfer::TypeError>(&res);
            if (!err || err->witness.empty()) {
                return false;
            }
            const auto& first = err->witness.front();
            const auto& last = err->witness.back();
            const auto has = [](const qualinfer::Constraint& k, ir::Taint t) {
                return (!k.lhs.is_var && k.lhs.label == t) || (!k.rhs.is_var && k.rhs.label == t);
            };
            return has(first, ir::Taint::H) && has(last, ir::Taint::L);
        });
        timed("(b)leaky-violation", [&] {
            int status = 0;
            const auto out =
                shell("'" + confir + "' ni-check '" + CONFIR_FIXTURES + "/leaky.cir' --leaky --seed 1 2>&1", status);
            return WEXITSTATUS(status) == 3 && out.find("VIOLATION=0") == std::string::npos;
        });
        timed("(c)unguarded-lightning", [&] {
            auto res = instrument::compile(ir::parse_source(read_fixture("unguarded_load.cir")));
            const auto stripped = strip_region_checks(std::get<instrument::Compiled>(res).program);
            return lightning_check(stripped, trusted, kRuns, kFuel, kBaseSeed) > 0;
        });
        return Outcome{ok, detail};
    });

    r.check(8, "determinism", kLimitCompile + kLimitMutation + kLimitNi + kLimitLightning, [&] {
        const auto again = build_corpus(kBaseSeed, kCorpusSize, {}, parallel);
        const auto serial = build_corpus(kBaseSeed, kCorpusSize, {}, {false, 0});
        const auto base = std::array{to_jsonl(c.corpus), to_jsonl(c.audit), to_jsonl(c.ni), to_jsonl(c.lightning)};
        const auto rerun = std::array{to_jsonl(again), to_jsonl(mutation_audit(again, parallel)),
                                      to_jsonl(ni_campaign(again, trusted, kPairs, kFuel, parallel)),
                                      to_jsonl(lightning_campaign(again, trusted, kRuns, kFuel, parallel))};
        const auto ser = std::array{to_jsonl(serial), to_jsonl(mutation_audit(serial, {false, 0})),
                                    to_jsonl(ni_campaign(serial, trusted, kPairs, kFuel, {false, 0})),
                                    to_jsonl(lightning_campaign(serial, trusted, kRuns, kFuel, {false, 0}))};
        const char* names[] = {"corpus", "audit", "ni", "lightning"};
        bool ok = true;
        std::string detail;
        for (std::size_t i = 0; i < base.size(); ++i) {
            const bool same = base[i] == rerun[i] && base[i] == ser[i] && !base[i].empty();
            ok &= same;
            detail += std::string(names[i]) + (same ? "=identical " : "=DIFFERS ");
        }
        detail += "(rerun and serial reference)";
        return Outcome{ok, detail};
    });

    std::cout << (r.all_passed ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED") << std::endl;
    return r.all_passed ? 0 : 1;
}
