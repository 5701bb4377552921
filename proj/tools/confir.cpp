// confir: compile, verify, run and fuzz confidential IR programs.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace confir::cli;

namespace {

std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("CONFIR_SEED");
    if (!s || !*s) {
        return std::nullopt;
    }
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used, 0);
        if (used != std::string(s).size()) {
            throw UsageError("");
        }
        return v;
    } catch (...) {
        throw UsageError(std::string("CONFIR_SEED is not a number: ") + s);
    }
}

void add_common(CLI::App* sub, Common& c, bool seed, bool scheme, bool jobs) {
    sub->add_flag("--json", c.json, "JSON-lines output on stdout");
    if (seed) {
        sub->add_option("--seed", c.seed, "Random seed (falls back to CONFIR_SEED)");
    }
    if (scheme) {
        sub->add_option("--scheme", c.scheme, "Region scheme")->check(CLI::IsMember({"mpx", "segment"}));
    }
    if (jobs) {
        sub->add_option("--jobs", c.jobs, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
        sub->add_flag("--serial", c.serial, "Use the serial reference implementation");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compile, verify and test confidential IR programs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "confir 1.0");

    Common common;
    CompileArgs compile;
    std::string verify_input;
    RunArgs run;
    NiArgs ni;
    CorpusArgs audit;
    CorpusArgs fuzz;
    LayoutArgs layout;

    auto* c = app.add_subcommand("compile", "Infer, instrument and write a .ccfg container");
    c->add_option("input", compile.input, ".cir source")->required()->check(CLI::ExistingFile);
    c->add_option("-o,--output", compile.output, "Output path (default: input with .ccfg)");
    c->add_flag("--listing", compile.listing, "Print the instrumented listing");
    c->add_flag("--warn-implicit", common.warn_implicit, "Branches on private data warn instead of failing");
    c->add_option("--public-size", compile.public_size, "MPX public region size in cells");
    c->add_option("--private-size", compile.private_size, "MPX private region size in cells");
    c->add_option("--stack-offset", compile.stack_offset, "MPX stack offset in cells");
    add_common(c, common, true, true, false);

    auto* v = app.add_subcommand("verify", "Check a .ccfg container");
    v->add_option("input", verify_input, ".ccfg container")->required()->check(CLI::ExistingFile);
    v->add_flag("--warn-implicit", common.warn_implicit, "Branches on private data warn instead of failing");
    add_common(v, common, false, false, false);

    auto* r = app.add_subcommand("run", "Execute a .ccfg container on the abstract machine");
    r->add_option("input", run.input, ".ccfg container")->required()->check(CLI::ExistingFile);
    r->add_option("--entry-args", run.entry_args, "Initial values: rK=V or global[=index]=V")->expected(0, -1);
    r->add_option("--fuel", run.fuel, "Step budget");
    r->add_option("--trusted-seed", run.trusted_seed, "Seed for t_read_secret");
    r->add_flag("--leaky", run.leaky, "Register t_leaky");
    add_common(r, common, false, false, false);

    auto* n = app.add_subcommand("ni-check", "Noninterference fuzzing of one program");
    n->add_option("input", ni.input, ".ccfg container or .cir source")->required()->check(CLI::ExistingFile);
    n->add_option("--pairs", ni.pairs, "Low-equivalent pairs")->check(CLI::PositiveNumber);
    n->add_option("--fuel", ni.fuel, "Step budget per run");
    n->add_flag("--leaky", ni.leaky, "Register t_leaky (negative control)");
    n->add_option("--report", ni.report, "JSON-lines report path");
    add_common(n, common, true, true, false);

    const auto corpus_options = [](CLI::App* s, CorpusArgs& a) {
        s->add_option("--programs", a.programs, "Generated programs")->check(CLI::PositiveNumber);
        s->add_option("--helpers", a.helpers, "Helper functions per program")->check(CLI::Range(0, 7));
        s->add_option("--budget", a.budget, "Random statements per function")->check(CLI::Range(0, 40));
    };
    auto* m = app.add_subcommand("mutate-audit", "Mutation audit of the verifier over a generated corpus");
    corpus_options(m, audit);
    m->add_option("--report", audit.report, "JSON-lines report path");
    add_common(m, common, true, false, true);

    auto* f = app.add_subcommand("fuzz", "Compile/verify, noninterference and no-lightning campaigns");
    corpus_options(f, fuzz);
    f->add_option("--pairs", fuzz.pairs, "Pairs per program")->check(CLI::NonNegativeNumber);
    f->add_option("--runs", fuzz.runs, "Lightning runs per program")->check(CLI::NonNegativeNumber);
    f->add_option("--fuel", fuzz.fuel, "Step budget per run");
    f->add_option("--report-dir", fuzz.report, "Directory for corpus/ni/lightning .jsonl reports");
    add_common(f, common, true, false, true);

    auto* l = app.add_subcommand("layout", "Print the memory layout of a scheme");
    l->add_option("--public-size", layout.public_size, "MPX public region size in cells");
    l->add_option("--private-size", layout.private_size, "MPX private region size in cells");
    l->add_option("--stack-offset", layout.stack_offset, "MPX stack offset in cells");
    add_common(l, common, false, true, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        const bool seeded = c->parsed() || n->parsed() || m->parsed() || f->parsed();
        if (seeded && !common.seed) {
            common.seed = env_seed();
        }
        if ((n->parsed() || m->parsed() || f->parsed()) && !common.seed) {
            throw UsageError("a seed is required: pass --seed or set CONFIR_SEED");
        }
        if (c->parsed()) {
            return cmd_compile(common, compile);
        }
        if (v->parsed()) {
            return cmd_verify(common, verify_input);
        }
        if (r->parsed()) {
            return cmd_run(common, run);
        }
        if (n->parsed()) {
            return cmd_ni_check(common, ni);
        }
        if (m->parsed()) {
            return cmd_mutate_audit(common, audit);
        }
        if (f->parsed()) {
            return cmd_fuzz(common, fuzz);
        }
        return cmd_layout(common, layout);
    } catch (const UsageError& e) {
        std::cerr << "confir: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "confir: internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
