// Campaign drivers. Each job writes into its own pre-sized slot, so the
// serial loop and the OpenMP loop produce identical, index-ordered results.

#include <algorithm>
#include <exception>
#include <mutex>

#include <omp.h>

#include "confir/harness/harness.hpp"

namespace confir::harness {

using namespace confir::ir;

namespace {

template <typename F>
void for_each_index(std::size_t n, const Exec& exec, F&& f) {
    if (!exec.parallel) {
        for (std::size_t i = 0; i < n; ++i) {
            f(i);
        }
        return;
    }
    const int threads = exec.jobs > 0 ? exec.jobs : omp_get_max_threads();
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (std::int64_t i = 0; i < count; ++i) {
        try {
            f(static_cast<std::size_t>(i));
        } catch (...) {
            const std::lock_guard lock(error_mutex);
            if (!error) {
                error = std::current_exception();
            }
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

std::vector<const CorpusItem*> accepted_items(const std::vector<CorpusItem>& corpus) {
    std::vector<const CorpusItem*> out;
    for (const auto& c : corpus) {
        if (c.accepted && c.program) {
            out.push_back(&c);
        }
    }
    return out;
}

constexpr std::uint64_t kNiStream = 0x4E49;
constexpr std::uint64_t kLightningStream = 0x4C54;
constexpr std::uint64_t kMutationStream = 0x4D55;

CorpusItem make_item(std::uint64_t base_seed, std::uint64_t id, const GenParams& params) {
    CorpusItem item;
    item.id = id;
    item.seed = derive_seed(base_seed, id);
    const auto sp = gen_program(item.seed, params);
    instrument::CompileOptions opts;
    opts.seed = item.seed;
    auto compiled = instrument::compile(sp, opts);
    if (auto* rej = std::get_if<instrument::Rejected>(&compiled)) {
        item.error = rej->message;
        return item;
    }
    item.inferred = true;
    auto& prog = std::get<instrument::Compiled>(compiled).program;
    const auto verdict = verify::verify(prog);
    item.accepted = verdict.accepted;
    for (const auto& d : verdict.diagnostics) {
        if (d.severity == verify::Severity::Reject) {
            item.error += verify::to_string(d) + "\n";
        }
    }
    item.program = std::move(prog);
    return item;
}

} // namespace

std::vector<CorpusItem> build_corpus(std::uint64_t base_seed, std::size_t count, const GenParams& params,
                                     const Exec& exec) {
    std::vector<CorpusItem> out(count);
    for_each_index(count, exec, [&](std::size_t i) { out[i] = make_item(base_seed, i, params); });
    return out;
}

std::uint64_t NiReport::count(NiOutcome o) const {
    return static_cast<std::uint64_t>(
        std::count_if(verdicts.begin(), verdicts.end(), [&](const NiVerdict& v) { return v.outcome == o; }));
}

NiReport ni_campaign(const std::vector<CorpusItem>& corpus, const machine::TrustedRegistry& trusted, int n_pairs,
                     std::uint64_t fuel, const Exec& exec) {
    const auto items = accepted_items(corpus);
    const auto pairs = static_cast<std::size_t>(std::max(n_pairs, 0));
    NiReport r;
    r.programs_tested = items.size();
    r.pairs_per_program = pairs;
    r.verdicts.resize(items.size() * pairs);
    for_each_index(r.verdicts.size(), exec, [&](std::size_t j) {
        const auto& item = *items[j / pairs];
        const auto pair_id = j % pairs;
        auto v = ni_pair(*item.program, trusted, derive_seed(item.seed ^ kNiStream, pair_id), fuel);
        v.program_id = item.id;
        v.program_seed = item.seed;
        v.pair_id = pair_id;
        r.verdicts[j] = std::move(v);
    });
    return r;
}

std::uint64_t LightningReport::lightning() const {
    return static_cast<std::uint64_t>(std::count_if(runs.begin(), runs.end(), [](const auto& r) {
        return r.second.status == machine::Status::Lightning;
    }));
}

LightningReport lightning_campaign(const std::vector<CorpusItem>& corpus, const machine::TrustedRegistry& trusted,
                                   int n_runs, std::uint64_t fuel, const Exec& exec) {
    const auto items = accepted_items(corpus);
    LightningReport r;
    r.programs_tested = items.size();
    r.runs_per_program = static_cast<std::uint64_t>(std::max(n_runs, 0));
    std::vector<std::vector<LightningRun>> per(items.size());
    for_each_index(items.size(), exec, [&](std::size_t i) {
        per[i] = lightning_runs(*items[i]->program, trusted, n_runs, fuel, items[i]->seed ^ kLightningStream);
    });
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (const auto& run : per[i]) {
            r.runs.emplace_back(items[i]->id, run);
        }
    }
    return r;
}

KindSummary AuditReport::summary(MutationKind k) const {
    KindSummary s;
    for (const auto& row : rows) {
        if (row.kind != k) {
            continue;
        }
        ++s.programs;
        s.applicable += row.applicable;
        s.rejected += row.applicable && row.rejected;
        s.matched += row.applicable && row.rejected && row.matched;
    }
    return s;
}

AuditReport mutation_audit(const std::vector<CorpusItem>& corpus, const Exec& exec) {
    const auto items = accepted_items(corpus);
    constexpr std::size_t kinds = std::size(kAllMutations);
    AuditReport r;
    r.rows.resize(items.size() * kinds);
    for_each_index(r.rows.size(), exec, [&](std::size_t j) {
        const auto& item = *items[j / kinds];
        const auto kind = kAllMutations[j % kinds];
        AuditRow row;
        row.program_id = item.id;
        row.kind = kind;
        try {
            const auto m = mutate(*item.program, kind, derive_seed(item.seed ^ kMutationStream, j % kinds));
            row.applicable = true;
            row.pc = m.pc;
            row.site = m.site;
            row.has_target = !m.targeted.empty();
            const auto verdict = verify::verify(m.program);
            row.rejected = !verdict.accepted;
            for (const auto& d : verdict.diagnostics) {
                if (d.severity != verify::Severity::Reject) {
                    continue;
                }
                const std::string name(verify::rule_name(d.rule));
                if (std::find(row.rules.begin(), row.rules.end(), name) == row.rules.end()) {
                    row.rules.push_back(name);
                }
                row.matched |= std::find(m.targeted.begin(), m.targeted.end(), d.rule) != m.targeted.end();
            }
            if (m.targeted.empty()) {
                row.matched = row.rejected;
            }
        } catch (const NoApplicableSite&) {
            row.applicable = false;
        }
        r.rows[j] = std::move(row);
    });
    return r;
}

} // namespace confir::harness
