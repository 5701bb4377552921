#include <sstream>

#include <json.hpp>

#include "confir/harness/harness.hpp"

namespace confir::harness {

using nlohmann::json;

namespace {

json memory_json(const machine::Memory& m) {
    json j = json::object();
    for (const auto& [addr, v] : m) {
        j[std::to_string(addr)] = v;
    }
    return j;
}

json config_json(const machine::Configuration& s) {
    return {{"pc", s.pc},
            {"rho", s.rho},
            {"sigma_l", s.sigma_l},
            {"sigma_h", s.sigma_h},
            {"mu_l", memory_json(s.mu_l)},
            {"mu_h", memory_json(s.mu_h)}};
}

std::string lines(const std::vector<json>& rows) {
    std::ostringstream out;
    for (const auto& r : rows) {
        out << r.dump() << '\n';
    }
    return out.str();
}

} // namespace

std::string to_jsonl(const std::vector<CorpusItem>& corpus) {
    std::vector<json> rows;
    std::uint64_t inferred = 0, accepted = 0;
    for (const auto& c : corpus) {
        inferred += c.inferred;
        accepted += c.accepted;
        rows.push_back({{"program_id", c.id},
                        {"program_seed", c.seed},
                        {"inferred", c.inferred},
                        {"accepted", c.accepted},
                        {"error", c.error}});
    }
    rows.push_back({{"summary", {{"programs", corpus.size()}, {"inferred", inferred}, {"accepted", accepted}}}});
    return lines(rows);
}

std::string to_jsonl(const NiReport& r) {
    std::vector<json> rows;
    for (const auto& v : r.verdicts) {
        json j = {{"program_id", v.program_id},
                  {"pair_id", v.pair_id},
                  {"program_seed", v.program_seed},
                  {"pair_seed", v.pair_seed},
                  {"outcome", to_string(v.outcome)},
                  {"status", {machine::to_string(v.status0), machine::to_string(v.status1)}},
                  {"steps", {v.steps0, v.steps1}}};
        if (v.witness0 && v.witness1) {
            j["witness"] = {config_json(*v.witness0), config_json(*v.witness1)};
        }
        rows.push_back(std::move(j));
    }
    json summary = {{"programs_tested", r.programs_tested}, {"pairs_per_program", r.pairs_per_program}};
    for (const auto o : {NiOutcome::Equivalent, NiOutcome::OneBottom, NiOutcome::BothNonTerm, NiOutcome::Violation}) {
        summary[std::string(to_string(o))] = r.count(o);
    }
    rows.push_back({{"summary", summary}});
    return lines(rows);
}

std::string to_jsonl(const LightningReport& r) {
    std::vector<json> rows;
    for (const auto& [id, run] : r.runs) {
        rows.push_back({{"program_id", id},
                        {"run_seed", run.run_seed},
                        {"status", machine::to_string(run.status)},
                        {"steps", run.steps}});
    }
    rows.push_back({{"summary",
                     {{"programs_tested", r.programs_tested},
                      {"runs_per_program", r.runs_per_program},
                      {"lightning", r.lightning()}}}});
    return lines(rows);
}

std::string to_jsonl(const AuditReport& r) {
    std::vector<json> rows;
    for (const auto& row : r.rows) {
        json j = {{"program_id", row.program_id}, {"kind", to_string(row.kind)}, {"applicable", row.applicable}};
        if (row.applicable) {
            j["pc"] = row.pc;
            j["site"] = row.site;
            j["rejected"] = row.rejected;
            j["rules"] = row.rules;
            if (row.has_target) {
                j["matched"] = row.matched;
            }
        }
        rows.push_back(std::move(j));
    }
    json summary = json::object();
    for (const auto k : kAllMutations) {
        const auto s = r.summary(k);
        summary[std::string(to_string(k))] = {
            {"programs", s.programs}, {"applicable", s.applicable}, {"rejected", s.rejected}, {"matched", s.matched}};
    }
    rows.push_back({{"summary", summary}});
    return lines(rows);
}

} // namespace confir::harness
