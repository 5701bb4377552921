#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "confir/instrument/instrument.hpp"
#include "confir/ir/source.hpp"

namespace confir::test {

inline std::string fixture(const std::string& name) {
    std::ifstream in(std::string(CONFIR_FIXTURES) + "/" + name);
    if (!in) {
        throw std::runtime_error("missing fixture " + name);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Compiles source text; throws if inference rejects it.
inline ir::Program compile_text(const std::string& text, std::uint64_t seed = 0) {
    instrument::CompileOptions opts;
    opts.seed = seed;
    auto r = instrument::compile(ir::parse_source(text), opts);
    if (auto* rej = std::get_if<instrument::Rejected>(&r)) {
        throw std::runtime_error("rejected: " + rej->message);
    }
    return std::get<instrument::Compiled>(std::move(r)).program;
}

inline const ir::Node* find_node(const ir::FuncInfo& f, std::uint64_t pc) {
    for (const auto& n : f.body) {
        if (n.pc == pc) {
            return &n;
        }
    }
    return nullptr;
}

} // namespace confir::test
