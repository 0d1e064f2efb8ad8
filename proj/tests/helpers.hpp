#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "serfilter/jdeser.hpp"

namespace testutil {

inline std::filesystem::path fixture(const std::string& rel) {
    return std::filesystem::path(FIXTURE_DIR) / rel;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("missing fixture: " + p.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("missing fixture: " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Same JSONL rendering the CLI uses; golden files are compared byte-for-byte.
inline std::string events_jsonl(const serfilter::ParseResult& r) {
    std::string out;
    for (const auto& e : r.trace.events) {
        nlohmann::json j{{"class", e.class_name},
                         {"kind", serfilter::to_string(e.kind)},
                         {"offset", e.offset}};
        out += j.dump() + "\n";
    }
    if (r.error) {
        out += nlohmann::json{{"error", serfilter::to_string(r.error->kind)},
                              {"detail", r.error->detail}}
                   .dump() +
               "\n";
    } else {
        out += nlohmann::json{{"end", true}}.dump() + "\n";
    }
    return out;
}

}  // namespace testutil
