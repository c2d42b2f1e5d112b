#pragma once

// Shared parser for the plain-text key=value manifests (index metadata,
// cluster model profiles). Lines are trimmed; blank lines and #-comments are
// skipped. Not installed; file formats stay owned by their modules.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "strata/errors.hpp"

namespace strata::detail {

inline std::map<std::string, std::string> parse_kv_file(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=', first);
        if (eq == std::string::npos)
            throw FormatError(path.string() + ": expected key=value, got '" + line +
                              "'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline const std::string& require_key(const std::map<std::string, std::string>& kv,
                                      const std::string& key,
                                      const std::filesystem::path& path) {
    auto it = kv.find(key);
    if (it == kv.end())
        throw FormatError(path.string() + ": missing key '" + key + "'");
    return it->second;
}

inline std::uint64_t parse_u64(const std::map<std::string, std::string>& kv,
                               const std::string& key,
                               const std::filesystem::path& path) {
    try {
        return std::stoull(require_key(kv, key, path));
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": bad value for '" + key + "'");
    }
}

inline double parse_f64(const std::map<std::string, std::string>& kv,
                        const std::string& key,
                        const std::filesystem::path& path) {
    try {
        return std::stod(require_key(kv, key, path));
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": bad value for '" + key + "'");
    }
}

} // namespace strata::detail
