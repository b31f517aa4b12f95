#include "seqee/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace seqee {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KvConfig KvConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    KvConfig cfg;
    cfg.parse_stream(in, path, std::filesystem::path(path).parent_path().string(), 0);
    return cfg;
}

KvConfig KvConfig::parse(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    KvConfig cfg;
    cfg.parse_stream(in, origin, ".", 0);
    return cfg;
}

void KvConfig::parse_stream(std::istream& in, const std::string& origin, const std::string& dir,
                            int depth) {
    if (depth > 8) throw ConfigError("include depth exceeded at " + origin);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line.substr(0, line.find('#')));
        if (t.empty()) continue;
        if (t.rfind("include ", 0) == 0) {
            std::filesystem::path inc(trim(t.substr(8)));
            if (inc.is_relative()) inc = std::filesystem::path(dir) / inc;
            std::ifstream sub(inc);
            if (!sub) throw ConfigError(origin + ":" + std::to_string(line_no) +
                                        ": cannot open include " + inc.string());
            parse_stream(sub, inc.string(), inc.parent_path().string(), depth + 1);
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        kv_[key] = value;
    }
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

long KvConfig::get_int(const std::string& key, long fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t used = 0;
        const long v = std::stol(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' wants an integer, got '" + it->second + "'");
    }
}

Real KvConfig::get_real(const std::string& key, Real fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t used = 0;
        const Real v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "' wants a number, got '" + it->second + "'");
    }
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "' wants a boolean, got '" + v + "'");
}

}  // namespace seqee
