#pragma once

#include <map>
#include <string>

#include "seqee/errors.hpp"
#include "seqee/linalg.hpp"

namespace seqee {

// Flat "key = value" config text with '#' comments and an `include <path>`
// directive (paths resolve relative to the including file; later assignments
// win, so a file that includes a preset can override it).
class KvConfig {
public:
    static KvConfig load_file(const std::string& path);
    static KvConfig parse(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    std::string get_str(const std::string& key, const std::string& fallback) const;
    long get_int(const std::string& key, long fallback) const;
    Real get_real(const std::string& key, Real fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    void parse_stream(std::istream& in, const std::string& origin, const std::string& dir,
                      int depth);
    std::map<std::string, std::string> kv_;
};

}  // namespace seqee
