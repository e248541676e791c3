#pragma once

// Flat "key=value" text files. Blank lines and lines starting with '#' are
// ignored; whitespace around keys and values is trimmed.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace eqr {

class KeyValues {
public:
    static KeyValues parse(std::string_view text);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Throws InputError naming the first key not in `known`.
    void reject_unknown(const std::set<std::string>& known) const;

private:
    std::map<std::string, std::string> values_;
};

std::string read_text_file(const std::string& path);

}  // namespace eqr
