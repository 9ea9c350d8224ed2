#pragma once

#include <iosfwd>
#include <map>
#include <string>

namespace lfiw {

/// Ordered key -> value settings read from "key = value" lines.
using KeyValues = std::map<std::string, std::string>;

/// Blank lines and lines starting with '#' are skipped; anything else
/// without '=' is an error (std::invalid_argument). Whitespace around keys and
/// values is trimmed.
KeyValues parse_key_values(std::istream& in);
KeyValues load_key_values(const std::string& path);
void write_key_values(std::ostream& out, const KeyValues& kv);

double get_double(const KeyValues& kv, const std::string& key, double fallback);
long get_long(const KeyValues& kv, const std::string& key, long fallback);
bool get_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace lfiw
