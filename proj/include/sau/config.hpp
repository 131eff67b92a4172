#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace sau {

/// Line-based `key=value` text: blank lines and lines starting with '#' are skipped,
/// whitespace around keys and values is trimmed. Duplicate keys: last one wins.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues load_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

int parse_int(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace sau
