#include "matchlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>

#include <json.hpp>

#include "matchlab/error.hpp"

namespace matchlab::config {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
  T out{};
  const char* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (value.empty() || res.ec != std::errc() || res.ptr != end) bad(key, value, expected);
  return out;
}

}  // namespace

KeyValues KeyValues::parse(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    kv.entries_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in, path);
}

void KeyValues::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::optional<std::string> KeyValues::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> KeyValues::unknown_key(const std::vector<std::string>& allowed) const {
  for (const auto& [key, value] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) return key;
  }
  return std::nullopt;
}

std::string KeyValues::echo_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [key, value] : entries_) j[key] = value;
  return j.dump();
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  return parse_number<std::uint64_t>(key, value, "an unsigned integer");
}

int to_int(const std::string& key, const std::string& value) {
  return parse_number<int>(key, value, "an integer");
}

double to_real(const std::string& key, const std::string& value) {
  return parse_number<double>(key, value, "a real number");
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad(key, value, "true or false");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    const std::string item = trim(value.substr(start, comma == std::string::npos ? comma : comma - start));
    const auto n = parse_number<std::size_t>(key, item, "a comma-separated list of positive integers");
    if (n == 0) bad(key, value, "a comma-separated list of positive integers");
    out.push_back(n);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace matchlab::config
