#include "bitlab/config.hpp"

#include <fstream>
#include <sstream>

#include "bitlab/error.hpp"
#include "bitlab/textfmt.hpp"

namespace bitlab {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig config;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    const std::string text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ParseError("config: unterminated section header", line_no);
      section = trim(text.substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected key = value", line_no);
    std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ParseError("config: empty key", line_no);
    if (!section.empty()) key = section + "." + key;
    config.entries_[key] = value;
  }
  return config;
}

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  return parse(in);
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyValueConfig::get_string(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(key, "missing required key");
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key) const {
  double out = 0.0;
  if (!parse_double(get_string(key), out)) throw ConfigError(key, "expected a number");
  return out;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
  const std::string text = get_string(key);
  try {
    std::size_t pos = 0;
    const std::int64_t out = std::stoll(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string text = get_string(key);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key, "expected a boolean, got '" + text + "'");
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key) const {
  std::stringstream ss(get_string(key));
  std::string item;
  std::vector<double> out;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!parse_double(trim(item), v)) throw ConfigError(key, "expected numbers, got '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key, "expected a nonempty list");
  return out;
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& key) const {
  std::stringstream ss(get_string(key));
  std::string item;
  std::vector<std::int64_t> out;
  while (std::getline(ss, item, ',')) {
    const std::string text = trim(item);
    try {
      std::size_t pos = 0;
      const std::int64_t v = std::stoll(text, &pos);
      if (pos != text.size()) throw std::invalid_argument(text);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(key, "expected integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError(key, "expected a nonempty list");
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

}  // namespace bitlab
