#include "blink/kv_text.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "blink/errors.hpp"

namespace blink {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  double value = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  if (!t.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || t.empty()) {
    throw ParseError("cannot parse '" + text + "' as a number for " + what);
  }
  return value;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

KeyValueText KeyValueText::parse(std::istream& in) {
  KeyValueText kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty key");
    if (kv.contains(key)) throw ParseError("duplicate key '" + key + "'");
    kv.entries_.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KeyValueText KeyValueText::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse(in);
}

void KeyValueText::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KeyValueText::set(const std::string& key, double value) { set(key, format_double(value)); }

bool KeyValueText::contains(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

const std::string& KeyValueText::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw ParseError("missing key '" + key + "'");
}

double KeyValueText::get_double(const std::string& key) const { return parse_double(get(key), key); }

double KeyValueText::get_double(const std::string& key, double fallback) const {
  return contains(key) ? get_double(key) : fallback;
}

long long KeyValueText::get_int(const std::string& key) const {
  const std::string& v = get(key);
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ParseError("cannot parse '" + v + "' as an integer for " + key);
  }
  return out;
}

void KeyValueText::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

std::string KeyValueText::to_string() const {
  std::ostringstream os;
  write(os);
  return os.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp + "'");
    out << contents;
    out.flush();
    if (!out) throw InputError("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw InputError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
  }
}

}  // namespace blink
