#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace blink {

/// Ordered `key = value` records. Blank lines and `#` comments are skipped
/// when reading; duplicate keys are rejected.
class KeyValueText {
 public:
  static KeyValueText parse(std::istream& in);
  static KeyValueText parse_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);

  bool contains(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(std::ostream& out) const;
  std::string to_string() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Parse a floating point value. The full token must be consumed.
double parse_double(const std::string& text, const std::string& what);

/// Shortest text that reads back to the same double.
std::string format_double(double value);

/// Write `contents` to `path` via a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace blink
