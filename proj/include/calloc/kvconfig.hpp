#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cal {

// Flat `key = value` document: one pair per line, '#' comments, blank lines
// ignored. Used for dataset manifests, trainer/attack/grid config files, and
// attack-output manifests.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  void set_f(const std::string& key, double value);
  void set_i(const std::string& key, int64_t value);
  void set_u(const std::string& key, uint64_t value);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;  // throws if absent
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_f(const std::string& key) const;
  double get_f_or(const std::string& key, double fallback) const;
  int64_t get_i(const std::string& key) const;
  int64_t get_i_or(const std::string& key, int64_t fallback) const;
  uint64_t get_u_or(const std::string& key, uint64_t fallback) const;
  bool get_b_or(const std::string& key, bool fallback) const;

  // Comma-separated list value.
  std::vector<std::string> get_list(const std::string& key) const;

  void write_file(const std::string& path) const;
  std::string to_string() const;  // keys in insertion order

  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

// Float formatting that survives a text round trip (max_digits10).
std::string format_float(double v);
std::string format_float32(float v);

}  // namespace cal
