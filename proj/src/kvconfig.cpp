#include "calloc/kvconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cal {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::string format_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_float32(float v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("kvconfig: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str());
}

KvConfig KvConfig::parse_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("kvconfig: line " + std::to_string(lineno) +
                               " is not 'key = value'");
    cfg.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  return cfg;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  if (values_.find(key) == values_.end()) order_.push_back(key);
  values_[key] = value;
}

void KvConfig::set_f(const std::string& key, double value) { set(key, format_float(value)); }
void KvConfig::set_i(const std::string& key, int64_t value) { set(key, std::to_string(value)); }
void KvConfig::set_u(const std::string& key, uint64_t value) { set(key, std::to_string(value)); }

bool KvConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& KvConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("kvconfig: missing key '" + key + "'");
  return it->second;
}

std::string KvConfig::get_or(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_f(const std::string& key) const {
  const std::string& s = get(key);
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::logic_error&) {
    pos = 0;  // stod refused the prefix entirely
  }
  if (pos != s.size()) throw std::runtime_error("kvconfig: '" + key + "' is not a number");
  return v;
}

double KvConfig::get_f_or(const std::string& key, double fallback) const {
  return has(key) ? get_f(key) : fallback;
}

int64_t KvConfig::get_i(const std::string& key) const {
  const std::string& s = get(key);
  size_t pos = 0;
  int64_t v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::logic_error&) {
    pos = 0;
  }
  if (pos != s.size()) throw std::runtime_error("kvconfig: '" + key + "' is not an integer");
  return v;
}

int64_t KvConfig::get_i_or(const std::string& key, int64_t fallback) const {
  return has(key) ? get_i(key) : fallback;
}

uint64_t KvConfig::get_u_or(const std::string& key, uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = get(key);
  size_t pos = 0;
  uint64_t v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::logic_error&) {
    pos = 0;
  }
  if (pos != s.size()) throw std::runtime_error("kvconfig: '" + key + "' is not an integer");
  return v;
}

bool KvConfig::get_b_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::runtime_error("kvconfig: '" + key + "' is not a boolean");
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::string KvConfig::to_string() const {
  std::string out;
  for (const std::string& k : order_) {
    out += k;
    out += " = ";
    out += values_.at(k);
    out += "\n";
  }
  return out;
}

void KvConfig::write_file(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("kvconfig: cannot write " + path);
  f << to_string();
  if (!f) throw std::runtime_error("kvconfig: write failed for " + path);
}

}  // namespace cal
