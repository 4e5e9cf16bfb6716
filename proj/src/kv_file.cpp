#include "opal/kv_file.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "opal/error.hpp"

namespace opal {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError(key + ": expected " + expected + ", got \"" + value + "\"");
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

KvFile KvFile::parse(const std::string& text, const std::string& origin) {
  KvFile kv;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    if (kv.contains(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key " + key);
    }
    kv.entries_.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return kv;
}

KvFile KvFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KvFile::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KvFile::set(const std::string& key, double value) { set(key, format_double(value)); }
void KvFile::set(const std::string& key, uint64_t value) { set(key, std::to_string(value)); }
void KvFile::set(const std::string& key, int64_t value) { set(key, std::to_string(value)); }

const std::string* KvFile::find(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::optional<std::string> KvFile::get(const std::string& key) const {
  const std::string* v = find(key);
  return v ? std::optional<std::string>(*v) : std::nullopt;
}

double KvFile::get_double(const std::string& key, std::optional<double> fallback) const {
  const std::string* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    throw ConfigError(key + ": missing");
  }
  if (*v == "nan") return std::nan("");
  double out = 0.0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size()) bad_value(key, *v, "a number");
  return out;
}

uint64_t KvFile::get_u64(const std::string& key, std::optional<uint64_t> fallback) const {
  const std::string* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    throw ConfigError(key + ": missing");
  }
  uint64_t out = 0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size()) bad_value(key, *v, "a non-negative integer");
  return out;
}

int KvFile::get_int(const std::string& key, std::optional<int> fallback) const {
  const std::string* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    throw ConfigError(key + ": missing");
  }
  int out = 0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size()) bad_value(key, *v, "an integer");
  return out;
}

bool KvFile::get_bool(const std::string& key, std::optional<bool> fallback) const {
  const std::string* v = find(key);
  if (!v) {
    if (fallback) return *fallback;
    throw ConfigError(key + ": missing");
  }
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  bad_value(key, *v, "true or false");
}

std::vector<std::string> KvFile::unknown_keys(const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  }
  return out;
}

std::string KvFile::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

void KvFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << to_string();
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

}  // namespace opal
