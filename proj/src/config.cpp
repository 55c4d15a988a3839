#include "ktts/config.hpp"

#include <fstream>
#include <sstream>

namespace ktts::cfg {

namespace {
std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}
}  // namespace

KvMap parse_kv(const std::string& text) {
  KvMap kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw DataError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

KvMap parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv(buf.str());
}

std::string dump_kv(const KvMap& kv) {
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  return out.str();
}

std::string get_string(const KvMap& kv, const std::string& key, const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

int64_t get_int(const KvMap& kv, const std::string& key, int64_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t pos = 0;
    int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': '" + it->second + "' is not an integer");
  }
}

Scalar get_scalar(const KvMap& kv, const std::string& key, Scalar fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t pos = 0;
    Scalar v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw DataError("config key '" + key + "': '" + it->second + "' is not a number");
  }
}

std::vector<int> get_ints(const KvMap& kv, const std::string& key,
                          const std::vector<int>& fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::vector<int> out;
  std::istringstream in(it->second);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw DataError("config key '" + key + "': '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw DataError("config key '" + key + "': empty list");
  return out;
}

std::string ints_to_string(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace ktts::cfg
