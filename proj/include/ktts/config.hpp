#pragma once

#include <map>
#include <string>
#include <vector>

#include "ktts/types.hpp"

// Key-value text config: one `key = value` per line, '#' starts a comment.
// Used for training configs and for the config snapshot embedded in
// checkpoints.
namespace ktts::cfg {

using KvMap = std::map<std::string, std::string>;

KvMap parse_kv(const std::string& text);
KvMap parse_kv_file(const std::string& path);
std::string dump_kv(const KvMap& kv);

std::string get_string(const KvMap& kv, const std::string& key, const std::string& fallback);
int64_t get_int(const KvMap& kv, const std::string& key, int64_t fallback);
Scalar get_scalar(const KvMap& kv, const std::string& key, Scalar fallback);
// Comma-separated integer list.
std::vector<int> get_ints(const KvMap& kv, const std::string& key,
                          const std::vector<int>& fallback);

std::string ints_to_string(const std::vector<int>& v);

}  // namespace ktts::cfg
