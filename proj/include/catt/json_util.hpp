// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace catt {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                                const std::string& what) {
  if (!j.is_object()) throw std::invalid_argument(what + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || item.key() == k;
    if (!known) throw std::invalid_argument("unknown key '" + item.key() + "' in " + what);
  }
}

// Overwrites `out` when the key is present; type errors name the key.
template <typename V>
void read_key(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument(std::string("bad value for '") + key + "'");
  }
}

}  // namespace catt
