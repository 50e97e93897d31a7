// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "lgd/error.hpp"

namespace lgd::json_util {

/// Strict reader over a JSON object: every key must be consumed by get() or
/// require() before finish(), otherwise the unknown keys are reported.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <typename T>
  bool get(const std::string& key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return false;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
    return true;
  }

  template <typename T>
  void require(const std::string& key, T& out) {
    if (!get(key, out)) throw ConfigError(where_ + ": missing required field '" + key + "'");
  }

  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    std::string unknown;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
    }
    if (!unknown.empty()) throw ConfigError(where_ + ": unknown field(s): " + unknown);
  }

  const std::string& where() const noexcept { return where_; }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace lgd::json_util
