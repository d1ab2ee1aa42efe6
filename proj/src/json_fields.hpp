// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "dak/errors.hpp"

namespace dak::detail {

// Strict field reader for config documents: every access is recorded so that
// leftover keys can be rejected once parsing finishes.
class FieldReader {
   public:
    FieldReader(const nlohmann::json& doc, std::string context) : doc_(doc), context_(std::move(context)) {
        if (!doc_.is_object()) {
            throw ConfigError(context_ + ": expected a JSON object");
        }
    }

    template <typename T>
    T required(const std::string& key) {
        seen_.insert(key);
        auto it = doc_.find(key);
        if (it == doc_.end()) {
            throw ConfigError(context_ + ": missing required field '" + key + "'");
        }
        return convert<T>(*it, key);
    }

    template <typename T>
    T optional(const std::string& key, T fallback) {
        seen_.insert(key);
        auto it = doc_.find(key);
        if (it == doc_.end() || it->is_null()) {
            return fallback;
        }
        return convert<T>(*it, key);
    }

    bool has(const std::string& key) const { return doc_.contains(key) && !doc_.at(key).is_null(); }

    const nlohmann::json& raw(const std::string& key) {
        seen_.insert(key);
        auto it = doc_.find(key);
        if (it == doc_.end()) {
            throw ConfigError(context_ + ": missing required field '" + key + "'");
        }
        return *it;
    }

    // Throws on the first key that was never read.
    void reject_unknown() const {
        for (const auto& [key, _] : doc_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError(context_ + ": unknown field '" + key + "'");
            }
        }
    }

   private:
    template <typename T>
    T convert(const nlohmann::json& value, const std::string& key) const {
        try {
            if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!value.is_number_integer()) {
                    throw ConfigError(context_ + ": field '" + key + "' must be an integer");
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!value.is_number()) {
                    throw ConfigError(context_ + ": field '" + key + "' must be a number");
                }
            }
            return value.get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(context_ + ": field '" + key + "' has the wrong type (" + e.what() + ")");
        }
    }

    const nlohmann::json& doc_;
    std::string context_;
    std::set<std::string> seen_;
};

}  // namespace dak::detail
