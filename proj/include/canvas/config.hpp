#pragma once

#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "canvas/errors.hpp"

namespace canvas {

using Json = nlohmann::json;

inline Json load_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file: " + path);
    try {
        return Json::parse(f);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

/// Read-only view over one JSON object that remembers which keys were
/// consumed. done() rejects everything left over, so configs with typos or
/// stale keys fail loudly instead of being silently ignored.
class ConfigCursor {
public:
    ConfigCursor(const Json& node, std::string path) : node_(&node), path_(std::move(path)) {
        if (!node_->is_object()) throw ConfigError(path_ + ": expected a JSON object");
    }

    const std::string& path() const noexcept { return path_; }

    bool has(const std::string& key) const { return node_->contains(key); }

    std::int64_t require_i64(const std::string& key) { return as_i64(require(key), key); }
    std::uint64_t require_u64(const std::string& key) { return as_u64(require(key), key); }
    double require_double(const std::string& key) { return as_double(require(key), key); }
    bool require_bool(const std::string& key) { return as_bool(require(key), key); }
    std::string require_string(const std::string& key) { return as_string(require(key), key); }

    int require_int(const std::string& key) {
        const std::int64_t v = require_i64(key);
        if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
            throw ConfigError(path_ + "." + key + ": out of int range");
        return static_cast<int>(v);
    }

    int get_int(const std::string& key, int def) { return has(key) ? require_int(key) : def; }
    std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
        return has(key) ? require_u64(key) : def;
    }
    double get_double(const std::string& key, double def) {
        return has(key) ? require_double(key) : def;
    }
    bool get_bool(const std::string& key, bool def) { return has(key) ? require_bool(key) : def; }
    std::string get_string(const std::string& key, const std::string& def) {
        return has(key) ? require_string(key) : def;
    }

    std::vector<std::uint64_t> require_u64_array(const std::string& key) {
        const Json& a = require_array(key);
        std::vector<std::uint64_t> out;
        for (std::size_t i = 0; i < a.size(); ++i) out.push_back(as_u64(a[i], elem_key(key, i)));
        return out;
    }

    std::vector<double> require_double_array(const std::string& key) {
        const Json& a = require_array(key);
        std::vector<double> out;
        for (std::size_t i = 0; i < a.size(); ++i) out.push_back(as_double(a[i], elem_key(key, i)));
        return out;
    }

    std::vector<std::string> require_string_array(const std::string& key) {
        const Json& a = require_array(key);
        std::vector<std::string> out;
        for (std::size_t i = 0; i < a.size(); ++i) out.push_back(as_string(a[i], elem_key(key, i)));
        return out;
    }

    const Json& require_array(const std::string& key) {
        const Json& v = require(key);
        if (!v.is_array()) throw ConfigError(path_ + "." + key + ": expected an array");
        return v;
    }

    ConfigCursor child(const std::string& key) {
        const Json& v = require(key);
        return ConfigCursor(v, path_ + "." + key);
    }

    /// Cursor over the key's object if present, else over a shared empty
    /// object so every field falls back to its default.
    ConfigCursor child_or_empty(const std::string& key) {
        if (has(key)) return child(key);
        static const Json empty = Json::object();
        return ConfigCursor(empty, path_ + "." + key);
    }

    ConfigCursor element(const std::string& key, const Json& elem, std::size_t index) const {
        return ConfigCursor(elem, elem_key(key, index));
    }

    void done() const {
        std::vector<std::string> unknown;
        for (const auto& item : node_->items())
            if (used_.find(item.key()) == used_.end()) unknown.push_back(item.key());
        if (unknown.empty()) return;
        std::ostringstream msg;
        msg << path_ << ": unknown key";
        if (unknown.size() > 1) msg << "s";
        for (std::size_t i = 0; i < unknown.size(); ++i)
            msg << (i ? ", " : " ") << "\"" << unknown[i] << "\"";
        throw ConfigError(msg.str());
    }

private:
    const Json& require(const std::string& key) {
        if (!node_->contains(key)) throw ConfigError(path_ + ": missing key \"" + key + "\"");
        used_.insert(key);
        return (*node_)[key];
    }

    std::string elem_key(const std::string& key, std::size_t i) const {
        return path_ + "." + key + "[" + std::to_string(i) + "]";
    }

    std::int64_t as_i64(const Json& v, const std::string& key) const {
        if (!v.is_number_integer()) throw ConfigError(path_ + "." + key + ": expected an integer");
        return v.get<std::int64_t>();
    }

    std::uint64_t as_u64(const Json& v, const std::string& key) const {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
            return static_cast<std::uint64_t>(v.get<std::int64_t>());
        throw ConfigError(path_ + "." + key + ": expected a non-negative integer");
    }

    double as_double(const Json& v, const std::string& key) const {
        if (!v.is_number()) throw ConfigError(path_ + "." + key + ": expected a number");
        return v.get<double>();
    }

    bool as_bool(const Json& v, const std::string& key) const {
        if (!v.is_boolean()) throw ConfigError(path_ + "." + key + ": expected a boolean");
        return v.get<bool>();
    }

    std::string as_string(const Json& v, const std::string& key) const {
        if (!v.is_string()) throw ConfigError(path_ + "." + key + ": expected a string");
        return v.get<std::string>();
    }

    const Json* node_;
    std::string path_;
    std::set<std::string> used_;
};

}  // namespace canvas
