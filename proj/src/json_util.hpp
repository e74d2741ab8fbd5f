#pragma once

// Strict JSON field access shared by the config and file readers.

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "pml/errors.hpp"
#include "pml/geometry.hpp"
#include "pml/pillar_grid.hpp"

namespace pml::detail {

using Json = nlohmann::json;

inline std::string join_path(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
}

inline void require_object(const Json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError("'" + (where.empty() ? std::string("<root>") : where) + "' must be an object");
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    require_object(j, where);
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key '" + join_path(where, key) + "'");
    }
}

template <typename T>
T get_as(const Json& j, const std::string& key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::out_of_range&) {
        throw ConfigError("missing key '" + join_path(where, key) + "'");
    } catch (const nlohmann::json::type_error&) {
        throw ConfigError("key '" + join_path(where, key) + "' has the wrong type");
    }
}

/// Overwrites `out` only when `key` is present.
template <typename T>
void read_optional(const Json& j, const std::string& key, T& out, const std::string& where) {
    if (j.contains(key)) out = get_as<T>(j, key, where);
}

inline std::vector<double> get_numbers(const Json& j, const std::string& key, std::size_t n, const std::string& where) {
    const auto v = get_as<std::vector<double>>(j, key, where);
    if (v.size() != n) {
        throw ConfigError("key '" + join_path(where, key) + "' must hold " + std::to_string(n) + " numbers");
    }
    return v;
}

inline Mat3 get_mat3(const Json& j, const std::string& key, const std::string& where) {
    const auto v = get_numbers(j, key, 9, where);
    Mat3 m;
    m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
    return m;
}

inline Vec3 get_vec3(const Json& j, const std::string& key, const std::string& where) {
    const auto v = get_numbers(j, key, 3, where);
    return {v[0], v[1], v[2]};
}

inline Vec2 get_vec2(const Json& j, const std::string& key, const std::string& where) {
    const auto v = get_numbers(j, key, 2, where);
    return {v[0], v[1]};
}

inline Json mat3_json(const Mat3& m) {
    Json out = Json::array();
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
    }
    return out;
}

inline Json vec_json(const Eigen::VectorXd& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

inline GridSpec grid_from_json(const Json& j, const std::string& where) {
    reject_unknown(j, {"x_min", "x_max", "y_min", "y_max", "cell_size"}, where);
    GridSpec g;
    read_optional(j, "x_min", g.x_min, where);
    read_optional(j, "x_max", g.x_max, where);
    read_optional(j, "y_min", g.y_min, where);
    read_optional(j, "y_max", g.y_max, where);
    read_optional(j, "cell_size", g.cell_size, where);
    g.validate();
    return g;
}

inline Json grid_to_json(const GridSpec& g) {
    return {{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min}, {"y_max", g.y_max}, {"cell_size", g.cell_size}};
}

inline Json parse_json(std::string_view text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(what + " is not valid JSON: " + e.what(), e.byte);
    }
}

}  // namespace pml::detail
