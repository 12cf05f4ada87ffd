#pragma once

#include <json.hpp>

#include <cmath>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace vlab::scheme::detail {

// Strict reader for a JSON object: rejects unknown keys and wrong types.
// Error is the exception type thrown with a message prefixed by `where`.
template <class Error>
class Fields {
public:
    Fields(const nlohmann::json& obj, std::string where, std::initializer_list<std::string_view> allowed)
        : Fields(obj, std::move(where), std::vector<std::string_view>(allowed))
    {
    }

    Fields(const nlohmann::json& obj, std::string where, const std::vector<std::string_view>& allowed)
        : obj_(obj), where_(std::move(where))
    {
        if (!obj_.is_object())
            fail("expected an object");
        for (const auto& [key, _] : obj_.items()) {
            bool ok = false;
            for (auto a : allowed)
                ok = ok || a == key;
            if (!ok)
                fail("unknown field '" + key + "'");
        }
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const nlohmann::json& raw(const std::string& key) const
    {
        if (!has(key))
            fail("missing field '" + key + "'");
        return obj_.at(key);
    }

    std::string str(const std::string& key) const
    {
        const nlohmann::json& v = raw(key);
        if (!v.is_string())
            fail("field '" + key + "' must be a string");
        return v.get<std::string>();
    }

    std::string str_or(const std::string& key, std::string fallback) const
    {
        return has(key) ? str(key) : fallback;
    }

    double num(const std::string& key) const
    {
        const nlohmann::json& v = raw(key);
        if (!v.is_number())
            fail("field '" + key + "' must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d))
            fail("field '" + key + "' must be finite");
        return d;
    }

    bool boolean(const std::string& key) const
    {
        const nlohmann::json& v = raw(key);
        if (!v.is_boolean())
            fail("field '" + key + "' must be a boolean");
        return v.get<bool>();
    }

    const nlohmann::json& array(const std::string& key) const
    {
        const nlohmann::json& v = raw(key);
        if (!v.is_array())
            fail("field '" + key + "' must be an array");
        return v;
    }

    [[noreturn]] void fail(const std::string& what) const { throw Error(where_ + ": " + what); }

private:
    const nlohmann::json& obj_;
    std::string where_;
};

} // namespace vlab::scheme::detail
