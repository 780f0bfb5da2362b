#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

namespace drate {

using Json = nlohmann::json;

/// Rejects keys of `obj` outside `allowed`; the message lists the valid keys.
void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                std::string_view context);

[[noreturn]] void throw_field_error(std::string_view context, std::string_view key,
                                    std::string_view detail);

/// Reads obj[key] as T, naming the field on type errors.
template <typename T>
T get_field(const Json& obj, std::string_view key, std::string_view context) {
  try {
    return obj.at(std::string(key)).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw_field_error(context, key, e.what());
  }
}

template <typename T>
T get_field_or(const Json& obj, std::string_view key, T fallback, std::string_view context) {
  if (!obj.contains(std::string(key))) return fallback;
  return get_field<T>(obj, key, context);
}

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

/// Strict full-string parse; returns false on any trailing garbage.
bool parse_double(std::string_view text, double& out);

}  // namespace drate
