#include <charconv>
#include <cmath>
#include <system_error>

#include "drate/error.hpp"
#include "drate/json_util.hpp"

namespace drate {

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                std::string_view context) {
  if (!obj.is_object()) throw InvalidParameter(std::string(context) + ": expected a JSON object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || item.key() == a;
    if (known) continue;
    std::string valid;
    for (auto a : allowed) {
      if (!valid.empty()) valid += ", ";
      valid += a;
    }
    throw InvalidParameter(std::string(context) + ": unknown key '" + item.key() +
                           "' (valid keys: " + valid + ")");
  }
}

void throw_field_error(std::string_view context, std::string_view key, std::string_view detail) {
  throw InvalidParameter(std::string(context) + "." + std::string(key) + ": " + std::string(detail));
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace drate
