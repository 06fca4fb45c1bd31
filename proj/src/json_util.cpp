#include "json_util.hpp"

namespace persona::detail {

nlohmann::json parse_json(std::string_view text, std::string_view what) {
  try {
    return nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t offset = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError("malformed " + std::string(what) + " JSON", line, column);
  }
}

const nlohmann::json& require(const nlohmann::json& j, std::string_view field) {
  if (!j.is_object()) throw ParseError("expected an object holding '" + std::string(field) + "'");
  const auto it = j.find(field);
  if (it == j.end()) throw ParseError("missing field '" + std::string(field) + "'");
  return *it;
}

std::string require_string(const nlohmann::json& j, std::string_view field) {
  const auto& v = require(j, field);
  if (!v.is_string()) throw ParseError("field '" + std::string(field) + "' must be a string");
  return v.get<std::string>();
}

std::string optional_string(const nlohmann::json& j, std::string_view field, std::string fallback) {
  if (!j.is_object()) return fallback;
  const auto it = j.find(field);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw ParseError("field '" + std::string(field) + "' must be a string");
  return it->get<std::string>();
}

std::uint32_t require_index(const nlohmann::json& j, std::string_view field) {
  const auto& v = require(j, field);
  if (!v.is_number_unsigned()) {
    throw ParseError("field '" + std::string(field) + "' must be a non-negative integer");
  }
  return v.get<std::uint32_t>();
}

}  // namespace persona::detail
