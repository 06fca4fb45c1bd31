#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "persona/error.hpp"

namespace persona::detail {

/// Parses JSON, converting nlohmann's byte offset into line/column on failure.
nlohmann::json parse_json(std::string_view text, std::string_view what);

const nlohmann::json& require(const nlohmann::json& j, std::string_view field);
std::string require_string(const nlohmann::json& j, std::string_view field);
std::string optional_string(const nlohmann::json& j, std::string_view field, std::string fallback = {});
std::uint32_t require_index(const nlohmann::json& j, std::string_view field);

}  // namespace persona::detail
