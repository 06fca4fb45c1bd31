#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace persona {

/// Case-fold (ASCII), trim, and collapse internal whitespace runs to a single
/// space. Bytes outside ASCII pass through unchanged.
std::string normalize_text(std::string_view text);

std::string trim(std::string_view text);

/// Splits on ASCII whitespace; empty tokens are dropped.
std::vector<std::string> whitespace_tokens(std::string_view text);

/// Number of whitespace-delimited tokens. Default tokenizer for budgets.
std::size_t whitespace_token_count(std::string_view text);

/// Lowercased alphanumeric runs (apostrophes dropped), minus a small English
/// stopword list. Used for lexical keyword matching.
std::vector<std::string> keyword_tokens(std::string_view text);

bool is_stopword(std::string_view token);

std::vector<std::string> split(std::string_view text, char sep);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with_ci(std::string_view text, std::string_view prefix);

std::string to_lower(std::string_view text);

}  // namespace persona
