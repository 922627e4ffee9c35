#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace vkg {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);

/// Lowercased tokens made of letters, digits, apostrophes and inner hyphens.
std::vector<std::string> word_tokens(std::string_view text);

/// Resolves a shipped data file. $VKG_DATA_DIR overrides the build-time default.
std::filesystem::path data_path(std::string_view name);

/// One entry per line; blank lines and '#' comments skipped; entries trimmed.
std::vector<std::string> read_word_list(const std::filesystem::path& path);

const std::unordered_set<std::string>& default_stopwords();

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace vkg
