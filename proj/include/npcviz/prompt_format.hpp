#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Wire-level layout of character system prompts. Shared by the prompt
// builder and the stub provider, which reads facts back out of a prompt.
namespace npcviz::prompt {

inline constexpr int kSectionCount = 7;

inline constexpr std::array<std::string_view, kSectionCount> kSectionTitles = {
    "INTERFACE GUIDE", "ROLE", "PERSONA", "MODEL AND DATASET", "STATISTICS", "SELECTED TARGET", "HONESTY",
};

inline constexpr std::string_view kPersonaNameKey = "Persona name";
inline constexpr std::string_view kTargetKindKey = "Target kind";
inline constexpr std::string_view kProjectionPending = "projection pending";
inline constexpr std::string_view kTranscriptTitle = "EARLIER CONVERSATION";

/// "=== [n] TITLE ===" for 1 <= n <= 7.
std::string section_header(int number);

/// Body of section `number`, up to the next "=== " header line.
std::optional<std::string_view> extract_section(std::string_view prompt, int number);

/// True when all seven headers are present, in order, each exactly once.
bool has_all_sections(std::string_view prompt);

/// Value of the first "key: value" line in `text`.
std::optional<std::string> field_value(std::string_view text, std::string_view key);

/// Standalone numbers in reading order: integers, decimals, optional leading
/// minus, and ratios like "8/11". Digits glued to letters or underscores
/// ("class_12", "3rd") are not numbers.
std::vector<std::string> numeric_tokens(std::string_view text);

}  // namespace npcviz::prompt
