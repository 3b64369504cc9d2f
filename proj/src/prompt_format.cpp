#include "npcviz/prompt_format.hpp"

#include <cctype>

#include <fmt/format.h>

namespace npcviz::prompt {
namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

std::size_t find_line(std::string_view text, std::string_view line) {
    std::size_t pos = 0;
    while ((pos = text.find(line, pos)) != std::string_view::npos) {
        const bool starts_line = pos == 0 || text[pos - 1] == '\n';
        const std::size_t end = pos + line.size();
        const bool ends_line = end == text.size() || text[end] == '\n' || text[end] == '\r';
        if (starts_line && ends_line) return pos;
        pos = end;
    }
    return std::string_view::npos;
}

}  // namespace

std::string section_header(int number) {
    return fmt::format("=== [{}] {} ===", number, kSectionTitles.at(static_cast<std::size_t>(number - 1)));
}

std::optional<std::string_view> extract_section(std::string_view prompt, int number) {
    if (number < 1 || number > kSectionCount) return std::nullopt;
    const std::string header = section_header(number);
    const std::size_t at = find_line(prompt, header);
    if (at == std::string_view::npos) return std::nullopt;
    std::size_t begin = at + header.size();
    if (begin < prompt.size() && prompt[begin] == '\n') ++begin;
    std::size_t end = begin;
    while (end < prompt.size()) {
        if (prompt.compare(end, 4, "=== ") == 0) break;
        const std::size_t nl = prompt.find('\n', end);
        end = nl == std::string_view::npos ? prompt.size() : nl + 1;
    }
    return prompt.substr(begin, end - begin);
}

bool has_all_sections(std::string_view prompt) {
    std::size_t last = 0;
    for (int n = 1; n <= kSectionCount; ++n) {
        const std::string header = section_header(n);
        const std::size_t at = find_line(prompt, header);
        if (at == std::string_view::npos || (n > 1 && at <= last)) return false;
        if (find_line(prompt.substr(at + header.size()), header) != std::string_view::npos) return false;
        last = at;
    }
    return true;
}

std::optional<std::string> field_value(std::string_view text, std::string_view key) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        if (line.size() > key.size() + 1 && line.substr(0, key.size()) == key && line[key.size()] == ':') {
            std::string_view value = line.substr(key.size() + 1);
            while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
            while (!value.empty() && (value.back() == ' ' || value.back() == '\r')) value.remove_suffix(1);
            return std::string(value);
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return std::nullopt;
}

std::vector<std::string> numeric_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const auto digits_from = [&](std::size_t at) {
        while (at < text.size() && is_digit(text[at])) ++at;
        return at;
    };
    while (i < text.size()) {
        const bool minus = text[i] == '-' && i + 1 < text.size() && is_digit(text[i + 1]);
        if (!(is_digit(text[i]) || minus)) {
            ++i;
            continue;
        }
        const bool glued = i > 0 && (is_word(text[i - 1]) || text[i - 1] == '.');
        std::size_t end = digits_from(minus ? i + 1 : i);
        if (end + 1 < text.size() && text[end] == '.' && is_digit(text[end + 1])) {
            end = digits_from(end + 1);
        } else if (end + 1 < text.size() && text[end] == '/' && is_digit(text[end + 1])) {
            end = digits_from(end + 1);
        }
        const bool glued_after = end < text.size() && is_word(text[end]);
        if (!glued && !glued_after) {
            tokens.emplace_back(text.substr(i, end - i));
        }
        // Skip the rest of a glued word so its trailing digits are not picked up.
        while (glued_after && end < text.size() && is_word(text[end])) ++end;
        i = end;
    }
    return tokens;
}

}  // namespace npcviz::prompt
