#pragma once

#include <string>
#include <string_view>

#include "npcviz/dataset.hpp"
#include "npcviz/geometry.hpp"
#include "npcviz/persona.hpp"
#include "npcviz/prompt_format.hpp"

namespace npcviz::dialogue {

struct PromptOptions {
    // Cluster members listed individually in the target section.
    std::size_t member_list_cap = 40;
    std::size_t top_confusions = 3;
};

/// Builds the seven-section character prompt (see prompt_format.hpp for the
/// section headers). `layout` is null while the projection is pending; the
/// target section then says so instead of giving coordinates. Every number in
/// the target section comes from analytics over `store`.
std::string build_system_prompt(const DatasetStore& store, const Layout* layout, const ChatTarget& target,
                                 const Persona& persona, const PromptOptions& options = {});

/// Fixed formats for numbers quoted to the model.
std::string format_coordinate(double value);   // 4 decimals
std::string format_percent(double fraction);   // fraction * 100, 2 decimals

/// Closest everyday colour word for "#rrggbb" (falls back to "unknown").
std::string_view color_name(std::string_view hex);

}  // namespace npcviz::dialogue
