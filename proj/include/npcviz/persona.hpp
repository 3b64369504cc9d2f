#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "npcviz/dataset.hpp"

namespace npcviz::dialogue {

struct Persona {
    std::string persona_id;
    std::string name;
    std::string style_directive;
    // Placeholders: {name}, {target}.
    std::string greeting_template;
    std::string voice_id = "default";

    friend bool operator==(const Persona&, const Persona&) = default;
};

class PersonaRegistry {
public:
    /// Throws BadRequestError when empty or when ids repeat.
    explicit PersonaRegistry(std::vector<Persona> personas);

    static PersonaRegistry builtin();
    /// JSON array of Persona objects.
    static PersonaRegistry load(const std::filesystem::path& path);

    std::size_t size() const noexcept { return personas_.size(); }
    const Persona& at(std::size_t index) const { return personas_.at(index); }
    const Persona& find(std::string_view persona_id) const;
    std::span<const Persona> all() const noexcept { return personas_; }

private:
    std::vector<Persona> personas_;
};

enum class TargetKind { single_instance, cluster };

struct ChatTarget {
    TargetKind kind = TargetKind::single_instance;
    // Sorted ascending and unique.
    std::vector<InstanceId> instance_ids;

    static ChatTarget single(InstanceId id);
    /// Sorts and de-duplicates; throws BadRequestError with fewer than 2 ids.
    static ChatTarget cluster(std::vector<InstanceId> ids);
    /// "instance:38" or "cluster:7,12,30".
    static ChatTarget parse_key(std::string_view key);

    std::string key() const;

    friend bool operator==(const ChatTarget&, const ChatTarget&) = default;
};

/// Throws NotFoundError if any id is unknown to `store`.
void check_target(const ChatTarget& target, const DatasetStore& store);

/// Index into the registry: the instance id (or smallest id of a cluster)
/// modulo registry size.
std::size_t persona_index(const ChatTarget& target, std::size_t registry_size);
const Persona& assign_persona(const PersonaRegistry& registry, const ChatTarget& target);

std::string render_greeting(const Persona& persona, const ChatTarget& target);

std::string_view to_string(TargetKind kind);

void to_json(nlohmann::json& j, const Persona& persona);
void from_json(const nlohmann::json& j, Persona& persona);
void to_json(nlohmann::json& j, const ChatTarget& target);
void from_json(const nlohmann::json& j, ChatTarget& target);

}  // namespace npcviz::dialogue
