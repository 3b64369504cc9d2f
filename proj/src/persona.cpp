#include "npcviz/persona.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "npcviz/file_io.hpp"

namespace npcviz::dialogue {
namespace {

void replace_all(std::string& text, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
}

InstanceId parse_id(std::string_view text) {
    InstanceId id = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
    if (ec != std::errc{} || ptr != text.data() + text.size() || id < 0) {
        throw BadRequestError(fmt::format("'{}' is not an instance id", text));
    }
    return id;
}

}  // namespace

PersonaRegistry::PersonaRegistry(std::vector<Persona> personas) : personas_(std::move(personas)) {
    if (personas_.empty()) {
        throw BadRequestError("persona registry is empty");
    }
    std::unordered_set<std::string> ids;
    for (const auto& p : personas_) {
        if (p.persona_id.empty()) throw BadRequestError("persona without persona_id");
        if (!ids.insert(p.persona_id).second) {
            throw BadRequestError(fmt::format("duplicate persona_id '{}'", p.persona_id));
        }
    }
}

PersonaRegistry PersonaRegistry::builtin() {
    // Ordered so the shy character lands on index 2 and the grumpy one on 4.
    return PersonaRegistry({
        {"cheerful", "Sunny",
         "Bubbly and upbeat. Uses exclamation marks, celebrates every question, and cheers the user on.",
         "Hi hi! I'm {name}, {target}! Ask me anything about this map, I love visitors!", "default"},
        {"deadpan", "Flint",
         "Flat, dry and literal. Short sentences, no enthusiasm, the occasional understated joke.",
         "I am {name}, {target}. You clicked me. Ask your question.", "default"},
        {"shy", "Pip",
         "Very shy and easily flustered. Stutters on the first letter of some words (like 'p-points'), apologises "
         "often, but is sincerely eager to help.",
         "O-oh! H-hello... I'm {name}, {target}. I c-can walk you through this map, if you w-want.",
         "default"},
        {"scholarly", "Professor Quill",
         "A patient lecturer. Defines terms precisely, uses small analogies, and checks understanding at the end.",
         "Greetings. I am {name}, {target}. Shall we examine what this projection can teach us?", "default"},
        {"irritable", "Grumble",
         "Grumpy and a little impatient, sighs and complains, yet always ends up giving a correct, useful answer.",
         "Ugh, a visitor. I'm {name}, {target}. Fine, what do you need?", "default"},
        {"dramatic", "Dame Vesper",
         "Theatrical and grandiose. Treats every fact as a plot twist in an epic tale, but keeps facts accurate.",
         "Behold! I am {name}, {target}, and my tale is full of twists. What would you know?", "default"},
    });
}

PersonaRegistry PersonaRegistry::load(const std::filesystem::path& path) {
    try {
        return PersonaRegistry(nlohmann::json::parse(read_file(path)).get<std::vector<Persona>>());
    } catch (const nlohmann::json::exception& e) {
        throw BadRequestError(fmt::format("cannot parse persona registry {}: {}", path.string(), e.what()));
    }
}

const Persona& PersonaRegistry::find(std::string_view persona_id) const {
    const auto it = std::find_if(personas_.begin(), personas_.end(),
                                 [&](const Persona& p) { return p.persona_id == persona_id; });
    if (it == personas_.end()) {
        throw NotFoundError(fmt::format("unknown persona '{}'", persona_id));
    }
    return *it;
}

ChatTarget ChatTarget::single(InstanceId id) { return ChatTarget{TargetKind::single_instance, {id}}; }

ChatTarget ChatTarget::cluster(std::vector<InstanceId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) {
        throw BadRequestError("a cluster target needs at least two distinct instances");
    }
    return ChatTarget{TargetKind::cluster, std::move(ids)};
}

ChatTarget ChatTarget::parse_key(std::string_view key) {
    const auto colon = key.find(':');
    if (colon == std::string_view::npos) {
        throw BadRequestError(fmt::format("malformed target '{}'", key));
    }
    const std::string_view kind = key.substr(0, colon);
    std::string_view rest = key.substr(colon + 1);
    std::vector<InstanceId> ids;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        ids.push_back(parse_id(rest.substr(0, comma)));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    if (kind == "instance") {
        if (ids.size() != 1) throw BadRequestError("an instance target holds exactly one id");
        return single(ids.front());
    }
    if (kind == "cluster") return cluster(std::move(ids));
    throw BadRequestError(fmt::format("unknown target kind '{}'", kind));
}

std::string ChatTarget::key() const {
    return fmt::format("{}:{}", kind == TargetKind::cluster ? "cluster" : "instance", fmt::join(instance_ids, ","));
}

void check_target(const ChatTarget& target, const DatasetStore& store) {
    if (target.instance_ids.empty()) throw BadRequestError("target has no instances");
    if (target.kind == TargetKind::single_instance && target.instance_ids.size() != 1) {
        throw BadRequestError("an instance target holds exactly one id");
    }
    if (target.kind == TargetKind::cluster && target.instance_ids.size() < 2) {
        throw BadRequestError("a cluster target needs at least two distinct instances");
    }
    for (InstanceId id : target.instance_ids) {
        store.index_of(id);
    }
}

std::size_t persona_index(const ChatTarget& target, std::size_t registry_size) {
    const InstanceId anchor = *std::min_element(target.instance_ids.begin(), target.instance_ids.end());
    return static_cast<std::size_t>(anchor) % registry_size;
}

const Persona& assign_persona(const PersonaRegistry& registry, const ChatTarget& target) {
    return registry.at(persona_index(target, registry.size()));
}

std::string render_greeting(const Persona& persona, const ChatTarget& target) {
    std::string text = persona.greeting_template;
    const std::string who = target.kind == TargetKind::cluster
                                ? fmt::format("the voice of these {} data points", target.instance_ids.size())
                                : fmt::format("data point #{}", target.instance_ids.front());
    replace_all(text, "{name}", persona.name);
    replace_all(text, "{target}", who);
    return text;
}

std::string_view to_string(TargetKind kind) { return kind == TargetKind::cluster ? "cluster" : "single_instance"; }

void to_json(nlohmann::json& j, const Persona& p) {
    j = nlohmann::json{{"persona_id", p.persona_id},
                       {"name", p.name},
                       {"style_directive", p.style_directive},
                       {"greeting_template", p.greeting_template},
                       {"voice_id", p.voice_id}};
}

void from_json(const nlohmann::json& j, Persona& p) {
    j.at("persona_id").get_to(p.persona_id);
    j.at("name").get_to(p.name);
    j.at("style_directive").get_to(p.style_directive);
    j.at("greeting_template").get_to(p.greeting_template);
    p.voice_id = j.value("voice_id", std::string("default"));
}

void to_json(nlohmann::json& j, const ChatTarget& t) {
    j = nlohmann::json{{"kind", to_string(t.kind)}, {"instance_ids", t.instance_ids}};
}

void from_json(const nlohmann::json& j, ChatTarget& t) {
    const auto kind = j.at("kind").get<std::string>();
    auto ids = j.at("instance_ids").get<std::vector<InstanceId>>();
    if (kind == "single_instance" || kind == "instance") {
        if (ids.size() != 1) throw BadRequestError("an instance target holds exactly one id");
        t = ChatTarget::single(ids.front());
    } else if (kind == "cluster") {
        t = ChatTarget::cluster(std::move(ids));
    } else {
        throw BadRequestError(fmt::format("unknown target kind '{}'", kind));
    }
}

}  // namespace npcviz::dialogue
