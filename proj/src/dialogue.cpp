#include "npcviz/dialogue.hpp"

#include <fmt/format.h>

#include "npcviz/utf8.hpp"

namespace npcviz::dialogue {
namespace {

class BusyGuard {
public:
    BusyGuard(std::mutex& mutex, std::unordered_set<std::string>& busy, std::string id)
        : mutex_(mutex), busy_(busy), id_(std::move(id)) {
        std::lock_guard lock(mutex_);
        if (!busy_.insert(id_).second) {
            throw BusyError(fmt::format("session '{}' is already answering a turn", id_), {{"session_id", id_}});
        }
    }
    ~BusyGuard() {
        std::lock_guard lock(mutex_);
        busy_.erase(id_);
    }
    BusyGuard(const BusyGuard&) = delete;
    BusyGuard& operator=(const BusyGuard&) = delete;

private:
    std::mutex& mutex_;
    std::unordered_set<std::string>& busy_;
    std::string id_;
};

std::string_view provider_role(Role role) { return role == Role::user ? "user" : "assistant"; }

}  // namespace

DialogueService::DialogueService(std::shared_ptr<const DatasetStore> store,
                                 std::shared_ptr<const PersonaRegistry> personas,
                                 std::shared_ptr<SessionStore> sessions, std::shared_ptr<llm::ChatProvider> provider,
                                 LayoutSource layout, DialogueOptions options)
    : store_(std::move(store)),
      personas_(std::move(personas)),
      sessions_(std::move(sessions)),
      provider_(std::move(provider)),
      layout_(std::move(layout)),
      options_(std::move(options)) {}

StartResult DialogueService::start_session(const ChatTarget& target, bool fresh) {
    check_target(target, *store_);
    std::lock_guard lock(start_mutex_);
    if (!fresh) {
        if (auto existing = sessions_->latest_for(target)) {
            return {std::move(*existing), false};
        }
    }
    const Persona& persona = assign_persona(*personas_, target);
    return {sessions_->create(target, persona.persona_id, render_greeting(persona, target)), true};
}

void DialogueService::check_user_text(const std::string& text) const {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw BadRequestError("message text must not be empty");
    }
    if (utf8::length(text) > options_.max_user_chars) {
        throw BadRequestError(fmt::format("message exceeds {} characters", options_.max_user_chars),
                              {{"limit", options_.max_user_chars}});
    }
}

ChatSession DialogueService::append_user_turn(const std::string& session_id, const std::string& text) {
    check_user_text(text);
    return sessions_->append(session_id, Role::user, text);
}

ChatSession DialogueService::record_character_turn(const std::string& session_id, const std::string& text) {
    return sessions_->append(session_id, Role::character, text);
}

std::string DialogueService::system_prompt(const ChatSession& session) const {
    const auto layout = layout_ ? layout_() : nullptr;
    const Persona& persona = personas_->find(session.persona_id);
    return build_system_prompt(*store_, layout.get(), session.target, persona, options_.prompt);
}

llm::ProviderRequest DialogueService::compose_request(const ChatSession& session) const {
    llm::ProviderRequest request;
    request.system_prompt = system_prompt(session);
    request.model_name = options_.model_name;
    request.temperature = options_.temperature;
    request.max_tokens = options_.max_tokens;

    // Failed user turns were never answered; leaving them out keeps roles alternating.
    std::vector<const ChatMessage*> history;
    for (const auto& m : session.messages) {
        if (!m.failed) history.push_back(&m);
    }
    const std::size_t cut = history.size() > options_.history_cap ? history.size() - options_.history_cap : 0;
    if (cut > 0) {
        request.system_prompt += fmt::format("=== {} ===\n", prompt::kTranscriptTitle);
        for (std::size_t i = 0; i < cut; ++i) {
            request.system_prompt += fmt::format("{}: {}\n", to_string(history[i]->role), history[i]->text);
        }
    }
    for (std::size_t i = cut; i < history.size(); ++i) {
        const auto role = std::string(provider_role(history[i]->role));
        if (!request.messages.empty() && request.messages.back().role == role) {
            request.messages.back().text += "\n\n" + history[i]->text;
        } else {
            request.messages.push_back({role, history[i]->text});
        }
    }
    return request;
}

TurnResult DialogueService::chat_turn(const std::string& session_id, const std::string& text) {
    check_user_text(text);
    BusyGuard guard(busy_mutex_, busy_, session_id);

    ChatSession session = sessions_->append(session_id, Role::user, text);
    const std::size_t user_index = session.messages.size() - 1;

    llm::ProviderReply reply;
    try {
        const auto request = compose_request(session);
        llm::validate(request, options_.request_byte_cap);
        reply = provider_->complete(request);
    } catch (const std::exception& e) {
        sessions_->mark_failed(session_id, user_index, e.what());
        throw;
    }
    session = sessions_->append(session_id, Role::character, reply.text);
    return {std::move(reply.text), std::move(session)};
}

}  // namespace npcviz::dialogue
