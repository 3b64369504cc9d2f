#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_set>

#include "npcviz/dataset.hpp"
#include "npcviz/llm.hpp"
#include "npcviz/persona.hpp"
#include "npcviz/prompt.hpp"
#include "npcviz/session.hpp"

namespace npcviz::dialogue {

struct DialogueOptions {
    // Most recent messages sent verbatim; older ones go into a transcript block.
    std::size_t history_cap = 30;
    std::size_t max_user_chars = 4000;
    std::string model_name;
    double temperature = 0.7;
    int max_tokens = 512;
    std::size_t request_byte_cap = llm::kDefaultRequestByteCap;
    PromptOptions prompt;
};

/// Current projection, or null while it is pending.
using LayoutSource = std::function<std::shared_ptr<const Layout>()>;

struct StartResult {
    ChatSession session;
    bool created = false;
};

struct TurnResult {
    std::string reply;
    ChatSession session;
};

/// Orchestrates conversations: persona choice, fresh prompt per turn,
/// provider calls and history bookkeeping. Turns on one session are
/// serialized; a concurrent second turn is rejected with BusyError.
class DialogueService {
public:
    DialogueService(std::shared_ptr<const DatasetStore> store, std::shared_ptr<const PersonaRegistry> personas,
                    std::shared_ptr<SessionStore> sessions, std::shared_ptr<llm::ChatProvider> provider,
                    LayoutSource layout = {}, DialogueOptions options = {});

    /// Resumes the target's latest session unless `fresh` is set or none exists.
    StartResult start_session(const ChatTarget& target, bool fresh = false);

    ChatSession append_user_turn(const std::string& session_id, const std::string& text);
    ChatSession record_character_turn(const std::string& session_id, const std::string& text);

    /// Appends the user turn, asks the provider and appends the reply. On
    /// provider failure the user turn stays, flagged failed, and the
    /// UpstreamError propagates.
    TurnResult chat_turn(const std::string& session_id, const std::string& text);

    std::string system_prompt(const ChatSession& session) const;
    /// Request for a session whose last message is the pending user turn.
    llm::ProviderRequest compose_request(const ChatSession& session) const;

    const PersonaRegistry& personas() const noexcept { return *personas_; }
    const SessionStore& sessions() const noexcept { return *sessions_; }

private:
    void check_user_text(const std::string& text) const;

    std::shared_ptr<const DatasetStore> store_;
    std::shared_ptr<const PersonaRegistry> personas_;
    std::shared_ptr<SessionStore> sessions_;
    std::shared_ptr<llm::ChatProvider> provider_;
    LayoutSource layout_;
    DialogueOptions options_;

    std::mutex start_mutex_;
    std::mutex busy_mutex_;
    std::unordered_set<std::string> busy_;
};

}  // namespace npcviz::dialogue
