#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "npcviz/persona.hpp"

namespace npcviz::dialogue {

/// Epoch milliseconds.
using Clock = std::function<std::int64_t()>;

std::int64_t system_clock_ms();

enum class Role { user, character };

struct ChatMessage {
    Role role = Role::user;
    std::string text;
    std::int64_t timestamp = 0;
    // Set on a user turn whose provider call failed.
    bool failed = false;
    std::string error;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatSession {
    std::string session_id;
    ChatTarget target;
    std::string persona_id;
    std::vector<ChatMessage> messages;
    std::int64_t created_at = 0;
    // Bumped on every persisted mutation.
    std::uint64_t version = 0;

    friend bool operator==(const ChatSession&, const ChatSession&) = default;
};

/// Chat sessions persisted as one JSON document per session under
/// `<dir>/sessions`. Messages are append-only and their timestamps strictly
/// increase within a session. Thread-safe.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path data_dir, Clock clock = {});

    ChatSession create(const ChatTarget& target, const std::string& persona_id, const std::string& greeting);
    ChatSession get(const std::string& session_id) const;
    /// Most recently created session for `target`.
    std::optional<ChatSession> latest_for(const ChatTarget& target) const;
    std::vector<ChatSession> for_target(const ChatTarget& target) const;
    /// All sessions ordered by creation.
    std::vector<ChatSession> list() const;

    ChatSession append(const std::string& session_id, Role role, const std::string& text);
    ChatSession mark_failed(const std::string& session_id, std::size_t message_index, const std::string& error);

private:
    ChatSession& find_locked(const std::string& session_id);
    void persist_locked(const ChatSession& session) const;
    std::int64_t next_timestamp_locked(const ChatSession& session) const;

    std::filesystem::path dir_;
    Clock clock_;
    mutable std::mutex mutex_;
    std::map<std::string, ChatSession> sessions_;
    std::uint64_t next_id_ = 1;
};

enum class NoteKind { task, insight };

struct NoteRecord {
    std::string note_id;
    NoteKind kind = NoteKind::task;
    std::string text;
    std::optional<std::string> linked_session_id;
    // Present for tasks only.
    std::optional<bool> done;
    std::int64_t created_at = 0;

    friend bool operator==(const NoteRecord&, const NoteRecord&) = default;
};

struct NotePatch {
    std::optional<std::string> text;
    std::optional<bool> done;
    // Outer optional: field present; inner: new value or unlink.
    std::optional<std::optional<std::string>> linked_session_id;
};

/// Tasks and insights kept in `<dir>/notes.json`, rewritten atomically on
/// every mutation. Thread-safe.
class NotesStore {
public:
    explicit NotesStore(std::filesystem::path data_dir, Clock clock = {});

    NoteRecord add(NoteKind kind, const std::string& text, std::optional<std::string> linked_session_id = {});
    /// Ordered by created_at.
    std::vector<NoteRecord> list() const;
    NoteRecord get(const std::string& note_id) const;
    NoteRecord update(const std::string& note_id, const NotePatch& patch);
    void remove(const std::string& note_id);
    NoteRecord toggle_done(const std::string& note_id);

private:
    NoteRecord& find_locked(const std::string& note_id);
    void persist_locked() const;

    std::filesystem::path file_;
    Clock clock_;
    mutable std::mutex mutex_;
    std::vector<NoteRecord> notes_;
    std::uint64_t next_id_ = 1;
    std::int64_t last_created_ = 0;
};

std::string_view to_string(Role role);
std::string_view to_string(NoteKind kind);
NoteKind parse_note_kind(std::string_view text);

void to_json(nlohmann::json& j, const ChatMessage& message);
void from_json(const nlohmann::json& j, ChatMessage& message);
void to_json(nlohmann::json& j, const ChatSession& session);
void from_json(const nlohmann::json& j, ChatSession& session);
void to_json(nlohmann::json& j, const NoteRecord& note);
void from_json(const nlohmann::json& j, NoteRecord& note);

}  // namespace npcviz::dialogue
