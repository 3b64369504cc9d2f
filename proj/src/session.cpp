#include "npcviz/session.hpp"

#include <algorithm>
#include <chrono>

#include <fmt/format.h>

#include "npcviz/file_io.hpp"

namespace npcviz::dialogue {
namespace {

std::uint64_t id_number(const std::string& id) {
    const auto dash = id.find('-');
    if (dash == std::string::npos) return 0;
    try {
        return std::stoull(id.substr(dash + 1));
    } catch (const std::exception&) {
        return 0;
    }
}

void require_text(const std::string& text) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw BadRequestError("text must not be empty");
    }
}

}  // namespace

std::int64_t system_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// ---------------------------------------------------------------------------
// Sessions

SessionStore::SessionStore(std::filesystem::path data_dir, Clock clock)
    : dir_(std::move(data_dir) / "sessions"), clock_(clock ? std::move(clock) : Clock(system_clock_ms)) {
    std::filesystem::create_directories(dir_);
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        if (entry.path().extension() != ".json") continue;
        try {
            auto session = nlohmann::json::parse(read_file(entry.path())).get<ChatSession>();
            next_id_ = std::max(next_id_, id_number(session.session_id) + 1);
            sessions_.emplace(session.session_id, std::move(session));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::internal, fmt::format("corrupt session file {}: {}", entry.path().string(), e.what()));
        }
    }
}

ChatSession SessionStore::create(const ChatTarget& target, const std::string& persona_id, const std::string& greeting) {
    std::lock_guard lock(mutex_);
    ChatSession session;
    session.session_id = fmt::format("s-{:06d}", next_id_++);
    session.target = target;
    session.persona_id = persona_id;
    session.created_at = clock_();
    for (const auto& [id, other] : sessions_) {
        session.created_at = std::max(session.created_at, other.created_at + 1);
    }
    session.messages.push_back({Role::character, greeting, session.created_at, false, {}});
    session.version = 1;
    persist_locked(session);
    sessions_.emplace(session.session_id, session);
    return session;
}

ChatSession SessionStore::get(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) {
        throw NotFoundError(fmt::format("unknown session '{}'", session_id), {{"session_id", session_id}});
    }
    return it->second;
}

std::vector<ChatSession> SessionStore::list() const {
    std::lock_guard lock(mutex_);
    std::vector<ChatSession> out;
    out.reserve(sessions_.size());
    for (const auto& [id, s] : sessions_) out.push_back(s);
    std::stable_sort(out.begin(), out.end(),
                     [](const ChatSession& a, const ChatSession& b) { return a.created_at < b.created_at; });
    return out;
}

std::vector<ChatSession> SessionStore::for_target(const ChatTarget& target) const {
    auto all = list();
    std::erase_if(all, [&](const ChatSession& s) { return !(s.target == target); });
    return all;
}

std::optional<ChatSession> SessionStore::latest_for(const ChatTarget& target) const {
    auto matches = for_target(target);
    if (matches.empty()) return std::nullopt;
    return std::move(matches.back());
}

ChatSession SessionStore::append(const std::string& session_id, Role role, const std::string& text) {
    require_text(text);
    std::lock_guard lock(mutex_);
    ChatSession& session = find_locked(session_id);
    ChatSession updated = session;
    updated.messages.push_back({role, text, next_timestamp_locked(session), false, {}});
    ++updated.version;
    persist_locked(updated);
    session = std::move(updated);
    return session;
}

ChatSession SessionStore::mark_failed(const std::string& session_id, std::size_t message_index, const std::string& error) {
    std::lock_guard lock(mutex_);
    ChatSession& session = find_locked(session_id);
    if (message_index >= session.messages.size()) {
        throw NotFoundError(fmt::format("session '{}' has no message {}", session_id, message_index));
    }
    ChatSession updated = session;
    updated.messages[message_index].failed = true;
    updated.messages[message_index].error = error;
    ++updated.version;
    persist_locked(updated);
    session = std::move(updated);
    return session;
}

ChatSession& SessionStore::find_locked(const std::string& session_id) {
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) {
        throw NotFoundError(fmt::format("unknown session '{}'", session_id), {{"session_id", session_id}});
    }
    return it->second;
}

void SessionStore::persist_locked(const ChatSession& session) const {
    atomic_write(dir_ / (session.session_id + ".json"), nlohmann::json(session).dump(2) + "\n");
}

std::int64_t SessionStore::next_timestamp_locked(const ChatSession& session) const {
    const std::int64_t last = session.messages.empty() ? session.created_at : session.messages.back().timestamp;
    return std::max(clock_(), last + 1);
}

// ---------------------------------------------------------------------------
// Notes

NotesStore::NotesStore(std::filesystem::path data_dir, Clock clock)
    : file_(std::move(data_dir) / "notes.json"), clock_(clock ? std::move(clock) : Clock(system_clock_ms)) {
    if (!std::filesystem::exists(file_)) return;
    try {
        notes_ = nlohmann::json::parse(read_file(file_)).get<std::vector<NoteRecord>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::internal, fmt::format("corrupt notes file {}: {}", file_.string(), e.what()));
    }
    for (const auto& note : notes_) {
        next_id_ = std::max(next_id_, id_number(note.note_id) + 1);
        last_created_ = std::max(last_created_, note.created_at);
    }
}

NoteRecord NotesStore::add(NoteKind kind, const std::string& text, std::optional<std::string> linked_session_id) {
    require_text(text);
    std::lock_guard lock(mutex_);
    NoteRecord note;
    note.note_id = fmt::format("n-{:06d}", next_id_++);
    note.kind = kind;
    note.text = text;
    note.linked_session_id = std::move(linked_session_id);
    if (kind == NoteKind::task) note.done = false;
    note.created_at = std::max(clock_(), last_created_ + 1);
    last_created_ = note.created_at;
    notes_.push_back(note);
    persist_locked();
    return note;
}

std::vector<NoteRecord> NotesStore::list() const {
    std::lock_guard lock(mutex_);
    auto out = notes_;
    std::stable_sort(out.begin(), out.end(),
                     [](const NoteRecord& a, const NoteRecord& b) { return a.created_at < b.created_at; });
    return out;
}

NoteRecord NotesStore::get(const std::string& note_id) const {
    std::lock_guard lock(mutex_);
    const auto it = std::find_if(notes_.begin(), notes_.end(), [&](const NoteRecord& n) { return n.note_id == note_id; });
    if (it == notes_.end()) {
        throw NotFoundError(fmt::format("unknown note '{}'", note_id), {{"note_id", note_id}});
    }
    return *it;
}

NoteRecord NotesStore::update(const std::string& note_id, const NotePatch& patch) {
    std::lock_guard lock(mutex_);
    NoteRecord updated = find_locked(note_id);
    if (patch.text) {
        require_text(*patch.text);
        updated.text = *patch.text;
    }
    if (patch.done) {
        if (updated.kind != NoteKind::task) {
            throw BadRequestError("only tasks can be marked done", {{"note_id", note_id}});
        }
        updated.done = *patch.done;
    }
    if (patch.linked_session_id) updated.linked_session_id = *patch.linked_session_id;
    find_locked(note_id) = updated;
    persist_locked();
    return updated;
}

void NotesStore::remove(const std::string& note_id) {
    std::lock_guard lock(mutex_);
    find_locked(note_id);
    std::erase_if(notes_, [&](const NoteRecord& n) { return n.note_id == note_id; });
    persist_locked();
}

NoteRecord NotesStore::toggle_done(const std::string& note_id) {
    std::lock_guard lock(mutex_);
    NoteRecord& note = find_locked(note_id);
    if (note.kind != NoteKind::task) {
        throw BadRequestError("only tasks can be marked done", {{"note_id", note_id}});
    }
    note.done = !note.done.value_or(false);
    persist_locked();
    return note;
}

NoteRecord& NotesStore::find_locked(const std::string& note_id) {
    const auto it = std::find_if(notes_.begin(), notes_.end(), [&](const NoteRecord& n) { return n.note_id == note_id; });
    if (it == notes_.end()) {
        throw NotFoundError(fmt::format("unknown note '{}'", note_id), {{"note_id", note_id}});
    }
    return *it;
}

void NotesStore::persist_locked() const { atomic_write(file_, nlohmann::json(notes_).dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// JSON

std::string_view to_string(Role role) { return role == Role::user ? "user" : "character"; }

std::string_view to_string(NoteKind kind) { return kind == NoteKind::task ? "task" : "insight"; }

NoteKind parse_note_kind(std::string_view text) {
    if (text == "task") return NoteKind::task;
    if (text == "insight") return NoteKind::insight;
    throw BadRequestError(fmt::format("unknown note kind '{}' (expected task or insight)", text));
}

void to_json(nlohmann::json& j, const ChatMessage& m) {
    j = nlohmann::json{{"role", to_string(m.role)}, {"text", m.text}, {"timestamp", m.timestamp}};
    if (m.failed) {
        j["failed"] = true;
        j["error"] = m.error;
    }
}

void from_json(const nlohmann::json& j, ChatMessage& m) {
    const auto role = j.at("role").get<std::string>();
    if (role != "user" && role != "character") {
        throw BadRequestError(fmt::format("unknown message role '{}'", role));
    }
    m.role = role == "user" ? Role::user : Role::character;
    j.at("text").get_to(m.text);
    j.at("timestamp").get_to(m.timestamp);
    m.failed = j.value("failed", false);
    m.error = j.value("error", std::string());
}

void to_json(nlohmann::json& j, const ChatSession& s) {
    j = nlohmann::json{{"session_id", s.session_id}, {"target", s.target},         {"target_key", s.target.key()},
                       {"persona_id", s.persona_id}, {"messages", s.messages},     {"created_at", s.created_at},
                       {"version", s.version}};
}

void from_json(const nlohmann::json& j, ChatSession& s) {
    j.at("session_id").get_to(s.session_id);
    j.at("target").get_to(s.target);
    j.at("persona_id").get_to(s.persona_id);
    j.at("messages").get_to(s.messages);
    j.at("created_at").get_to(s.created_at);
    s.version = j.value("version", std::uint64_t{0});
}

void to_json(nlohmann::json& j, const NoteRecord& n) {
    j = nlohmann::json{{"note_id", n.note_id},
                       {"kind", to_string(n.kind)},
                       {"text", n.text},
                       {"linked_session_id", n.linked_session_id ? nlohmann::json(*n.linked_session_id) : nlohmann::json()},
                       {"created_at", n.created_at}};
    if (n.kind == NoteKind::task) j["done"] = n.done.value_or(false);
}

void from_json(const nlohmann::json& j, NoteRecord& n) {
    j.at("note_id").get_to(n.note_id);
    n.kind = parse_note_kind(j.at("kind").get<std::string>());
    j.at("text").get_to(n.text);
    n.linked_session_id.reset();
    if (const auto it = j.find("linked_session_id"); it != j.end() && !it->is_null()) {
        n.linked_session_id = it->get<std::string>();
    }
    n.done.reset();
    if (n.kind == NoteKind::task) n.done = j.value("done", false);
    j.at("created_at").get_to(n.created_at);
}

}  // namespace npcviz::dialogue
