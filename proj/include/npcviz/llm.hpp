#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "npcviz/error.hpp"

namespace spdlog {
class logger;
}

namespace npcviz::llm {

struct ProviderMessage {
    std::string role;  // "user" or "assistant"
    std::string text;

    friend bool operator==(const ProviderMessage&, const ProviderMessage&) = default;
};

struct ProviderRequest {
    std::string system_prompt;
    std::vector<ProviderMessage> messages;
    std::string model_name;
    double temperature = 0.7;
    int max_tokens = 512;
};

inline constexpr std::size_t kDefaultRequestByteCap = 256 * 1024;

/// Throws BadRequestError if roles do not alternate, the last message is not
/// a user turn, or the serialized request exceeds `byte_cap`.
void validate(const ProviderRequest& request, std::size_t byte_cap = kDefaultRequestByteCap);

/// OpenAI-compatible chat-completions body.
nlohmann::json to_chat_completions(const ProviderRequest& request);

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason);

struct ProviderReply {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    double latency_ms = 0.0;
    std::string provider_id;
    int attempts = 1;
};

enum class UpstreamErrorKind { auth, rate_limited, timeout, transport, server, malformed, disabled };

std::string_view to_string(UpstreamErrorKind kind);

class UpstreamError : public Error {
public:
    UpstreamError(UpstreamErrorKind kind, const std::string& message, int attempts = 1, int http_status = 0)
        : Error(ErrorCode::upstream_failed, message,
                {{"kind", to_string(kind)}, {"attempts", attempts}, {"http_status", http_status}}),
          kind_(kind),
          attempts_(attempts),
          http_status_(http_status) {}

    UpstreamErrorKind kind() const noexcept { return kind_; }
    int attempts() const noexcept { return attempts_; }
    int http_status() const noexcept { return http_status_; }

private:
    UpstreamErrorKind kind_;
    int attempts_;
    int http_status_;
};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual ProviderReply complete(const ProviderRequest& request) = 0;
    virtual std::string_view id() const = 0;
};

/// Offline provider. Replies are a pure function of the request:
///   "As <persona> (<target kind>), I report: <numbers>. You asked: <40 chars>"
/// where <numbers> are the numeric tokens of the prompt's target section.
class StubProvider final : public ChatProvider {
public:
    ProviderReply complete(const ProviderRequest& request) override;
    std::string_view id() const override { return "stub"; }
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
    double multiplier = 2.0;

    /// Delay before attempt `attempt + 1`, for attempt >= 1.
    std::chrono::milliseconds delay_after(int attempt) const;
};

struct LiveProviderConfig {
    std::string url;  // full chat-completions endpoint
    std::string api_key;
    std::string model = "gpt-3.5-turbo";
    std::chrono::milliseconds timeout{30000};
    RetryPolicy retry;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Chat completions over HTTP(S) against an OpenAI-compatible endpoint.
/// Retries transport failures, 429 and 5xx; fails fast on 401/403 and on
/// bodies it cannot parse. The API key never reaches logs or error text.
class LiveProvider final : public ChatProvider {
public:
    explicit LiveProvider(LiveProviderConfig config, std::shared_ptr<spdlog::logger> logger = nullptr,
                          Sleeper sleeper = nullptr);

    ProviderReply complete(const ProviderRequest& request) override;
    std::string_view id() const override { return "live"; }

private:
    std::string redact(std::string text) const;

    LiveProviderConfig config_;
    std::shared_ptr<spdlog::logger> logger_;
    Sleeper sleeper_;
};

/// Caps concurrent calls into the wrapped provider; extra callers queue.
class ThrottledProvider final : public ChatProvider {
public:
    static constexpr std::ptrdiff_t kMaxInFlight = 64;

    ThrottledProvider(std::shared_ptr<ChatProvider> inner, std::ptrdiff_t max_in_flight = 4);

    ProviderReply complete(const ProviderRequest& request) override;
    std::string_view id() const override { return inner_->id(); }

private:
    std::shared_ptr<ChatProvider> inner_;
    std::counting_semaphore<kMaxInFlight> slots_;
};

// ---------------------------------------------------------------------------
// Text to speech

inline constexpr std::size_t kMaxSpeechChars = 1000;

struct SpeechConfig {
    bool enabled = false;
    // "{voice_id}" in the URL is replaced by the requested voice.
    std::string url;
    std::string api_key;
    std::chrono::milliseconds timeout{30000};
};

struct SpeechAudio {
    std::string bytes;
    std::string mime_type;
};

struct SpeechDisabled {};

using SpeechResult = std::variant<SpeechAudio, SpeechDisabled>;

class SpeechClient {
public:
    explicit SpeechClient(SpeechConfig config = {}, std::shared_ptr<spdlog::logger> logger = nullptr);

    bool enabled() const noexcept { return config_.enabled; }

    /// Validates length before anything else; returns SpeechDisabled without
    /// touching the network when TTS is off.
    SpeechResult speak(std::string_view text, std::string_view voice_id) const;

private:
    SpeechConfig config_;
    std::shared_ptr<spdlog::logger> logger_;
};

// ---------------------------------------------------------------------------
// Configuration

enum class ProviderKind { stub, live };

struct GatewayConfig {
    ProviderKind provider = ProviderKind::stub;
    LiveProviderConfig chat;
    SpeechConfig speech;
    std::ptrdiff_t max_in_flight = 4;
};

ProviderKind parse_provider_kind(std::string_view text);

/// Reads CHAT_API_URL, CHAT_API_KEY, CHAT_MODEL, TTS_API_URL, TTS_API_KEY and
/// PROVIDER through `getenv` (defaults to std::getenv).
GatewayConfig gateway_config_from_env(const std::function<const char*(const char*)>& getenv = nullptr);

std::shared_ptr<ChatProvider> make_provider(const GatewayConfig& config,
                                            std::shared_ptr<spdlog::logger> logger = nullptr);

/// Shared "npcviz.llm" logger.
std::shared_ptr<spdlog::logger> default_logger();

/// Splits "https://host:port/path" into ("https://host:port", "/path").
std::pair<std::string, std::string> split_url(std::string_view url);

}  // namespace npcviz::llm
