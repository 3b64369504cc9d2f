// HTTP-backed chat and speech providers. Kept in one translation unit so
// httplib is compiled once.
#include <httplib.h>

#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "npcviz/llm.hpp"
#include "npcviz/utf8.hpp"

namespace npcviz::llm {
namespace {

using Clock = std::chrono::steady_clock;

void configure_timeouts(httplib::Client& client, std::chrono::milliseconds timeout) {
    const auto sec = static_cast<time_t>(timeout.count() / 1000);
    const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
}

bool is_timeout(httplib::Error error) {
    return error == httplib::Error::Read || error == httplib::Error::ConnectionTimeout;
}

struct AttemptFailure {
    UpstreamErrorKind kind;
    std::string message;
    int http_status = 0;
    bool retryable = false;
};

AttemptFailure classify_status(int status) {
    if (status == 401 || status == 403) {
        return {UpstreamErrorKind::auth, fmt::format("upstream rejected credentials (HTTP {})", status), status, false};
    }
    if (status == 429) {
        return {UpstreamErrorKind::rate_limited, "upstream rate limit (HTTP 429)", status, true};
    }
    if (status >= 500) {
        return {UpstreamErrorKind::server, fmt::format("upstream server error (HTTP {})", status), status, true};
    }
    return {UpstreamErrorKind::server, fmt::format("upstream refused the request (HTTP {})", status), status, false};
}

}  // namespace

LiveProvider::LiveProvider(LiveProviderConfig config, std::shared_ptr<spdlog::logger> logger, Sleeper sleeper)
    : config_(std::move(config)),
      logger_(logger ? std::move(logger) : default_logger()),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })) {}

std::string LiveProvider::redact(std::string text) const {
    if (config_.api_key.empty()) return text;
    std::size_t pos = 0;
    while ((pos = text.find(config_.api_key, pos)) != std::string::npos) {
        text.replace(pos, config_.api_key.size(), "[redacted]");
        pos += 10;
    }
    return text;
}

ProviderReply LiveProvider::complete(const ProviderRequest& request) {
    ProviderRequest outgoing = request;
    if (outgoing.model_name.empty()) outgoing.model_name = config_.model;
    validate(outgoing);

    const auto [base, path] = split_url(config_.url);
    httplib::Client client(base);
    configure_timeouts(client, config_.timeout);
    const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
    const std::string body = to_chat_completions(outgoing).dump();

    const auto started = Clock::now();
    const int max_attempts = std::max(config_.retry.max_attempts, 1);
    AttemptFailure last{UpstreamErrorKind::transport, "no attempt made"};

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        logger_->debug("chat completion attempt {}/{} to {}{}", attempt, max_attempts, base, path);
        const auto res = client.Post(path, headers, body, "application/json");

        if (!res) {
            const auto error = res.error();
            last = {is_timeout(error) ? UpstreamErrorKind::timeout : UpstreamErrorKind::transport,
                    redact(fmt::format("transport failure: {}", httplib::to_string(error))), 0, true};
        } else if (res->status == 200) {
            ProviderReply reply;
            try {
                const auto parsed = nlohmann::json::parse(res->body);
                const auto& choice = parsed.at("choices").at(0);
                reply.text = choice.at("message").at("content").get<std::string>();
                const std::string finish = choice.value("finish_reason", std::string("stop"));
                reply.finish_reason = finish == "length" ? FinishReason::length : FinishReason::stop;
            } catch (const nlohmann::json::exception& e) {
                logger_->warn("malformed chat completion body: {}", redact(e.what()));
                throw UpstreamError(UpstreamErrorKind::malformed, redact(fmt::format("malformed upstream body: {}", e.what())),
                                    attempt, 200);
            }
            if (reply.finish_reason == FinishReason::stop && reply.text.empty()) {
                throw UpstreamError(UpstreamErrorKind::malformed, "upstream returned an empty completion", attempt, 200);
            }
            reply.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
            reply.provider_id = std::string(id());
            reply.attempts = attempt;
            logger_->info("chat completion succeeded after {} attempt(s) in {:.0f} ms", attempt, reply.latency_ms);
            return reply;
        } else {
            last = classify_status(res->status);
        }

        logger_->warn("chat completion attempt {}/{} failed: {}", attempt, max_attempts, last.message);
        if (!last.retryable) {
            throw UpstreamError(last.kind, last.message, attempt, last.http_status);
        }
        if (attempt < max_attempts) {
            sleeper_(config_.retry.delay_after(attempt));
        }
    }
    throw UpstreamError(last.kind, fmt::format("{} after {} attempts", last.message, max_attempts), max_attempts,
                        last.http_status);
}

SpeechClient::SpeechClient(SpeechConfig config, std::shared_ptr<spdlog::logger> logger)
    : config_(std::move(config)), logger_(logger ? std::move(logger) : default_logger()) {}

SpeechResult SpeechClient::speak(std::string_view text, std::string_view voice_id) const {
    if (utf8::length(text) > kMaxSpeechChars) {
        throw BadRequestError(fmt::format("speech text exceeds {} characters", kMaxSpeechChars),
                              {{"limit", kMaxSpeechChars}});
    }
    if (!config_.enabled) {
        return SpeechDisabled{};
    }

    std::string url = config_.url;
    if (const auto at = url.find("{voice_id}"); at != std::string::npos) {
        url.replace(at, 10, voice_id);
    }
    const auto [base, path] = split_url(url);
    httplib::Client client(base);
    configure_timeouts(client, config_.timeout);
    const httplib::Headers headers = {{"xi-api-key", config_.api_key}, {"Accept", "audio/mpeg"}};
    const nlohmann::json body = {{"text", text}, {"voice_id", voice_id}};

    const auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        const auto error = res.error();
        logger_->warn("speech request failed: {}", httplib::to_string(error));
        throw UpstreamError(is_timeout(error) ? UpstreamErrorKind::timeout : UpstreamErrorKind::transport,
                            fmt::format("speech transport failure: {}", httplib::to_string(error)));
    }
    if (res->status != 200) {
        const auto failure = classify_status(res->status);
        logger_->warn("speech request failed: {}", failure.message);
        throw UpstreamError(failure.kind, failure.message, 1, res->status);
    }
    SpeechAudio audio;
    audio.bytes = res->body;
    audio.mime_type = res->has_header("Content-Type") ? res->get_header_value("Content-Type") : "audio/mpeg";
    return audio;
}

}  // namespace npcviz::llm
