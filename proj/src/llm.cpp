#include "npcviz/llm.hpp"

#include <cmath>
#include <cstdlib>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "npcviz/prompt_format.hpp"
#include "npcviz/utf8.hpp"

namespace npcviz::llm {

void validate(const ProviderRequest& request, std::size_t byte_cap) {
    if (request.messages.empty() || request.messages.back().role != "user") {
        throw BadRequestError("provider request must end with a user turn");
    }
    for (std::size_t i = 0; i < request.messages.size(); ++i) {
        const auto& role = request.messages[i].role;
        if (role != "user" && role != "assistant") {
            throw BadRequestError(fmt::format("unknown message role '{}'", role));
        }
        if (i > 0 && request.messages[i - 1].role == role) {
            throw BadRequestError(fmt::format("message {} repeats role '{}'; roles must alternate", i, role));
        }
    }
    if (!(request.temperature >= 0.0)) throw BadRequestError("temperature must be non-negative");
    if (request.max_tokens <= 0) throw BadRequestError("max_tokens must be positive");
    const std::size_t bytes = to_chat_completions(request).dump().size();
    if (bytes > byte_cap) {
        throw BadRequestError(fmt::format("request is {} bytes, cap is {}", bytes, byte_cap),
                              {{"bytes", bytes}, {"cap", byte_cap}});
    }
}

nlohmann::json to_chat_completions(const ProviderRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
    for (const auto& m : request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.text}});
    }
    return {{"model", request.model_name},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
}

std::string_view to_string(FinishReason reason) {
    switch (reason) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

std::string_view to_string(UpstreamErrorKind kind) {
    switch (kind) {
        case UpstreamErrorKind::auth: return "auth";
        case UpstreamErrorKind::rate_limited: return "rate_limited";
        case UpstreamErrorKind::timeout: return "timeout";
        case UpstreamErrorKind::transport: return "transport";
        case UpstreamErrorKind::server: return "server";
        case UpstreamErrorKind::malformed: return "malformed";
        case UpstreamErrorKind::disabled: return "disabled";
    }
    return "transport";
}

ProviderReply StubProvider::complete(const ProviderRequest& request) {
    const std::string_view prompt = request.system_prompt;
    const std::string_view target = prompt::extract_section(prompt, 6).value_or(std::string_view{});
    const std::string_view persona_section = prompt::extract_section(prompt, 3).value_or(std::string_view{});

    const std::string persona = prompt::field_value(persona_section, prompt::kPersonaNameKey).value_or("a data point");
    const std::string kind = prompt::field_value(target, prompt::kTargetKindKey).value_or("unknown target");
    const auto numbers = prompt::numeric_tokens(target);

    std::string_view asked;
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
        if (it->role == "user") {
            asked = it->text;
            break;
        }
    }

    ProviderReply reply;
    reply.text = fmt::format("As {} ({}), I report: {}. You asked: {}", persona, kind,
                             numbers.empty() ? std::string("nothing") : fmt::format("{}", fmt::join(numbers, ", ")),
                             utf8::prefix(asked, 40));
    reply.finish_reason = FinishReason::stop;
    reply.provider_id = std::string(id());
    return reply;
}

std::chrono::milliseconds RetryPolicy::delay_after(int attempt) const {
    const double scale = std::pow(multiplier, std::max(attempt - 1, 0));
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(base_delay.count() * scale)));
}

ThrottledProvider::ThrottledProvider(std::shared_ptr<ChatProvider> inner, std::ptrdiff_t max_in_flight)
    : inner_(std::move(inner)), slots_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, kMaxInFlight)) {}

ProviderReply ThrottledProvider::complete(const ProviderRequest& request) {
    slots_.acquire();
    struct Release {
        std::counting_semaphore<kMaxInFlight>& s;
        ~Release() { s.release(); }
    } release{slots_};
    return inner_->complete(request);
}

ProviderKind parse_provider_kind(std::string_view text) {
    if (text.empty() || text == "stub") return ProviderKind::stub;
    if (text == "live") return ProviderKind::live;
    throw BadRequestError(fmt::format("unknown provider '{}' (expected stub or live)", text));
}

GatewayConfig gateway_config_from_env(const std::function<const char*(const char*)>& getenv) {
    const auto read = [&](const char* name) -> std::string {
        const char* value = getenv ? getenv(name) : std::getenv(name);
        return value != nullptr ? std::string(value) : std::string();
    };
    GatewayConfig config;
    config.provider = parse_provider_kind(read("PROVIDER"));
    config.chat.url = read("CHAT_API_URL");
    if (config.chat.url.empty()) config.chat.url = "https://api.openai.com/v1/chat/completions";
    config.chat.api_key = read("CHAT_API_KEY");
    if (auto model = read("CHAT_MODEL"); !model.empty()) config.chat.model = model;
    config.speech.url = read("TTS_API_URL");
    config.speech.api_key = read("TTS_API_KEY");
    config.speech.enabled = !config.speech.url.empty();
    return config;
}

std::shared_ptr<ChatProvider> make_provider(const GatewayConfig& config, std::shared_ptr<spdlog::logger> logger) {
    std::shared_ptr<ChatProvider> inner;
    if (config.provider == ProviderKind::live) {
        inner = std::make_shared<LiveProvider>(config.chat, std::move(logger));
    } else {
        inner = std::make_shared<StubProvider>();
    }
    return std::make_shared<ThrottledProvider>(std::move(inner), config.max_in_flight);
}

std::shared_ptr<spdlog::logger> default_logger() {
    static const auto logger = [] {
        if (auto existing = spdlog::get("npcviz.llm")) return existing;
        return spdlog::stderr_color_mt("npcviz.llm");
    }();
    return logger;
}

std::pair<std::string, std::string> split_url(std::string_view url) {
    const std::size_t scheme = url.find("://");
    if (scheme == std::string_view::npos) {
        throw BadRequestError(fmt::format("URL '{}' has no scheme", url));
    }
    const std::size_t path = url.find('/', scheme + 3);
    if (path == std::string_view::npos) {
        return {std::string(url), "/"};
    }
    return {std::string(url.substr(0, path)), std::string(url.substr(path))};
}

}  // namespace npcviz::llm
