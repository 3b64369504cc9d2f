#include <gtest/gtest.h>

#include <sstream>

#include <spdlog/sinks/null_sink.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "npcviz/llm.hpp"
#include "npcviz/prompt_format.hpp"
// After the Eigen-based headers: <resolv.h> defines _res.
#include "mock_http.hpp"

using namespace npcviz;
using namespace npcviz::llm;
using namespace std::chrono_literals;

namespace {

constexpr const char* kSecret = "sk-test-SECRET-4242";

ProviderRequest simple_request(std::string text = "hello") {
    ProviderRequest r;
    r.system_prompt = "You are a test.";
    r.messages = {{"user", std::move(text)}};
    r.model_name = "test-model";
    return r;
}

std::shared_ptr<spdlog::logger> quiet_logger() {
    return std::make_shared<spdlog::logger>("quiet", std::make_shared<spdlog::sinks::null_sink_mt>());
}

struct CapturedLog {
    std::ostringstream stream;
    std::shared_ptr<spdlog::logger> logger;

    CapturedLog() {
        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(stream);
        logger = std::make_shared<spdlog::logger>("capture", sink);
        logger->set_level(spdlog::level::trace);
        logger->flush_on(spdlog::level::trace);
    }
    std::string text() const { return stream.str(); }
};

LiveProviderConfig live_config(const testutil::MockServer& mock) {
    LiveProviderConfig c;
    c.url = mock.base() + "/v1/chat/completions";
    c.api_key = kSecret;
    c.timeout = 2000ms;
    return c;
}

// Replies with the given statuses in order, then keeps returning the last one.
void script_statuses(testutil::MockServer& mock, testutil::Captured& captured, std::vector<int> statuses,
                     std::string body_for_200 = testutil::completion_body("fine")) {
    mock.server().Post("/v1/chat/completions", [&captured, statuses, body_for_200](const httplib::Request& req,
                                                                                    httplib::Response& res) {
        captured.record(req);
        const std::size_t i = std::min(captured.count() - 1, statuses.size() - 1);
        res.status = statuses[i];
        res.set_content(statuses[i] == 200 ? body_for_200 : std::string(R"({"error":"x"})"), "application/json");
    });
}

}  // namespace

TEST(Request, ValidationRules) {
    EXPECT_NO_THROW(validate(simple_request()));
    auto r = simple_request();
    r.messages.push_back({"assistant", "reply"});
    EXPECT_THROW(validate(r), BadRequestError);
    r = simple_request();
    r.messages.insert(r.messages.begin(), {"user", "earlier"});
    EXPECT_THROW(validate(r), BadRequestError);
    r = simple_request();
    r.messages.clear();
    EXPECT_THROW(validate(r), BadRequestError);
    r = simple_request(std::string(300 * 1024, 'x'));
    EXPECT_THROW(validate(r), BadRequestError);
    EXPECT_NO_THROW(validate(r, 1024 * 1024));
}

TEST(Request, ChatCompletionsShape) {
    auto r = simple_request("hi");
    r.messages.insert(r.messages.begin(), {{"user", "a"}, {"assistant", "b"}});
    const auto body = to_chat_completions(r);
    EXPECT_EQ(body["model"], "test-model");
    ASSERT_EQ(body["messages"].size(), 4u);
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_EQ(body["messages"][0]["content"], "You are a test.");
    EXPECT_EQ(body["messages"][3]["content"], "hi");
    EXPECT_EQ(body["max_tokens"], 512);
}

TEST(Stub, ReplyIsPureFunctionOfRequest) {
    ProviderRequest r = simple_request("Tell me everything about this cluster please, in detail");
    r.system_prompt = prompt::section_header(3) + "\nPersona name: Pip\n" + prompt::section_header(6) +
                      "\nTarget kind: cluster\nYou speak for 11 points; 8 correct (8/11)\n" +
                      prompt::section_header(7) + "\nbe honest 99\n";
    StubProvider stub;
    const auto a = stub.complete(r);
    const auto b = stub.complete(r);
    EXPECT_EQ(a.text, b.text);
    EXPECT_EQ(a.text, "As Pip (cluster), I report: 11, 8, 8/11. You asked: Tell me everything about this cluster pl");
    EXPECT_EQ(a.latency_ms, 0.0);
    EXPECT_EQ(a.finish_reason, FinishReason::stop);
}

TEST(Stub, HandlesMissingSectionsAndUtf8) {
    StubProvider stub;
    auto r = simple_request("h\xC3\xA9llo w\xC3\xB6rld, \xE2\x9C\x93 this is a long unicode question ok");
    const auto reply = stub.complete(r);
    EXPECT_EQ(reply.text.rfind("As a data point (unknown target), I report: nothing. You asked: ", 0), 0u);
    EXPECT_NE(reply.text.find("h\xC3\xA9llo"), std::string::npos);
}

TEST(Retry, ScheduleDoubles) {
    RetryPolicy p;
    EXPECT_EQ(p.max_attempts, 3);
    EXPECT_EQ(p.delay_after(1), 500ms);
    EXPECT_EQ(p.delay_after(2), 1000ms);
}

TEST(Live, RetriesServerErrorsThenSucceeds) {
    testutil::MockServer mock;
    testutil::Captured captured;
    script_statuses(mock, captured, {500, 500, 200});
    mock.start();
    CapturedLog log;
    std::vector<std::chrono::milliseconds> sleeps;
    LiveProvider provider(live_config(mock), log.logger, [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    const auto reply = provider.complete(simple_request());
    EXPECT_EQ(reply.text, "fine");
    EXPECT_EQ(reply.attempts, 3);
    EXPECT_EQ(captured.count(), 3u);
    EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{500ms, 1000ms}));
    EXPECT_EQ(captured.headers[0].find("Authorization")->second, std::string("Bearer ") + kSecret);
    EXPECT_EQ(log.text().find(kSecret), std::string::npos);
}

TEST(Live, RealDelaysAreRoughlyHalfAndOneSecond) {
    testutil::MockServer mock;
    testutil::Captured captured;
    script_statuses(mock, captured, {503, 503, 200});
    mock.start();
    LiveProvider provider(live_config(mock), quiet_logger());
    provider.complete(simple_request());
    ASSERT_EQ(captured.count(), 3u);
    const auto gap1 = captured.arrivals[1] - captured.arrivals[0];
    const auto gap2 = captured.arrivals[2] - captured.arrivals[1];
    EXPECT_GE(gap1, 450ms);
    EXPECT_LT(gap1, 900ms);
    EXPECT_GE(gap2, 950ms);
    EXPECT_LT(gap2, 1600ms);
}

TEST(Live, AuthFailureIsNotRetried) {
    testutil::MockServer mock;
    testutil::Captured captured;
    script_statuses(mock, captured, {401});
    mock.start();
    CapturedLog log;
    int sleeps = 0;
    LiveProvider provider(live_config(mock), log.logger, [&](auto) { ++sleeps; });
    try {
        provider.complete(simple_request());
        FAIL() << "expected auth failure";
    } catch (const UpstreamError& e) {
        EXPECT_EQ(e.kind(), UpstreamErrorKind::auth);
        EXPECT_EQ(e.attempts(), 1);
        EXPECT_EQ(e.http_status(), 401);
        EXPECT_EQ(e.code(), ErrorCode::upstream_failed);
        EXPECT_EQ(std::string(e.what()).find(kSecret), std::string::npos);
        EXPECT_EQ(e.detail().dump().find(kSecret), std::string::npos);
    }
    EXPECT_EQ(captured.count(), 1u);
    EXPECT_EQ(sleeps, 0);
    EXPECT_EQ(log.text().find(kSecret), std::string::npos);
}

TEST(Live, ExhaustedRetriesReportLastFailure) {
    testutil::MockServer mock;
    testutil::Captured captured;
    script_statuses(mock, captured, {429});
    mock.start();
    LiveProvider provider(live_config(mock), quiet_logger(), [](auto) {});
    try {
        provider.complete(simple_request());
        FAIL();
    } catch (const UpstreamError& e) {
        EXPECT_EQ(e.kind(), UpstreamErrorKind::rate_limited);
        EXPECT_EQ(e.attempts(), 3);
    }
    EXPECT_EQ(captured.count(), 3u);
}

TEST(Live, ClientErrorAndMalformedBodyFailFast) {
    testutil::MockServer mock;
    testutil::Captured captured;
    script_statuses(mock, captured, {400});
    mock.start();
    LiveProvider provider(live_config(mock), quiet_logger(), [](auto) {});
    EXPECT_THROW(provider.complete(simple_request()), UpstreamError);
    EXPECT_EQ(captured.count(), 1u);

    testutil::MockServer mock2;
    testutil::Captured captured2;
    script_statuses(mock2, captured2, {200}, R"({"choices": "nope"})");
    mock2.start();
    LiveProvider provider2(live_config(mock2), quiet_logger(), [](auto) {});
    try {
        provider2.complete(simple_request());
        FAIL();
    } catch (const UpstreamError& e) {
        EXPECT_EQ(e.kind(), UpstreamErrorKind::malformed);
    }
    EXPECT_EQ(captured2.count(), 1u);
}

TEST(Live, TransportFailuresAreRetried) {
    int port = 0;
    {
        testutil::MockServer probe;
        probe.start();
        port = probe.port();
    }
    LiveProviderConfig c;
    c.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    c.api_key = kSecret;
    c.timeout = 500ms;
    CapturedLog log;
    int sleeps = 0;
    LiveProvider provider(c, log.logger, [&](auto) { ++sleeps; });
    try {
        provider.complete(simple_request());
        FAIL();
    } catch (const UpstreamError& e) {
        EXPECT_TRUE(e.kind() == UpstreamErrorKind::transport || e.kind() == UpstreamErrorKind::timeout);
        EXPECT_EQ(e.attempts(), 3);
    }
    EXPECT_EQ(sleeps, 2);
    EXPECT_EQ(log.text().find(kSecret), std::string::npos);
}

TEST(Live, SlowUpstreamTimesOut) {
    testutil::MockServer mock;
    mock.server().Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(700ms);
        res.set_content(testutil::completion_body("late"), "application/json");
    });
    mock.start();
    auto c = live_config(mock);
    c.timeout = 200ms;
    c.retry.max_attempts = 1;
    LiveProvider provider(c, quiet_logger(), [](auto) {});
    try {
        provider.complete(simple_request());
        FAIL();
    } catch (const UpstreamError& e) {
        EXPECT_EQ(e.kind(), UpstreamErrorKind::timeout);
    }
}

TEST(Throttle, CapsConcurrentCalls) {
    class Slow : public ChatProvider {
    public:
        ProviderReply complete(const ProviderRequest&) override {
            const int now = ++active;
            int seen = peak.load();
            while (now > seen && !peak.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(30ms);
            --active;
            return {"ok", FinishReason::stop, 0.0, "slow", 1};
        }
        std::string_view id() const override { return "slow"; }
        std::atomic<int> active{0};
        std::atomic<int> peak{0};
    };
    auto slow = std::make_shared<Slow>();
    ThrottledProvider throttled(slow, 2);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { throttled.complete(simple_request()); });
    for (auto& t : threads) t.join();
    EXPECT_LE(slow->peak.load(), 2);
    EXPECT_GE(slow->peak.load(), 1);
}

TEST(Speech, DisabledByDefaultButStillValidates) {
    SpeechClient speech;
    EXPECT_FALSE(speech.enabled());
    EXPECT_TRUE(std::holds_alternative<SpeechDisabled>(speech.speak("hello", "default")));
    EXPECT_THROW(speech.speak(std::string(1001, 'a'), "default"), BadRequestError);
}

TEST(Speech, RelaysAudioBytes) {
    testutil::MockServer mock;
    testutil::Captured captured;
    const std::string audio("\x49\x44\x33\x04\x00\x00\x00\x00\x00\x00\xff\xfb\x90\x64\x00\x01", 16);
    mock.server().Post(R"(/v1/text-to-speech/(\w+))", [&](const httplib::Request& req, httplib::Response& res) {
        captured.record(req);
        res.set_content(audio, "audio/mpeg");
    });
    mock.start();
    SpeechConfig config;
    config.enabled = true;
    config.url = mock.base() + "/v1/text-to-speech/{voice_id}";
    config.api_key = "tts-key";
    SpeechClient speech(config, quiet_logger());
    const auto result = speech.speak("Hello there", "pip");
    const auto* bytes = std::get_if<SpeechAudio>(&result);
    ASSERT_NE(bytes, nullptr);
    EXPECT_EQ(bytes->bytes.size(), 16u);
    EXPECT_EQ(bytes->bytes, audio);
    EXPECT_EQ(bytes->mime_type, "audio/mpeg");
    ASSERT_EQ(captured.count(), 1u);
    EXPECT_EQ(captured.paths[0], "/v1/text-to-speech/pip");
    EXPECT_EQ(captured.headers[0].find("xi-api-key")->second, "tts-key");
    EXPECT_EQ(nlohmann::json::parse(captured.bodies[0])["text"], "Hello there");
}

TEST(Speech, UpstreamErrorsSurface) {
    testutil::MockServer mock;
    mock.server().Post("/tts", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    mock.start();
    SpeechConfig config;
    config.enabled = true;
    config.url = mock.base() + "/tts";
    SpeechClient speech(config, quiet_logger());
    EXPECT_THROW(speech.speak("hi", "default"), UpstreamError);
}

TEST(Config, FromEnvironment) {
    std::map<std::string, std::string> env = {{"PROVIDER", "live"},
                                              {"CHAT_API_URL", "http://localhost:9/v1/chat/completions"},
                                              {"CHAT_API_KEY", "k"},
                                              {"CHAT_MODEL", "m"}};
    const auto lookup = [&](const char* name) -> const char* {
        const auto it = env.find(name);
        return it == env.end() ? nullptr : it->second.c_str();
    };
    auto c = gateway_config_from_env(lookup);
    EXPECT_EQ(c.provider, ProviderKind::live);
    EXPECT_EQ(c.chat.model, "m");
    EXPECT_FALSE(c.speech.enabled);
    env = {};
    c = gateway_config_from_env(lookup);
    EXPECT_EQ(c.provider, ProviderKind::stub);
    EXPECT_EQ(c.chat.model, "gpt-3.5-turbo");
    env = {{"PROVIDER", "magic"}};
    EXPECT_THROW(gateway_config_from_env(lookup), BadRequestError);
    env = {{"TTS_API_URL", "http://localhost:9/tts/{voice_id}"}};
    EXPECT_TRUE(gateway_config_from_env(lookup).speech.enabled);
}

TEST(Config, SplitUrl) {
    EXPECT_EQ(split_url("https://api.example.com/v1/chat"), std::make_pair(std::string("https://api.example.com"),
                                                                          std::string("/v1/chat")));
    EXPECT_EQ(split_url("http://127.0.0.1:8080").second, "/");
    EXPECT_THROW(split_url("localhost/x"), BadRequestError);
}
