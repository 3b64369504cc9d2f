#include <gtest/gtest.h>

#include "npcviz/file_io.hpp"
#include "npcviz/persona.hpp"
#include "npcviz/prompt.hpp"
#include "npcviz/prompt_format.hpp"
#include "npcviz/random.hpp"
#include "oracles.hpp"

using namespace npcviz;
using namespace npcviz::dialogue;

namespace {

const DatasetStore& store() {
    static const DatasetStore s = [] {
        SynthesisConfig c;
        c.num_classes = 10;
        c.per_class = 20;
        c.dimensionality = 8;
        c.confusions = {{3, 5, 0.25}, {1, 9, 0.1}};
        c.seed = 3;
        return synthesize_dataset(c);
    }();
    return s;
}

Layout layout() {
    PortableRng rng(9);
    Layout y(static_cast<Eigen::Index>(store().size()), 2);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        y(i, 0) = rng.normal() * 20.0;
        y(i, 1) = rng.normal() * 20.0;
    }
    return y;
}

}  // namespace

TEST(Format, SectionHeadersAndExtraction) {
    EXPECT_EQ(prompt::section_header(6), "=== [6] SELECTED TARGET ===");
    const std::string text = prompt::section_header(1) + "\nalpha\n" + prompt::section_header(2) + "\nbeta 2\n";
    EXPECT_EQ(prompt::extract_section(text, 1).value(), "alpha\n");
    EXPECT_EQ(prompt::extract_section(text, 2).value(), "beta 2\n");
    EXPECT_FALSE(prompt::extract_section(text, 3).has_value());
    EXPECT_FALSE(prompt::has_all_sections(text));
}

TEST(Format, HasAllSectionsRequiresOrderAndUniqueness) {
    std::string ok;
    for (int i = 1; i <= 7; ++i) ok += prompt::section_header(i) + "\nbody\n";
    EXPECT_TRUE(prompt::has_all_sections(ok));
    EXPECT_FALSE(prompt::has_all_sections(ok + prompt::section_header(3) + "\n"));
    std::string swapped;
    for (int i : {2, 1, 3, 4, 5, 6, 7}) swapped += prompt::section_header(i) + "\n";
    EXPECT_FALSE(prompt::has_all_sections(swapped));
}

TEST(Format, FieldValue) {
    EXPECT_EQ(prompt::field_value("a: 1\nTarget kind: cluster\n", "Target kind").value(), "cluster");
    EXPECT_FALSE(prompt::field_value("nothing here", "Target kind").has_value());
}

TEST(Format, NumericTokens) {
    using V = std::vector<std::string>;
    EXPECT_EQ(prompt::numeric_tokens("In our cluster of 11 instances, 8 were predicted correctly (8/11 = 72.73%)."),
              (V{"11", "8", "8/11", "72.73"}));
    EXPECT_EQ(prompt::numeric_tokens("x=-3.5000, y=0.2500"), (V{"-3.5000", "0.2500"}));
    EXPECT_EQ(prompt::numeric_tokens("class_12 and 3rd and #38: \"cat\" -> \"dog\": 3"), (V{"38", "3"}));
    EXPECT_EQ(prompt::numeric_tokens("no digits"), V{});
    EXPECT_EQ(prompt::numeric_tokens("end 7."), V{"7"});
    EXPECT_EQ(prompt::numeric_tokens("a-5 well-2"), (V{}));
}

TEST(Personas, FileMatchesBuiltins) {
    const auto file = PersonaRegistry::load(std::filesystem::path(NPCVIZ_SOURCE_DIR) / "data" / "personas.json");
    const auto builtin = PersonaRegistry::builtin();
    ASSERT_EQ(file.size(), builtin.size());
    for (std::size_t i = 0; i < file.size(); ++i) EXPECT_EQ(file.at(i), builtin.at(i));
}

TEST(Personas, RegistryRules) {
    EXPECT_GE(PersonaRegistry::builtin().size(), 6u);
    EXPECT_THROW(PersonaRegistry({}), BadRequestError);
    const Persona p{"x", "X", "style", "hi", "default"};
    EXPECT_THROW(PersonaRegistry({p, p}), BadRequestError);
    EXPECT_THROW(PersonaRegistry::builtin().find("nobody"), NotFoundError);
}

TEST(Personas, AssignmentIsIdModuloSize) {
    const auto reg = PersonaRegistry::builtin();
    EXPECT_EQ(assign_persona(reg, ChatTarget::single(38)).persona_id, "shy");
    EXPECT_EQ(assign_persona(reg, ChatTarget::single(76)).persona_id, "irritable");
    EXPECT_EQ(assign_persona(reg, ChatTarget::cluster({40, 7, 12})).persona_id, reg.at(7 % reg.size()).persona_id);
    for (InstanceId id = 0; id < 30; ++id) {
        EXPECT_EQ(persona_index(ChatTarget::single(id), reg.size()), static_cast<std::size_t>(id) % reg.size());
    }
}

TEST(Personas, GreetingFillsPlaceholders) {
    const auto reg = PersonaRegistry::builtin();
    const auto text = render_greeting(reg.find("shy"), ChatTarget::single(38));
    EXPECT_NE(text.find("Pip"), std::string::npos);
    EXPECT_NE(text.find("#38"), std::string::npos);
    EXPECT_EQ(text.find('{'), std::string::npos);
    const auto cluster = render_greeting(reg.at(0), ChatTarget::cluster({1, 2, 3}));
    EXPECT_NE(cluster.find("3 data points"), std::string::npos);
}

TEST(Targets, KeysRoundTrip) {
    EXPECT_EQ(ChatTarget::parse_key("instance:38"), ChatTarget::single(38));
    EXPECT_EQ(ChatTarget::parse_key("cluster:30,7,12").key(), "cluster:7,12,30");
    EXPECT_THROW(ChatTarget::parse_key("cluster:7"), BadRequestError);
    EXPECT_THROW(ChatTarget::parse_key("instance:x"), BadRequestError);
    EXPECT_THROW(ChatTarget::parse_key("galaxy:1"), BadRequestError);
    const auto t = ChatTarget::cluster({5, 3, 5, 9});
    EXPECT_EQ(nlohmann::json(t).get<ChatTarget>(), t);
    EXPECT_THROW(check_target(ChatTarget::single(999999), store()), NotFoundError);
}

TEST(Prompt, AllSectionsForRandomTargets) {
    const auto reg = PersonaRegistry::builtin();
    const Layout y = layout();
    PortableRng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const bool cluster = trial % 2 == 1;
        std::vector<InstanceId> ids;
        const std::size_t want = cluster ? 2 + rng.below(60) : 1;
        while (ids.size() < want) {
            const auto id = static_cast<InstanceId>(rng.below(store().size()));
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
        }
        const auto target = cluster ? ChatTarget::cluster(ids) : ChatTarget::single(ids.front());
        const bool pending = trial % 5 == 0;
        const auto text = build_system_prompt(store(), pending ? nullptr : &y, target, assign_persona(reg, target));
        ASSERT_TRUE(prompt::has_all_sections(text)) << text;
        const auto section6 = std::string(prompt::extract_section(text, 6).value());
        EXPECT_EQ(prompt::numeric_tokens(section6),
                  oracle::expected_target_numbers(store(), target.instance_ids, cluster, pending ? nullptr : &y))
            << section6;
        if (pending) EXPECT_NE(section6.find(prompt::kProjectionPending), std::string::npos);
    }
}

TEST(Prompt, StatisticsAndEncodingSections) {
    const auto reg = PersonaRegistry::builtin();
    const auto text = build_system_prompt(store(), nullptr, ChatTarget::single(38), reg.find("shy"));
    const auto stats = std::string(prompt::extract_section(text, 5).value());
    EXPECT_NE(stats.find("- cat: 20 data points, accuracy 75.00%, color #2ca02c (green)"), std::string::npos) << stats;
    EXPECT_NE(stats.find("- dog: 20 data points, accuracy 100.00%, color #1f77b4 (blue)"), std::string::npos);
    EXPECT_NE(stats.find("left"), std::string::npos);
    const auto persona = std::string(prompt::extract_section(text, 3).value());
    EXPECT_EQ(prompt::field_value(persona, prompt::kPersonaNameKey).value(), "Pip");
    const auto identity = std::string(prompt::extract_section(text, 4).value());
    EXPECT_NE(identity.find(store().manifest().model_name), std::string::npos);
    EXPECT_NE(identity.find(store().manifest().dataset_name), std::string::npos);
}

TEST(Prompt, MemberListIsCapped) {
    std::vector<InstanceId> ids;
    for (InstanceId id = 0; id < 100; ++id) ids.push_back(id);
    PromptOptions options;
    options.member_list_cap = 5;
    const auto text =
        build_system_prompt(store(), nullptr, ChatTarget::cluster(ids), PersonaRegistry::builtin().at(0), options);
    const auto section6 = std::string(prompt::extract_section(text, 6).value());
    EXPECT_NE(section6.find("Members (showing 5 of 100)"), std::string::npos);
    EXPECT_EQ(prompt::numeric_tokens(section6), oracle::expected_target_numbers(store(), ids, true, nullptr, 5));
}

TEST(Prompt, NumberFormatsAndColours) {
    EXPECT_EQ(format_coordinate(-1.23456), "-1.2346");
    EXPECT_EQ(format_percent(8.0 / 11.0), "72.73");
    EXPECT_EQ(color_name("#2ca02c"), "green");
    EXPECT_EQ(color_name("#1f77b4"), "blue");
    EXPECT_EQ(color_name("not a colour"), "unknown");
}
