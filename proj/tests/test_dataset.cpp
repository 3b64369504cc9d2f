#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "npcviz/dataset.hpp"
#include "npcviz/file_io.hpp"
#include "test_util.hpp"

using namespace npcviz;

namespace {

SynthesisConfig cifar_like() {
    SynthesisConfig c;
    c.num_classes = 10;
    c.per_class = 50;
    c.dimensionality = 64;
    c.confusions = {{3, 5, 0.2}};
    c.seed = 7;
    return c;
}

DatasetErrorKind load_error_kind(const std::filesystem::path& manifest) {
    try {
        load_dataset(manifest);
    } catch (const DatasetError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "load succeeded";
    return DatasetErrorKind::invalid_argument;
}

std::vector<std::string> lines_of(const std::filesystem::path& file) {
    std::istringstream in(read_file(file));
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

void write_lines(const std::filesystem::path& file, const std::vector<std::string>& lines) {
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    atomic_write(file, text);
}

}  // namespace

TEST(Synthesis, ScriptedConfusionCountIsExact) {
    const auto store = synthesize_dataset(cifar_like());
    ASSERT_EQ(store.size(), 500u);
    std::size_t cat_as_dog = 0;
    std::size_t wrong = 0;
    for (const auto& inst : store.instances()) {
        if (inst.true_label == 3 && inst.predicted_label == 5) ++cat_as_dog;
        if (inst.true_label != inst.predicted_label) ++wrong;
    }
    EXPECT_EQ(cat_as_dog, 10u);
    EXPECT_EQ(wrong, 10u);
    EXPECT_DOUBLE_EQ(store.manifest().overall_accuracy, 490.0 / 500.0);
    EXPECT_EQ(store.manifest().class_names[3], "cat");
    EXPECT_EQ(store.manifest().class_names[5], "dog");
    EXPECT_EQ(store.manifest().class_colors.size(), 10u);
    EXPECT_EQ(store.manifest().per_class_accuracy[3], std::optional<double>(0.8));
}

TEST(Synthesis, TinyDatasetWithoutConfusion) {
    SynthesisConfig c;
    c.num_classes = 2;
    c.per_class = 1;
    c.dimensionality = 2;
    c.seed = 0;
    const auto store = synthesize_dataset(c);
    EXPECT_EQ(store.size(), 2u);
    EXPECT_EQ(store.manifest().overall_accuracy, 1.0);
}

TEST(Synthesis, ZeroOverlapIsPerfectlyAccurate) {
    auto c = cifar_like();
    c.confusions = {{3, 5, 0.0}};
    EXPECT_EQ(synthesize_dataset(c).manifest().overall_accuracy, 1.0);
}

TEST(Synthesis, SameSeedIsBitIdentical) {
    const auto a = synthesize_dataset(cifar_like());
    const auto b = synthesize_dataset(cifar_like());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto& x = a.instances()[i];
        const auto& y = b.instances()[i];
        EXPECT_EQ(x.id, y.id);
        EXPECT_EQ(x.true_label, y.true_label);
        EXPECT_EQ(x.predicted_label, y.predicted_label);
        ASSERT_EQ(std::memcmp(x.embedding.data(), y.embedding.data(), x.embedding.size() * sizeof(double)), 0);
    }
}

TEST(Synthesis, ConfusedInstancesSitNearTargetMean) {
    const auto store = synthesize_dataset(cifar_like());
    const auto x = store.embedding_matrix();
    std::vector<Eigen::RowVectorXd> mean(10, Eigen::RowVectorXd::Zero(64));
    std::vector<int> count(10, 0);
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& inst = store.instances()[i];
        if (!inst.correct()) continue;
        mean[inst.true_label] += x.row(static_cast<Eigen::Index>(i));
        ++count[inst.true_label];
    }
    for (int c = 0; c < 10; ++c) mean[c] /= count[c];
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& inst = store.instances()[i];
        if (inst.correct()) continue;
        const auto row = x.row(static_cast<Eigen::Index>(i));
        EXPECT_LT((row - mean[5]).norm(), (row - mean[3]).norm());
    }
}

TEST(Synthesis, RejectsBadArguments) {
    auto c = cifar_like();
    c.confusions = {{3, 10, 0.1}};
    EXPECT_THROW(synthesize_dataset(c), DatasetError);
    c = cifar_like();
    c.confusions = {{3, 5, 1.5}};
    EXPECT_THROW(synthesize_dataset(c), DatasetError);
    c = cifar_like();
    c.num_classes = 1;
    EXPECT_THROW(synthesize_dataset(c), DatasetError);
    c = cifar_like();
    c.dimensionality = 1;
    EXPECT_THROW(synthesize_dataset(c), DatasetError);
}

TEST(Store, LookupsAndOrder) {
    const auto store = synthesize_dataset(cifar_like());
    EXPECT_EQ(store.get_instance(38).id, 38);
    const std::vector<InstanceId> ids = {3, 1, 2};
    const auto got = store.get_instances(ids);
    ASSERT_EQ(got.size(), 3u);
    EXPECT_EQ(got[0].id, 3);
    EXPECT_EQ(got[1].id, 1);
    EXPECT_EQ(got[2].id, 2);
    EXPECT_THROW(store.get_instance(1000000000), NotFoundError);
}

TEST(Store, RecomputedAccuracyIsIndicatorMean) {
    const auto store = synthesize_dataset(cifar_like());
    double hits = 0;
    for (const auto& inst : store.instances()) hits += inst.true_label == inst.predicted_label ? 1.0 : 0.0;
    EXPECT_DOUBLE_EQ(store.manifest().overall_accuracy, hits / static_cast<double>(store.size()));
    std::size_t total = 0;
    for (auto c : store.manifest().class_distribution) total += c;
    EXPECT_EQ(total, store.size());
}

TEST(Files, RoundTripIsBitIdentical) {
    testutil::TempDir dir;
    const auto store = synthesize_dataset(cifar_like());
    write_dataset(store, dir.path());
    const auto loaded = load_dataset(dir.path() / "manifest.json");
    ASSERT_EQ(loaded.size(), store.size());
    EXPECT_EQ(nlohmann::json(loaded.manifest()), nlohmann::json(store.manifest()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& a = store.instances()[i];
        const auto& b = loaded.instances()[i];
        EXPECT_EQ(a.id, b.id);
        ASSERT_EQ(a.embedding.size(), b.embedding.size());
        ASSERT_EQ(std::memcmp(a.embedding.data(), b.embedding.data(), a.embedding.size() * sizeof(double)), 0);
    }
    EXPECT_EQ(load_dataset_dir(dir.path()).size(), 500u);
}

TEST(Files, LargeDimensionalityLoads) {
    testutil::TempDir dir;
    auto c = cifar_like();
    c.dimensionality = 512;
    write_dataset(synthesize_dataset(c), dir.path());
    const auto loaded = load_dataset(dir.path() / "manifest.json");
    EXPECT_EQ(loaded.size(), 500u);
    EXPECT_EQ(loaded.manifest().dimensionality, 512);
}

TEST(Files, MissingFiles) {
    testutil::TempDir dir;
    EXPECT_EQ(load_error_kind(dir.path() / "manifest.json"), DatasetErrorKind::missing_file);
    write_dataset(synthesize_dataset(cifar_like()), dir.path());
    std::filesystem::remove(dir.path() / "instances.jsonl");
    EXPECT_EQ(load_error_kind(dir.path() / "manifest.json"), DatasetErrorKind::missing_file);
}

TEST(Files, ShortEmbeddingNamesOffendingId) {
    testutil::TempDir dir;
    write_dataset(synthesize_dataset(cifar_like()), dir.path());
    auto lines = lines_of(dir.path() / "instances.jsonl");
    auto inst = nlohmann::json::parse(lines[17]);
    inst["embedding"].erase(inst["embedding"].size() - 1);
    const auto id = inst["id"].get<InstanceId>();
    lines[17] = inst.dump();
    write_lines(dir.path() / "instances.jsonl", lines);
    try {
        load_dataset(dir.path() / "manifest.json");
        FAIL() << "expected dimension mismatch";
    } catch (const DatasetError& e) {
        EXPECT_EQ(e.kind(), DatasetErrorKind::dimension_mismatch);
        EXPECT_EQ(e.detail().at("id").get<InstanceId>(), id);
        EXPECT_NE(std::string(e.what()).find(std::to_string(id)), std::string::npos);
    }
}

TEST(Files, DeclaredStatisticMustMatch) {
    testutil::TempDir dir;
    SynthesisConfig c;
    c.num_classes = 2;
    c.per_class = 5;
    c.dimensionality = 3;
    c.confusions = {{0, 1, 0.4}};
    write_dataset(synthesize_dataset(c), dir.path());
    auto manifest = nlohmann::json::parse(read_file(dir.path() / "manifest.json"));
    EXPECT_DOUBLE_EQ(manifest["overall_accuracy"].get<double>(), 0.8);
    manifest["overall_accuracy"] = 0.9;
    atomic_write(dir.path() / "manifest.json", manifest.dump());
    EXPECT_EQ(load_error_kind(dir.path() / "manifest.json"), DatasetErrorKind::statistic_mismatch);
}

TEST(Files, LabelOutOfRangeAndDuplicates) {
    testutil::TempDir dir;
    write_dataset(synthesize_dataset(cifar_like()), dir.path());
    const auto original = lines_of(dir.path() / "instances.jsonl");

    auto lines = original;
    auto inst = nlohmann::json::parse(lines[0]);
    inst["predicted_label"] = 10;
    lines[0] = inst.dump();
    write_lines(dir.path() / "instances.jsonl", lines);
    EXPECT_EQ(load_error_kind(dir.path() / "manifest.json"), DatasetErrorKind::label_out_of_range);

    lines = original;
    lines[1] = lines[0];
    write_lines(dir.path() / "instances.jsonl", lines);
    EXPECT_EQ(load_error_kind(dir.path() / "manifest.json"), DatasetErrorKind::duplicate_id);

    lines = original;
    lines[2] = "{not json";
    write_lines(dir.path() / "instances.jsonl", lines);
    EXPECT_EQ(load_error_kind(dir.path() / "manifest.json"), DatasetErrorKind::parse_error);
}

TEST(Files, ManifestShapeIsChecked) {
    testutil::TempDir dir;
    write_dataset(synthesize_dataset(cifar_like()), dir.path());
    auto manifest = nlohmann::json::parse(read_file(dir.path() / "manifest.json"));
    manifest["class_colors"].erase(0);
    atomic_write(dir.path() / "manifest.json", manifest.dump());
    EXPECT_EQ(load_error_kind(dir.path() / "manifest.json"), DatasetErrorKind::invalid_manifest);
}
