#include <gtest/gtest.h>

#include "npcviz/analytics.hpp"
#include "npcviz/random.hpp"
#include "oracles.hpp"

using namespace npcviz;

namespace {

const DatasetStore& store() {
    static const DatasetStore s = [] {
        SynthesisConfig c;
        c.num_classes = 10;
        c.per_class = 30;
        c.dimensionality = 16;
        c.confusions = {{3, 5, 0.3}, {0, 3, 0.1}, {8, 3, 0.2}};
        c.seed = 12;
        return synthesize_dataset(c);
    }();
    return s;
}

Layout layout_for(const DatasetStore& s, std::uint64_t seed) {
    PortableRng rng(seed);
    Layout y(static_cast<Eigen::Index>(s.size()), 2);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        y(i, 0) = rng.normal() * 10.0;
        y(i, 1) = rng.normal() * 10.0;
    }
    return y;
}

std::vector<InstanceId> random_ids(std::size_t count, std::uint64_t seed) {
    PortableRng rng(seed);
    std::vector<InstanceId> ids;
    while (ids.size() < count) {
        const auto id = static_cast<InstanceId>(rng.below(store().size()));
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    }
    return ids;
}

}  // namespace

TEST(Selection, MatchesBruteForceRecount) {
    const Layout layout = layout_for(store(), 1);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto ids = random_ids(1 + seed % 60, seed);
        const auto stats = selection_stats(store(), ids, &layout);
        const auto r = oracle::recount(store(), ids, &layout);
        EXPECT_EQ(stats.size, r.size);
        EXPECT_EQ(stats.correct_count, r.correct);
        EXPECT_DOUBLE_EQ(stats.accuracy, static_cast<double>(r.correct) / static_cast<double>(r.size));
        ASSERT_EQ(stats.confusion_pairs.size(), r.pairs.size());
        for (std::size_t i = 0; i < r.pairs.size(); ++i) {
            EXPECT_EQ(stats.confusion_pairs[i].count, std::get<0>(r.pairs[i]));
            EXPECT_EQ(stats.confusion_pairs[i].true_class, std::get<1>(r.pairs[i]));
            EXPECT_EQ(stats.confusion_pairs[i].predicted_class, std::get<2>(r.pairs[i]));
        }
        ASSERT_TRUE(stats.centroid.has_value());
        EXPECT_NEAR(stats.centroid->x, r.cx, 1e-9);
        EXPECT_NEAR(stats.centroid->y, r.cy, 1e-9);
        std::size_t total_true = 0;
        for (auto c : stats.class_counts_true) total_true += c;
        EXPECT_EQ(total_true, stats.size);
    }
}

TEST(Selection, CentroidAbsentWithoutLayout) {
    const std::vector<InstanceId> ids = {1, 2, 3};
    EXPECT_FALSE(selection_stats(store(), ids).centroid.has_value());
}

TEST(Selection, ErrorCases) {
    EXPECT_THROW(selection_stats(store(), std::vector<InstanceId>{}), BadRequestError);
    EXPECT_THROW(selection_stats(store(), std::vector<InstanceId>{4, 4}), BadRequestError);
    EXPECT_THROW(selection_stats(store(), std::vector<InstanceId>{4, 100000}), NotFoundError);
}

TEST(Selection, TiesOrderedByClassPair) {
    std::vector<InstanceId> ids;
    int a = 0, b = 0;
    for (const auto& inst : store().instances()) {
        if (inst.true_label == 8 && inst.predicted_label == 3 && a < 2) {
            ids.push_back(inst.id);
            ++a;
        }
        if (inst.true_label == 3 && inst.predicted_label == 5 && b < 2) {
            ids.push_back(inst.id);
            ++b;
        }
    }
    const auto stats = selection_stats(store(), ids);
    ASSERT_EQ(stats.confusion_pairs.size(), 2u);
    EXPECT_EQ(stats.confusion_pairs[0], (ConfusionPair{3, 5, 2}));
    EXPECT_EQ(stats.confusion_pairs[1], (ConfusionPair{8, 3, 2}));
}

TEST(ClassReportTest, MatchesBruteForce) {
    const auto report = class_report(store());
    const std::size_t k = 10;
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t p = 0; p < k; ++p) {
            std::size_t count = 0;
            for (const auto& inst : store().instances()) {
                count += static_cast<std::size_t>(inst.true_label) == t && static_cast<std::size_t>(inst.predicted_label) == p;
            }
            EXPECT_EQ(report.confusion[t][p], count);
        }
        EXPECT_EQ(report.support[t], 30u);
        ASSERT_TRUE(report.accuracy[t].has_value());
        EXPECT_DOUBLE_EQ(*report.accuracy[t], static_cast<double>(report.confusion[t][t]) / 30.0);
    }
    EXPECT_DOUBLE_EQ(report.overall_accuracy, store().manifest().overall_accuracy);
}

TEST(ClassReportTest, EmptyClassHasUndefinedAccuracy) {
    DatasetManifest m;
    m.dataset_name = "d";
    m.model_name = "m";
    m.num_classes = 3;
    m.class_names = {"a", "b", "c"};
    m.class_colors = {"#000000", "#111111", "#222222"};
    m.dimensionality = 2;
    std::vector<Instance> instances = {{0, {0.0, 0.0}, 0, 0, {}}, {1, {1.0, 0.0}, 1, 0, {}}};
    recompute_statistics(m, instances);
    const DatasetStore s(m, instances);
    const auto report = class_report(s);
    EXPECT_FALSE(report.accuracy[2].has_value());
    EXPECT_EQ(nlohmann::json(report)["per_class_accuracy"][2], nullptr);
}

TEST(Neighbours, MatchBruteForceInBothSpaces) {
    const Layout layout = layout_for(store(), 3);
    std::vector<InstanceId> ids;
    std::vector<std::vector<double>> emb, flat;
    for (std::size_t i = 0; i < store().size(); ++i) {
        ids.push_back(store().instances()[i].id);
        emb.push_back(store().instances()[i].embedding);
        flat.push_back({layout(static_cast<Eigen::Index>(i), 0), layout(static_cast<Eigen::Index>(i), 1)});
    }
    for (std::size_t q : {0u, 17u, 299u}) {
        for (std::size_t k : {1u, 5u, 20u}) {
            const auto got = neighbors(store(), ids[q], k, NeighborSpace::embedding_d);
            const auto want = oracle::knn(emb, ids, q, k);
            ASSERT_EQ(got.size(), k);
            for (std::size_t i = 0; i < k; ++i) {
                EXPECT_EQ(got[i].id, want[i].second);
                EXPECT_NEAR(got[i].distance, want[i].first, 1e-9);
            }
            const auto got2 = neighbors(store(), ids[q], k, NeighborSpace::layout_2d, &layout);
            const auto want2 = oracle::knn(flat, ids, q, k);
            for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(got2[i].id, want2[i].second);
        }
    }
}

TEST(Neighbours, TiesBrokenByAscendingId) {
    Layout flat = Layout::Zero(static_cast<Eigen::Index>(store().size()), 2);
    const auto got = neighbors(store(), 10, 4, NeighborSpace::layout_2d, &flat);
    EXPECT_EQ(got[0].id, 0);
    EXPECT_EQ(got[1].id, 1);
    EXPECT_EQ(got[2].id, 2);
    EXPECT_EQ(got[3].id, 3);
}

TEST(Neighbours, ErrorCases) {
    EXPECT_THROW(neighbors(store(), 1, 0, NeighborSpace::embedding_d), BadRequestError);
    EXPECT_THROW(neighbors(store(), 1, store().size(), NeighborSpace::embedding_d), BadRequestError);
    EXPECT_THROW(neighbors(store(), 123456, 3, NeighborSpace::embedding_d), NotFoundError);
    try {
        neighbors(store(), 1, 3, NeighborSpace::layout_2d);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::conflict);
    }
    EXPECT_THROW(parse_neighbor_space("3d"), BadRequestError);
}
