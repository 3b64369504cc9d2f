#include "npcviz/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

namespace npcviz {

SelectionStats selection_stats(const DatasetStore& store, std::span<const InstanceId> ids, const Layout* layout) {
    if (ids.empty()) {
        throw BadRequestError("selection is empty");
    }
    std::unordered_set<InstanceId> seen;
    for (InstanceId id : ids) {
        if (!seen.insert(id).second) {
            throw BadRequestError(fmt::format("instance id {} appears twice in the selection", id), {{"id", id}});
        }
    }

    const auto k = static_cast<std::size_t>(store.manifest().num_classes);
    SelectionStats stats;
    stats.instance_ids.assign(ids.begin(), ids.end());
    stats.size = ids.size();
    stats.class_counts_true.assign(k, 0);
    stats.class_counts_predicted.assign(k, 0);
    std::vector<std::size_t> pair_counts(k * k, 0);

    double cx = 0.0;
    double cy = 0.0;
    for (InstanceId id : ids) {
        const std::size_t row = store.index_of(id);
        const Instance& inst = store.instances()[row];
        const auto t = static_cast<std::size_t>(inst.true_label);
        const auto p = static_cast<std::size_t>(inst.predicted_label);
        ++stats.class_counts_true[t];
        ++stats.class_counts_predicted[p];
        if (t == p) {
            ++stats.correct_count;
        } else {
            ++pair_counts[t * k + p];
        }
        if (layout != nullptr) {
            cx += (*layout)(static_cast<Eigen::Index>(row), 0);
            cy += (*layout)(static_cast<Eigen::Index>(row), 1);
        }
    }
    stats.accuracy = static_cast<double>(stats.correct_count) / static_cast<double>(stats.size);
    if (layout != nullptr) {
        const auto count = static_cast<double>(stats.size);
        stats.centroid = Point2{cx / count, cy / count};
    }

    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t p = 0; p < k; ++p) {
            if (const auto c = pair_counts[t * k + p]; c > 0) {
                stats.confusion_pairs.push_back({static_cast<int>(t), static_cast<int>(p), c});
            }
        }
    }
    // Already in (true, predicted) order, so a stable sort on count finishes the job.
    std::stable_sort(stats.confusion_pairs.begin(), stats.confusion_pairs.end(),
                     [](const ConfusionPair& a, const ConfusionPair& b) { return a.count > b.count; });
    return stats;
}

ClassReport class_report(const DatasetStore& store) {
    const auto k = static_cast<std::size_t>(store.manifest().num_classes);
    ClassReport report;
    report.confusion.assign(k, std::vector<std::size_t>(k, 0));
    report.support.assign(k, 0);
    std::size_t correct = 0;
    for (const auto& inst : store.instances()) {
        const auto t = static_cast<std::size_t>(inst.true_label);
        ++report.confusion[t][static_cast<std::size_t>(inst.predicted_label)];
        ++report.support[t];
        if (inst.correct()) ++correct;
    }
    report.accuracy.assign(k, std::nullopt);
    for (std::size_t c = 0; c < k; ++c) {
        if (report.support[c] > 0) {
            report.accuracy[c] = static_cast<double>(report.confusion[c][c]) / static_cast<double>(report.support[c]);
        }
    }
    report.overall_accuracy = static_cast<double>(correct) / static_cast<double>(store.size());
    return report;
}

std::vector<Neighbor> neighbors(const DatasetStore& store, InstanceId id, std::size_t k, NeighborSpace space,
                                const Layout* layout) {
    const std::size_t origin = store.index_of(id);
    const std::size_t n = store.size();
    if (k == 0 || k >= n) {
        throw BadRequestError(fmt::format("k must lie in [1, {}), got {}", n, k), {{"k", k}});
    }
    if (space == NeighborSpace::layout_2d && layout == nullptr) {
        throw Error(ErrorCode::conflict, "projection has not been computed yet");
    }

    const auto instances = store.instances();
    std::vector<Neighbor> all;
    all.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
        if (j == origin) continue;
        double acc = 0.0;
        if (space == NeighborSpace::layout_2d) {
            const double dx = (*layout)(static_cast<Eigen::Index>(origin), 0) - (*layout)(static_cast<Eigen::Index>(j), 0);
            const double dy = (*layout)(static_cast<Eigen::Index>(origin), 1) - (*layout)(static_cast<Eigen::Index>(j), 1);
            acc = dx * dx + dy * dy;
        } else {
            const auto& a = instances[origin].embedding;
            const auto& b = instances[j].embedding;
            for (std::size_t d = 0; d < a.size(); ++d) {
                const double diff = a[d] - b[d];
                acc += diff * diff;
            }
        }
        all.push_back({instances[j].id, std::sqrt(acc)});
    }
    const auto closer = [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    all.resize(k);
    return all;
}

NeighborSpace parse_neighbor_space(std::string_view text) {
    if (text == "layout_2d" || text.empty()) return NeighborSpace::layout_2d;
    if (text == "embedding_d") return NeighborSpace::embedding_d;
    throw BadRequestError(fmt::format("unknown neighbour space '{}'", text));
}

void to_json(nlohmann::json& j, const ConfusionPair& pair) {
    j = nlohmann::json{{"true_class", pair.true_class}, {"predicted_class", pair.predicted_class}, {"count", pair.count}};
}

void to_json(nlohmann::json& j, const SelectionStats& s) {
    j = nlohmann::json{{"instance_ids", s.instance_ids},
                       {"size", s.size},
                       {"correct_count", s.correct_count},
                       {"accuracy", s.accuracy},
                       {"class_counts_true", s.class_counts_true},
                       {"class_counts_predicted", s.class_counts_predicted},
                       {"confusion_pairs", s.confusion_pairs},
                       {"centroid", nullptr}};
    if (s.centroid) {
        j["centroid"] = {{"x", s.centroid->x}, {"y", s.centroid->y}};
    }
}

void to_json(nlohmann::json& j, const ClassReport& r) {
    nlohmann::json accuracy = nlohmann::json::array();
    for (const auto& a : r.accuracy) accuracy.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
    j = nlohmann::json{{"confusion_matrix", r.confusion},
                       {"support", r.support},
                       {"per_class_accuracy", accuracy},
                       {"overall_accuracy", r.overall_accuracy}};
}

void to_json(nlohmann::json& j, const Neighbor& n) { j = nlohmann::json{{"id", n.id}, {"distance", n.distance}}; }

}  // namespace npcviz
